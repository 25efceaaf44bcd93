"""Simulation-based calibration: rank statistics and uniformity checks.

Repeatedly drawing a prior parameter, simulating data from it, and
ranking it within posterior samples must produce discrete-uniform ranks
when the inference pipeline is exact; the harness records ranks,
histograms with binomial reference bands, and per-dimension chi-square
diagnostics.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

__all__ = ["rank_statistic", "sbc_run", "uniformity_check", "rank_histogram",
           "SBCResult", "RankHistogram"]

log = logging.getLogger(__name__)

_TIE_NOISE = 1e-12


def rank_statistic(posterior_samples: np.ndarray, theta_tilde: np.ndarray,
                   rng: np.random.Generator | None = None) -> np.ndarray:
    """Per-dimension count of posterior samples strictly below theta_tilde.

    Ranks live in {0, ..., L}. Floating-point ties are broken by a
    uniform perturbation of negligible magnitude.
    """
    samples = np.atleast_2d(np.asarray(posterior_samples, dtype=np.float64))
    theta_tilde = np.atleast_1d(np.asarray(theta_tilde, dtype=np.float64))
    if samples.shape[1] != theta_tilde.size:
        raise ValueError(
            f"dimension mismatch: samples {samples.shape[1]}, theta {theta_tilde.size}")
    if rng is not None:
        samples = samples + rng.uniform(-_TIE_NOISE, _TIE_NOISE, samples.shape)
        theta_tilde = theta_tilde + rng.uniform(-_TIE_NOISE, _TIE_NOISE,
                                                theta_tilde.size)
    return (samples < theta_tilde).sum(axis=0)


def _bin_edges(n_levels: int, bins: int) -> np.ndarray:
    """Integer bin edges splitting {0..L} into near-equal groups."""
    return np.floor(np.arange(bins + 1) * n_levels / bins).astype(int)


@dataclass
class RankHistogram:
    counts: np.ndarray          # (bins,)
    expected: np.ndarray        # (bins,)
    band_low: np.ndarray
    band_high: np.ndarray
    bin_edges: np.ndarray
    n_replicates: int


def rank_histogram(ranks: np.ndarray, n_levels: int, bins: int = 20,
                   band: float = 0.99) -> RankHistogram:
    """Histogram of one dimension's ranks with a binomial reference band.

    ``n_levels`` is L + 1 (the number of admissible rank values); the
    band covers the central ``band`` mass of each bin count under exact
    uniformity.
    """
    ranks = np.asarray(ranks, dtype=int)
    p_total = ranks.size
    edges = _bin_edges(n_levels, bins)
    widths = np.diff(edges)
    if np.any(widths < 1):
        raise ValueError(f"{bins} bins over {n_levels} rank values leaves empty bins")
    counts = np.array([
        np.sum((ranks >= lo) & (ranks < hi)) for lo, hi in zip(edges[:-1], edges[1:])
    ])
    probs = widths / n_levels
    tail = (1.0 - band) / 2.0
    return RankHistogram(
        counts=counts,
        expected=p_total * probs,
        band_low=stats.binom.ppf(tail, p_total, probs),
        band_high=stats.binom.ppf(1.0 - tail, p_total, probs),
        bin_edges=edges,
        n_replicates=p_total,
    )


def uniformity_check(ranks: np.ndarray, n_levels: int, bins: int = 20):
    """Pearson chi-square of binned ranks against the discrete uniform.

    Returns (statistic, p_value). Rejected when any bin expects fewer
    than 5 counts, with a workable bin count in the message.
    """
    ranks = np.asarray(ranks, dtype=int)
    edges = _bin_edges(n_levels, bins)
    widths = np.diff(edges)
    expected = ranks.size * widths / n_levels
    if expected.min() < 5.0:
        suggestion = max(1, min(int(ranks.size // 5), n_levels))
        raise ValueError(
            f"expected bin count {expected.min():.1f} < 5; use at most "
            f"{suggestion} bins for {ranks.size} replicates")
    counts = np.array([
        np.sum((ranks >= lo) & (ranks < hi)) for lo, hi in zip(edges[:-1], edges[1:])
    ])
    chi2 = float(((counts - expected) ** 2 / expected).sum())
    pval = float(stats.chi2.sf(chi2, df=bins - 1))
    return chi2, pval


@dataclass
class SBCResult:
    ranks: np.ndarray               # (P, d)
    thetas: np.ndarray              # (P, d) prior draws actually used
    n_samples: int                  # L
    skipped: int
    histograms: list = field(default_factory=list)
    chi2: np.ndarray | None = None
    p_values: np.ndarray | None = None
    max_bin_deviation: np.ndarray | None = None


def sbc_run(prior, simulator, posterior, n_replicates: int, n_samples: int,
            rng: np.random.Generator, bins: int = 20,
            run_checks: bool = True) -> SBCResult:
    """Full calibration loop: P replicates of draw/simulate/rank.

    Refuses handles whose posterior sampling itself consumes simulator
    calls (the cost would be P times a full pseudo-marginal chain);
    failed replicates are skipped, logged, and replaced so P successes
    are always collected.
    """
    cost = posterior.simulation_cost(n_samples)
    if cost > 0:
        raise RuntimeError(
            f"refusing calibration for a {type(posterior).__name__}: each "
            f"replicate costs about {cost} simulator calls, about "
            f"{cost * n_replicates:.2e} in total for P = {n_replicates}. "
            "Use an amortized (flow or ratio) posterior instead.")
    dim = prior.dim
    ranks = np.empty((n_replicates, dim), dtype=int)
    used_thetas = np.empty((n_replicates, dim))
    skipped = 0
    done = 0
    max_attempts = 20 * n_replicates
    attempts = 0
    while done < n_replicates:
        attempts += 1
        if attempts > max_attempts:
            raise RuntimeError(
                f"sbc: {skipped} failures in {attempts} attempts; giving up")
        theta = prior.sample(1, rng)[0]
        try:
            y = simulator.simulate(theta, rng)
            draws = posterior.sample_posterior(y, n_samples, rng)
        except Exception as err:  # noqa: BLE001 - replicate-level fault barrier
            skipped += 1
            log.warning("sbc replicate failed (%s); skipping", err)
            continue
        ranks[done] = rank_statistic(draws, theta, rng)
        used_thetas[done] = theta
        done += 1
    result = SBCResult(ranks=ranks, thetas=used_thetas, n_samples=n_samples,
                       skipped=skipped)
    n_levels = n_samples + 1
    result.histograms = [rank_histogram(ranks[:, k], n_levels, bins)
                         for k in range(dim)]
    result.max_bin_deviation = np.array([
        np.abs(h.counts - h.expected).max() for h in result.histograms])
    if run_checks:
        checks = [uniformity_check(ranks[:, k], n_levels, bins) for k in range(dim)]
        result.chi2 = np.array([c[0] for c in checks])
        result.p_values = np.array([c[1] for c in checks])
    return result
