"""Simulation-driven surrogate likelihoods and the pseudo-marginal MH driver.

Every surrogate estimates the observation's likelihood at a proposed
parameter from fresh simulations. Inside a chain, the incumbent keeps
the estimate computed when it was accepted (the pseudo-marginal rule),
so each iteration costs exactly the surrogate's simulation count.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .priors import BoxUniform
from .simulators import _kernels
from .summaries import naive_summaries

__all__ = [
    "silverman_bandwidth",
    "parametric_loglik",
    "kde_loglik",
    "abc_loglik",
    "latent_loglik",
    "summary_distance",
    "abc_tolerance_from_pilot",
    "SurrogateLikelihood",
    "ExactLikelihood",
    "PMChain",
    "pm_mh",
    "pm_mh_two_phase",
]

_LOG_2PI = np.log(2.0 * np.pi)


def _as_series(y) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    return y[:, None] if y.ndim == 1 else y


def silverman_bandwidth(x: np.ndarray) -> np.ndarray:
    """Rule-of-thumb bandwidth 0.9 min(std, IQR/1.34) S^(-1/5), per dimension."""
    x = _as_series(x)
    s_len = x.shape[0]
    if s_len < 2:
        raise ValueError("bandwidth needs at least 2 points")
    std = x.std(axis=0, ddof=1)
    q75, q25 = np.quantile(x, [0.75, 0.25], axis=0)
    spread = np.minimum(std, (q75 - q25) / 1.34)
    if np.any(spread <= 0):
        raise ValueError("degenerate fit: simulated series has zero spread")
    return 0.9 * spread * s_len ** (-0.2)


def _gaussian_fit_loglik(y: np.ndarray, x: np.ndarray) -> float:
    """Log prod_t N(y_t; mean(x), mle_cov(x)) for one simulated series."""
    mean = x.mean(axis=0)
    d = x.shape[1]
    centered = x - mean
    cov = centered.T @ centered / x.shape[0]
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise ValueError("degenerate fit: singular estimated covariance") from None
    logdet = 2.0 * np.log(np.diag(chol)).sum()
    z = np.linalg.solve(chol, (y - mean).T)
    quad = float((z * z).sum())
    t_len = y.shape[0]
    return -0.5 * (t_len * (d * _LOG_2PI + logdet) + quad)


def parametric_loglik(y, theta, simulator, rng, n_sims: int = 1,
                      pooled: bool = False) -> float:
    """Stationary-Gaussian surrogate: fit mean/covariance per simulation,
    score the observation as an iid product, average the R estimates.

    With ``pooled`` the simulations are concatenated into one fit.
    """
    if n_sims < 1:
        raise ValueError("n_sims must be >= 1")
    y = _as_series(y)
    sims = [_as_series(simulator.simulate(theta, rng)) for _ in range(n_sims)]
    if pooled:
        return _gaussian_fit_loglik(y, np.concatenate(sims, axis=0))
    logs = np.array([_gaussian_fit_loglik(y, x) for x in sims])
    m = logs.max()
    return float(m + np.log(np.exp(logs - m).sum()) - np.log(n_sims))


def _kde_factor_loglik(y: np.ndarray, x: np.ndarray) -> float:
    bw = silverman_bandwidth(x)
    return float(_kernels.kde_product_loglik(y, x, bw))


def kde_loglik(y, theta, simulator, rng, n_sims: int = 1,
               pooled: bool = False) -> float:
    """KDE surrogate: Gaussian product kernel with Silverman bandwidths
    fitted per simulation; the observation scores as an iid product.
    """
    if n_sims < 1:
        raise ValueError("n_sims must be >= 1")
    y = _as_series(y)
    sims = [_as_series(simulator.simulate(theta, rng)) for _ in range(n_sims)]
    if pooled:
        return _kde_factor_loglik(y, np.concatenate(sims, axis=0))
    logs = np.array([_kde_factor_loglik(y, x) for x in sims])
    m = logs.max()
    return float(m + np.log(np.exp(logs - m).sum()) - np.log(n_sims))


def summary_distance(x, y) -> float:
    """Euclidean distance between naive summary vectors."""
    return float(np.linalg.norm(naive_summaries(x) - naive_summaries(y)))


def abc_loglik(y, theta, simulator, rng, epsilon: float, n_sims: int = 1,
               distance=summary_distance) -> float:
    """Indicator-kernel surrogate: log acceptance fraction at tolerance epsilon.

    Full rejection returns -inf, which the MH driver treats as a zero
    likelihood estimate.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    y = _as_series(y)
    hits = 0
    for _ in range(n_sims):
        x = _as_series(simulator.simulate(theta, rng))
        if distance(x, y) <= epsilon:
            hits += 1
    if hits == 0:
        return -np.inf
    return float(np.log(hits / n_sims))


def abc_tolerance_from_pilot(y, prior: BoxUniform, simulator, rng,
                             pool_size: int = 1000, quantile: float = 0.01,
                             distance=summary_distance) -> float:
    """Tolerance as a low quantile of prior-predictive distances to y."""
    y = _as_series(y)
    dists = np.empty(pool_size)
    for i in range(pool_size):
        theta = prior.sample(1, rng)[0]
        dists[i] = distance(_as_series(simulator.simulate(theta, rng)), y)
    return float(np.quantile(dists, quantile))


def latent_loglik(y, theta, simulator, rng, noise_sigma: float,
                  n_sims: int = 1) -> float:
    """iid latent-state surrogate with Gaussian observation noise.

    Each y_t scores log mean_r N(y_t; x_t^(r), sigma^2 I) over R
    simulated latent paths aligned in time.
    """
    if n_sims < 1:
        raise ValueError("n_sims must be >= 1")
    if noise_sigma <= 0:
        raise ValueError("noise_sigma must be positive")
    y = _as_series(y)
    t_len, d = y.shape
    sims = np.stack([_as_series(simulator.simulate(theta, rng)) for _ in range(n_sims)])
    z2 = ((sims - y[None]) ** 2).sum(axis=2) / noise_sigma**2
    logs = -0.5 * z2 - d * (0.5 * _LOG_2PI + np.log(noise_sigma))
    m = logs.max(axis=0)
    per_t = m + np.log(np.exp(logs - m).sum(axis=0)) - np.log(n_sims)
    return float(per_t.sum())


class SurrogateLikelihood:
    """A surrogate variant bound to its tuning, evaluable at any theta."""

    VARIANTS = ("parametric", "kde", "abc", "latent")

    def __init__(self, variant: str, simulator, n_sims: int = 1,
                 pooled: bool = False, epsilon: float | None = None,
                 noise_sigma: float | None = None, distance=summary_distance):
        if variant not in self.VARIANTS:
            raise ValueError(f"unknown variant {variant!r}; expected {self.VARIANTS}")
        if n_sims < 1:
            raise ValueError("n_sims must be >= 1")
        if variant == "abc" and (epsilon is None or epsilon <= 0):
            raise ValueError("abc surrogate needs a positive epsilon")
        if variant == "latent" and (noise_sigma is None or noise_sigma <= 0):
            raise ValueError("latent surrogate needs a positive noise_sigma")
        self.variant = variant
        self.simulator = simulator
        self.n_sims = n_sims
        self.pooled = pooled
        self.epsilon = epsilon
        self.noise_sigma = noise_sigma
        self.distance = distance

    @property
    def sims_per_eval(self) -> int:
        return self.n_sims

    def loglik(self, y, theta, rng) -> float:
        if self.variant == "parametric":
            return parametric_loglik(y, theta, self.simulator, rng, self.n_sims,
                                     self.pooled)
        if self.variant == "kde":
            return kde_loglik(y, theta, self.simulator, rng, self.n_sims, self.pooled)
        if self.variant == "abc":
            return abc_loglik(y, theta, self.simulator, rng, self.epsilon,
                              self.n_sims, self.distance)
        return latent_loglik(y, theta, self.simulator, rng, self.noise_sigma,
                             self.n_sims)


class ExactLikelihood:
    """Tractable likelihood dressed in the surrogate interface (0 sims/eval)."""

    variant = "exact"
    sims_per_eval = 0

    def __init__(self, simulator):
        if not hasattr(simulator, "exact_loglik"):
            raise TypeError(f"{type(simulator).__name__} has no exact_loglik")
        self.simulator = simulator

    def loglik(self, y, theta, rng) -> float:
        return self.simulator.exact_loglik(y, theta)


@dataclass
class PMChain:
    thetas: np.ndarray
    log_estimates: np.ndarray
    accepted: np.ndarray
    acceptance_rate: float


def pm_mh(surrogate, prior: BoxUniform, y, theta0, n_iterations: int,
          rng: np.random.Generator, proposal_cov: np.ndarray) -> PMChain:
    """Pseudo-marginal random-walk MH targeting surrogate-likelihood x prior.

    The incumbent's likelihood estimate is computed when it is first
    accepted and reused until it is replaced; only proposals trigger
    simulations.
    """
    if n_iterations < 1:
        raise ValueError("n_iterations must be >= 1")
    theta0 = np.atleast_1d(np.asarray(theta0, dtype=np.float64))
    d = theta0.size
    chol = np.linalg.cholesky(np.atleast_2d(proposal_cov))
    current = theta0.copy()
    current_log = surrogate.loglik(y, current, rng) + prior.log_prob(current)[0]
    if not np.isfinite(current_log):
        raise ValueError(f"initial surrogate log-target is not finite: {current_log}")
    thetas = np.empty((n_iterations, d))
    logs = np.empty(n_iterations)
    accepted = np.zeros(n_iterations, dtype=bool)
    steps = rng.standard_normal((n_iterations, d)) @ chol.T
    log_u = np.log(rng.random(n_iterations))
    for i in range(n_iterations):
        proposal = current + steps[i]
        lp = prior.log_prob(proposal)[0]
        est = surrogate.loglik(y, proposal, rng)
        prop_log = est + lp
        if prop_log - current_log > log_u[i]:
            current = proposal
            current_log = prop_log
            accepted[i] = True
        thetas[i] = current
        logs[i] = current_log
    rate = float(accepted.mean())
    if rate == 0.0:
        warnings.warn(f"pseudo-marginal chain accepted nothing ({n_iterations} steps)")
    return PMChain(thetas, logs, accepted, rate)


def pm_mh_two_phase(surrogate, prior: BoxUniform, y, theta0, pilot_steps: int,
                    main_steps: int, thin: int, rng: np.random.Generator,
                    pilot_scale=None) -> PMChain:
    """Pilot-then-main pseudo-marginal MH with proposal N(theta, l^2 Sigma_hat).

    The pilot runs an isotropic proposal to estimate the target
    covariance; l = 2/sqrt(d). The returned chain is the thinned main
    phase.
    """
    theta0 = np.atleast_1d(np.asarray(theta0, dtype=np.float64))
    d = theta0.size
    ell2 = 4.0 / d
    if pilot_scale is None:
        pilot_scale = prior.range / 20.0
    scale = np.broadcast_to(np.asarray(pilot_scale, dtype=np.float64), (d,))
    cov = np.diag(scale**2)
    if pilot_steps > 0:
        pilot = pm_mh(surrogate, prior, y, theta0, pilot_steps, rng, ell2 * cov)
        est = np.cov(pilot.thetas.T) if d > 1 else np.atleast_2d(np.var(pilot.thetas))
        est = est + 1e-8 * np.eye(d)
        try:
            np.linalg.cholesky(est)
            cov = est
        except np.linalg.LinAlgError:
            warnings.warn("pilot covariance not positive definite; keeping isotropic")
    main = pm_mh(surrogate, prior, y, theta0, main_steps, rng, ell2 * cov)
    keep = slice(thin - 1, None, thin)
    return PMChain(main.thetas[keep], main.log_estimates[keep],
                   main.accepted[keep], main.acceptance_rate)
