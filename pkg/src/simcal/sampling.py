"""Generic posterior samplers: two-phase random-walk MH and SIR.

The MH driver runs a pilot chain with an isotropic proposal to estimate
the target covariance, then a main chain with proposal N(theta, l^2
Sigma_hat), l = 2/sqrt(d), thinned to approximately uncorrelated draws.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

__all__ = ["MHConfig", "MHResult", "mh_chain", "sir_resample"]

log = logging.getLogger(__name__)


@dataclass
class MHConfig:
    pilot_steps: int = 50_000
    main_steps: int = 100_000
    thin: int = 100
    pilot_scale: np.ndarray | float = 0.1
    cov_jitter: float = 1e-8
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if self.main_steps < 1:
            raise ValueError("main_steps must be >= 1")


@dataclass
class MHResult:
    samples: np.ndarray
    log_targets: np.ndarray
    accepted: np.ndarray
    acceptance_rate: float
    proposal_cov: np.ndarray


def _rw_chain(log_target, theta0, chol, n_steps, rng):
    d = theta0.size
    thetas = np.empty((n_steps, d))
    logs = np.empty(n_steps)
    accepted = np.zeros(n_steps, dtype=bool)
    current = theta0.copy()
    current_log = log_target(current)
    steps = rng.standard_normal((n_steps, d)) @ chol.T
    log_u = np.log(rng.random(n_steps))
    for i in range(n_steps):
        proposal = current + steps[i]
        prop_log = log_target(proposal)
        if prop_log - current_log > log_u[i]:
            current = proposal
            current_log = prop_log
            accepted[i] = True
        thetas[i] = current
        logs[i] = current_log
    return thetas, logs, accepted


def mh_chain(log_target, theta0, config: MHConfig, rng: np.random.Generator) -> MHResult:
    """Pilot-then-main random-walk Metropolis-Hastings.

    ``log_target`` must be finite at ``theta0``. The thinned main-chain
    samples are returned oldest first.
    """
    theta0 = np.atleast_1d(np.asarray(theta0, dtype=np.float64))
    d = theta0.size
    start_log = log_target(theta0)
    if not np.isfinite(start_log):
        raise ValueError(f"log_target is not finite at the initial point: {start_log}")

    ell = 2.0 / np.sqrt(d)
    scale = np.broadcast_to(np.asarray(config.pilot_scale, dtype=np.float64), (d,))
    cov = np.diag(scale**2)

    if config.pilot_steps > 0:
        pilot_chol = ell * np.diag(scale)
        pilot, _, _ = _rw_chain(log_target, theta0, pilot_chol, config.pilot_steps, rng)
        est = np.cov(pilot.T) if d > 1 else np.atleast_2d(np.var(pilot))
        est = est + config.cov_jitter * np.eye(d)
        try:
            np.linalg.cholesky(est)
            cov = est
        except np.linalg.LinAlgError:
            warnings.warn("pilot covariance not positive definite; keeping isotropic proposal")

    chol = ell * np.linalg.cholesky(cov)
    thetas, logs, accepted = _rw_chain(log_target, theta0, chol, config.main_steps, rng)
    rate = float(accepted.mean())
    if rate == 0.0:
        warnings.warn(f"MH chain accepted no proposals over {config.main_steps} steps")
    keep = slice(config.thin - 1, None, config.thin)
    return MHResult(
        samples=thetas[keep],
        log_targets=logs[keep],
        accepted=accepted[keep],
        acceptance_rate=rate,
        proposal_cov=cov,
    )


def sir_resample(samples: np.ndarray, log_weights: np.ndarray, n_out: int,
                 rng: np.random.Generator) -> np.ndarray:
    """Resample with replacement, probability proportional to the weights.

    Weights arrive in log space and are normalized by max subtraction.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    log_weights = np.asarray(log_weights, dtype=np.float64).ravel()
    if samples.shape[0] != log_weights.size:
        raise ValueError(
            f"{samples.shape[0]} samples but {log_weights.size} weights"
        )
    finite = np.isfinite(log_weights)
    if not finite.any():
        raise ValueError("degenerate importance weights: no finite log-weight")
    w = np.zeros_like(log_weights)
    w[finite] = np.exp(log_weights[finite] - log_weights[finite].max())
    total = w.sum()
    if total <= 0.0:
        raise ValueError("degenerate importance weights: all weights underflow to zero")
    idx = rng.choice(samples.shape[0], size=n_out, replace=True, p=w / total)
    return samples[idx]
