"""Multivariate geometric Brownian motion with exact Gaussian transitions.

The simulated state follows X_{t+dt} ~ N(X_t + (theta - gamma) dt,
sigma sigma^T dt) with gamma_i = 0.5 * sum_j sigma_ij^2, so both exact
sampling and the transition log-density are available in closed form.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..priors import BoxUniform

__all__ = ["MvGBMConfig", "MultivariateGBM", "mvgbm_experiment", "DEFAULT_SIGMA"]

DEFAULT_SIGMA = np.array(
    [
        [0.5, 0.1, 0.0],
        [0.0, 0.1, 0.3],
        [0.0, 0.0, 0.2],
    ]
)


@dataclass(frozen=True)
class MvGBMConfig:
    sigma: np.ndarray = field(default_factory=lambda: DEFAULT_SIGMA.copy())

    def __post_init__(self):
        sigma = np.asarray(self.sigma, dtype=np.float64)
        if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
            raise ValueError(f"sigma must be square, got shape {sigma.shape}")
        object.__setattr__(self, "sigma", sigma)

    @property
    def gamma(self) -> np.ndarray:
        return 0.5 * (self.sigma**2).sum(axis=1)


class MultivariateGBM:
    theta_names = ("b1", "b2", "b3")

    def __init__(self, config: MvGBMConfig = MvGBMConfig(), series_length: int = 100,
                 dt: float | None = None):
        if series_length < 2:
            raise ValueError("series_length must be at least 2")
        self.config = config
        self.series_length = series_length
        self.dt = 1.0 / (series_length - 1) if dt is None else float(dt)
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        self.out_dim = config.sigma.shape[0]
        self.theta_dim = self.out_dim
        cov = config.sigma @ config.sigma.T * self.dt
        try:
            self._chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            raise ValueError("sigma sigma^T is singular; transitions undefined") from None
        self._cov_inv = np.linalg.inv(cov)
        sign, logdet = np.linalg.slogdet(cov)
        self._log_norm = -0.5 * (self.out_dim * np.log(2.0 * np.pi) + logdet)

    def simulate(self, theta, rng: np.random.Generator) -> np.ndarray:
        theta = np.asarray(theta, dtype=np.float64).ravel()
        if theta.size != self.theta_dim:
            raise ValueError(f"theta must have {self.theta_dim} entries")
        steps = self.series_length - 1
        z = rng.standard_normal((steps, self.out_dim))
        increments = (theta - self.config.gamma) * self.dt + z @ self._chol.T
        x = np.zeros((self.series_length, self.out_dim))
        x[1:] = np.cumsum(increments, axis=0)
        return x

    def transition_logpdf(self, x_next, x_curr, theta) -> float:
        theta = np.asarray(theta, dtype=np.float64).ravel()
        mean = np.asarray(x_curr) + (theta - self.config.gamma) * self.dt
        resid = np.asarray(x_next) - mean
        return float(self._log_norm - 0.5 * resid @ self._cov_inv @ resid)

    def exact_loglik(self, y, theta) -> float:
        y = np.asarray(y, dtype=np.float64)
        theta = np.asarray(theta, dtype=np.float64).ravel()
        resid = np.diff(y, axis=0) - (theta - self.config.gamma) * self.dt
        quad = np.einsum("ti,ij,tj->", resid, self._cov_inv, resid)
        return float((y.shape[0] - 1) * self._log_norm - 0.5 * quad)


def mvgbm_experiment(series_length: int = 100):
    """Benchmark configuration: (simulator, prior, generating theta)."""
    sim = MultivariateGBM(series_length=series_length)
    prior = BoxUniform(
        lower=[-1.0, -1.0, -1.0],
        upper=[1.0, 1.0, 1.0],
        names=MultivariateGBM.theta_names,
    )
    theta_star = np.array([0.2, -0.5, 0.0])
    return sim, prior, theta_star
