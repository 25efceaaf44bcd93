"""Franke-Westerhoff structural stochastic volatility model.

The wealth-and-predisposition variant: fundamentalists and chartists
place demands, market fractions respond to accumulated wealth through a
predisposition index, and the output is the log-return series.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..priors import BoxUniform
from . import _kernels

__all__ = ["FWConfig", "FrankeWesterhoff", "fw_experiment"]


@dataclass(frozen=True)
class FWConfig:
    mu: float = 0.01
    beta: float = 1.0
    phi_f: float = 1.0
    chi: float = 0.9
    alpha_0: float = 2.1
    sigma_f: float = 0.752

    def __post_init__(self):
        if self.sigma_f < 0:
            raise ValueError("sigma_f must be nonnegative")


class FrankeWesterhoff:
    theta_dim = 3
    theta_names = ("alpha_w", "eta", "sigma_c")
    out_dim = 1

    def __init__(self, config: FWConfig = FWConfig(), series_length: int = 100):
        if series_length < 3:
            raise ValueError("series_length must be at least 3")
        self.config = config
        self.series_length = series_length

    def simulate(self, theta, rng: np.random.Generator) -> np.ndarray:
        theta = np.asarray(theta, dtype=np.float64).ravel()
        if theta.size != 3:
            raise ValueError(f"theta must have 3 entries, got {theta.size}")
        alpha_w, eta, sigma_c = theta
        if sigma_c < 0:
            raise ValueError("sigma_c must be nonnegative")
        c = self.config
        noise_f = rng.standard_normal(self.series_length + 1)
        noise_c = rng.standard_normal(self.series_length + 1)
        r = _kernels.fw_path(
            noise_f, noise_c, c.mu, c.beta, c.phi_f, c.chi, c.alpha_0, c.sigma_f,
            alpha_w, eta, sigma_c,
        )
        return r[:, None]


def fw_experiment(series_length: int = 100):
    """Calibration configuration: (simulator, prior, None).

    No tractable likelihood exists, so there is no ground-truth theta;
    the prior is the one used for the calibration study.
    """
    sim = FrankeWesterhoff(series_length=series_length)
    prior = BoxUniform(
        lower=[0.0, 0.0, 0.0],
        upper=[15000.0, 1.0, 5.0],
        names=FrankeWesterhoff.theta_names,
    )
    return sim, prior, None
