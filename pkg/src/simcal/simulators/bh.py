"""Brock-Hommes heterogeneous-beliefs asset pricing model.

Four strategy types trade a single asset; discrete-choice weights over
strategies follow past performance with intensity beta. The free
parameters are the trend/bias coefficients of strategies 2 and 3.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..priors import BoxUniform
from . import _kernels

__all__ = ["BHConfig", "BrockHommes", "bh_parameter_set"]


@dataclass(frozen=True)
class BHConfig:
    """Fixed model constants; strategies 1 and 4 are pinned."""

    h: int = 4
    r_gross: float = 1.0
    beta_intensity: float = 120.0
    sigma_noise: float = 0.04
    g1: float = 0.0
    b1: float = 0.0
    g4: float = 1.01
    b4: float = 0.0

    def __post_init__(self):
        # sigma_noise = 0 is admitted for the deterministic fixed-point case;
        # the exact likelihood requires it strictly positive.
        if self.sigma_noise < 0:
            raise ValueError("sigma_noise must be nonnegative")


class BrockHommes:
    """Simulator plus exact transition density for the 4-strategy model."""

    theta_dim = 4
    theta_names = ("g2", "b2", "g3", "b3")
    out_dim = 1

    def __init__(self, config: BHConfig = BHConfig(), series_length: int = 100):
        if series_length < 3:
            raise ValueError("series_length must be at least 3")
        self.config = config
        self.series_length = series_length

    def _coefficients(self, theta):
        theta = np.asarray(theta, dtype=np.float64).ravel()
        if theta.size != 4:
            raise ValueError(f"theta must have 4 entries, got {theta.size}")
        c = self.config
        g = np.array([c.g1, theta[0], theta[2], c.g4])
        b = np.array([c.b1, theta[1], theta[3], c.b4])
        return g, b

    def simulate(self, theta, rng: np.random.Generator) -> np.ndarray:
        g, b = self._coefficients(theta)
        c = self.config
        noise = rng.standard_normal(self.series_length - 2)
        x = _kernels.bh_path(noise, g, b, c.beta_intensity, c.r_gross, c.sigma_noise)
        return x[:, None]

    def transition_mean(self, history, theta) -> float:
        """Mean of the next observation given the last three (oldest first)."""
        hist = np.asarray(history, dtype=np.float64).ravel()
        if hist.size != 3:
            raise ValueError("history must contain exactly 3 states")
        if not np.all(np.isfinite(hist)):
            raise ValueError("history must be finite")
        g, b = self._coefficients(theta)
        c = self.config
        return float(
            _kernels.bh_transition_mean(
                hist[2], hist[1], hist[0], g, b, c.beta_intensity, c.r_gross
            )
        )

    @property
    def transition_variance(self) -> float:
        c = self.config
        return (c.sigma_noise / c.r_gross) ** 2

    def exact_loglik(self, y, theta) -> float:
        """Sum of transition log-densities over all fully-conditioned steps."""
        if self.config.sigma_noise == 0:
            raise ValueError("transition density undefined for sigma_noise = 0")
        y = np.asarray(y, dtype=np.float64).reshape(-1)
        g, b = self._coefficients(theta)
        c = self.config
        return float(
            _kernels.bh_loglik(y, g, b, c.beta_intensity, c.r_gross, c.sigma_noise)
        )


def bh_parameter_set(set_id: int, series_length: int = 100):
    """Benchmark configurations: (simulator, prior, generating theta)."""
    if set_id == 1:
        sim = BrockHommes(BHConfig(beta_intensity=120.0), series_length)
        prior = BoxUniform(
            lower=[0.0, 0.0, 0.0, -1.0],
            upper=[1.0, 1.0, 1.0, 0.0],
            names=BrockHommes.theta_names,
        )
        theta_star = np.array([0.9, 0.2, 0.9, -0.2])
    elif set_id == 2:
        sim = BrockHommes(BHConfig(beta_intensity=10.0), series_length)
        prior = BoxUniform(
            lower=[-1.0, -1.0, 0.0, 0.0],
            upper=[0.0, 0.0, 1.0, 1.0],
            names=BrockHommes.theta_names,
        )
        theta_star = np.array([-0.7, -0.4, 0.5, 0.3])
    else:
        raise ValueError(f"unknown parameter set {set_id}")
    return sim, prior, theta_star
