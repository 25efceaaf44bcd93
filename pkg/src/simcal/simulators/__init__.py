"""Benchmark simulators, priors, and tractable ground-truth posteriors."""

from __future__ import annotations

import numpy as np

from ..priors import BoxUniform
from ..sampling import MHConfig, mh_chain
from . import _kernels
from .bh import BHConfig, BrockHommes, bh_parameter_set
from .fw import FrankeWesterhoff, FWConfig, fw_experiment
from .mvgbm import MultivariateGBM, MvGBMConfig, mvgbm_experiment

__all__ = [
    "BHConfig",
    "BrockHommes",
    "bh_parameter_set",
    "FWConfig",
    "FrankeWesterhoff",
    "fw_experiment",
    "MvGBMConfig",
    "MultivariateGBM",
    "mvgbm_experiment",
    "CountingSimulator",
    "ground_truth_posterior",
    "get_experiment",
    "EXPERIMENTS",
]


class CountingSimulator:
    """Wraps a simulator and counts every call, for budget accounting."""

    def __init__(self, simulator):
        self._inner = simulator
        self.calls = 0

    def __getattr__(self, name):
        return getattr(self._inner, name)

    def simulate(self, theta, rng):
        self.calls += 1
        return self._inner.simulate(theta, rng)


def ground_truth_posterior(simulator, observation, prior: BoxUniform, theta0,
                           rng: np.random.Generator,
                           mh_config: MHConfig | None = None):
    """Posterior samples via MH on the exact likelihood of a tractable model.

    The chain starts at ``theta0`` (normally the generating parameter)
    with a pilot proposal scaled to the prior ranges.
    """
    if not hasattr(simulator, "exact_loglik"):
        raise TypeError(
            f"{type(simulator).__name__} has no tractable likelihood; "
            "ground-truth sampling is only available for models that do"
        )
    y = np.asarray(observation, dtype=np.float64)
    if mh_config is None:
        mh_config = MHConfig(pilot_scale=prior.range / 20.0)

    def log_target(theta):
        lp = prior.log_prob(theta)[0]
        if not np.isfinite(lp):
            return -np.inf
        return lp + simulator.exact_loglik(y, theta)

    return mh_chain(log_target, np.asarray(theta0, dtype=np.float64), mh_config, rng)


EXPERIMENTS = {
    "bh1": lambda T=100: bh_parameter_set(1, T),
    "bh2": lambda T=100: bh_parameter_set(2, T),
    "mvgbm": lambda T=100: mvgbm_experiment(T),
    "fw": lambda T=100: fw_experiment(T),
}


def get_experiment(model_id: str, series_length: int = 100):
    """(simulator, prior, generating theta or None) for a named benchmark."""
    try:
        factory = EXPERIMENTS[model_id]
    except KeyError:
        raise ValueError(
            f"unknown model {model_id!r}; expected one of {sorted(EXPERIMENTS)}"
        ) from None
    return factory(series_length)
