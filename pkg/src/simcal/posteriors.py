"""Posterior handles: one sampling interface over every estimator kind.

A handle knows how to draw posterior samples for a raw observed series
and reports what each replicate costs in simulator calls, which is what
lets the calibration harness refuse simulation-hungry methods.
"""

from __future__ import annotations

import numpy as np

from .classic import pm_mh_two_phase
from .priors import BoxUniform
from .ratio import RatioNet, posterior_logpdf_unnorm
from .sampling import MHConfig, mh_chain, sir_resample

__all__ = ["FlowPosterior", "RatioPosterior", "ClassicPosterior"]


class FlowPosterior:
    """Direct sampler: a trained conditional flow plus its summarizer."""

    kind = "flow"

    def __init__(self, flow, summarizer, prior: BoxUniform):
        self.flow = flow
        self.summarizer = summarizer
        self.prior = prior

    def sample_posterior(self, y: np.ndarray, n: int,
                         rng: np.random.Generator) -> np.ndarray:
        cond = self.summarizer.features_np(np.asarray(y, dtype=np.float64))
        return self.flow.sample(n, cond, rng, prior=self.prior)

    def log_prob(self, theta, y) -> np.ndarray:
        cond = self.summarizer.features_np(np.asarray(y, dtype=np.float64))
        return self.flow.log_prob(theta, cond)

    def simulation_cost(self, n: int) -> int:
        return 0


class RatioPosterior:
    """Ratio-net posterior sampled by SIR over prior draws or by MH."""

    kind = "ratio"

    def __init__(self, net: RatioNet, summarizer, prior: BoxUniform,
                 method: str = "sir", sir_pool: int = 20_000,
                 mh_config: MHConfig | None = None):
        if method not in ("sir", "mh"):
            raise ValueError(f"unknown sampling method {method!r}")
        self.net = net
        self.summarizer = summarizer
        self.prior = prior
        self.method = method
        self.sir_pool = sir_pool
        self.mh_config = mh_config

    def sample_posterior(self, y: np.ndarray, n: int,
                         rng: np.random.Generator) -> np.ndarray:
        feats = self.summarizer.features_np(np.asarray(y, dtype=np.float64))
        if self.method == "sir":
            pool = max(self.sir_pool, 2 * n)
            draws = self.prior.sample(pool, rng)
            log_w = self.net.forward_np(draws, feats)
            return sir_resample(draws, log_w, n, rng)
        cfg = self.mh_config or MHConfig(pilot_steps=5000, main_steps=max(10 * n, 1000),
                                         thin=10, pilot_scale=self.prior.range / 20.0)

        def log_target(theta):
            return posterior_logpdf_unnorm(theta, feats, self.net, self.prior)[0]

        chain = mh_chain(log_target, self.prior.mean, cfg, rng)
        return chain.samples[-n:]

    def log_prob_unnorm(self, theta, y) -> np.ndarray:
        feats = self.summarizer.features_np(np.asarray(y, dtype=np.float64))
        return posterior_logpdf_unnorm(theta, feats, self.net, self.prior)

    def simulation_cost(self, n: int) -> int:
        return 0


class ClassicPosterior:
    """Pseudo-marginal MH over a surrogate: every replicate simulates."""

    kind = "classic"

    def __init__(self, surrogate, prior: BoxUniform, pilot_steps: int,
                 main_steps: int, thin: int, theta0=None):
        self.surrogate = surrogate
        self.prior = prior
        self.pilot_steps = pilot_steps
        self.main_steps = main_steps
        self.thin = thin
        self.theta0 = theta0

    def sample_posterior(self, y: np.ndarray, n: int,
                         rng: np.random.Generator) -> np.ndarray:
        theta0 = self.prior.mean if self.theta0 is None else self.theta0
        chain = pm_mh_two_phase(self.surrogate, self.prior, y, theta0,
                                self.pilot_steps, self.main_steps, self.thin, rng)
        if chain.thetas.shape[0] < n:
            raise ValueError(
                f"chain yields {chain.thetas.shape[0]} thinned samples, need {n}")
        return chain.thetas[-n:]

    def simulation_cost(self, n: int) -> int:
        per_chain = (self.pilot_steps + self.main_steps + 2) * self.surrogate.sims_per_eval
        return per_chain
