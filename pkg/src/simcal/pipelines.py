"""End-to-end method drivers: budget handling, training, posterior sampling.

Each driver consumes an instrumented simulator, spends its simulation
budget according to the method's accounting rule, and returns posterior
samples plus a reusable handle; the expected call count is part of the
result so manifests can assert exact budget accounting.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import diffcore as dc
from .classic import (ExactLikelihood, SurrogateLikelihood,
                      abc_tolerance_from_pilot, pm_mh_two_phase)
from .flows import FlowStack, snpe_rounds, train_npe
from .posteriors import ClassicPosterior, FlowPosterior, RatioPosterior
from .priors import BoxUniform
from .ratio import RatioNet, snre_rounds, train_nre
from .rng import substream
from .sampling import MHConfig
from .serialize import load_blob, save_blob
from .simulators import CountingSimulator, ground_truth_posterior
from .summaries import make_summarizer
from .training import TrainConfig

__all__ = ["MethodResult", "run_method", "classic_budget_split",
           "save_posterior_blob", "load_posterior_blob", "NEURAL_METHODS",
           "CLASSIC_METHODS", "METHODS"]

NEURAL_METHODS = ("npe", "snpe", "nre", "snre")
CLASSIC_METHODS = ("kde", "parametric", "abc", "latent")
METHODS = NEURAL_METHODS + CLASSIC_METHODS + ("exact",)


@dataclass
class MethodResult:
    method: str
    samples: np.ndarray
    handle: object
    expected_calls: int
    info: dict = field(default_factory=dict)
    blob_arrays: dict | None = None
    blob_config: dict | None = None
    chain: object | None = None  # thinned PMChain / MHResult for chain methods


def classic_budget_split(total_budget: int, sims_per_eval: int,
                         n_posterior: int, pilot_frac: float = 0.3,
                         setup_calls: int = 0):
    """Split a simulation budget into pilot/main MH iterations plus thinning.

    Each phase spends one evaluation (R sims) initializing its chain;
    the rest spread over pilot (isotropic) and main iterations. Thinning
    targets n_posterior retained samples.
    """
    evals = (total_budget - setup_calls) // sims_per_eval - 2
    if evals < 10:
        raise ValueError(f"budget {total_budget} too small for a chain")
    pilot = int(pilot_frac * evals)
    main = evals - pilot
    thin = max(1, main // n_posterior)
    return pilot, main, thin


def _train_config(options: dict) -> TrainConfig:
    return TrainConfig(
        batch_size=int(options.get("batch_size", 50)),
        lr=float(options.get("lr", 5e-4)),
        patience=int(options.get("patience", 20)),
        max_epochs=int(options.get("max_epochs", 500)),
        val_frac=float(options.get("val_frac", 0.1)),
    )


def run_method(method: str, simulator, prior: BoxUniform, observation: np.ndarray,
               seed: int, budget: dict, options: dict | None = None,
               n_posterior: int = 1000, theta_star=None) -> MethodResult:
    """Run one estimation method end to end on an observed series.

    ``budget`` carries either {"rounds", "sims_per_round"} (sequential
    neural), {"n_sims"} (amortized neural), or {"total"} (classic).
    """
    options = dict(options or {})
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    counter = CountingSimulator(simulator)
    y = np.asarray(observation, dtype=np.float64)

    if method in NEURAL_METHODS:
        result = _run_neural(method, counter, prior, y, seed, budget, options,
                             n_posterior)
    elif method in CLASSIC_METHODS:
        result = _run_classic(method, counter, prior, y, seed, budget, options,
                              n_posterior, theta_star)
    else:
        result = _run_exact(counter, prior, y, seed, options, n_posterior, theta_star)
    result.info["sim_calls"] = counter.calls
    if counter.calls != result.expected_calls:
        raise AssertionError(
            f"budget accounting violated for {method}: counted {counter.calls}, "
            f"expected {result.expected_calls}")
    return result


def _summary_kind(options, default="naive"):
    return options.get("summaries", default)


def _run_neural(method, counter, prior, y, seed, budget, options, n_posterior):
    series_dim = counter.out_dim
    kind = _summary_kind(options)
    store = dc.ParamStore()
    init_rng = substream(seed, "net-init")
    summarizer = make_summarizer(kind, series_dim, store=store, rng=init_rng)
    cfg = _train_config(options)
    train_rng = substream(seed, "train")
    sample_rng = substream(seed, "posterior-sample")

    if method in ("npe", "snpe"):
        flow = FlowStack(prior.dim, summarizer.out_dim, rng=init_rng, store=store)
        if method == "npe":
            n_sims = int(budget["n_sims"])
            thetas = prior.sample(n_sims, substream(seed, "prior-draws"))
            xs = np.stack([counter.simulate(t, substream(seed, "simulate", i))
                           for i, t in enumerate(thetas)])
            fit_res = train_npe(thetas, xs, flow, summarizer, cfg, train_rng)
            expected = n_sims
            info = {"epochs": fit_res.epochs, "best_val": fit_res.best_val}
        else:
            rounds = int(budget["rounds"])
            per_round = int(budget["sims_per_round"])
            res = snpe_rounds(prior, counter, y, rounds, per_round, flow, summarizer,
                              cfg, train_rng,
                              n_atoms=int(options.get("n_atoms", 10)))
            expected = rounds * per_round
            info = {"rounds": rounds,
                    "epochs": [f.epochs for f in res.fit_results]}
        handle = FlowPosterior(flow, summarizer, prior)
        samples = handle.sample_posterior(y, n_posterior, sample_rng)
        arrays = {**flow.state(), **summarizer.state()}
        blob_cfg = {"kind": "flow", "flow": flow.config,
                    "summarizer": summarizer.config(),
                    "prior": {"lower": prior.lower.tolist(),
                              "upper": prior.upper.tolist(),
                              "names": list(prior.names)}}
        return MethodResult(method, samples, handle, expected, info, arrays, blob_cfg)

    net = RatioNet(store, prior.dim, summarizer.out_dim, rng=init_rng)
    n_contrasts = int(options.get("n_contrasts", 9))
    if method == "nre":
        n_sims = int(budget["n_sims"])
        thetas = prior.sample(n_sims, substream(seed, "prior-draws"))
        xs = np.stack([counter.simulate(t, substream(seed, "simulate", i))
                       for i, t in enumerate(thetas)])
        fit_res = train_nre(thetas, xs, net, summarizer, cfg, train_rng, n_contrasts)
        expected = n_sims
        info = {"epochs": fit_res.epochs, "best_val": fit_res.best_val}
    else:
        rounds = int(budget["rounds"])
        per_round = int(budget["sims_per_round"])
        res = snre_rounds(prior, counter, y, rounds, per_round, net, summarizer,
                          cfg, train_rng, n_contrasts)
        expected = rounds * per_round
        info = {"rounds": rounds, "epochs": [f.epochs for f in res.fit_results]}
    handle = RatioPosterior(net, summarizer, prior,
                            method=options.get("ratio_sampler", "mh"))
    samples = handle.sample_posterior(y, n_posterior, sample_rng)
    arrays = {**net.state(), **summarizer.state()}
    blob_cfg = {"kind": "ratio", "net": net.config,
                "summarizer": summarizer.config(),
                "prior": {"lower": prior.lower.tolist(),
                          "upper": prior.upper.tolist(),
                          "names": list(prior.names)}}
    return MethodResult(method, samples, handle, expected, info, arrays, blob_cfg)


def _run_classic(method, counter, prior, y, seed, budget, options, n_posterior,
                 theta_star):
    total = int(budget["total"])
    n_sims = int(options.get("sims_per_eval", 1))
    rng = substream(seed, "classic-chain")
    setup = 0
    if method == "abc":
        pool = int(options.get("abc_pilot_pool", 1000))
        quantile = float(options.get("abc_quantile", 0.01))
        epsilon = options.get("abc_epsilon")
        if epsilon is None:
            epsilon = abc_tolerance_from_pilot(
                y, prior, counter, substream(seed, "abc-pilot"), pool, quantile)
            setup = pool
        surrogate = SurrogateLikelihood("abc", counter, n_sims=n_sims,
                                        epsilon=float(epsilon))
    elif method == "latent":
        surrogate = SurrogateLikelihood(
            "latent", counter, n_sims=n_sims,
            noise_sigma=float(options.get("noise_sigma", 1.0)))
    else:
        surrogate = SurrogateLikelihood(
            method, counter, n_sims=n_sims,
            pooled=bool(options.get("pooled", False)))
    pilot, main, thin = classic_budget_split(total, n_sims, n_posterior,
                                             setup_calls=setup)
    theta0 = np.asarray(theta_star if theta_star is not None else prior.mean,
                        dtype=np.float64)
    handle = ClassicPosterior(surrogate, prior, pilot, main, thin, theta0)
    chain = pm_mh_two_phase(surrogate, prior, y, theta0, pilot, main, thin, rng)
    samples = chain.thetas[-min(n_posterior, chain.thetas.shape[0]):]
    expected = setup + n_sims * (pilot + main + 2)
    info = {"pilot": pilot, "main": main, "thin": thin,
            "acceptance_rate": chain.acceptance_rate}
    if method == "abc":
        info["epsilon"] = float(surrogate.epsilon)
    return MethodResult(method, samples, handle, expected, info, chain=chain)


def _run_exact(counter, prior, y, seed, options, n_posterior, theta_star):
    theta0 = np.asarray(theta_star if theta_star is not None else prior.mean,
                        dtype=np.float64)
    mh_cfg = MHConfig(
        pilot_steps=int(options.get("pilot_steps", 50_000)),
        main_steps=int(options.get("main_steps", 100_000)),
        thin=int(options.get("thin", 100)),
        pilot_scale=prior.range / 20.0,
    )
    res = ground_truth_posterior(counter, y, prior, theta0,
                                 substream(seed, "ground-truth"), mh_cfg)
    info = {"acceptance_rate": res.acceptance_rate}
    return MethodResult("exact", res.samples[-n_posterior:], None, 0, info,
                        chain=res)


# -- posterior blob round-trip -------------------------------------------


def save_posterior_blob(path, result: MethodResult) -> None:
    if result.blob_arrays is None:
        raise ValueError(f"method {result.method} has no serializable posterior")
    save_blob(path, result.blob_arrays, result.blob_config)


def load_posterior_blob(path):
    """Rebuild a sampling-ready posterior handle from a blob."""
    arrays, config = load_blob(path)
    prior = BoxUniform(config["prior"]["lower"], config["prior"]["upper"],
                       names=tuple(config["prior"]["names"]))
    store = dc.ParamStore()
    summ_cfg = config["summarizer"]
    rng = np.random.default_rng(0)
    if summ_cfg["kind"] == "naive":
        summarizer = make_summarizer("naive", summ_cfg["series_dim"])
    else:
        summarizer = make_summarizer(summ_cfg["cell"], summ_cfg["series_dim"],
                                     store=store, rng=rng,
                                     hidden=summ_cfg["hidden"],
                                     layers=summ_cfg["layers"],
                                     out_dim=summ_cfg["out_dim"])
    if config["kind"] == "flow":
        fc = config["flow"]
        flow = FlowStack(fc["dim"], fc["cond_dim"], fc["n_transforms"], fc["hidden"],
                         fc["blocks"], rng=rng, store=store)
        flow.load_state(arrays)
        summarizer.load_state(arrays)
        return FlowPosterior(flow, summarizer, prior)
    nc = config["net"]
    net = RatioNet(store, nc["theta_dim"], nc["cond_dim"], nc["hidden"], rng=rng)
    net.load_state(arrays)
    summarizer.load_state(arrays)
    return RatioPosterior(net, summarizer, prior)
