"""Run configuration: INI parsing, validation, defaults.

A run file is flat key = value text in sections; the parsed dict is
echoed verbatim into the manifest so any run can be reproduced from its
manifest alone.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field

import numpy as np

from .pipelines import CLASSIC_METHODS, METHODS, NEURAL_METHODS
from .priors import BoxUniform
from .simulators import EXPERIMENTS, get_experiment

__all__ = ["ConfigError", "RunConfig", "parse_run_config", "config_to_text"]


class ConfigError(Exception):
    """Invalid run configuration; message lists field-level problems."""


@dataclass
class RunConfig:
    model: str
    method: str
    seed: int
    outdir: str
    series_length: int
    n_posterior: int
    budget: dict
    options: dict
    observation: dict
    prior: BoxUniform
    theta_star: np.ndarray | None
    raw: dict = field(default_factory=dict)

    def expected_budget(self) -> int:
        if self.method in NEURAL_METHODS:
            if "n_sims" in self.budget:
                return int(self.budget["n_sims"])
            return int(self.budget["rounds"]) * int(self.budget["sims_per_round"])
        if self.method in CLASSIC_METHODS:
            return int(self.budget["total"])
        return 0


def _parse_floats(text: str) -> list:
    return [float(v) for v in text.replace(",", " ").split()]


def parse_run_config(text: str) -> RunConfig:
    """Parse and validate a run INI; raises ConfigError with all problems."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.Error as err:
        raise ConfigError(f"unparseable config: {err}") from None
    problems = []

    def need(section, key, cast=str, default=None):
        if not parser.has_option(section, key):
            if default is not None:
                return default
            problems.append(f"[{section}] {key}: missing")
            return None
        try:
            return cast(parser.get(section, key))
        except ValueError as err:
            problems.append(f"[{section}] {key}: {err}")
            return None

    model = need("run", "model")
    method = need("run", "method")
    seed = need("run", "seed", int, 0)
    outdir = need("run", "outdir")
    series_length = need("run", "series_length", int, 100)
    n_posterior = need("run", "n_posterior", int, 1000)

    if model is not None and model not in EXPERIMENTS:
        problems.append(f"[run] model: unknown {model!r}, expected one of "
                        f"{sorted(EXPERIMENTS)}")
    if method is not None and method not in METHODS:
        problems.append(f"[run] method: unknown {method!r}, expected one of "
                        f"{sorted(METHODS)}")
    if method == "exact" and model == "fw":
        problems.append("[run] method: 'exact' needs a tractable likelihood; "
                        "the fw model has none")

    budget = {}
    if method in NEURAL_METHODS:
        if method in ("snpe", "snre"):
            budget["rounds"] = need("budget", "rounds", int)
            budget["sims_per_round"] = need("budget", "sims_per_round", int)
            if budget.get("rounds") is not None and budget["rounds"] < 1:
                problems.append("[budget] rounds: must be >= 1")
        else:
            budget["n_sims"] = need("budget", "n_sims", int)
            if budget.get("n_sims") is not None and budget["n_sims"] < 10:
                problems.append("[budget] n_sims: must be >= 10")
    elif method in CLASSIC_METHODS:
        budget["total"] = need("budget", "total", int)
        if budget.get("total") is not None and budget["total"] < 20:
            problems.append("[budget] total: must be >= 20")

    options = {}
    for section in ("train", "classic", "sample"):
        if parser.has_section(section):
            options.update(dict(parser.items(section)))
    if "summaries" in options and options["summaries"] not in ("naive", "gru",
                                                               "elman"):
        problems.append(f"[train] summaries: unknown {options['summaries']!r}")

    observation = {}
    if parser.has_section("observation"):
        observation = dict(parser.items("observation"))
    if problems:
        raise ConfigError("; ".join(problems))

    simulator, default_prior, theta_star = get_experiment(model, series_length)
    prior = default_prior
    if parser.has_section("prior"):
        try:
            lower = _parse_floats(parser.get("prior", "lower"))
            upper = _parse_floats(parser.get("prior", "upper"))
            prior = BoxUniform(lower, upper, names=default_prior.names)
        except (ValueError, configparser.NoOptionError) as err:
            raise ConfigError(f"[prior]: {err}") from None
        if prior.dim != default_prior.dim:
            raise ConfigError(
                f"[prior]: dimension {prior.dim} != model dimension "
                f"{default_prior.dim}")

    obs_theta = None
    if "theta" in observation:
        obs_theta = np.asarray(_parse_floats(observation["theta"]))
        if obs_theta.size != prior.dim:
            raise ConfigError(
                f"[observation] theta: {obs_theta.size} entries, model needs "
                f"{prior.dim}")
    elif "file" not in observation:
        if theta_star is None:
            raise ConfigError(
                f"[observation]: model {model!r} has no default generating "
                "parameter; give theta or file")
        obs_theta = theta_star
    observation["theta_resolved"] = obs_theta

    raw = {s: dict(parser.items(s)) for s in parser.sections()}
    return RunConfig(model=model, method=method, seed=seed, outdir=outdir,
                     series_length=series_length, n_posterior=n_posterior,
                     budget=budget, options=options, observation=observation,
                     prior=prior, theta_star=theta_star, raw=raw)


def config_to_text(raw: dict) -> str:
    """Render a parsed config dict back to INI text."""
    parser = configparser.ConfigParser()
    for section, items in raw.items():
        parser[section] = {k: str(v) for k, v in items.items()}
    out = io.StringIO()
    parser.write(out)
    return out.getvalue()
