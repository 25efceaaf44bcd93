"""Command-line experiment harness.

Subcommands: simulate, train, sample, score, sbc, reproduce. Exit codes:
0 success, 1 configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import sys
import time
import traceback
from pathlib import Path

import numpy as np

from . import io, metrics
from .manifest import build_manifest, load_manifest, write_manifest
from .pipelines import load_posterior_blob, run_method, save_posterior_blob
from .rng import substream
from .runconfig import ConfigError, RunConfig, config_to_text, parse_run_config
from .sbc import sbc_run
from .simulators import EXPERIMENTS, get_experiment

__all__ = ["main", "execute_run"]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _resolve_observation(cfg: RunConfig):
    obs = cfg.observation
    if "file" in obs:
        data, _ = io.read_series_csv(obs["file"])
        return data, {"source": obs["file"]}
    theta = np.asarray(obs["theta_resolved"], dtype=np.float64)
    obs_seed = int(obs.get("seed", cfg.seed))
    simulator, _, _ = get_experiment(cfg.model, cfg.series_length)
    y = simulator.simulate(theta, substream(obs_seed, "observation"))
    return y, {"theta": theta.tolist(), "seed": obs_seed}


def execute_run(cfg: RunConfig, outdir=None) -> dict:
    """The full train pipeline for one config; returns the manifest payload.

    Writes observation.csv, posterior_samples.csv, a posterior blob or
    chain CSV, and manifest.json into the output directory. A mid-run
    failure still writes a failure manifest beside any partial outputs.
    """
    outdir = Path(outdir if outdir is not None else cfg.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    started = time.time()
    outputs = {}
    simulator, _, _ = get_experiment(cfg.model, cfg.series_length)
    try:
        y, obs_meta = _resolve_observation(cfg)
        obs_path = outdir / "observation.csv"
        io.write_series_csv(obs_path, y)
        outputs["observation.csv"] = obs_path

        result = run_method(cfg.method, simulator, cfg.prior, y, cfg.seed,
                            cfg.budget, cfg.options, cfg.n_posterior,
                            cfg.theta_star)
        samples_path = outdir / "posterior_samples.csv"
        io.write_samples_csv(samples_path, result.samples, list(cfg.prior.names))
        outputs["posterior_samples.csv"] = samples_path
        if result.blob_arrays is not None:
            blob_path = outdir / "posterior.blob"
            save_posterior_blob(blob_path, result)
            outputs["posterior.blob"] = blob_path
        if result.chain is not None:
            chain_path = outdir / "chain.csv"
            if hasattr(result.chain, "log_estimates"):
                io.write_chain_csv(chain_path, result.chain.thetas,
                                   result.chain.log_estimates,
                                   result.chain.accepted, list(cfg.prior.names))
            else:
                io.write_chain_csv(chain_path, result.chain.samples,
                                   result.chain.log_targets,
                                   result.chain.accepted, list(cfg.prior.names))
            outputs["chain.csv"] = chain_path

        info = dict(result.info)
        info["observation"] = obs_meta
        payload = build_manifest(cfg.raw, cfg.seed, result.info["sim_calls"],
                                 result.expected_calls, outputs, started, info)
    except Exception as err:
        payload = build_manifest(cfg.raw, cfg.seed, -1, -1, outputs, started,
                                 {"error": f"{type(err).__name__}: {err}"},
                                 status="failed")
        write_manifest(outdir / "manifest.json", payload)
        raise
    write_manifest(outdir / "manifest.json", payload)
    return payload


# -- subcommand implementations -------------------------------------------


def _cmd_simulate(args) -> int:
    simulator, prior, theta_star = get_experiment(args.model, args.length)
    if args.theta is not None:
        theta = np.asarray([float(v) for v in args.theta.replace(",", " ").split()])
    elif theta_star is not None:
        theta = theta_star
    else:
        raise ConfigError(f"model {args.model!r} needs --theta")
    started = time.time()
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    y = simulator.simulate(theta, substream(args.seed, "observation"))
    path = outdir / "series.csv"
    io.write_series_csv(path, y)
    payload = build_manifest(
        {"simulate": {"model": args.model, "theta": theta.tolist(),
                      "seed": args.seed, "length": args.length}},
        args.seed, 1, 1, {"series.csv": path}, started)
    write_manifest(outdir / "manifest.json", payload)
    print(f"wrote {path}")
    return 0


def _cmd_train(args) -> int:
    text = Path(args.config).read_text()
    cfg = parse_run_config(text)
    payload = execute_run(cfg, args.outdir or cfg.outdir)
    print(f"status: {payload['status']}; sim calls: {payload['sim_calls']}; "
          f"outputs: {', '.join(payload['outputs'])}")
    return 0


def _cmd_sample(args) -> int:
    handle = load_posterior_blob(args.blob)
    y, _ = io.read_series_csv(args.observation)
    draws = handle.sample_posterior(y, args.n, substream(args.seed, "sample-cmd"))
    io.write_samples_csv(args.out, draws, list(handle.prior.names))
    print(f"wrote {args.out}")
    return 0


def _cmd_score(args) -> int:
    ref, ref_names = io.read_samples_csv(args.reference)
    est, est_names = io.read_samples_csv(args.estimate)
    if ref.shape[1] != est.shape[1]:
        raise ConfigError(
            f"dimension mismatch: {args.reference} has {ref.shape[1]} columns, "
            f"{args.estimate} has {est.shape[1]}")
    bandwidth = metrics.median_heuristic(ref)
    report = {
        "reference": {"file": str(args.reference), "n": ref.shape[0],
                      "sha256": io.sha256_file(args.reference)},
        "estimate": {"file": str(args.estimate), "m": est.shape[0],
                     "sha256": io.sha256_file(args.estimate)},
        "metrics": [
            {"metric": "wasserstein", "p": args.p,
             "value": metrics.wasserstein(ref, est, args.p)},
            {"metric": "mmd_unbiased", "bandwidth": bandwidth,
             "value": metrics.mmd_unbiased(ref, est, bandwidth)},
        ],
    }
    io.write_json(args.out, report)
    for entry in report["metrics"]:
        print(f"{entry['metric']}: {entry['value']:.6f}")
    return 0


def _cmd_sbc(args) -> int:
    started = time.time()
    handle = load_posterior_blob(args.blob)
    simulator, _, _ = get_experiment(args.model, args.length)
    if getattr(handle, "kind", "") == "ratio":
        handle.method = "sir"
    rng = substream(args.seed, "sbc")
    result = sbc_run(handle.prior, simulator, handle, args.replicates,
                     args.samples, rng, bins=args.bins)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    ranks_path = outdir / "ranks.csv"
    io.write_ranks_csv(ranks_path, result.ranks, list(handle.prior.names))
    hist_payload = {
        "replicates": args.replicates,
        "samples_per_replicate": args.samples,
        "bins": args.bins,
        "skipped": result.skipped,
        "dimensions": [
            {
                "name": name,
                "counts": h.counts,
                "expected": h.expected,
                "band_low": h.band_low,
                "band_high": h.band_high,
                "bin_edges": h.bin_edges,
                "chi2": result.chi2[k],
                "p_value": result.p_values[k],
                "max_bin_deviation": result.max_bin_deviation[k],
            }
            for k, (name, h) in enumerate(zip(handle.prior.names,
                                              result.histograms))
        ],
    }
    hist_path = outdir / "histograms.json"
    io.write_json(hist_path, hist_payload)
    payload = build_manifest(
        {"sbc": {"blob": str(args.blob), "model": args.model,
                 "replicates": args.replicates, "samples": args.samples,
                 "bins": args.bins, "seed": args.seed}},
        args.seed, args.replicates + result.skipped,
        args.replicates + result.skipped,
        {"ranks.csv": ranks_path, "histograms.json": hist_path}, started)
    write_manifest(outdir / "manifest.json", payload)
    for dim in hist_payload["dimensions"]:
        print(f"{dim['name']}: chi2={dim['chi2']:.2f} p={dim['p_value']:.4f} "
              f"max_dev={dim['max_bin_deviation']:.1f}")
    return 0


def _cmd_reproduce(args) -> int:
    manifest = load_manifest(args.manifest)
    cfg = parse_run_config(config_to_text(manifest["config"]))
    outdir = args.outdir or (str(Path(args.manifest).parent) + "-reproduced")
    payload = execute_run(cfg, outdir)
    mismatches = []
    for name, digest in manifest["outputs"].items():
        new_digest = payload["outputs"].get(name)
        marker = "ok" if new_digest == digest else "MISMATCH"
        if new_digest != digest:
            mismatches.append(name)
        print(f"{name}: {marker}")
    if mismatches:
        raise RuntimeError(f"reproduction mismatch in: {', '.join(mismatches)}")
    print("reproduction byte-identical")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="simcal",
                     description="Likelihood-free calibration experiment harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a simulator once, write series CSV")
    p.add_argument("--model", required=True, choices=sorted(EXPERIMENTS))
    p.add_argument("--theta", help="comma-separated parameter values")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--length", type=int, default=100)
    p.add_argument("--outdir", required=True)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("train", help="full pipeline from a run config file")
    p.add_argument("--config", required=True)
    p.add_argument("--outdir", help="override the config's output directory")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("sample", help="draw from a trained posterior blob")
    p.add_argument("--blob", required=True)
    p.add_argument("--observation", required=True)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_sample)

    p = sub.add_parser("score", help="Wasserstein + MMD between two sample CSVs")
    p.add_argument("--reference", required=True,
                   help="ground-truth samples; sets the MMD bandwidth")
    p.add_argument("--estimate", required=True)
    p.add_argument("--p", type=float, default=2.0, help="Wasserstein order")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("sbc", help="simulation-based calibration of a posterior blob")
    p.add_argument("--blob", required=True)
    p.add_argument("--model", required=True, choices=sorted(EXPERIMENTS))
    p.add_argument("--replicates", type=int, default=500)
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--bins", type=int, default=20)
    p.add_argument("--length", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--outdir", required=True)
    p.set_defaults(func=_cmd_sbc)

    p = sub.add_parser("reproduce", help="re-run from a manifest, verify hashes")
    p.add_argument("--manifest", required=True)
    p.add_argument("--outdir")
    p.set_defaults(func=_cmd_reproduce)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 1
    except Exception as err:  # noqa: BLE001 - top-level CLI fault barrier
        traceback.print_exc()
        print(f"runtime failure: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
