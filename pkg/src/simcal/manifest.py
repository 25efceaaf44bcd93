"""Run manifests: config echo, versions, budget accounting, output hashes."""

from __future__ import annotations

import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .io import read_json, sha256_file, write_json
from .simulators import _kernels

__all__ = ["build_manifest", "write_manifest", "load_manifest"]


def _versions() -> dict:
    try:
        import numba
        numba_version = numba.__version__
    except ImportError:
        numba_version = None
    return {
        "simcal": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": numba_version,
        "numba_kernels_active": _kernels.NUMBA_ENABLED,
    }


def build_manifest(config_raw: dict, seed: int, sim_calls: int,
                   expected_calls: int, outputs: dict, started: float,
                   method_info: dict | None = None,
                   status: str = "ok") -> dict:
    """Assemble the manifest payload; ``outputs`` maps relative path -> file."""
    hashes = {name: sha256_file(path) for name, path in outputs.items()}
    return {
        "status": status,
        "config": config_raw,
        "seed": seed,
        "versions": _versions(),
        "wall_clock_sec": round(time.time() - started, 3),
        "sim_calls": sim_calls,
        "expected_calls": expected_calls,
        "outputs": hashes,
        "method_info": method_info or {},
    }


def write_manifest(path, payload: dict) -> None:
    write_json(path, payload)


def load_manifest(path) -> dict:
    payload = read_json(path)
    for key in ("config", "outputs", "seed"):
        if key not in payload:
            raise ValueError(f"{path}: not a run manifest (missing {key!r})")
    return payload
