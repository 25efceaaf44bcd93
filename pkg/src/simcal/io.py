"""CSV and JSON artifact formats.

Floats are written with repr-exact formatting so identical values give
identical bytes; every format round-trips through its own reader.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

__all__ = [
    "write_series_csv", "read_series_csv",
    "write_samples_csv", "read_samples_csv",
    "write_chain_csv", "read_chain_csv",
    "write_ranks_csv", "read_ranks_csv",
    "write_json", "read_json", "sha256_file",
]


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_series_csv(path, data: np.ndarray, names=None) -> None:
    """One row per time step, one column per dimension, header row."""
    data = np.atleast_2d(np.asarray(data, dtype=np.float64))
    if data.ndim != 2:
        raise ValueError(f"series must be 2-d, got shape {data.shape}")
    names = names or [f"x{i + 1}" for i in range(data.shape[1])]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(names)
        for row in data:
            writer.writerow([_fmt(v) for v in row])


def read_series_csv(path) -> tuple[np.ndarray, list]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            names = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty series file") from None
        rows = []
        for lineno, row in enumerate(reader, start=2):
            try:
                rows.append([float(v) for v in row])
            except ValueError as err:
                raise ValueError(f"{path}:{lineno}: {err}") from None
    if not rows:
        raise ValueError(f"{path}: no data rows")
    return np.asarray(rows), names


write_samples_csv = write_series_csv
read_samples_csv = read_series_csv


def write_chain_csv(path, thetas: np.ndarray, log_estimates: np.ndarray,
                    accepted: np.ndarray, names=None) -> None:
    """MH chain format: iteration, theta columns, log-estimate, accepted."""
    thetas = np.atleast_2d(thetas)
    names = names or [f"theta{i + 1}" for i in range(thetas.shape[1])]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", *names, "log_estimate", "accepted"])
        for i, (row, le, acc) in enumerate(zip(thetas, log_estimates, accepted)):
            writer.writerow([i, *[_fmt(v) for v in row], _fmt(le), int(acc)])


def read_chain_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    d = len(header) - 3
    thetas = np.array([[float(v) for v in r[1:1 + d]] for r in rows])
    log_est = np.array([float(r[-2]) for r in rows])
    accepted = np.array([bool(int(r[-1])) for r in rows])
    return thetas, log_est, accepted, header[1:1 + d]


def write_ranks_csv(path, ranks: np.ndarray, names=None) -> None:
    """Calibration ranks: replicate, dimension name, rank."""
    ranks = np.atleast_2d(ranks)
    names = names or [f"theta{i + 1}" for i in range(ranks.shape[1])]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["replicate", "dimension", "rank"])
        for i, row in enumerate(ranks):
            for name, r in zip(names, row):
                writer.writerow([i, name, int(r)])


def read_ranks_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        rows = list(reader)
    names = []
    for _, name, _ in rows:
        if name not in names:
            names.append(name)
    n_rep = len(rows) // len(names)
    ranks = np.empty((n_rep, len(names)), dtype=int)
    for rep, name, rank in rows:
        ranks[int(rep), names.index(name)] = int(rank)
    return ranks, names


def write_json(path, payload: dict) -> None:
    Path(path).write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True)
                          + "\n")


def read_json(path) -> dict:
    return json.loads(Path(path).read_text())


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def sha256_file(path) -> str:
    digest = hashlib.sha256()
    digest.update(Path(path).read_bytes())
    return digest.hexdigest()
