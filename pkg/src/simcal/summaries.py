"""Hand-crafted summary statistics, standardization, and summarizers.

A summarizer turns raw series into the conditioning features consumed
by the density (ratio) estimators: either frozen naive statistics or a
trainable recurrent embedding, both behind one interface.
"""

from __future__ import annotations

import numpy as np

from . import diffcore as dc

__all__ = ["naive_summaries", "naive_summary_dim", "Standardizer",
           "NaiveSummarizer", "EmbeddingSummarizer", "make_summarizer"]

NAIVE_NAMES = ("mean", "var", "max", "min", "median", "q25", "q75",
               "acf1", "acf2", "acf3")


def _acf(x: np.ndarray, lag: int) -> float:
    """Autocorrelation with per-lag length normalization.

    c_k = mean over the T-k overlapping products, divided by the
    (biased) variance; a zero-variance series scores 0 by convention.
    """
    t_len = x.size
    xc = x - x.mean()
    c0 = float(xc @ xc) / t_len
    # Guard covers exact zeros and the rounding dust a constant series leaves.
    if c0 <= 1e-24 * max(1.0, float(np.abs(x).max()) ** 2):
        return 0.0
    ck = float(xc[:-lag] @ xc[lag:]) / (t_len - lag)
    return ck / c0


def naive_summaries(x: np.ndarray) -> np.ndarray:
    """10 statistics per dimension: moments, range, quartiles, ACF lags 1-3.

    Multivariate input (T, d) yields the per-dimension blocks
    concatenated in column order, so the output has 10 * d entries.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    t_len, d = x.shape
    if t_len < 4:
        raise ValueError(f"need at least 4 time points for lag-3 ACF, got {t_len}")
    out = np.empty(10 * d)
    for k in range(d):
        col = x[:, k]
        q25, med, q75 = np.quantile(col, [0.25, 0.5, 0.75])
        out[10 * k:10 * (k + 1)] = (
            col.mean(),
            col.var(ddof=1),
            col.max(),
            col.min(),
            med,
            q25,
            q75,
            _acf(col, 1),
            _acf(col, 2),
            _acf(col, 3),
        )
    return out


def naive_summary_dim(series_dim: int) -> int:
    return 10 * series_dim


class Standardizer:
    """Per-feature z-scoring with stats frozen at fit time.

    Constant features keep scale 1 so transforms stay finite. Until
    ``fit`` is called the transform is the identity.
    """

    def __init__(self, dim: int):
        self.mean = np.zeros(dim)
        self.scale = np.ones(dim)

    def fit(self, values: np.ndarray) -> "Standardizer":
        flat = np.asarray(values, dtype=np.float64).reshape(-1, self.mean.size)
        self.mean = flat.mean(axis=0)
        std = flat.std(axis=0)
        self.scale = np.where(std > 0, std, 1.0)
        return self

    def transform(self, values: np.ndarray) -> np.ndarray:
        return (np.asarray(values, dtype=np.float64) - self.mean) / self.scale

    def inverse(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values, dtype=np.float64) * self.scale + self.mean

    def state(self) -> dict:
        return {"mean": self.mean.copy(), "scale": self.scale.copy()}

    def load_state(self, state) -> None:
        self.mean = np.asarray(state["mean"], dtype=np.float64).copy()
        self.scale = np.asarray(state["scale"], dtype=np.float64).copy()


class NaiveSummarizer:
    """Frozen hand-crafted statistics, z-scored with fit-time stats."""

    trainable = False

    def __init__(self, series_dim: int):
        self.series_dim = series_dim
        self.out_dim = naive_summary_dim(series_dim)
        self.std = Standardizer(self.out_dim)

    def _raw(self, xs: np.ndarray) -> np.ndarray:
        xs = np.asarray(xs, dtype=np.float64)
        if xs.ndim == 2:
            xs = xs[None]
        return np.stack([naive_summaries(x) for x in xs])

    def fit(self, xs: np.ndarray) -> None:
        self.std.fit(self._raw(xs))

    def cache(self, xs: np.ndarray) -> np.ndarray:
        """Precompute z-scored features for a training set."""
        return self.std.transform(self._raw(xs))

    def features_node(self, cached: np.ndarray, ids: np.ndarray) -> dc.Node:
        return dc.constant(cached[ids])

    def features_np(self, x: np.ndarray) -> np.ndarray:
        """Features of one raw series (T, d)."""
        return self.std.transform(naive_summaries(x))

    def state(self) -> dict:
        return {"summ._naive_mean": self.std.mean.copy(),
                "summ._naive_scale": self.std.scale.copy()}

    def load_state(self, arrays: dict) -> None:
        self.std.mean = arrays["summ._naive_mean"].copy()
        self.std.scale = arrays["summ._naive_scale"].copy()

    def config(self) -> dict:
        return {"kind": "naive", "series_dim": self.series_dim}


class EmbeddingSummarizer:
    """Recurrent embedding over per-channel z-scored raw series."""

    trainable = True

    def __init__(self, store: dc.ParamStore, series_dim: int, cell: str = "gru",
                 hidden: int = 32, layers: int = 2, out_dim: int = 16,
                 rng: np.random.Generator | None = None):
        from .embeddings import EmbeddingNet

        self.series_dim = series_dim
        self.cell = cell
        self.net = EmbeddingNet(store, series_dim, cell=cell, hidden=hidden,
                                layers=layers, out_dim=out_dim, rng=rng)
        self.out_dim = out_dim
        self.std = Standardizer(series_dim)
        self.store = store

    def fit(self, xs: np.ndarray) -> None:
        xs = np.asarray(xs, dtype=np.float64)
        self.std.fit(xs.reshape(-1, self.series_dim))

    def cache(self, xs: np.ndarray) -> np.ndarray:
        xs = np.asarray(xs, dtype=np.float64)
        return self.std.transform(xs)

    def features_node(self, cached: np.ndarray, ids: np.ndarray) -> dc.Node:
        return self.net.forward(cached[ids])

    def features_np(self, x: np.ndarray) -> np.ndarray:
        z = self.std.transform(np.asarray(x, dtype=np.float64))
        return self.net.forward(z[None]).value[0]

    def state(self) -> dict:
        arrays = {name: p.value.copy() for name, p in self.store.params.items()
                  if name.startswith(self.net.prefix + ".")}
        arrays["summ._input_mean"] = self.std.mean.copy()
        arrays["summ._input_scale"] = self.std.scale.copy()
        return arrays

    def load_state(self, arrays: dict) -> None:
        for name, p in self.store.params.items():
            if name.startswith(self.net.prefix + "."):
                p.value[...] = arrays[name]
        self.std.mean = arrays["summ._input_mean"].copy()
        self.std.scale = arrays["summ._input_scale"].copy()

    def config(self) -> dict:
        return {"kind": "embedding", "series_dim": self.series_dim,
                "cell": self.cell, "hidden": self.net.hidden,
                "layers": self.net.layers, "out_dim": self.out_dim}


def make_summarizer(kind: str, series_dim: int, store=None, rng=None, **kwargs):
    if kind == "naive":
        return NaiveSummarizer(series_dim)
    if kind in ("gru", "elman"):
        if store is None:
            raise ValueError("embedding summarizer needs a parameter store")
        return EmbeddingSummarizer(store, series_dim, cell=kind, rng=rng, **kwargs)
    raise ValueError(f"unknown summarizer kind {kind!r}")
