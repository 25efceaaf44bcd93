"""Shared minibatch training loop with validation-based early stopping."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import diffcore as dc

__all__ = ["TrainConfig", "FitResult", "fit", "split_indices", "pool_contrasts"]


@dataclass
class TrainConfig:
    batch_size: int = 50
    lr: float = 5e-4
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    patience: int = 20
    max_epochs: int = 500
    val_frac: float = 0.1

    def __post_init__(self):
        if not (0.0 < self.val_frac < 1.0):
            raise ValueError("val_frac must be in (0, 1)")
        if self.batch_size < 1 or self.patience < 1 or self.max_epochs < 1:
            raise ValueError("batch_size, patience, max_epochs must be positive")


@dataclass
class FitResult:
    epochs: int
    best_val: float
    val_history: list = field(default_factory=list)


def split_indices(n_items: int, val_frac: float, rng: np.random.Generator):
    """Global shuffled train/validation split; validation gets >= 1 item."""
    perm = rng.permutation(n_items)
    n_val = max(1, int(round(val_frac * n_items)))
    if n_val >= n_items:
        raise ValueError(f"cannot hold out {n_val} of {n_items} items")
    return perm[n_val:], perm[:n_val]


def pool_contrasts(pool: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """For each pool member, k distinct other members (uniform, no self).

    Row i gets pool[(i + o) % m] for k distinct random offsets o in
    [1, m); each draw is marginally uniform over the other members.
    """
    m = pool.size
    if m - 1 < k:
        raise ValueError(f"pool of {m} items cannot supply {k} distinct contrasts")
    offsets = rng.integers(1, m, size=(m, k))
    while True:
        offsets.sort(axis=1)
        bad = (offsets[:, 1:] == offsets[:, :-1]).any(axis=1) if k > 1 else \
            np.zeros(m, dtype=bool)
        if not bad.any():
            break
        offsets[bad] = rng.integers(1, m, size=(int(bad.sum()), k))
    idx = (np.arange(m)[:, None] + offsets) % m
    return pool[idx]


def fit(store: dc.ParamStore, batch_loss, train_ids: np.ndarray,
        val_ids: np.ndarray, cfg: TrainConfig, rng: np.random.Generator,
        epoch_setup=None) -> FitResult:
    """Minimize ``batch_loss(ids)`` by Adam until validation stalls.

    ``batch_loss`` maps item indices to a scalar loss Node; validation
    evaluates the same loss without gradients. The best-validation
    parameter state is restored before returning. A non-finite loss
    aborts with the offending epoch in the message.
    """
    best_val = np.inf
    best_state = store.state()
    stall = 0
    history = []
    epochs_run = 0
    for epoch in range(cfg.max_epochs):
        if epoch_setup is not None:
            epoch_setup(epoch)
        order = rng.permutation(train_ids)
        for start in range(0, order.size, cfg.batch_size):
            ids = order[start:start + cfg.batch_size]
            store.zero_grad()
            loss = batch_loss(ids)
            if not np.isfinite(loss.value):
                raise FloatingPointError(
                    f"non-finite training loss {loss.value} at epoch {epoch}")
            dc.backward(loss)
            store.adam_step(cfg.lr, cfg.betas, cfg.eps)
        val = 0.0
        for start in range(0, val_ids.size, 500):
            ids = val_ids[start:start + 500]
            val += float(batch_loss(ids).value) * ids.size
        val /= val_ids.size
        if not np.isfinite(val):
            raise FloatingPointError(f"non-finite validation loss at epoch {epoch}")
        history.append(val)
        epochs_run = epoch + 1
        if val < best_val:
            best_val = val
            best_state = store.state()
            stall = 0
        else:
            stall += 1
            if stall >= cfg.patience:
                break
    store.load_state(best_state)
    return FitResult(epochs=epochs_run, best_val=best_val, val_history=history)
