"""Likelihood-to-evidence ratio estimation by multi-class contrast.

A residual network scores (summary, theta) pairs; training pits each
true pair against K parameters drawn from elsewhere in the training
pool, so the logit converges to the log posterior-to-prior ratio (up to
an x-dependent constant that cancels in inference).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diffcore as dc
from .priors import BoxUniform
from .sampling import MHConfig, mh_chain
from .summaries import Standardizer
from .training import TrainConfig, fit, pool_contrasts, split_indices

__all__ = ["RatioNet", "nre_loss", "train_nre", "snre_rounds",
           "posterior_logpdf_unnorm", "SnreResult"]


class RatioNet:
    """Residual feed-forward scorer f(summary, theta) -> scalar logit.

    Two width-50 residual layers behind an input projection; the output
    layer starts at zero so an untrained net scores every pair equally.
    """

    def __init__(self, store: dc.ParamStore, theta_dim: int, cond_dim: int,
                 hidden: int = 50, rng: np.random.Generator | None = None,
                 prefix: str = "ratio"):
        rng = rng or np.random.default_rng(0)
        self.theta_dim = theta_dim
        self.cond_dim = cond_dim
        self.hidden = hidden
        self.prefix = prefix
        self.store = store
        self.theta_std = Standardizer(theta_dim)
        self.config = {"theta_dim": theta_dim, "cond_dim": cond_dim, "hidden": hidden}
        in_dim = theta_dim + cond_dim

        def init(fan_in, shape):
            bound = 1.0 / np.sqrt(fan_in)
            return rng.uniform(-bound, bound, shape)

        self.w_in = store.register(f"{prefix}.w_in", init(in_dim, (in_dim, hidden)))
        self.b_in = store.register(f"{prefix}.b_in", init(in_dim, hidden))
        self.res_weights = []
        self.res_biases = []
        for k in range(2):
            self.res_weights.append(
                store.register(f"{prefix}.w{k}", init(hidden, (hidden, hidden))))
            self.res_biases.append(
                store.register(f"{prefix}.b{k}", init(hidden, hidden)))
        self.w_out = store.register(f"{prefix}.w_out", np.zeros((hidden, 1)))
        self.b_out = store.register(f"{prefix}.b_out", np.zeros(1))

    def forward_node(self, theta: np.ndarray, cond: dc.Node) -> dc.Node:
        """Logits (B, 1) for raw theta rows paired with conditioning rows."""
        z = dc.constant(self.theta_std.transform(np.atleast_2d(theta)))
        h = dc.concat([cond, z], axis=1)
        h = dc.relu(dc.matmul(h, self.w_in) + self.b_in)
        for w, b in zip(self.res_weights, self.res_biases):
            h = h + dc.relu(dc.matmul(h, w) + b)
        return dc.matmul(h, self.w_out) + self.b_out

    def forward_np(self, theta: np.ndarray, cond: np.ndarray) -> np.ndarray:
        theta = np.atleast_2d(np.asarray(theta, dtype=np.float64))
        cond = np.broadcast_to(np.asarray(cond, dtype=np.float64),
                               (theta.shape[0], self.cond_dim))
        h = np.concatenate([cond, self.theta_std.transform(theta)], axis=1)
        h = np.maximum(h @ self.w_in.value + self.b_in.value, 0.0)
        for w, b in zip(self.res_weights, self.res_biases):
            h = h + np.maximum(h @ w.value + b.value, 0.0)
        return (h @ self.w_out.value + self.b_out.value)[:, 0]

    def state(self) -> dict:
        arrays = {name: p.value.copy() for name, p in self.store.params.items()
                  if name.startswith(self.prefix + ".")}
        arrays[f"{self.prefix}._theta_mean"] = self.theta_std.mean.copy()
        arrays[f"{self.prefix}._theta_scale"] = self.theta_std.scale.copy()
        return arrays

    def load_state(self, arrays: dict) -> None:
        for name, p in self.store.params.items():
            if name.startswith(self.prefix + "."):
                p.value[...] = arrays[name]
        self.theta_std.mean = arrays[f"{self.prefix}._theta_mean"].copy()
        self.theta_std.scale = arrays[f"{self.prefix}._theta_scale"].copy()


def nre_loss(net: RatioNet, thetas: np.ndarray, cond: dc.Node,
             contrast_thetas: np.ndarray) -> dc.Node:
    """Mean multinomial logistic loss of true pairs against K contrasts.

    ``contrast_thetas`` has shape (B, K, theta_dim) with 0 < K < B. At
    f = 0 the loss is exactly ln(1 + K).
    """
    thetas = np.atleast_2d(thetas)
    batch, k = contrast_thetas.shape[0], contrast_thetas.shape[1]
    if thetas.shape[0] != batch:
        raise ValueError(f"{thetas.shape[0]} pairs but {batch} contrast rows")
    if not 0 < k < batch:
        raise ValueError(f"need 0 < K < B, got K={k}, B={batch}")
    cols = [net.forward_node(thetas, cond)]
    for j in range(k):
        cols.append(net.forward_node(contrast_thetas[:, j], cond))
    logits = dc.concat(cols, axis=1)
    return (dc.logsumexp(logits, axis=1) - logits[:, 0]).mean()


def _nre_batch_loss(net, summarizer, thetas, cached, contrast_table):
    def batch_loss(ids):
        cond = summarizer.features_node(cached, ids)
        contrasts = thetas[contrast_table[ids]]
        return nre_loss(net, thetas[ids], cond, contrasts)
    return batch_loss


def train_nre(thetas: np.ndarray, xs: np.ndarray, net: RatioNet, summarizer,
              cfg: TrainConfig, rng: np.random.Generator, n_contrasts: int = 9):
    """Amortized ratio estimation; contrasts resample every epoch from the
    item's own split of the shuffled pool."""
    thetas = np.atleast_2d(np.asarray(thetas, dtype=np.float64))
    if thetas.shape[0] == 0:
        raise ValueError("empty training set")
    summarizer.fit(xs)
    net.theta_std.fit(thetas)
    cached = summarizer.cache(xs)
    train_ids, val_ids = split_indices(thetas.shape[0], cfg.val_frac, rng)
    n = thetas.shape[0]
    table = np.empty((n, n_contrasts), dtype=int)
    table[...] = _refresh_contrasts(train_ids, val_ids, n, n_contrasts, rng)

    def reshuffle(epoch):
        if epoch > 0:
            table[...] = _refresh_contrasts(train_ids, val_ids, n, n_contrasts, rng)

    batch_loss = _nre_batch_loss(net, summarizer, thetas, cached, table)
    return fit(net.store, batch_loss, train_ids, val_ids, cfg, rng,
               epoch_setup=reshuffle)


def _refresh_contrasts(train_ids, val_ids, n, k, rng):
    """Contrasts come from the item's own split so validation stays honest."""
    table = np.empty((n, k), dtype=int)
    for pool in (train_ids, val_ids):
        table[pool] = pool_contrasts(pool, k, rng)
    return table


def posterior_logpdf_unnorm(theta, observation_features: np.ndarray, net: RatioNet,
                            prior: BoxUniform) -> np.ndarray:
    """log prior + logit, -inf outside the prior box.

    ``observation_features`` is the summarizer output for the observed
    series, computed once by the caller.
    """
    theta = np.atleast_2d(np.asarray(theta, dtype=np.float64))
    out = np.full(theta.shape[0], -np.inf)
    inside = prior.inside(theta)
    if inside.any():
        lp = prior.log_prob(theta[inside])
        f = net.forward_np(theta[inside], observation_features)
        out[inside] = lp + f
    return out


@dataclass
class SnreResult:
    net: RatioNet
    summarizer: object
    proposals: list
    thetas: np.ndarray
    xs: np.ndarray
    rounds: np.ndarray
    fit_results: list


def snre_rounds(prior: BoxUniform, simulator, observation: np.ndarray,
                n_rounds: int, sims_per_round: int, net: RatioNet, summarizer,
                cfg: TrainConfig, rng: np.random.Generator, n_contrasts: int = 9,
                proposal_mh: MHConfig | None = None) -> SnreResult:
    """Round-based ratio estimation; later rounds propose from the current
    ratio posterior via MH on log prior + logit."""
    if n_rounds < 1 or sims_per_round < 1:
        raise ValueError("n_rounds and sims_per_round must be >= 1")
    y = np.asarray(observation, dtype=np.float64)
    from .flows import ProposalState  # shared round bookkeeping record

    thetas = np.empty((0, prior.dim))
    xs = None
    rounds = np.empty(0, dtype=int)
    proposals = []
    fits = []
    for m in range(n_rounds):
        if m == 0:
            new_thetas = prior.sample(sims_per_round, rng)
            proposals.append(ProposalState(0, None))
        else:
            feats = summarizer.features_np(y)

            def log_target(theta):
                return posterior_logpdf_unnorm(theta, feats, net, prior)[0]

            mh_cfg = proposal_mh or MHConfig(
                pilot_steps=5000, main_steps=10 * sims_per_round, thin=10,
                pilot_scale=prior.range / 20.0)
            chain = mh_chain(log_target, prior.mean, mh_cfg, rng)
            new_thetas = chain.samples[-sims_per_round:]
            proposals.append(ProposalState(m, net.state()))
        new_xs = np.stack([simulator.simulate(t, rng) for t in new_thetas])
        thetas = np.concatenate([thetas, new_thetas])
        xs = new_xs if xs is None else np.concatenate([xs, new_xs])
        rounds = np.concatenate([rounds, np.full(sims_per_round, m, dtype=int)])

        summarizer.fit(xs)
        net.theta_std.fit(thetas)
        cached = summarizer.cache(xs)
        train_ids, val_ids = split_indices(thetas.shape[0], cfg.val_frac, rng)
        n = thetas.shape[0]
        table = _refresh_contrasts(train_ids, val_ids, n, n_contrasts, rng)

        def reshuffle(epoch, table=table, tr=train_ids, va=val_ids, n=n):
            if epoch > 0:
                table[...] = _refresh_contrasts(tr, va, n, n_contrasts, rng)

        batch_loss = _nre_batch_loss(net, summarizer, thetas, cached, table)
        fits.append(fit(net.store, batch_loss, train_ids, val_ids, cfg, rng,
                        epoch_setup=reshuffle))
    return SnreResult(net, summarizer, proposals, thetas, xs, rounds, fits)
