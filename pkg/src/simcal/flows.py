"""Conditional masked autoregressive flow for posterior estimation.

A stack of masked affine transforms with fixed interleaved permutations
maps parameters to a standard-normal base, conditioned on a summary
vector. Training maximizes conditional log-likelihood; the sequential
variant applies the atomic-contrast correction from the second round on
so the flow keeps targeting the true posterior under a narrowed
proposal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diffcore as dc
from .priors import BoxUniform
from .summaries import Standardizer
from .training import TrainConfig, fit, pool_contrasts, split_indices

__all__ = ["MADE", "MaskedAffineTransform", "FlowStack", "build_flow",
           "train_npe", "snpe_rounds", "ProposalState", "SnpeResult"]

_LOG_2PI = np.log(2.0 * np.pi)
_LOGSCALE_CAP = 7.0


def _relu_np(x):
    return np.maximum(x, 0.0)


class MADE:
    """Masked conditional MLP emitting per-dimension shift and log-scale.

    Hidden degrees cycle 0..dim-1: degree-0 units see only the
    conditioning features and feed every output, so even the first
    autoregressive dimension stays conditioned on the summary. The
    output layer starts at zero, making the initial transform the
    identity.
    """

    def __init__(self, store: dc.ParamStore, prefix: str, dim: int, cond_dim: int,
                 hidden: int = 50, blocks: int = 2,
                 rng: np.random.Generator | None = None):
        rng = rng or np.random.default_rng(0)
        self.dim = dim
        self.cond_dim = cond_dim
        self.hidden = hidden
        self.blocks = blocks
        in_deg = np.arange(1, dim + 1)
        hid_deg = np.arange(hidden) % dim
        out_deg = np.tile(np.arange(1, dim + 1), 2)

        self.weights = []
        self.biases = []
        self.masks = []
        mask_in = np.concatenate(
            [hid_deg[None, :] >= in_deg[:, None], np.ones((cond_dim, hidden), bool)],
            axis=0,
        ).astype(np.float64)
        self._register(store, f"{prefix}.w0", (dim + cond_dim, hidden), mask_in, rng)
        for k in range(1, blocks):
            mask_h = (hid_deg[None, :] >= hid_deg[:, None]).astype(np.float64)
            self._register(store, f"{prefix}.w{k}", (hidden, hidden), mask_h, rng)
        mask_out = (out_deg[None, :] > hid_deg[:, None]).astype(np.float64)
        self.weights.append(store.register(f"{prefix}.wout", np.zeros((hidden, 2 * dim))))
        self.biases.append(store.register(f"{prefix}.bout", np.zeros(2 * dim)))
        self.masks.append(mask_out)

    def _register(self, store, name, shape, mask, rng):
        bound = 1.0 / np.sqrt(shape[0])
        w = store.register(name, rng.uniform(-bound, bound, shape) * mask)
        b = store.register(name.replace(".w", ".b"), rng.uniform(-bound, bound, shape[1]))
        self.weights.append(w)
        self.biases.append(b)
        self.masks.append(mask)

    def forward_node(self, theta: dc.Node, cond: dc.Node):
        h = dc.concat([theta, cond], axis=1)
        for k in range(self.blocks):
            h = dc.matmul(h, dc.mul(self.weights[k], dc.constant(self.masks[k])))
            h = dc.relu(h + self.biases[k])
        out = dc.matmul(h, dc.mul(self.weights[-1], dc.constant(self.masks[-1])))
        out = out + self.biases[-1]
        shift = out[:, :self.dim]
        scale = dc.tanh(out[:, self.dim:] * (1.0 / _LOGSCALE_CAP)) * _LOGSCALE_CAP
        return shift, scale

    def forward_np(self, theta: np.ndarray, cond: np.ndarray):
        h = np.concatenate([theta, cond], axis=1)
        for k in range(self.blocks):
            h = _relu_np(h @ (self.weights[k].value * self.masks[k])
                         + self.biases[k].value)
        out = h @ (self.weights[-1].value * self.masks[-1]) + self.biases[-1].value
        shift = out[:, :self.dim]
        scale = np.tanh(out[:, self.dim:] / _LOGSCALE_CAP) * _LOGSCALE_CAP
        return shift, scale


class MaskedAffineTransform:
    """One affine autoregressive layer: u = (theta - shift) * exp(-scale)."""

    def __init__(self, made: MADE, index: int):
        self.made = made
        self.index = index

    def forward_node(self, theta: dc.Node, cond: dc.Node):
        shift, scale = self.made.forward_node(theta, cond)
        u = (theta - shift) * dc.exp(-scale)
        logdet = (-scale).sum(axis=1)
        return u, logdet

    def forward_np(self, theta: np.ndarray, cond: np.ndarray):
        shift, scale = self.made.forward_np(theta, cond)
        if not np.all(np.isfinite(scale)):
            raise FloatingPointError(f"non-finite log-scale in transform {self.index}")
        u = (theta - shift) * np.exp(-scale)
        return u, -scale.sum(axis=1)

    def inverse_np(self, u: np.ndarray, cond: np.ndarray):
        theta = np.zeros_like(u)
        shift = scale = None
        for _ in range(self.made.dim):
            shift, scale = self.made.forward_np(theta, cond)
            theta = u * np.exp(scale) + shift
        if not np.all(np.isfinite(scale)):
            raise FloatingPointError(f"non-finite log-scale in transform {self.index}")
        return theta


class FlowStack:
    """Transform stack + base distribution + frozen input standardization."""

    def __init__(self, dim: int, cond_dim: int, n_transforms: int = 5,
                 hidden: int = 50, blocks: int = 2,
                 rng: np.random.Generator | None = None,
                 store: dc.ParamStore | None = None, prefix: str = "flow"):
        rng = rng or np.random.default_rng(0)
        self.dim = dim
        self.cond_dim = cond_dim
        self.config = {"dim": dim, "cond_dim": cond_dim, "n_transforms": n_transforms,
                       "hidden": hidden, "blocks": blocks}
        self.store = store if store is not None else dc.ParamStore()
        self.prefix = prefix
        self.theta_std = Standardizer(dim)
        self.permutations = []
        self.transforms = []
        for k in range(n_transforms):
            perm = rng.permutation(dim) if k > 0 else np.arange(dim)
            self.permutations.append(perm)
            made = MADE(self.store, f"{prefix}.t{k}", dim, cond_dim, hidden, blocks, rng)
            self.transforms.append(MaskedAffineTransform(made, k))

    # -- training-side graph -------------------------------------------

    def log_prob_node(self, theta: np.ndarray, cond: dc.Node) -> dc.Node:
        """Conditional log-density of raw theta rows as a graph Node (B,)."""
        v = dc.constant(self.theta_std.transform(np.atleast_2d(theta)))
        logdet_std = -np.log(self.theta_std.scale).sum()
        total = None
        for perm, tr in zip(self.permutations, self.transforms):
            v = v[:, perm]
            v, ld = tr.forward_node(v, cond)
            total = ld if total is None else total + ld
        base = (v * v).sum(axis=1) * (-0.5) + (-0.5 * self.dim * _LOG_2PI + logdet_std)
        return base + total

    # -- numpy-side evaluation and sampling ----------------------------

    def log_prob(self, theta: np.ndarray, cond: np.ndarray) -> np.ndarray:
        """Exact conditional log-density, vectorized over rows of theta."""
        theta = np.atleast_2d(np.asarray(theta, dtype=np.float64))
        cond = self._tile_cond(cond, theta.shape[0])
        v = self.theta_std.transform(theta)
        total = -np.log(self.theta_std.scale).sum() * np.ones(theta.shape[0])
        for perm, tr in zip(self.permutations, self.transforms):
            v = v[:, perm]
            v, ld = tr.forward_np(v, cond)
            total += ld
        return total - 0.5 * (v * v).sum(axis=1) - 0.5 * self.dim * _LOG_2PI

    def forward(self, theta: np.ndarray, cond: np.ndarray) -> np.ndarray:
        """Normalizing direction f: parameters -> base coordinates."""
        theta = np.atleast_2d(np.asarray(theta, dtype=np.float64))
        cond = self._tile_cond(cond, theta.shape[0])
        v = self.theta_std.transform(theta)
        for perm, tr in zip(self.permutations, self.transforms):
            v = v[:, perm]
            v, _ = tr.forward_np(v, cond)
        return v

    def inverse(self, u: np.ndarray, cond: np.ndarray) -> np.ndarray:
        """Generative direction g: base coordinates -> parameters."""
        u = np.atleast_2d(np.asarray(u, dtype=np.float64))
        cond = self._tile_cond(cond, u.shape[0])
        v = u
        for perm, tr in zip(reversed(self.permutations), reversed(self.transforms)):
            v = tr.inverse_np(v, cond)
            v = v[:, np.argsort(perm)]
        return self.theta_std.inverse(v)

    def sample(self, n: int, cond: np.ndarray, rng: np.random.Generator,
               prior: BoxUniform | None = None, max_tries: int = 200) -> np.ndarray:
        """iid draws; with a prior, leaked mass is rejected and redrawn."""
        out = []
        need = n
        for _ in range(max_tries):
            u = rng.standard_normal((need, self.dim))
            theta = self.inverse(u, cond)
            if prior is not None:
                theta = theta[prior.inside(theta)]
            if theta.shape[0]:
                out.append(theta)
                need -= theta.shape[0]
            if need <= 0:
                break
        if need > 0:
            raise RuntimeError(
                f"flow sampling rejected too much mass: {n - need}/{n} accepted "
                f"after {max_tries} rounds")
        return np.concatenate(out)[:n]

    def _tile_cond(self, cond, n):
        cond = np.asarray(cond, dtype=np.float64)
        if cond.ndim == 1:
            return np.broadcast_to(cond, (n, cond.size))
        if cond.shape[0] != n:
            raise ValueError(f"conditioning rows {cond.shape[0]} != batch {n}")
        return cond

    # -- persistence ----------------------------------------------------

    def state(self) -> dict:
        arrays = {name: p.value.copy() for name, p in self.store.params.items()
                  if name.startswith(self.prefix + ".")}
        arrays[f"{self.prefix}._theta_mean"] = self.theta_std.mean.copy()
        arrays[f"{self.prefix}._theta_scale"] = self.theta_std.scale.copy()
        for k, perm in enumerate(self.permutations):
            arrays[f"{self.prefix}._perm{k}"] = perm.astype(np.float64)
        return arrays

    def load_state(self, arrays: dict) -> None:
        for name, p in self.store.params.items():
            if name.startswith(self.prefix + "."):
                p.value[...] = arrays[name]
        self.theta_std.mean = arrays[f"{self.prefix}._theta_mean"].copy()
        self.theta_std.scale = arrays[f"{self.prefix}._theta_scale"].copy()
        for k in range(len(self.permutations)):
            self.permutations[k] = arrays[f"{self.prefix}._perm{k}"].astype(int)

    def clone(self) -> "FlowStack":
        c = self.config
        twin = FlowStack(c["dim"], c["cond_dim"], c["n_transforms"], c["hidden"],
                         c["blocks"], rng=np.random.default_rng(0), prefix=self.prefix)
        twin.load_state(self.state())
        return twin


def build_flow(dim: int, cond_dim: int, rng: np.random.Generator,
               n_transforms: int = 5, hidden: int = 50, blocks: int = 2,
               store: dc.ParamStore | None = None) -> FlowStack:
    return FlowStack(dim, cond_dim, n_transforms, hidden, blocks, rng, store)


# -- training ------------------------------------------------------------


def _ml_loss(flow: FlowStack, summarizer, thetas, cached):
    def batch_loss(ids):
        cond = summarizer.features_node(cached, ids)
        return -flow.log_prob_node(thetas[ids], cond).mean()
    return batch_loss


def train_npe(thetas: np.ndarray, xs: np.ndarray, flow: FlowStack, summarizer,
              cfg: TrainConfig, rng: np.random.Generator):
    """Amortized neural posterior estimation by maximum conditional likelihood.

    Standardization statistics (theta and features) are refit here and
    stay frozen for the lifetime of the trained flow.
    """
    thetas = np.atleast_2d(np.asarray(thetas, dtype=np.float64))
    if thetas.shape[0] == 0:
        raise ValueError("empty training set")
    summarizer.fit(xs)
    flow.theta_std.fit(thetas)
    cached = summarizer.cache(xs)
    train_ids, val_ids = split_indices(thetas.shape[0], cfg.val_frac, rng)
    return fit(flow.store, _ml_loss(flow, summarizer, thetas, cached),
               train_ids, val_ids, cfg, rng)


@dataclass
class ProposalState:
    round_index: int
    flow_state: dict | None  # None marks the prior round


@dataclass
class SnpeResult:
    flow: FlowStack
    summarizer: object
    proposals: list
    thetas: np.ndarray
    xs: np.ndarray
    rounds: np.ndarray
    fit_results: list


def draw_round_atoms(rounds: np.ndarray, n_atoms: int,
                     rng: np.random.Generator) -> np.ndarray:
    """Per item, contrasting-parameter indices from the item's own round.

    Sampling is uniform without replacement (with replacement only when
    a round is smaller than the atom count).
    """
    n = rounds.size
    table = np.empty((n, n_atoms), dtype=int)
    for r in np.unique(rounds):
        members = np.flatnonzero(rounds == r)
        m = members.size
        if m < 2:
            raise ValueError(f"round {r} has {m} items; cannot draw contrasts")
        if m - 1 < n_atoms:
            for i in members:
                pool = members[members != i]
                table[i] = rng.choice(pool, size=n_atoms, replace=True)
            continue
        table[members] = pool_contrasts(members, n_atoms, rng)
    return table


def _atomic_loss(flow: FlowStack, summarizer, thetas, cached, log_prior, atom_table):
    """Contrast each item's theta against atoms from its own round's proposal.

    Logits are log q(theta'|x) - log p(theta'); the loss is the negative
    log-softmax of the true atom, which realizes the proposal-corrected
    objective without evaluating the proposal density itself.
    """
    n_atoms = atom_table.shape[1]

    def batch_loss(ids):
        cond = summarizer.features_node(cached, ids)
        batch = ids.size
        atom_ids = np.concatenate([ids[:, None], atom_table[ids]], axis=1)
        flat = atom_ids.reshape(-1)
        rep = np.repeat(np.arange(batch), n_atoms + 1)
        logq = flow.log_prob_node(thetas[flat], cond[rep])
        logits = logq + dc.constant(-log_prior[flat])
        grouped = logits[np.arange(batch * (n_atoms + 1)).reshape(batch, n_atoms + 1)]
        return (dc.logsumexp(grouped, axis=1) - grouped[:, 0]).mean()

    return batch_loss


def snpe_rounds(prior: BoxUniform, simulator, observation: np.ndarray,
                n_rounds: int, sims_per_round: int, flow: FlowStack, summarizer,
                cfg: TrainConfig, rng: np.random.Generator,
                n_atoms: int = 10) -> SnpeResult:
    """Round-based neural posterior estimation (proposal = last posterior at y).

    Round 0 trains by plain maximum likelihood on prior draws, so a
    single round is exactly amortized NPE; later rounds accumulate data
    and train with the atomic contrast loss. Proposal draws outside the
    prior box are rejected and redrawn.
    """
    if n_rounds < 1 or sims_per_round < 1:
        raise ValueError("n_rounds and sims_per_round must be >= 1")
    y = np.asarray(observation, dtype=np.float64)
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
            cond_y = summarizer.features_np(y)
            new_thetas = flow.sample(sims_per_round, cond_y, rng, prior=prior)
            proposals.append(ProposalState(m, flow.state()))
        new_xs = np.stack([simulator.simulate(t, rng) for t in new_thetas])
        thetas = np.concatenate([thetas, new_thetas])
        xs = new_xs if xs is None else np.concatenate([xs, new_xs])
        rounds = np.concatenate([rounds, np.full(sims_per_round, m, dtype=int)])

        summarizer.fit(xs)
        flow.theta_std.fit(thetas)
        cached = summarizer.cache(xs)
        train_ids, val_ids = split_indices(thetas.shape[0], cfg.val_frac, rng)
        if m == 0:
            batch_loss = _ml_loss(flow, summarizer, thetas, cached)
            fits.append(fit(flow.store, batch_loss, train_ids, val_ids, cfg, rng))
        else:
            log_prior = prior.log_prob(thetas)
            atom_table = draw_round_atoms(rounds, n_atoms, rng)
            batch_loss = _atomic_loss(flow, summarizer, thetas, cached, log_prior,
                                      atom_table)

            def reshuffle(epoch, table=atom_table):
                if epoch > 0:
                    table[...] = draw_round_atoms(rounds, n_atoms, rng)

            fits.append(fit(flow.store, batch_loss, train_ids, val_ids, cfg, rng,
                            epoch_setup=reshuffle))
    return SnpeResult(flow, summarizer, proposals, thetas, xs, rounds, fits)
