"""Trainable recurrent embeddings from raw series to summary vectors.

The recurrent layers are fused diffcore ops: the forward pass runs the
time loop in numpy and the backward pass replays it in reverse with
hand-derived gradients. That keeps graphs small (one node per layer
instead of ~10 per time step) and is gradient-checked in the test suite.
"""

from __future__ import annotations

import numpy as np

from . import diffcore as dc

__all__ = ["elman_layer", "gru_layer", "EmbeddingNet"]


def elman_layer(x: dc.Node, w_ih: dc.Node, b_ih: dc.Node, w_hh: dc.Node,
                b_hh: dc.Node) -> dc.Node:
    """tanh RNN over (B, T, Din) -> all hidden states (B, T, H), h0 = 0."""
    xv = x.value
    batch, t_len, _ = xv.shape
    hidden = w_hh.value.shape[0]
    pre_x = xv @ w_ih.value.T + b_ih.value
    states = np.empty((batch, t_len, hidden))
    h = np.zeros((batch, hidden))
    for t in range(t_len):
        h = np.tanh(pre_x[:, t] + h @ w_hh.value.T + b_hh.value)
        states[:, t] = h

    def bwd(g, out):
        d_wih = np.zeros_like(w_ih.value)
        d_bih = np.zeros_like(b_ih.value)
        d_whh = np.zeros_like(w_hh.value)
        d_bhh = np.zeros_like(b_hh.value)
        d_x = np.empty_like(xv)
        carry = np.zeros((batch, hidden))
        for t in range(t_len - 1, -1, -1):
            h_t = states[:, t]
            h_prev = states[:, t - 1] if t > 0 else np.zeros((batch, hidden))
            dz = (g[:, t] + carry) * (1.0 - h_t * h_t)
            d_wih += dz.T @ xv[:, t]
            d_whh += dz.T @ h_prev
            d_bih += dz.sum(axis=0)
            d_bhh += dz.sum(axis=0)
            d_x[:, t] = dz @ w_ih.value
            carry = dz @ w_hh.value
        return d_x, d_wih, d_bih, d_whh, d_bhh

    return dc.Node(states, "elman", (x, w_ih, b_ih, w_hh, b_hh), bwd)


def gru_layer(x: dc.Node, w_ih: dc.Node, b_ih: dc.Node, w_hh: dc.Node,
              b_hh: dc.Node) -> dc.Node:
    """GRU over (B, T, Din) -> all hidden states (B, T, H), h0 = 0.

    Gate weights are stacked [reset; update; candidate] along the first
    axis, so w_ih is (3H, Din) and w_hh is (3H, H).
    """
    xv = x.value
    batch, t_len, _ = xv.shape
    hidden = w_hh.value.shape[1]
    pre_x = xv @ w_ih.value.T + b_ih.value
    states = np.empty((batch, t_len, hidden))
    resets = np.empty_like(states)
    updates = np.empty_like(states)
    cands = np.empty_like(states)
    cand_pre_h = np.empty_like(states)
    h = np.zeros((batch, hidden))
    for t in range(t_len):
        ph = h @ w_hh.value.T + b_hh.value
        r = dc._sigmoid_np(pre_x[:, t, :hidden] + ph[:, :hidden])
        z = dc._sigmoid_np(pre_x[:, t, hidden:2 * hidden] + ph[:, hidden:2 * hidden])
        q = ph[:, 2 * hidden:]
        n = np.tanh(pre_x[:, t, 2 * hidden:] + r * q)
        h = (1.0 - z) * n + z * h
        resets[:, t] = r
        updates[:, t] = z
        cands[:, t] = n
        cand_pre_h[:, t] = q
        states[:, t] = h

    def bwd(g, out):
        d_wih = np.zeros_like(w_ih.value)
        d_bih = np.zeros_like(b_ih.value)
        d_whh = np.zeros_like(w_hh.value)
        d_bhh = np.zeros_like(b_hh.value)
        d_x = np.empty_like(xv)
        carry = np.zeros((batch, hidden))
        for t in range(t_len - 1, -1, -1):
            a = g[:, t] + carry
            h_prev = states[:, t - 1] if t > 0 else np.zeros((batch, hidden))
            r = resets[:, t]
            z = updates[:, t]
            n = cands[:, t]
            q = cand_pre_h[:, t]
            dn = a * (1.0 - z)
            dz = a * (h_prev - n)
            dnt = dn * (1.0 - n * n)
            dq = dnt * r
            drt = dnt * q * r * (1.0 - r)
            dzt = dz * z * (1.0 - z)
            d_gates_x = np.concatenate([drt, dzt, dnt], axis=1)
            d_gates_h = np.concatenate([drt, dzt, dq], axis=1)
            d_wih += d_gates_x.T @ xv[:, t]
            d_bih += d_gates_x.sum(axis=0)
            d_whh += d_gates_h.T @ h_prev
            d_bhh += d_gates_h.sum(axis=0)
            d_x[:, t] = d_gates_x @ w_ih.value
            carry = a * z + d_gates_h @ w_hh.value
        return d_x, d_wih, d_bih, d_whh, d_bhh

    return dc.Node(states, "gru", (x, w_ih, b_ih, w_hh, b_hh), bwd)


_LAYER_FNS = {"elman": elman_layer, "gru": gru_layer}
_GATE_MULT = {"elman": 1, "gru": 3}


class EmbeddingNet:
    """Stacked recurrent layers plus a linear readout of the final state."""

    def __init__(self, store: dc.ParamStore, input_dim: int, cell: str = "gru",
                 hidden: int = 32, layers: int = 2, out_dim: int = 16,
                 rng: np.random.Generator | None = None, prefix: str = "embed"):
        if cell not in _LAYER_FNS:
            raise ValueError(f"unknown cell {cell!r}; expected 'elman' or 'gru'")
        rng = rng or np.random.default_rng(0)
        self.cell = cell
        self.input_dim = input_dim
        self.hidden = hidden
        self.layers = layers
        self.out_dim = out_dim
        self.prefix = prefix
        gate = _GATE_MULT[cell]
        bound = 1.0 / np.sqrt(hidden)
        self._weights = []
        for layer in range(layers):
            din = input_dim if layer == 0 else hidden
            names = [f"{prefix}.l{layer}.{p}" for p in ("w_ih", "b_ih", "w_hh", "b_hh")]
            shapes = [(gate * hidden, din), (gate * hidden,),
                      (gate * hidden, hidden), (gate * hidden,)]
            self._weights.append(tuple(
                store.register(name, rng.uniform(-bound, bound, size=shape))
                for name, shape in zip(names, shapes)
            ))
        out_bound = 1.0 / np.sqrt(hidden)
        self.w_out = store.register(
            f"{prefix}.out.w", rng.uniform(-out_bound, out_bound, (hidden, out_dim)))
        self.b_out = store.register(
            f"{prefix}.out.b", rng.uniform(-out_bound, out_bound, out_dim))

    def forward(self, x) -> dc.Node:
        """Embed raw series (B, T, input_dim) into (B, out_dim)."""
        node = x if isinstance(x, dc.Node) else dc.constant(x)
        layer_fn = _LAYER_FNS[self.cell]
        for weights in self._weights:
            node = layer_fn(node, *weights)
        last = node[:, -1, :]
        return dc.matmul(last, self.w_out) + self.b_out

    def param_count(self) -> int:
        total = self.w_out.value.size + self.b_out.value.size
        for weights in self._weights:
            total += sum(w.value.size for w in weights)
        return total
