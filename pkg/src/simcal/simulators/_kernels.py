"""Hot inner loops for the simulators and surrogate likelihoods.

Each kernel is written once as plain Python over numpy scalars/arrays.
When numba is importable and ``SIMCAL_NO_NUMBA`` is unset, the module
rebinds them to @njit-compiled versions at import time; setting the flag
selects the pure interpreter path (same numerics, no compilation).
``benchmarks/bench_kernels.py`` times the two builds against each other
by toggling the flag in subprocesses.

All randomness enters through pre-drawn noise arrays, so both backends
walk identical trajectories from the same generator state.
"""

from __future__ import annotations

import math
import os

import numpy as np

__all__ = [
    "NUMBA_ENABLED",
    "KERNEL_NAMES",
    "bh_transition_mean",
    "bh_path",
    "bh_loglik",
    "fw_path",
    "kde_product_loglik",
]


def _numba_wanted() -> bool:
    flag = os.environ.get("SIMCAL_NO_NUMBA", "").strip().lower()
    return flag not in ("1", "true", "yes", "on")


def _sigmoid(x):
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def bh_transition_mean(x0, x1, x2, g, b, beta, r_gross):
    """Conditional mean of the next observation given the last three (x0 newest).

    Strategy weights go through a max-subtracted softmax so large beta
    cannot overflow.
    """
    h = g.shape[0]
    lead = x0 - r_gross * x1
    umax = -np.inf
    for k in range(h):
        u = beta * lead * (g[k] * x2 + b[k] - r_gross * x1)
        if u > umax:
            umax = u
    wsum = 0.0
    drift = 0.0
    for k in range(h):
        w = math.exp(beta * lead * (g[k] * x2 + b[k] - r_gross * x1) - umax)
        wsum += w
        drift += w * (g[k] * x0 + b[k])
    return drift / (wsum * r_gross)


def bh_path(noise, g, b, beta, r_gross, sigma):
    """Brock-Hommes price deviations; noise has one draw per generated step.

    States x0 = x1 = x2 = 0; returns (x1, ..., xT) with T = len(noise) + 2.
    """
    t_len = noise.shape[0] + 2
    sd = sigma / r_gross
    xs = np.zeros(t_len + 1)
    for t in range(2, t_len):
        mean = bh_transition_mean(xs[t], xs[t - 1], xs[t - 2], g, b, beta, r_gross)
        xs[t + 1] = mean + sd * noise[t - 2]
    return xs[1:]


def bh_loglik(y, g, b, beta, r_gross, sigma):
    """Exact log-likelihood of an observed series under the transition density."""
    t_len = y.shape[0]
    sd = sigma / r_gross
    const = -0.5 * math.log(2.0 * math.pi) - math.log(sd)
    total = 0.0
    for t in range(2, t_len - 1):
        f = bh_transition_mean(y[t], y[t - 1], y[t - 2], g, b, beta, r_gross)
        z = (y[t + 1] - f) / sd
        total += const - 0.5 * z * z
    return total


def fw_path(noise_f, noise_c, mu, beta, phi_f, chi, alpha0, sigma_f,
            alpha_w, eta, sigma_c):
    """Franke-Westerhoff wealth-and-predisposition log returns r_t = p_t - p_{t-1}.

    Initial state: p0 = p(-1) = 0, d(-1) = d(-2) = 0, w0 = 0, a0 = alpha0,
    fundamental log price 0. Noise arrays carry T+1 draws (t = 0, ..., T).
    """
    t_len = noise_f.shape[0] - 1
    r = np.empty(t_len)
    p_prev = 0.0
    df_prev2 = 0.0
    dc_prev2 = 0.0
    df_prev = sigma_f * noise_f[0]
    dc_prev = sigma_c * noise_c[0]
    wf = 0.0
    wc = 0.0
    a_prev = alpha0
    nf_prev = _sigmoid(beta * alpha0)
    for t in range(1, t_len + 1):
        p_t = p_prev + mu * (nf_prev * df_prev + (1.0 - nf_prev) * dc_prev)
        nf_t = _sigmoid(beta * a_prev)
        df_t = phi_f * (0.0 - p_t) + sigma_f * noise_f[t]
        dc_t = chi * (p_t - p_prev) + sigma_c * noise_c[t]
        price_gain = math.exp(p_t) - math.exp(p_prev)
        wf = eta * wf + (1.0 - eta) * price_gain * df_prev2
        wc = eta * wc + (1.0 - eta) * price_gain * dc_prev2
        a_t = alpha_w * (wf - wc) + alpha0
        r[t - 1] = p_t - p_prev
        df_prev2, dc_prev2 = df_prev, dc_prev
        df_prev, dc_prev = df_t, dc_t
        p_prev = p_t
        a_prev = a_t
        nf_prev = nf_t
    return r


def kde_product_loglik(y, x, bw):
    """Gaussian-product KDE log-likelihood of y (T, d) under sample x (S, d).

    Per-dimension bandwidths; each observation scores
    log mean_s prod_k N(y[t, k]; x[s, k], bw[k]^2).
    """
    t_len, d = y.shape
    s_len = x.shape[0]
    const = -0.5 * d * math.log(2.0 * math.pi)
    for k in range(d):
        const -= math.log(bw[k])
    total = 0.0
    e = np.empty(s_len)
    for t in range(t_len):
        emax = -np.inf
        for s in range(s_len):
            acc = 0.0
            for k in range(d):
                z = (y[t, k] - x[s, k]) / bw[k]
                acc -= 0.5 * z * z
            e[s] = acc
            if acc > emax:
                emax = acc
        sacc = 0.0
        for s in range(s_len):
            sacc += math.exp(e[s] - emax)
        total += const + emax + math.log(sacc) - math.log(s_len)
    return total


KERNEL_NAMES = (
    "bh_transition_mean",
    "bh_path",
    "bh_loglik",
    "fw_path",
    "kde_product_loglik",
)

NUMBA_ENABLED = False
if _numba_wanted():
    try:
        from numba import njit

        NUMBA_ENABLED = True
    except ImportError:
        NUMBA_ENABLED = False

if NUMBA_ENABLED:
    # Helpers first: jitted callers resolve these globals at compile time.
    _sigmoid = njit(cache=True)(_sigmoid)
    bh_transition_mean = njit(cache=True)(bh_transition_mean)
    bh_path = njit(cache=True)(bh_path)
    bh_loglik = njit(cache=True)(bh_loglik)
    fw_path = njit(cache=True)(fw_path)
    kde_product_loglik = njit(cache=True)(kde_product_loglik)
