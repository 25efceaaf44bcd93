"""Integral probability metrics between posterior sample sets.

Wasserstein distances are solved exactly: equal-size sets reduce to an
assignment problem (a permutation is an optimal extreme point of the
uniform transportation polytope), unequal sizes go through the HiGHS
simplex on the full transportation LP.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import linear_sum_assignment, linprog
from scipy.spatial.distance import cdist

__all__ = ["TransportPlan", "wasserstein", "transport_plan", "mmd_unbiased",
           "median_heuristic", "gaussian_kernel"]


@dataclass
class TransportPlan:
    """Optimal coupling between two uniform empirical measures."""

    gamma: np.ndarray
    cost: float

    def row_sums(self):
        return self.gamma.sum(axis=1)

    def col_sums(self):
        return self.gamma.sum(axis=0)


def _check_sets(a, b):
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    if a.shape[1] != b.shape[1]:
        raise ValueError(
            f"sample sets have different dimensions: {a.shape[1]} vs {b.shape[1]}"
        )
    return a, b


def transport_plan(a, b, p: float = 2) -> TransportPlan:
    """Solve the transportation LP between two equally-weighted sample sets."""
    a, b = _check_sets(a, b)
    n, m = a.shape[0], b.shape[0]
    cost = cdist(a, b, "euclidean") ** p
    if n == m:
        rows, cols = linear_sum_assignment(cost)
        gamma = np.zeros((n, m))
        gamma[rows, cols] = 1.0 / n
        total = float(cost[rows, cols].sum() / n)
        return TransportPlan(gamma, total)
    row_marginal = sparse.kron(sparse.eye(n), np.ones((1, m)))
    col_marginal = sparse.kron(np.ones((1, n)), sparse.eye(m))
    constraints = sparse.vstack([row_marginal, col_marginal]).tocsc()
    rhs = np.concatenate([np.full(n, 1.0 / n), np.full(m, 1.0 / m)])
    res = linprog(cost.ravel(), A_eq=constraints, b_eq=rhs, bounds=(0, None),
                  method="highs")
    if not res.success:
        raise RuntimeError(f"transport LP failed: {res.message}")
    return TransportPlan(res.x.reshape(n, m), float(res.fun))


def wasserstein(a, b, p: float = 2) -> float:
    """p-Wasserstein distance between two sample sets (Euclidean ground metric)."""
    plan = transport_plan(a, b, p)
    return float(plan.cost ** (1.0 / p))


def gaussian_kernel(a, b, bandwidth: float) -> np.ndarray:
    """exp(-||a_i - b_j||^2 / (2 sigma^2)); ``bandwidth`` is sigma^2."""
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    d2 = cdist(np.atleast_2d(a), np.atleast_2d(b), "sqeuclidean")
    return np.exp(-d2 / (2.0 * bandwidth))


def mmd_unbiased(a, b, bandwidth: float) -> float:
    """Unbiased estimator of squared MMD with a Gaussian kernel.

    The diagonal terms are excluded from the within-set sums, so small
    negative values are legitimate when the sets share a distribution.
    """
    a, b = _check_sets(a, b)
    n, m = a.shape[0], b.shape[0]
    if n < 2 or m < 2:
        raise ValueError("unbiased MMD needs at least 2 points per set")
    kaa = gaussian_kernel(a, a, bandwidth)
    kbb = gaussian_kernel(b, b, bandwidth)
    kab = gaussian_kernel(a, b, bandwidth)
    term_a = (kaa.sum() - np.trace(kaa)) / (n * (n - 1))
    term_b = (kbb.sum() - np.trace(kbb)) / (m * (m - 1))
    term_ab = 2.0 * kab.sum() / (n * m)
    return float(term_a + term_b - term_ab)


def median_heuristic(reference) -> float:
    """Bandwidth sigma^2 = median pairwise squared distance of the reference set."""
    reference = np.atleast_2d(np.asarray(reference, dtype=np.float64))
    if reference.shape[0] < 2:
        raise ValueError("median heuristic needs at least 2 reference points")
    d2 = cdist(reference, reference, "sqeuclidean")
    upper = d2[np.triu_indices(reference.shape[0], k=1)]
    bw = float(np.median(upper))
    if bw == 0.0:
        raise ValueError("zero bandwidth: all reference points identical")
    return bw
