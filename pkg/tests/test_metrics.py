"""Metric tests: brute-force transport oracles, MMD hand expansions."""

import itertools

import numpy as np
import pytest

from simcal.metrics import (gaussian_kernel, median_heuristic, mmd_unbiased,
                            transport_plan, wasserstein)

RNG = np.random.default_rng(77)


def brute_force_wasserstein(a, b, p):
    """Minimum over all permutation matchings (optimal for n == m)."""
    n = a.shape[0]
    best = np.inf
    for perm in itertools.permutations(range(n)):
        cost = np.mean([np.linalg.norm(a[i] - b[j]) ** p
                        for i, j in enumerate(perm)])
        best = min(best, cost)
    return best ** (1.0 / p)


class TestWasserstein:
    def test_unit_translation(self):
        assert wasserstein([[0.0]], [[1.0]], p=1) == pytest.approx(1.0)

    def test_identical_sets_zero(self):
        pts = RNG.standard_normal((20, 2))
        assert wasserstein(pts, pts.copy()) == pytest.approx(0.0, abs=1e-12)

    def test_interleaved_pairs(self):
        val = wasserstein([[0.0], [2.0]], [[1.0], [3.0]], p=1)
        assert val == pytest.approx(1.0)

    @pytest.mark.parametrize("p", [1, 2])
    def test_matches_brute_force_small_instances(self, p):
        for trial in range(50):
            n = int(RNG.integers(2, 7))
            d = int(RNG.integers(1, 4))
            a = RNG.standard_normal((n, d))
            b = RNG.standard_normal((n, d))
            assert wasserstein(a, b, p) == pytest.approx(
                brute_force_wasserstein(a, b, p), abs=1e-9)

    def test_symmetry_and_triangle_inequality(self):
        for _ in range(20):
            d = int(RNG.integers(1, 3))
            a = RNG.standard_normal((8, d))
            b = RNG.standard_normal((8, d))
            c = RNG.standard_normal((8, d))
            dab = wasserstein(a, b)
            dba = wasserstein(b, a)
            assert dab == pytest.approx(dba, abs=1e-9)
            assert dab <= wasserstein(a, c) + wasserstein(c, b) + 1e-9

    def test_unequal_sizes_lp_path(self):
        a = RNG.standard_normal((9, 2))
        b = RNG.standard_normal((17, 2))
        plan = transport_plan(a, b, p=2)
        assert np.allclose(plan.row_sums(), 1.0 / 9, atol=1e-9)
        assert np.allclose(plan.col_sums(), 1.0 / 17, atol=1e-9)
        assert np.all(plan.gamma >= -1e-12)

    def test_equal_size_plan_marginals(self):
        a = RNG.standard_normal((12, 3))
        b = RNG.standard_normal((12, 3))
        plan = transport_plan(a, b)
        assert np.allclose(plan.row_sums(), 1.0 / 12, atol=1e-12)
        assert np.allclose(plan.col_sums(), 1.0 / 12, atol=1e-12)

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ValueError, match="dimension"):
            wasserstein(RNG.standard_normal((5, 2)), RNG.standard_normal((5, 3)))

    def test_unequal_lp_agrees_with_assignment_when_duplicated(self):
        # Duplicating each point of a set leaves the distance unchanged.
        a = RNG.standard_normal((5, 2))
        b = RNG.standard_normal((5, 2))
        direct = wasserstein(a, b, p=2)
        doubled = wasserstein(a, np.repeat(b, 2, axis=0), p=2)
        assert direct == pytest.approx(
            wasserstein(np.repeat(a, 2, axis=0), np.repeat(b, 2, axis=0), p=2),
            abs=1e-9)
        assert doubled == pytest.approx(direct, abs=1e-9)


class TestMMD:
    def test_kernel_unit_diagonal(self):
        pts = RNG.standard_normal((6, 2))
        for bw in (0.1, 1.0, 25.0):
            k = gaussian_kernel(pts, pts, bw)
            assert np.allclose(np.diag(k), 1.0)

    def test_two_point_hand_expansion(self):
        u, v = np.array([[0.3]]), np.array([[1.7]])
        ab = np.concatenate([u, v])
        k_uv = gaussian_kernel(u, v, 1.0)[0, 0]
        assert mmd_unbiased(ab, ab, 1.0) == pytest.approx(k_uv - 1.0, abs=1e-12)

    def test_separated_tight_clusters_approach_two(self):
        a = 1e-3 * RNG.standard_normal((60, 2))
        b = 1e-3 * RNG.standard_normal((60, 2)) + 100.0
        assert mmd_unbiased(a, b, 1.0) == pytest.approx(2.0, abs=0.05)

    def test_same_distribution_mean_near_zero(self):
        vals = []
        for _ in range(200):
            a = RNG.standard_normal((30, 2))
            b = RNG.standard_normal((30, 2))
            vals.append(mmd_unbiased(a, b, 2.0))
        vals = np.asarray(vals)
        se = vals.std(ddof=1) / np.sqrt(vals.size)
        assert abs(vals.mean()) < 3 * se

    def test_needs_two_points_per_set(self):
        with pytest.raises(ValueError, match="at least 2"):
            mmd_unbiased([[0.0]], [[1.0], [2.0]], 1.0)


class TestMedianHeuristic:
    def test_single_pair(self):
        assert median_heuristic([[0.0], [2.0]]) == pytest.approx(4.0)

    def test_three_points_enumeration(self):
        # squared distances {1, 9, 4} -> median 4
        assert median_heuristic([[0.0], [1.0], [3.0]]) == pytest.approx(4.0)

    def test_reordering_invariance(self):
        pts = RNG.standard_normal((25, 3))
        a = median_heuristic(pts)
        b = median_heuristic(pts[RNG.permutation(25)])
        assert a == pytest.approx(b)

    def test_identical_points_rejected(self):
        with pytest.raises(ValueError, match="zero bandwidth"):
            median_heuristic(np.ones((5, 2)))
