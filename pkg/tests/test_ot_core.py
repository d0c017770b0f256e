import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import pts
from privwad.measures import DiscreteMeasure, uniform_measure
from privwad.ot_core import (
    OTError,
    brute_force_ot,
    cost_matrix,
    count_solves,
    solve_ot,
    wasserstein,
)


def check_certificate(ot, a, b, cost):
    np.testing.assert_allclose(ot.plan.sum(axis=1), a, atol=1e-9)
    np.testing.assert_allclose(ot.plan.sum(axis=0), b, atol=1e-9)
    assert abs(ot.cost - ot.dual_objective(a, b)) <= 1e-7 * max(1.0, ot.cost)
    slack = cost - ot.dual_row[:, None] - ot.dual_col[None, :]
    assert slack.min() >= -1e-9 * max(1.0, cost.max())


class TestCostMatrix:
    def test_squared_1d(self):
        assert cost_matrix(pts(0), pts(3), 2).tolist() == [[9.0]]

    def test_euclidean_345(self):
        a = uniform_measure(np.array([[0.0, 0.0]]))
        b = uniform_measure(np.array([[3.0, 4.0]]))
        assert cost_matrix(a, b, 1).tolist() == [[5.0]]

    @pytest.mark.parametrize("p", [1, 1.5, 2, 3])
    def test_zero_diagonal(self, cloud, p):
        m = cloud(6, 3)
        assert np.all(np.diag(cost_matrix(m, m, p)) == 0)

    def test_dim_mismatch(self, cloud):
        with pytest.raises(ValueError, match="dimension"):
            cost_matrix(cloud(3, 2), cloud(3, 3))

    def test_p_below_one(self, cloud):
        with pytest.raises(ValueError):
            cost_matrix(cloud(2), cloud(2), 0.5)


class TestSolve:
    def test_two_point_monotone(self):
        ot = solve_ot(pts(0, 1), pts(1, 2))
        assert ot.cost == pytest.approx(1.0)
        np.testing.assert_allclose(ot.plan, 0.5 * np.eye(2))

    def test_self_is_zero(self, cloud):
        m = cloud(10, 3)
        assert solve_ot(m, m).cost == pytest.approx(0.0, abs=1e-12)
        assert wasserstein(m, m) == pytest.approx(0.0, abs=1e-6)

    def test_point_masses(self):
        ot = solve_ot(pts(0), pts(4))
        assert ot.cost == 16.0
        assert ot.dual_row[0] + ot.dual_col[0] == pytest.approx(16.0)
        assert wasserstein(pts(0), pts(4)) == 4.0

    def test_worked_pair(self):
        assert wasserstein(pts(0, 4), pts(1, 5)) == pytest.approx(1.0)

    def test_gauge_normalization(self, cloud):
        ot = solve_ot(cloud(7, 2, seed=1), cloud(5, 2, seed=2))
        assert ot.dual_col[0] == 0.0

    def test_results_read_only(self, cloud):
        ot = solve_ot(cloud(4), cloud(4, seed=1))
        for arr in (ot.plan, ot.dual_row, ot.dual_col):
            assert not arr.flags.writeable

    def test_permutation_for_uniform_equal(self, cloud):
        ot = solve_ot(cloud(20, 3, seed=4), cloud(20, 3, seed=5))
        nz = ot.plan > 1e-12
        assert nz.sum(axis=0).tolist() == [1] * 20
        assert nz.sum(axis=1).tolist() == [1] * 20

    @pytest.mark.parametrize("seed", range(20))
    def test_certificate_random(self, seed):
        r = np.random.default_rng(seed)
        m, n, d = r.integers(1, 50, size=2).tolist() + [int(r.integers(1, 16))]
        a = r.dirichlet(np.ones(m))
        b = r.dirichlet(np.ones(n))
        src = DiscreteMeasure(r.standard_normal((m, d)), a)
        dst = DiscreteMeasure(r.standard_normal((n, d)), b)
        ot = solve_ot(src, dst)
        check_certificate(ot, src.weights, dst.weights, cost_matrix(src, dst))
        assert np.count_nonzero(ot.plan > 0) <= m + n - 1

    def test_custom_cost(self):
        cost = np.array([[0.0, 1.0], [1.0, 0.0]])
        ot = solve_ot(pts(0, 1), pts(5, 6), cost=cost)
        assert ot.cost == 0.0

    def test_bad_cost_shape(self):
        with pytest.raises(ValueError, match="shape"):
            solve_ot(pts(0, 1), pts(5, 6), cost=np.zeros((3, 2)))

    def test_iteration_cap(self, cloud):
        with pytest.raises(OTError, match="iteration cap"):
            solve_ot(cloud(30, seed=1), cloud(30, seed=2), max_iter=1)

    def test_to_dict_can_drop_plan(self):
        d = solve_ot(pts(0, 1), pts(1, 2)).to_dict(include_plan=False)
        assert "plan" not in d and d["distance"] == pytest.approx(1.0)

    def test_deterministic_ties(self):
        ones = uniform_measure(np.ones((4, 2)))
        target = uniform_measure(np.arange(8.0).reshape(4, 2))
        a, b = solve_ot(ones, target), solve_ot(ones, target)
        np.testing.assert_array_equal(a.plan, b.plan)


class TestMetric:
    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10_000), st.sampled_from([1, 2, 3]))
    def test_axioms(self, seed, p):
        r = np.random.default_rng(seed)
        a, b, c = (uniform_measure(r.standard_normal((int(r.integers(1, 9)), 3))) for _ in range(3))
        ab, ba = wasserstein(a, b, p), wasserstein(b, a, p)
        assert abs(ab - ba) <= 1e-9 * max(1, ab)
        assert ab >= 0
        assert ab <= wasserstein(a, c, p) + wasserstein(c, b, p) + 1e-9

    @pytest.mark.parametrize("scale", [0.1, 3.0, 250.0])
    def test_scale_equivariance(self, cloud, scale):
        a, b = cloud(8, 2, seed=1), cloud(8, 2, seed=2)
        sa, sb = a.with_support(a.support * scale), b.with_support(b.support * scale)
        assert wasserstein(sa, sb) == pytest.approx(scale * wasserstein(a, b), rel=1e-9)


class TestBruteForce:
    def test_singleton(self):
        ot = brute_force_ot(pts(2), pts(7))
        assert ot.cost == 25.0 and ot.plan.tolist() == [[1.0]]

    def test_two_point(self):
        assert brute_force_ot(pts(0, 1), pts(1, 2)).cost == pytest.approx(1.0)

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_simplex_m6(self, cloud, seed):
        a, b = cloud(6, 4, seed=seed), cloud(6, 4, seed=seed + 100)
        bf, ot = brute_force_ot(a, b), solve_ot(a, b)
        assert abs(bf.cost - ot.cost) <= 1e-9
        check_certificate(bf, a.weights, b.weights, cost_matrix(a, b))

    def test_limits(self, cloud, weighted):
        with pytest.raises(ValueError, match="equal"):
            brute_force_ot(cloud(3), cloud(4))
        with pytest.raises(ValueError, match="limited"):
            brute_force_ot(cloud(9), cloud(9))
        with pytest.raises(ValueError, match="uniform"):
            brute_force_ot(weighted(3), weighted(3, seed=1))


class TestCounter:
    def test_counts_and_nests(self, cloud):
        with count_solves() as outer:
            wasserstein(cloud(3), cloud(3, seed=1))
            with count_solves() as inner:
                wasserstein(cloud(3), cloud(3, seed=2))
        assert (outer.value, inner.value) == (2, 1)

    def test_brute_force_not_counted(self, cloud):
        with count_solves() as c:
            brute_force_ot(cloud(3), cloud(3, seed=1))
        assert c.value == 0
