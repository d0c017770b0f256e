import numpy as np
import pytest

from conftest import pts
from privwad.geodesics import InterpolatingMeasure, barycentric_map, geodesic_gap, interpolate, interpolate_with_plan
from privwad.measures import DiscreteMeasure, uniform_measure
from privwad.ot_core import solve_ot, wasserstein


class TestBarycentric:
    def test_singleton(self):
        a, b = pts(0), pts(4)
        assert barycentric_map(solve_ot(a, b), a, b).tolist() == [[4.0]]

    def test_monotone_pair(self):
        a, b = pts(0, 4), pts(1, 5)
        assert barycentric_map(solve_ot(a, b), a, b).ravel().tolist() == [1.0, 5.0]

    def test_identity(self, cloud):
        a = cloud(6, 3)
        np.testing.assert_allclose(barycentric_map(solve_ot(a, a), a, a), a.support)

    def test_zero_weight_row(self):
        a = DiscreteMeasure(np.array([[0.0], [1.0]]), [1.0, 0.0])
        b = pts(3)
        with pytest.raises(ValueError, match="zero weight"):
            barycentric_map(np.array([[1.0], [0.0]]), a, b)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="shape"):
            barycentric_map(np.ones((2, 2)), pts(0), pts(1))


class TestInterpolate:
    def test_t0_is_source(self, cloud):
        a, b = cloud(5, 2), cloud(5, 2, seed=3)
        np.testing.assert_array_equal(interpolate(a, b, 0.0).support, a.support)

    def test_t1_is_image(self, cloud):
        a, b = cloud(5, 2), cloud(5, 2, seed=3)
        im, ot = interpolate_with_plan(a, b, 1.0)
        np.testing.assert_allclose(im.support, barycentric_map(ot, a, b))

    def test_point_midpoint(self):
        assert interpolate(pts(0), pts(2), 0.5).support.tolist() == [[1.0]]

    def test_pair_midpoint(self):
        assert interpolate(pts(0, 4), pts(1, 5), 0.5).support.ravel().tolist() == [0.5, 4.5]

    def test_tags_and_weights(self, weighted):
        a, b = weighted(4), weighted(6, seed=1)
        im = interpolate(a, b, 0.3, src_id="a", dst_id="b")
        assert (im.t, im.src_id, im.dst_id, im.size) == (0.3, "a", "b", 4)
        np.testing.assert_array_equal(im.weights, a.weights)

    @pytest.mark.parametrize("t", [-0.1, 1.5])
    def test_t_range(self, t):
        with pytest.raises(ValueError):
            interpolate(pts(0), pts(1), t)
        with pytest.raises(ValueError):
            InterpolatingMeasure(pts(0), t)

    @pytest.mark.parametrize("t", [0.2, 0.5, 0.8])
    def test_metric_split(self, cloud, t):
        a, b = cloud(12, 3, seed=7), cloud(12, 3, seed=8, shift=2.0)
        im, ot = interpolate_with_plan(a, b, t)
        image = uniform_measure(barycentric_map(ot, a, b))
        total = wasserstein(a, image)
        assert wasserstein(a, im.measure) == pytest.approx(t * total, rel=1e-7)
        assert wasserstein(im.measure, image) == pytest.approx((1 - t) * total, rel=1e-7)


class TestGap:
    def test_on_geodesic(self, cloud):
        a, b = cloud(10, 2, seed=1), cloud(10, 2, seed=2)
        g = interpolate(a, b, 0.3)
        assert geodesic_gap(a, b, g) <= 1e-7 * wasserstein(a, b)

    def test_endpoint(self, cloud):
        a, b = cloud(10, 2, seed=1), cloud(10, 2, seed=2)
        assert geodesic_gap(a, b, a) == pytest.approx(0.0, abs=1e-9)

    def test_off_segment(self):
        assert geodesic_gap(pts(0), pts(4), pts(10)) == pytest.approx(12.0)

    def test_never_negative(self, cloud):
        for s in range(10):
            a, b, g = cloud(5, seed=s), cloud(6, seed=s + 50), cloud(4, seed=s + 99)
            assert geodesic_gap(a, b, g) >= -1e-9
