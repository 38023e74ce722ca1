import numpy as np
import pytest

from collarforge.atlas_types import ChartPoint
from collarforge.errors import DomainError, EscapeError, InputError
from collarforge.geodesics import (
    boundary_normal,
    exp_map,
    log_map,
    metric_norm,
    normal_collar,
    normal_frame,
    trace_geodesic,
)
from collarforge.manifold_atlas import builtin_manifold


def box(*coords):
    return ChartPoint.create("box", coords)


def test_normal_frame_is_orthonormal():
    g = np.array([[2.0, 0.5], [0.5, 1.0]])
    v = np.array([1.0, 0.0]) / np.sqrt(2.0)
    frame = normal_frame(g, v)
    assert frame.shape == (2, 1)
    assert float(v @ g @ frame[:, 0]) == pytest.approx(0.0, abs=1e-12)
    assert metric_norm(g, frame[:, 0]) == pytest.approx(1.0)


## --- Tracing ---


class TestTrace:
    def test_straight_line(self, flat_box):
        end = trace_geodesic(flat_box, box(0, 0), np.array([1.0, 0.0]), 2.0)
        np.testing.assert_allclose(end.point.array, [2.0, 0.0], atol=1e-9)
        assert end.length == pytest.approx(2.0)
        assert not end.stopped

    def test_exp_map(self, flat_box):
        end = exp_map(
            flat_box, "box", np.array([1.0, 0.0]), np.array([0.0, 2.0]), 1.5
        )
        assert end.chart == "box"
        np.testing.assert_allclose(end.array, [1.0, 1.5], atol=1e-9)

    def test_direction_is_normalised(self, flat_box):
        end = trace_geodesic(flat_box, box(0, 0), np.array([3.0, 4.0]), 2.5)
        np.testing.assert_allclose(end.point.array, [1.5, 2.0], atol=1e-9)
        np.testing.assert_allclose(end.velocity, [0.6, 0.8], atol=1e-12)

    def test_zero_length(self, flat_box):
        end = trace_geodesic(flat_box, box(1, 1), np.array([0.0, 2.0]), 0.0)
        assert end.point == box(1, 1)
        np.testing.assert_allclose(end.velocity, [0.0, 1.0])

    def test_no_conjugate_points_when_flat(self, flat_box):
        end = trace_geodesic(
            flat_box, box(-2, 0), np.array([1.0, 0.0]), 3.0, jacobi=True
        )
        assert end.conjugate_at is None

    def test_observer_stops_the_trace(self, flat_box):
        end = trace_geodesic(
            flat_box,
            box(0, 0),
            np.array([1.0, 0.0]),
            3.0,
            observe=lambda s, _: s >= 0.5,
        )
        assert end.stopped
        assert end.length == pytest.approx(0.5)
        np.testing.assert_allclose(end.point.array, [0.5, 0.0], atol=1e-9)

    def test_zero_velocity(self, flat_box):
        with pytest.raises(DomainError):
            trace_geodesic(flat_box, box(0, 0), np.zeros(2), 1.0)

    def test_negative_length(self, flat_box):
        with pytest.raises(InputError):
            trace_geodesic(flat_box, box(0, 0), np.array([1.0, 0.0]), -1.0)

    def test_leaves_the_window(self, flat_box):
        with pytest.raises(EscapeError) as excinfo:
            trace_geodesic(flat_box, box(4, 0), np.array([1.0, 0.0]), 3.0)
        assert not excinfo.value.through_boundary
        assert excinfo.value.arc_length == pytest.approx(1.0, abs=0.07)

    def test_leaves_through_the_boundary(self, flat_slab):
        start = ChartPoint.create("collar", (0.0, 0.5))
        with pytest.raises(EscapeError) as excinfo:
            trace_geodesic(flat_slab, start, np.array([0.0, -1.0]), 1.0)
        assert excinfo.value.through_boundary
        assert excinfo.value.exit_point.chart == "collar"
        assert excinfo.value.arc_length == pytest.approx(0.5, abs=0.04)


class TestRoundSphere:
    @pytest.fixture(scope="class")
    def sphere(self):
        return builtin_manifold("round_sphere", {"resolution": 32})

    def test_exp_reaches_the_antipode(self, sphere):
        end = exp_map(sphere, "north", np.zeros(2), np.array([1.0, 0.0]), np.pi)
        assert end.chart == "south"
        np.testing.assert_allclose(sphere.to_chart(end, "south"), 0.0, atol=1e-2)

    def test_first_conjugate_point(self, sphere):
        end = trace_geodesic(
            sphere, sphere.base_point, np.array([0.6, 0.8]), 3.5, jacobi=True
        )
        assert end.conjugate_at == pytest.approx(np.pi, abs=0.05)


## --- Boundary collars ---


class TestNormalCollar:
    def test_inward_normal(self, euclidean_ball):
        point = ChartPoint.create("collar", (0.0, 0.0))
        np.testing.assert_allclose(boundary_normal(euclidean_ball, point), [0.0, 1.0])

    def test_goes_straight_in(self, euclidean_ball):
        end = normal_collar(
            euclidean_ball, ChartPoint.create("collar", (0.0, 0.0)), [0.0], 1.0
        )
        chart = euclidean_ball.chart("collar")
        coords = euclidean_ball.to_chart(end, "collar")
        delta = chart.displacement(np.array([0.0, 1.0]), coords)
        np.testing.assert_allclose(delta, 0.0, atol=1e-6)

    def test_moves_along_the_boundary(self, euclidean_ball):
        end = normal_collar(
            euclidean_ball, ChartPoint.create("collar", (0.0, 0.0)), [0.5], 0.0
        )
        assert end.chart == "collar"
        np.testing.assert_allclose(end.array, [0.5, 0.0], atol=1e-6)

    def test_needs_a_boundary_point(self, euclidean_ball):
        with pytest.raises(DomainError):
            normal_collar(
                euclidean_ball, ChartPoint.create("collar", (0.0, 0.5)), [0.0], 1.0
            )

    def test_negative_depth(self, euclidean_ball):
        with pytest.raises(InputError):
            normal_collar(
                euclidean_ball, ChartPoint.create("collar", (0.0, 0.0)), [0.0], -0.1
            )


## --- Logarithm ---


def test_log_map_in_the_box(flat_box):
    v = log_map(flat_box, box(0, 0), box(1, 2))
    np.testing.assert_allclose(v, [1.0, 2.0], atol=1e-8)


def test_log_map_same_point(flat_box):
    np.testing.assert_array_equal(log_map(flat_box, box(1, 1), box(1, 1)), [0.0, 0.0])


def test_log_map_needs_a_shared_chart(flat_slab):
    p = ChartPoint.create("core", (0.0, 2.5))
    q = ChartPoint.create("collar", (0.0, 0.25))
    assert log_map(flat_slab, p, q) is None
