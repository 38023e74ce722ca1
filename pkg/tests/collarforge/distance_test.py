import math

import numpy as np
import pytest

from collarforge.atlas_types import ChartPoint
from collarforge.distance import (
    atlas_graph,
    ball_nodes,
    boundary_distance,
    charts_meeting_ball,
    geodesic_distance,
    graph_distance,
    segment_distance,
    stencil_offsets,
)
from collarforge.manifold_atlas import builtin_manifold


def box(*coords):
    return ChartPoint.create("box", coords)


## --- Stencils and the graph ---


def test_stencil_2d():
    steps = stencil_offsets(2)
    assert (1, 0) in steps
    assert (0, 1) in steps
    assert (2, 3) in steps
    assert (2, 2) not in steps
    assert not any(tuple(-c for c in v) in steps for v in steps)


@pytest.mark.parametrize("dimension, count", [(1, 1), (3, 13)])
def test_stencil_size(dimension, count):
    assert len(stencil_offsets(dimension)) == count


def test_graph_layout(flat_slab):
    graph = atlas_graph(flat_slab)
    assert graph.size == 33 * 9 + 33 * 21
    assert graph.chart_slice("core") == slice(297, 297 + 693)
    assert graph.locate(0) == ChartPoint.create("collar", (-2.0, 0.0))
    assert len(set(graph.components)) == 1


## --- Distances ---


class TestDistances:
    def test_straight_line_in_the_box(self, flat_box):
        assert geodesic_distance(flat_box, box(0, 0), box(3, 4)) == pytest.approx(
            5.0, abs=1e-4
        )

    def test_graph_is_an_upper_bound(self, flat_box):
        d = graph_distance(flat_box, box(0, 0), box(3, 4))
        assert 5.0 - 1e-9 <= d <= 5.0 * 1.02

    def test_symmetric(self, flat_box):
        p, q = box(-1.3, 2.2), box(0.7, -0.4)
        assert geodesic_distance(flat_box, p, q) == geodesic_distance(flat_box, q, p)

    def test_same_point(self, flat_box):
        assert geodesic_distance(flat_box, box(1, 1), box(1, 1)) == 0.0

    def test_torus_goes_the_short_way(self, flat_torus):
        p = ChartPoint.create("torus", (0.1, 0.5))
        q = ChartPoint.create("torus", (0.9, 0.5))
        assert segment_distance(flat_torus, p, q) == pytest.approx(0.2)
        assert geodesic_distance(flat_torus, p, q) == pytest.approx(0.2)

    def test_across_charts(self, flat_slab):
        p = ChartPoint.create("core", (0.0, 2.5))
        q = ChartPoint.create("collar", (0.0, 0.25))
        d = geodesic_distance(flat_slab, p, q, shoot=False)
        assert d == pytest.approx(2.25, abs=1e-6)


## --- Boundary and balls ---


def test_boundary_distance(flat_slab):
    d, nearest = boundary_distance(flat_slab)
    assert d == pytest.approx(1.5, abs=1e-6)
    assert nearest == ChartPoint.create("collar", (0.0, 0.0))


def test_cap_boundary_distance(spherical_cap):
    # Polar angle π/3 on a sphere of radius 2.
    d, nearest = boundary_distance(spherical_cap)
    assert d == pytest.approx(2.0 * math.pi / 3.0, abs=0.02)
    assert nearest.chart == "collar"
    to_edge = geodesic_distance(
        spherical_cap, spherical_cap.base_point, ChartPoint.create("collar", (0.0, 0.0))
    )
    assert to_edge == pytest.approx(2.0 * math.pi / 3.0, abs=0.02)


def test_unit_cap_arc():
    cap = builtin_manifold("spherical_cap", {"resolution": 128})
    # Stereographic radius tan(θ/2) lies at polar angle θ.
    q = ChartPoint.create("stereo", (math.tan(math.pi / 8), 0.0))
    assert geodesic_distance(cap, cap.base_point, q) == pytest.approx(
        math.pi / 4, abs=1e-3
    )


def test_no_boundary(flat_box):
    assert boundary_distance(flat_box) == (math.inf, None)


def test_ball_nodes(flat_box):
    nodes = ball_nodes(flat_box, 1.0)
    graph = atlas_graph(flat_box)
    coords = np.array([graph.locate(int(n)).coords for n in nodes])
    assert 40 <= len(nodes) <= 49
    assert np.all(np.hypot(coords[:, 0], coords[:, 1]) <= 1.0 + 1e-9)


@pytest.mark.parametrize(
    "radius, expected",
    [(None, ["collar", "core"]), (0.4, ["core"]), (1.0, ["collar", "core"])],
)
def test_charts_meeting_ball(flat_slab, radius, expected):
    assert charts_meeting_ball(flat_slab, radius) == expected
