from dataclasses import replace

import numpy as np
import pytest

from collarforge.atlas_types import (
    AtlasConstants,
    Chart,
    ChartPoint,
    ChartRole,
    collar_nodes,
    grid_axes,
)
from collarforge.closed_forms import MetricForm
from collarforge.errors import GeometryError, InputError

EUCLIDEAN = MetricForm(name="euclidean")


def square(**overrides) -> Chart:
    settings = {
        "id": "square",
        "role": ChartRole.INTERIOR,
        "lo": (0.0, 0.0),
        "hi": (1.0, 1.0),
        "resolution": (5, 5),
        "form": EUCLIDEAN,
    } | overrides
    return Chart.from_form(**settings)


def identity_samples(resolution=(5, 5)) -> np.ndarray:
    return np.broadcast_to(np.eye(2), resolution + (2, 2)).copy()


## --- Helpers ---


def test_chart_point_create_flattens():
    p = ChartPoint.create("core", np.array([[1, 2]]))
    assert p.coords == (1.0, 2.0)
    assert p.to_document() == {"chart": "core", "coords": [1.0, 2.0]}


@pytest.mark.parametrize(
    "spacing, depth, expected", [(0.25, 1.0, 4), (0.25, 0.1, 1), (0.3, 1.0, 3)]
)
def test_collar_nodes(spacing, depth, expected):
    assert collar_nodes(spacing, depth) == expected


def test_grid_axes_periodic_leaves_out_endpoint():
    x, y = grid_axes((0.0, 0.0), (1.0, 1.0), (4, 5), (True, False))
    np.testing.assert_allclose(x, [0.0, 0.25, 0.5, 0.75])
    np.testing.assert_allclose(y, [0.0, 0.25, 0.5, 0.75, 1.0])


## --- Chart validation ---


class TestChartValidation:
    def test_from_form_samples_the_metric(self):
        chart = square()
        assert chart.metric.shape == (5, 5, 2, 2)
        assert chart.min_eigenvalue == pytest.approx(1.0)
        assert chart.periodic == (False, False)
        assert chart.taper == ((0.0, 0.0), (0.0, 0.0))

    def test_not_symmetric(self):
        metric = identity_samples()
        metric[2, 3, 0, 1] = 0.5
        with pytest.raises(GeometryError, match="not symmetric") as excinfo:
            Chart(
                id="bad",
                role=ChartRole.INTERIOR,
                lo=(0.0, 0.0),
                hi=(1.0, 1.0),
                resolution=(5, 5),
                metric=metric,
            )
        assert excinfo.value.index == (2, 3)

    def test_not_positive_definite(self):
        metric = identity_samples()
        metric[1, 2] = -np.eye(2)
        with pytest.raises(GeometryError, match="positive definite") as excinfo:
            Chart(
                id="bad",
                role=ChartRole.INTERIOR,
                lo=(0.0, 0.0),
                hi=(1.0, 1.0),
                resolution=(5, 5),
                metric=metric,
            )
        assert excinfo.value.chart == "bad"
        assert excinfo.value.index == (1, 2)

    def test_non_finite(self):
        metric = identity_samples()
        metric[0, 4, 1, 1] = np.nan
        with pytest.raises(GeometryError, match="non-finite"):
            Chart(
                id="bad",
                role=ChartRole.INTERIOR,
                lo=(0.0, 0.0),
                hi=(1.0, 1.0),
                resolution=(5, 5),
                metric=metric,
            )

    @pytest.mark.parametrize(
        "overrides, message",
        [
            ({"resolution": (3, 5)}, "resolution must be >= 4"),
            ({"hi": (1.0, 0.0)}, "lo < hi"),
            ({"role": ChartRole.BOUNDARY_COLLAR, "lo": (0.0, 0.5)}, "t = 0"),
            ({"role": ChartRole.OUTER_COLLAR}, "t < 0"),
            (
                {"role": ChartRole.BOUNDARY_COLLAR, "periodic": (False, True)},
                "cannot be periodic",
            ),
        ],
    )
    def test_bad_box(self, overrides, message):
        with pytest.raises(InputError, match=message):
            square(**overrides)

    def test_mismatched_samples(self):
        with pytest.raises(InputError, match="metric shape"):
            Chart(
                id="bad",
                role=ChartRole.INTERIOR,
                lo=(0.0, 0.0),
                hi=(1.0, 1.0),
                resolution=(5, 6),
                metric=identity_samples(),
            )


## --- Chart queries ---


class TestChartQueries:
    def test_spacing(self):
        assert square(hi=(1.0, 2.0), resolution=(5, 9)).spacing == (0.25, 0.25)
        periodic = square(resolution=(4, 4), periodic=(True, False))
        assert periodic.spacing == pytest.approx((0.25, 1.0 / 3.0))

    def test_wrap_and_contains(self):
        chart = square(periodic=(True, False))
        np.testing.assert_allclose(chart.wrap(np.array([1.25, 0.5])), [[0.25, 0.5]])
        inside = chart.contains(np.array([[7.0, 0.5], [0.5, 1.5]]))
        assert inside.tolist() == [True, False]

    def test_depth_in_cells(self):
        chart = square()
        assert chart.depth(np.array([0.5, 0.25]))[0] == pytest.approx(1.0)
        periodic = square(periodic=(True, False))
        assert periodic.depth(np.array([0.0, 0.5]))[0] == pytest.approx(2.0)

    def test_periodic_interpolation_wraps(self):
        chart = square(resolution=(4, 4), periodic=(True, False))
        values = np.cos(2 * np.pi * chart.nodes[..., 0])
        f = chart.interpolator(values)
        np.testing.assert_allclose(
            f(np.array([[0.875, 0.5], [-0.125, 0.5]])), [0.5, 0.5], atol=1e-12
        )

    def test_metric_at_uses_the_closed_form(self):
        form = MetricForm(name="polar_collar", params={"radius": 3.0})
        chart = square(role=ChartRole.BOUNDARY_COLLAR, form=form)
        g = chart.metric_at(np.array([0.3, 0.37]))
        np.testing.assert_allclose(g[0], np.diag([(3.0 - 0.37) ** 2, 1.0]))

    def test_cell_corners(self):
        flat, coords = square().cell_corners(np.array([0.3, 0.6]))
        assert flat.shape == (1, 4)
        assert flat[0, 0] == 7
        np.testing.assert_allclose(coords[0, 0], [0.25, 0.5])
        np.testing.assert_allclose(coords[0, -1], [0.5, 0.75])

    def test_displacement_takes_the_short_way(self):
        chart = square(periodic=(True, False))
        delta = chart.displacement(np.array([0.9, 0.0]), np.array([0.1, 0.5]))
        np.testing.assert_allclose(delta, [0.2, 0.5])

    def test_flat_index_wraps_periodic_axes(self):
        chart = square(resolution=(4, 4), periodic=(True, False))
        assert chart.flat_index(np.array([[4, 1]])).tolist() == [1]
        with pytest.raises(ValueError):
            chart.flat_index(np.array([[1, 4]]))


## --- Manifolds ---


def test_constants_validation():
    with pytest.raises(InputError):
        AtlasConstants(r1=0.0, r2=1.0, m0=2, c0=1.0)
    with pytest.raises(InputError, match="m0"):
        AtlasConstants(r1=1.0, r2=1.0, m0=0, c0=1.0)


class TestPointedManifold:
    def test_slab_shape(self, flat_slab):
        assert flat_slab.has_boundary
        assert flat_slab.measured_multiplicity == 2
        assert [c.id for c in flat_slab.charts_with_role(ChartRole.INTERIOR)] == [
            "core"
        ]
        assert flat_slab.transition("collar", "core") is not None
        assert flat_slab.transition("core", "core") is None

    def test_to_chart(self, flat_slab):
        inside = ChartPoint.create("collar", (0.5, 0.75))
        np.testing.assert_allclose(flat_slab.to_chart(inside, "core"), [0.5, 0.75])
        below = ChartPoint.create("collar", (0.5, 0.25))
        assert flat_slab.to_chart(below, "core") is None

    def test_representations(self, flat_slab):
        found = flat_slab.representations(ChartPoint.create("core", (0.0, 0.75)))
        assert [p.chart for p in found] == ["core", "collar"]

    def test_unknown_chart(self, flat_slab):
        with pytest.raises(InputError, match="unknown chart"):
            flat_slab.chart("nowhere")

    def test_base_point_must_be_interior(self, flat_slab):
        with pytest.raises(InputError, match="interior chart"):
            replace(flat_slab, base_point=ChartPoint.create("collar", (0.0, 0.5)))

    def test_base_point_inside_its_chart(self, flat_slab):
        with pytest.raises(InputError, match="outside its chart"):
            replace(flat_slab, base_point=ChartPoint.create("core", (0.0, 9.0)))

    def test_boundary_flag_must_match(self, flat_slab):
        with pytest.raises(InputError, match="has_boundary"):
            replace(flat_slab, has_boundary=False)

    def test_declared_multiplicity(self, flat_slab):
        constants = replace(flat_slab.constants, m0=1)
        with pytest.raises(InputError, match="multiplicity"):
            replace(flat_slab, constants=constants)
