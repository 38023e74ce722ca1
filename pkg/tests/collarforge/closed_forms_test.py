import math

import numpy as np
import pytest

from collarforge.closed_forms import MAPS, MapForm, MetricForm
from collarforge.errors import InputError


def numeric_jacobian(form: MapForm, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    columns = [
        (form(x + h * e)[0] - form(x - h * e)[0]) / (2 * h) for e in np.eye(len(x))
    ]
    return np.stack(columns, axis=-1)


class TestMetricForm:
    def test_euclidean(self):
        g = MetricForm(name="euclidean")(np.zeros((3, 2)))
        assert g.shape == (3, 2, 2)
        np.testing.assert_array_equal(g[1], np.eye(2))

    def test_polar_collar(self):
        g = MetricForm(name="polar_collar", params={"radius": 3.0})(
            np.array([[0.2, 1.0]])
        )
        np.testing.assert_allclose(g[0], np.diag([4.0, 1.0]))

    def test_stereographic_at_the_pole(self):
        g = MetricForm(name="stereographic", params={"sphere_radius": 2.0})(
            np.zeros((1, 2))
        )
        np.testing.assert_allclose(g[0], 16.0 * np.eye(2))

    def test_scaled(self):
        form = MetricForm(name="euclidean").scaled(2.0).scaled(1.5)
        assert form.scale == 3.0
        np.testing.assert_allclose(form(np.zeros((1, 2)))[0], 3.0 * np.eye(2))

    def test_to_document(self):
        form = MetricForm(name="polar_collar", params={"radius": 3.0}, scale=2.0)
        assert form.to_document() == {
            "kind": "builtin",
            "family": "polar_collar",
            "params": {"radius": 3.0},
            "scale": 2.0,
        }

    def test_unknown_name(self):
        with pytest.raises(InputError, match="unknown builtin metric"):
            MetricForm(name="hyperbolic")

    def test_bad_params(self):
        form = MetricForm(name="polar_collar", params={"diameter": 3.0})
        with pytest.raises(InputError, match="bad parameters"):
            form(np.zeros((1, 2)))

    def test_rejects_non_positive_scale(self):
        with pytest.raises(InputError):
            MetricForm(name="euclidean", scale=0.0)


MAP_CASES = [
    ("shift", {"offset": (1.0, -2.0)}, [0.3, 0.4]),
    ("flip_collar", {"height": 2.0}, [0.3, 0.4]),
    ("polar_to_cartesian", {"radius": 3.0}, [0.7, 0.5]),
    ("cartesian_to_polar", {"radius": 3.0}, [1.5, 2.0]),
    ("cap_collar_to_stereo", {"sphere_radius": 2.0, "polar_angle": 1.0}, [2.0, 0.3]),
    ("stereo_to_cap_collar", {"sphere_radius": 2.0, "polar_angle": 1.0}, [0.2, -0.3]),
    ("inversion", {}, [0.6, -0.8]),
]


class TestMapForm:
    @pytest.mark.parametrize("name, params, point", MAP_CASES)
    def test_jacobian_matches_differences(self, name, params, point):
        form = MapForm(name=name, params=params)
        x = np.array(point)
        np.testing.assert_allclose(
            form.jacobian(x)[0], numeric_jacobian(form, x), atol=1e-6
        )

    def test_every_map_is_covered(self):
        assert {name for name, _, _ in MAP_CASES} | {"identity"} == set(MAPS)

    def test_polar_round_trip(self):
        to_polar = MapForm(name="cartesian_to_polar", params={"radius": 3.0})
        back = MapForm(name="polar_to_cartesian", params={"radius": 3.0})
        x = np.array([[1.0, 1.0], [-2.0, 0.5]])
        np.testing.assert_allclose(back(to_polar(x)), x, atol=1e-12)

    def test_polar_angle_in_range(self):
        phi = MapForm(name="cartesian_to_polar", params={"radius": 1.0})(
            np.array([[0.0, -0.5]])
        )[0, 0]
        assert phi == pytest.approx(1.5 * math.pi)

    def test_cap_collar_boundary_is_the_rim(self):
        form = MapForm(
            name="cap_collar_to_stereo",
            params={"sphere_radius": 1.0, "polar_angle": math.pi / 2},
        )
        image = form(np.array([0.0, 0.0]))[0]
        np.testing.assert_allclose(image, [1.0, 0.0], atol=1e-12)

    def test_to_document_lists_tuples(self):
        form = MapForm(name="shift", params={"offset": (1.0, 2.0)})
        assert form.to_document() == {
            "kind": "builtin",
            "name": "shift",
            "params": {"offset": [1.0, 2.0]},
        }

    def test_unknown_name(self):
        with pytest.raises(InputError, match="unknown builtin transition map"):
            MapForm(name="mobius")
