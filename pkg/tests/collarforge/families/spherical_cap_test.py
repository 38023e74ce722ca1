import math

import numpy as np
import pytest

from collarforge.errors import InputError
from collarforge.manifold_atlas import (
    build_partition_of_unity,
    builtin_manifold,
    check_transitions,
)


def test_layout(spherical_cap):
    assert list(spherical_cap.charts) == ["stereo", "collar"]
    assert spherical_cap.base_point.chart == "stereo"
    assert spherical_cap.constants.r2 == pytest.approx(math.pi / 3.0)


def test_metric_at_the_pole_and_the_rim(spherical_cap):
    pole = spherical_cap.chart("stereo").metric_at(np.zeros(2))
    np.testing.assert_allclose(pole[0], 16.0 * np.eye(2))
    rim = spherical_cap.chart("collar").metric_at(np.array([0.0, 0.0]))
    np.testing.assert_allclose(rim[0], np.diag([3.0, 1.0]))


def test_transitions_are_consistent(spherical_cap):
    report = check_transitions(spherical_cap)
    assert report.passed, report.failures


def test_partition_of_unity(spherical_cap):
    pou = build_partition_of_unity(spherical_cap)
    assert pou.multiplicity == 2


def test_boundary_distance_sets_the_angle():
    cap = builtin_manifold(
        "spherical_cap",
        {"sphere_radius": 2.0, "boundary_distance": 2.0, "resolution": 16},
    )
    assert cap.name == "spherical_cap(rho=2, angle=1)"
    assert cap.constants.r2 == pytest.approx(1.0)


@pytest.mark.parametrize(
    "params, message",
    [
        ({"polar_angle": 3.5}, "south pole"),
        ({"r2": 1.2}, "no room"),
        ({"boundary_distance": -1.0}, "must be > 0"),
    ],
)
def test_bad_parameters(params, message):
    with pytest.raises(InputError, match=message):
        builtin_manifold("spherical_cap", params | {"resolution": 16})
