import math

import numpy as np
import pandas as pd
import pytest

from collarforge.atlas_types import ChartPoint
from collarforge.certifier import (
    BoundedGeometryCertificate,
    Condition,
    ConditionRecord,
    HeightCertificate,
    certify,
    certify_grid,
    injectivity_lower_bound,
    sample_directions,
    sample_indices,
    smallest_passing,
    unit_directions,
    validate_height_function,
    zero_crossings,
)
from collarforge.errors import InputError, RangeError
from collarforge.manifold_atlas import boundary_atlas, builtin_manifold

## --- Sampling ---


@pytest.mark.parametrize("n, count", [(1, 2), (2, 16), (3, 32)])
def test_unit_directions(n, count):
    directions = unit_directions(n)
    assert directions.shape == (count, n)
    np.testing.assert_allclose(np.linalg.norm(directions, axis=1), 1.0)


def test_sample_directions_are_unit_for_the_metric():
    g = np.array([[4.0, 1.0], [1.0, 2.0]])
    directions = sample_directions(g)
    np.testing.assert_allclose(np.einsum("ni,ij,nj->n", directions, g, directions), 1.0)


def test_sample_indices(flat_slab):
    picks = sample_indices(flat_slab.chart("collar"), 3, margin=1)
    assert picks[0].tolist() == [1, 16, 31]
    assert picks[1].tolist() == [1, 4, 7]
    face = sample_indices(flat_slab.chart("collar"), 3, face=True)
    assert face[1].tolist() == [0]


## --- Injectivity radius ---


def test_injectivity_on_the_torus(flat_torus):
    bound = injectivity_lower_bound(flat_torus, flat_torus.base_point, 1.0)
    assert bound == pytest.approx(0.5, abs=0.05)


def test_injectivity_on_a_thin_circle():
    cylinder = builtin_manifold("flat_cylinder", {"radius": 0.1, "resolution": 8})
    boundary = boundary_atlas(cylinder)
    point = ChartPoint.create("bottom", (1.0,))
    bound = injectivity_lower_bound(boundary, point, 1.0)
    assert bound == pytest.approx(math.pi * 0.1, abs=0.02)


def test_injectivity_on_the_round_sphere():
    sphere = builtin_manifold("round_sphere", {"resolution": 32})
    bound = injectivity_lower_bound(sphere, sphere.base_point, 4.0)
    assert bound == pytest.approx(math.pi, abs=0.1)


def test_injectivity_is_capped(flat_box):
    assert injectivity_lower_bound(flat_box, flat_box.base_point, 0.5) == 0.5


def test_injectivity_needs_a_finite_cap(flat_box):
    with pytest.raises(InputError, match="rmax"):
        injectivity_lower_bound(flat_box, flat_box.base_point, math.inf)


## --- Certificates ---


class TestCertify:
    def test_slab_passes(self, flat_slab):
        certificate = certify(flat_slab, 2.0, 0, samples_per_axis=3)
        assert certificate.passed, certificate.table()
        assert certificate.record(Condition.BASEPOINT).measured == pytest.approx(
            1.5, abs=1e-6
        )
        assert len(certificate.table()) == len(Condition)

    def test_base_point_too_close(self, flat_slab):
        certificate = certify(flat_slab, 1.0, 0, samples_per_axis=3)
        assert certificate.failed == [Condition.BASEPOINT]
        record = certificate.record("basepoint")
        assert record.required == 2.0
        assert record.witness == ChartPoint.create("collar", (0.0, 0.0))
        doc = certificate.to_document()
        assert doc["failed"] == ["basepoint"]
        assert doc["passed"] is False

    def test_thin_cylinder_fails_boundary_injectivity(self):
        rho = 0.05
        cylinder = builtin_manifold(
            "flat_cylinder", {"radius": rho, "height": 4.0, "resolution": 8}
        )
        certificate = certify(cylinder, 1.25, 0, samples_per_axis=3)
        failed = certificate.failed
        assert Condition.BOUNDARY_INJECTIVITY in failed
        assert Condition.INTERIOR_INJECTIVITY in failed
        for condition in ("iv", "v", "basepoint"):
            assert condition not in failed
        record = certificate.record(Condition.BOUNDARY_INJECTIVITY)
        assert record.required == pytest.approx(0.8)
        assert record.measured == pytest.approx(math.pi * rho, rel=0.05)
        assert record.witness.chart in ("bottom", "top")

    def test_no_boundary_is_vacuous(self, flat_box):
        certificate = certify(flat_box, 1.0, 0, samples_per_axis=2)
        assert certificate.passed
        for condition in ("i", "ii", "v", "basepoint"):
            assert certificate.record(condition).vacuous
        assert certificate.to_document()["records"][0]["measured"] is None

    @pytest.mark.parametrize(
        "c, k, per_axis", [(0.0, 0, 4), (math.inf, 0, 4), (1.0, -1, 4), (1.0, 0, 0)]
    )
    def test_bad_arguments(self, flat_box, c, k, per_axis):
        with pytest.raises(InputError):
            certify(flat_box, c, k, samples_per_axis=per_axis)


def test_certify_grid(flat_box):
    grid = certify_grid(flat_box, [2.0, 1.0, 2.0, 4.0], 0, samples_per_axis=2)
    assert grid["c"].tolist() == [1.0, 2.0, 4.0]
    assert grid["passed"].all()
    assert (grid["failed"] == "").all()


def test_smallest_passing():
    grid = pd.DataFrame(
        {"c": [1.0, 2.0, 4.0], "passed": [False, True, True], "failed": ["v", "", ""]}
    )
    assert smallest_passing(grid) == 2.0
    assert smallest_passing(grid.assign(passed=False)) is None


def test_failed_record_needs_a_witness():
    with pytest.raises(InputError, match="witness"):
        ConditionRecord(
            condition=Condition.CURVATURE, required=1.0, measured=2.0, passed=False
        )


def test_certificate_needs_every_condition():
    record = ConditionRecord(
        condition=Condition.CURVATURE, required=1.0, measured=0.0, passed=True
    )
    with pytest.raises(InputError, match="one record per condition"):
        BoundedGeometryCertificate(manifold="m", c=1.0, k=0, records=(record,))


## --- Height functions ---


def cosine_height(torus):
    chart = torus.chart("torus")
    return {"torus": -np.cos(2 * np.pi * chart.nodes[..., 0])}


class TestHeightFunction:
    def test_zero_crossings(self, flat_torus):
        chart = flat_torus.chart("torus")
        points = zero_crossings(chart, cosine_height(flat_torus)["torus"])
        assert len(points) == 64
        gaps = np.minimum(np.abs(points[:, 0] - 0.25), np.abs(points[:, 0] - 0.75))
        assert gaps.max() < 1e-9

    def test_passes_with_room(self, flat_torus):
        f = cosine_height(flat_torus)
        certificate = validate_height_function(flat_torus, f, 8.0, 1)
        assert certificate.passed
        assert certificate.base_value == pytest.approx(1.0)
        assert certificate.zero_distance == pytest.approx(0.25, abs=1e-6)
        assert certificate.sup_norms[0] == pytest.approx(1.0)
        assert certificate.minimal_constant() == pytest.approx(2 * np.pi, rel=0.02)

    def test_gradient_too_steep(self, flat_torus):
        f = cosine_height(flat_torus)
        certificate = validate_height_function(flat_torus, f, 5.0, 1)
        assert certificate.clauses == {"i": True, "ii": True, "iii": False}
        assert not certificate.passed

    def test_values_above_one(self, flat_torus):
        f = {"torus": np.full(flat_torus.chart("torus").resolution, 2.0)}
        with pytest.raises(RangeError, match="> 1"):
            validate_height_function(flat_torus, f, 8.0, 0)

    def test_misshapen(self, flat_torus):
        with pytest.raises(InputError, match="misshapen"):
            validate_height_function(flat_torus, {"torus": np.zeros((3, 3))}, 8.0, 0)

    def test_needs_a_closed_manifold(self, flat_slab):
        with pytest.raises(InputError, match="without boundary"):
            validate_height_function(flat_slab, {}, 8.0, 0)


def test_minimal_constant_without_zeros():
    certificate = HeightCertificate(
        c=1.0,
        k=0,
        delta=math.inf,
        sup_norms=(1.0,),
        zero_distance=math.inf,
        base_value=1.0,
        zero_locus_found=False,
    )
    assert certificate.minimal_constant() == math.inf
    assert certificate.clauses["i"] is False
    assert certificate.to_document()["zero_distance"] is None
