import math

import numpy as np
import pytest
from scipy.linalg import expm, logm

from collarforge.errors import DomainError, InputError
from collarforge.manifold_atlas import builtin_manifold
from collarforge.metric_extension import (
    OperatorField,
    build_height_function,
    extend_metric,
    operator_field,
    sym_exp,
    sym_log,
    tau_profile,
)

## --- Matrix functions ---


SPD = np.array([[2.0, 0.5, 0.0], [0.5, 1.0, 0.2], [0.0, 0.2, 3.0]])


def test_sym_log_matches_scipy():
    np.testing.assert_allclose(sym_log(SPD), logm(SPD).real, atol=1e-12)


def test_sym_exp_matches_scipy():
    s = np.array([[0.1, -0.4], [-0.4, 0.3]])
    np.testing.assert_allclose(sym_exp(s), expm(s), atol=1e-12)


def test_sym_exp_inverts_sym_log_on_stacks():
    stack = np.stack([SPD, np.eye(3), 4.0 * np.eye(3)])
    np.testing.assert_allclose(sym_exp(sym_log(stack)), stack, atol=1e-12)


@pytest.mark.parametrize(
    "matrix, message",
    [
        (np.array([[1.0, 0.0], [0.0, -1.0]]), "positive definite"),
        (np.array([[1.0, 0.3], [0.0, 1.0]]), "symmetric"),
    ],
)
def test_sym_log_rejects(matrix, message):
    with pytest.raises(DomainError, match=message):
        sym_log(matrix)


## --- Operator fields and the height profile ---


def test_operator_field_of_a_flat_chart(flat_slab):
    field = operator_field(flat_slab, "collar")
    assert field.a0 == pytest.approx(1.0)
    assert field.values.shape == (33, 9, 2, 2)


def test_operator_field_spectrum_check():
    with pytest.raises(InputError, match="spectrum exceeds a0"):
        OperatorField(chart="c", values=4.0 * np.eye(2)[None], a0=2.0)
    with pytest.raises(InputError, match="a0 must be >= 1"):
        OperatorField(chart="c", values=np.eye(2)[None], a0=0.5)


@pytest.mark.parametrize(
    "r, expected", [(0.1, 0.1), (-0.3, -0.3), (0.6, 0.5), (2.0, 0.5)]
)
def test_tau_profile(r, expected):
    assert tau_profile(1.0)(np.array(r)) == pytest.approx(expected)


def test_tau_profile_is_monotone():
    r = np.linspace(0.0, 1.0, 201)
    assert np.all(np.diff(tau_profile(1.0)(r)) >= -1e-12)


def test_tau_profile_needs_r2():
    with pytest.raises(InputError, match="r2 > 0"):
        tau_profile(0.0)


## --- Extension ---


@pytest.fixture(scope="module")
def extended_slab(flat_slab):
    return extend_metric(flat_slab)


class TestExtendMetric:
    def test_layout(self, extended_slab):
        assert extended_slab.depth == 1.0
        assert extended_slab.order == 4
        assert not extended_slab.manifold.has_boundary
        assert extended_slab.manifold.chart("collar").lo[-1] == pytest.approx(-1.0)

    def test_keeps_the_original_samples(self, extended_slab):
        assert extended_slab.restriction_defect() == 0.0

    def test_flat_stays_flat(self, extended_slab):
        for metric in extended_slab.metric.values():
            np.testing.assert_allclose(
                metric, np.broadcast_to(np.eye(2), metric.shape), atol=1e-9
            )

    def test_floor(self, extended_slab):
        assert extended_slab.beta == pytest.approx(1.0)
        # m₀ = 2 overlapping charts halve the guaranteed floor.
        assert extended_slab.floor == pytest.approx(0.5)
        assert extended_slab.measured_floor == pytest.approx(1.0)
        assert extended_slab.measured_floor >= extended_slab.floor

    def test_to_document(self, extended_slab):
        doc = extended_slab.to_document()
        assert doc["provenance"]["seeley_order"] == 4
        assert doc["provenance"]["source"] == extended_slab.source.name
        assert "height" not in doc

    def test_no_height_yet(self, extended_slab):
        with pytest.raises(InputError, match="no height function"):
            extended_slab.height_at_nodes("collar")

    def test_needs_a_boundary(self, flat_box):
        with pytest.raises(InputError, match="no boundary"):
            extend_metric(flat_box)


class TestHeightFunction:
    @pytest.fixture(scope="class")
    def with_height(self, extended_slab):
        return build_height_function(extended_slab)

    def test_certificate(self, with_height):
        certificate = with_height.height_certificate
        assert certificate.passed
        assert certificate.base_value == pytest.approx(1.0)
        assert certificate.zero_distance == pytest.approx(1.5, abs=0.05)
        assert with_height.rescale == pytest.approx(2.0)

    def test_values(self, with_height):
        collar = with_height.height_at_nodes("collar")
        assert collar.max() <= 1.0 + 1e-9
        np.testing.assert_allclose(collar[:, 8], 0.0, atol=1e-12)
        assert np.all(collar[:, 0] < 0.0)

    def test_document_carries_the_height(self, with_height):
        doc = with_height.to_document()
        assert doc["height"]["certificate"]["passed"] is True
        assert set(doc["height"]["charts"]) == {"collar", "core"}


@pytest.fixture(scope="module")
def extended_hemisphere():
    hemisphere = builtin_manifold(
        "spherical_cap",
        {"sphere_radius": 1.0, "polar_angle": math.pi / 2, "resolution": 16},
    )
    return extend_metric(hemisphere)


class TestCurvedExtension:
    def test_floor(self, extended_hemisphere):
        assert extended_hemisphere.restriction_defect() == 0.0
        assert extended_hemisphere.floor > 0.0
        assert extended_hemisphere.measured_floor >= extended_hemisphere.floor

    def test_far_field_is_the_boundary_metric(self, extended_hemisphere):
        collar = extended_hemisphere.manifold.chart("collar")
        source = extended_hemisphere.source.chart("collar")
        assert collar.lo[-1] == pytest.approx(-extended_hemisphere.depth)
        np.testing.assert_allclose(
            collar.metric[:, 0], source.metric[:, 0], rtol=1e-10, atol=1e-10
