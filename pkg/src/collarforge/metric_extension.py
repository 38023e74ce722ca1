"""
Extension of a metric past the boundary, and the height function of the
extended manifold.

Per chart the metric coefficients are read as an SPD operator field A = g
(the comparison metric is the identity in chart coordinates). Its matrix
logarithm is Seeley-extended entry by entry along the collar, exponentiated
back, and the chart-wise results are blended on the outer collars with the
extended partition of unity. Nodes of M keep their original samples.
"""

import logging
import math
from collections.abc import Mapping
from dataclasses import dataclass, replace
from typing import Any

import numpy as np

from collarforge.atlas_types import Chart, ChartRole, PointedManifold
from collarforge.certifier import HeightCertificate, validate_height_function
from collarforge.errors import DomainError, GeometryError, InputError
from collarforge.manifold_atlas import (
    ExtendedAtlas,
    build_partition_of_unity,
    extended_atlas,
    manifold_to_document,
    pull_back,
    replace_charts,
)
from collarforge.profiles import CutoffProfile
from collarforge.seeley import (
    DEFAULT_ORDER,
    WEIGHT_FLOOR,
    blend_outer_collars,
    extend_chart_fields,
    seeley_coefficients,
)

logger = logging.getLogger(__name__)

SYMMETRY_TOL = 1e-10


## Operator fields


@dataclass(frozen=True, kw_only=True, eq=False)
class OperatorField:
    """A_ℓ on the grid of one chart, with a₀ = max(λ_max, 1/λ_min)."""

    chart: str
    values: np.ndarray
    a0: float

    def __post_init__(self):
        eig = np.linalg.eigvalsh(self.values)
        if not self.a0 >= 1.0:
            raise InputError(f"operator field {self.chart!r}: a0 must be >= 1")
        slack = 1e-12 * self.a0
        if eig.min() < 1.0 / self.a0 - slack or eig.max() > self.a0 + slack:
            raise InputError(f"operator field {self.chart!r}: spectrum exceeds a0")


def operator_field(manifold: PointedManifold, chart_id: str) -> OperatorField:
    chart = manifold.chart(chart_id)
    eig = chart.eigenvalues
    if np.any(bad := eig[..., 0] <= 0.0):
        index = tuple(int(i) for i in np.argwhere(bad)[0])
        raise GeometryError(
            "metric sample is not positive definite", chart=chart_id, index=index
        )
    a0 = max(float(eig[..., -1].max()), 1.0 / float(eig[..., 0].min()))
    return OperatorField(chart=chart_id, values=chart.metric, a0=max(a0, 1.0))


def _check_symmetric(matrix: np.ndarray, what: str) -> None:
    scale = max(1.0, float(np.abs(matrix).max(initial=0.0)))
    if np.abs(matrix - np.swapaxes(matrix, -1, -2)).max(initial=0.0) > (
        SYMMETRY_TOL * scale
    ):
        raise DomainError(f"{what} needs symmetric matrices")


def sym_log(a: np.ndarray) -> np.ndarray:
    """Matrix logarithm of SPD matrices (stacked on leading axes) by eigh."""
    a = np.asarray(a, dtype=float)
    _check_symmetric(a, "sym_log")
    w, v = np.linalg.eigh(a)
    if np.any(w <= 0.0):
        raise DomainError(
            f"sym_log needs positive definite input, got eigenvalue {w.min():.3g}"
        )
    return np.einsum("...ik,...k,...jk->...ij", v, np.log(w), v)


def sym_exp(s: np.ndarray) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    _check_symmetric(s, "sym_exp")
    w, v = np.linalg.eigh(s)
    return np.einsum("...ik,...k,...jk->...ij", v, np.exp(w), v)


def _symmetrize(g: np.ndarray) -> np.ndarray:
    return 0.5 * (g + np.swapaxes(g, -1, -2))


## The height profile


@dataclass(frozen=True, kw_only=True)
class TauProfile:
    """τ(r) = r for r <= r2/4 and r2/2 for r >= r2/2, monotone in between."""

    r2: float

    def __post_init__(self):
        if not self.r2 > 0:
            raise InputError(f"the height profile needs r2 > 0, got {self.r2}")

    def __call__(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        chi = CutoffProfile(s0=0.25 * self.r2, s1=0.5 * self.r2)(r)
        return chi * r + (1.0 - chi) * 0.5 * self.r2


def tau_profile(r2: float) -> TauProfile:
    return TauProfile(r2=r2)


## Extended manifolds


@dataclass(frozen=True, kw_only=True, eq=False)
class ExtendedManifold:
    """
    X with the extended metric ĝ. `weights` holds the renormalised extended
    partition ψ̂; `floor` is the eigenvalue floor guaranteed for ĝ from the
    measured log-extension. The height fields are filled in by
    build_height_function.
    """

    source: PointedManifold
    manifold: PointedManifold
    atlas: ExtendedAtlas
    weights: Mapping[str, np.ndarray]
    order: int
    depth: float
    a0: float
    beta: float
    floor: float
    least_weight_sum: float
    height: Mapping[str, np.ndarray] | None = None
    rescale: float | None = None
    height_certificate: HeightCertificate | None = None

    @property
    def metric(self) -> dict[str, np.ndarray]:
        return {cid: chart.metric for cid, chart in self.manifold.charts.items()}

    @property
    def measured_floor(self) -> float:
        return min(chart.min_eigenvalue for chart in self.manifold.charts.values())

    def restriction_defect(self) -> float:
        """max |ĝ - g| over the nodes of M."""
        worst = 0.0
        for chart_id, chart in self.manifold.charts.items():
            inner = chart.metric[self.atlas.inner_index(chart_id)]
            original = self.source.chart(chart_id).metric
            worst = max(worst, float(np.abs(inner - original).max()))
        return worst

    def height_at_nodes(self, chart_id: str) -> np.ndarray:
        if self.height is None:
            raise InputError("no height function has been built yet")
        return self.height[chart_id]

    def to_document(self) -> dict[str, Any]:
        document = manifold_to_document(self.manifold)
        document["provenance"] = {
            "source": self.source.name,
            "seeley_order": self.order,
            "depth": self.depth,
            "a0": self.a0,
            "beta": self.beta,
            "floor": self.floor,
            "measured_floor": self.measured_floor,
            "least_weight_sum": self.least_weight_sum,
            "rescale": self.rescale,
        }
        if self.height is not None:
            document["height"] = {
                "charts": {cid: f.tolist() for cid, f in self.height.items()},
                "certificate": (
                    None
                    if self.height_certificate is None
                    else self.height_certificate.to_document()
                ),
            }
        return document


def _normalized_weights(
    atlas: ExtendedAtlas, raw: Mapping[str, np.ndarray]
) -> dict[str, np.ndarray]:
    """ψ̂_ℓ = max(raw_ℓ, 0) / Σ_j max(raw_j, 0) at every node of X."""
    skeleton = atlas.skeleton
    out = {}
    for chart_id, chart in skeleton.charts.items():
        points = chart.nodes.reshape(-1, chart.dimension)
        own = np.clip(raw[chart_id].reshape(-1), 0.0, None)
        total = own.copy()
        for transition in skeleton.transitions_from(chart_id):
            inside = skeleton.overlap_mask(transition, points)
            if np.any(inside):
                target = skeleton.chart(transition.target)
                images = target.wrap(transition(points[inside]))
                other = target.interpolator(raw[target.id])(images)
                total[inside] += np.clip(other, 0.0, None)
        weights = own / np.maximum(total, WEIGHT_FLOOR)
        out[chart_id] = weights.reshape(chart.resolution)
    return out


def extend_metric(
    manifold: PointedManifold,
    m: int = DEFAULT_ORDER,
    depth: float | None = None,
    *,
    radius: float | None = None,
) -> ExtendedManifold:
    """
    ĝ on X = M with outer collars of the given depth (r2 by default). The
    returned floor is m₀⁻¹ · exp(-sup‖ln Â‖) · min(1, σ_min(J)²), where J runs
    over the transition Jacobians used while blending; the eigenvalues of ĝ
    stay above it.
    """
    if not manifold.has_boundary:
        raise InputError(f"{manifold.name!r} has no boundary to extend across")
    depth = manifold.constants.r2 if depth is None else depth
    coeffs = seeley_coefficients(m)
    partition = build_partition_of_unity(manifold)
    atlas = extended_atlas(manifold, depth=depth, radius=radius)
    skeleton = atlas.skeleton

    fields = {cid: operator_field(manifold, cid) for cid in skeleton.charts}
    a0 = max(field.a0 for field in fields.values())
    logs = {cid: sym_log(field.values) for cid, field in fields.items()}
    extended_logs = extend_chart_fields(atlas, logs, coeffs, None, what="log metric")
    log_sup = max(
        float(np.abs(np.linalg.eigvalsh(values)).max())
        for values in extended_logs.values()
    )
    local = {cid: sym_exp(values) for cid, values in extended_logs.items()}
    raw = extend_chart_fields(
        atlas, partition.weights, coeffs, None, what="partition of unity"
    )

    sigma = [math.inf]

    def into_source(transition, points: np.ndarray, values: np.ndarray) -> np.ndarray:
        jac = transition.jacobian(points)
        sigma[0] = min(sigma[0], float(np.linalg.svd(jac, compute_uv=False).min()))
        return pull_back(jac, values)

    blended, least = blend_outer_collars(atlas, local, raw, into_source)
    charts: dict[str, Chart] = {}
    for chart_id, chart in skeleton.charts.items():
        if chart.role != ChartRole.OUTER_COLLAR:
            charts[chart_id] = chart
            continue
        metric = _symmetrize(blended[chart_id])
        metric[atlas.inner_index(chart_id)] = manifold.chart(chart_id).metric
        charts[chart_id] = replace(chart, metric=metric, metric_form=None)
    extended = replace_charts(skeleton, charts, name=f"{manifold.name}+extended")

    beta = math.exp(-log_sup)
    floor = beta * min(1.0, sigma[0] ** 2) / manifold.constants.m0
    result = ExtendedManifold(
        source=manifold,
        manifold=extended,
        atlas=atlas,
        weights=_normalized_weights(atlas, raw),
        order=m,
        depth=depth,
        a0=a0,
        beta=beta,
        floor=floor,
        least_weight_sum=least,
    )
    logger.info(
        f"extended {manifold.name!r} to depth {depth:g} with Seeley order {m}: "
        f"a0 = {a0:.4g}, floor {floor:.4g}, measured {result.measured_floor:.4g}"
    )
    return result


def build_height_function(
    extended: ExtendedManifold, *, c: float | None = None, k: int = 1
) -> ExtendedManifold:
    """
    f = (2/r2) Σ_ℓ ψ̂_ℓ · τ(t_ℓ), where interior charts contribute the constant
    r2/2, validated as a height function. Without `c` the certificate is
    reported for the least constant the measured f passes with.
    """
    r2 = extended.source.constants.r2
    tau = tau_profile(r2)
    atlas = extended.atlas
    local = {}
    for chart_id, chart in atlas.skeleton.charts.items():
        if chart.is_collar:
            local[chart_id] = tau(chart.nodes[..., -1])
        else:
            local[chart_id] = np.full(chart.resolution, 0.5 * r2)
    blended, _ = blend_outer_collars(atlas, local, extended.weights, everywhere=True)
    rescale = 2.0 / r2
    height = {cid: rescale * values for cid, values in blended.items()}

    certificate = validate_height_function(
        extended.manifold, height, 1.0 if c is None else c, k
    )
    if c is None:
        constant = certificate.minimal_constant()
        if math.isfinite(constant):
            certificate = replace(certificate, c=constant)
        else:
            logger.warning(
                f"no constant makes the height function of "
                f"{extended.source.name!r} pass"
            )
    logger.info(
        f"height function on {extended.manifold.name!r}: c = {certificate.c:.4g}, "
        f"passed = {certificate.passed}"
    )
    return replace(
        extended, height=height, rescale=rescale, height_certificate=certificate
    )
