"""
Seeley-type extension of functions across the boundary.

The one-dimensional operator continues v from [0, ∞) to s < 0 by

    E(v)(s) = v(0) + Σ_k a_k χ(λ_k|s|) (v(λ_k|s|) - v(0))

with nodes λ_k = k + 1 and weights a_k solving Σ_k a_k (-λ_k)^j = 1 for
j = 0..m. Where the cutoff χ is 1 this is the reflection Σ_k a_k v(λ_k|s|),
which matches v and its first m derivatives at s = 0. Constants are fixed
everywhere, and past the cutoff support E(v) settles to v(0).

On a collar chart E acts in the stretched coordinate σ = φ(t), so the
reflected arguments λ_k|s| always land back inside [0, r2).
"""

import logging
import math
from collections.abc import Callable, Mapping
from dataclasses import dataclass
from fractions import Fraction
from typing import Any

import numpy as np
from cachetools import LRUCache, cached
from scipy.interpolate import CubicSpline

from collarforge.atlas_types import (
    Chart,
    PartitionOfUnity,
    PointedManifold,
    collar_nodes,
)
from collarforge.errors import (
    ConditioningError,
    CoverageError,
    InputError,
    PreconditionError,
)
from collarforge.manifold_atlas import ExtendedAtlas, extended_atlas
from collarforge.profiles import CutoffProfile, StretchMap

logger = logging.getLogger(__name__)

type ScalarField = Mapping[str, np.ndarray]
type Transform = Callable[[Any, np.ndarray, np.ndarray], np.ndarray]

MAX_ORDER = 12
DEFAULT_ORDER = 4
MOMENT_TOL = 1e-9
WEIGHT_FLOOR = 1e-9


@dataclass(frozen=True, kw_only=True)
class SeeleyCoefficients:
    order: int
    nodes: tuple[float, ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        if len(self.nodes) != self.order + 1 or len(self.weights) != self.order + 1:
            raise InputError("Seeley order, nodes and weights disagree")
        if (defect := max(self.moment_defects())) > MOMENT_TOL:
            raise InputError(f"Seeley weights miss the moment conditions by {defect}")

    def moment_defects(self) -> list[float]:
        """
        |Σ_k a_k (-λ_k)^j - 1| for j = 0..m, relative to the size of the terms.
        The sums are done in exact arithmetic on the stored floats.
        """
        weights = [Fraction(a) for a in self.weights]
        nodes = [Fraction(lam) for lam in self.nodes]
        defects = []
        for j in range(self.order + 1):
            terms = [a * (-lam) ** j for a, lam in zip(weights, nodes, strict=True)]
            scale = max(Fraction(1), sum((abs(t) for t in terms), Fraction(0)))
            defects.append(float(abs(sum(terms, Fraction(0)) - 1) / scale))
        return defects

    @property
    def bound(self) -> float:
        """Σ|a_k|, which bounds the sup norm of the extension operator."""
        return float(sum(abs(a) for a in self.weights))

    def to_document(self) -> dict[str, Any]:
        return {"order": self.order, "nodes": self.nodes, "weights": self.weights}


@cached(cache=LRUCache(maxsize=MAX_ORDER + 1))
def seeley_coefficients(m: int) -> SeeleyCoefficients:
    if m < 0:
        raise InputError(f"Seeley order must be >= 0, got {m}")
    if m > MAX_ORDER:
        raise ConditioningError(
            f"Seeley order {m} exceeds {MAX_ORDER}: the moment system is too "
            "ill-conditioned"
        )
    # a_k is the Lagrange basis polynomial on the nodes -λ_j evaluated at 1.
    nodes = [k + 1 for k in range(m + 1)]
    weights = []
    for k, lam in enumerate(nodes):
        a = Fraction(1)
        for j, other in enumerate(nodes):
            if j != k:
                a *= Fraction(1 + other, other - lam)
        weights.append(a)
    return SeeleyCoefficients(
        order=m,
        nodes=tuple(float(lam) for lam in nodes),
        weights=tuple(float(a) for a in weights),
    )


def default_cutoff(r2: float) -> CutoffProfile:
    """The reflection cutoff in stretched coordinates: 1 up to r2/2, 0 past r2."""
    return CutoffProfile(s0=0.5 * r2, s1=r2)


def reflect(
    v: Callable[[np.ndarray], np.ndarray],
    s: np.ndarray,
    coeffs: SeeleyCoefficients,
    cutoff: CutoffProfile | None = None,
) -> np.ndarray:
    """
    E(v) at the points s <= 0. `v` takes a 1-d array of arguments >= 0 and
    returns values with those arguments on the last axis.
    """
    r = np.abs(np.asarray(s, dtype=float))
    v0 = v(np.zeros_like(r))
    out = np.array(v0, dtype=float, copy=True)
    for a, lam in zip(coeffs.weights, coeffs.nodes, strict=True):
        chi = 1.0 if cutoff is None else cutoff(lam * r)
        out += a * chi * (v(lam * r) - v0)
    return out


def extend_scalar_chart(
    u: np.ndarray,
    t_axis: np.ndarray,
    coeffs: SeeleyCoefficients,
    cutoff: CutoffProfile | None,
    depth: float,
) -> tuple[np.ndarray, np.ndarray]:
    """
    Extend samples u[..., j] = u(t_j) on a collar axis starting at t = 0 to
    negative t, down to about -depth in steps of the axis spacing. Returns the
    extended axis and values; the part at t >= 0 is `u` itself.
    """
    t_axis = np.asarray(t_axis, dtype=float)
    u = np.asarray(u, dtype=float)
    if t_axis[0] != 0.0:
        raise InputError("collar axis must start at t = 0")
    if depth <= 0:
        raise InputError(f"extension depth must be > 0, got {depth}")
    if u.shape[-1] != len(t_axis):
        raise InputError("samples do not match the collar axis")
    if not np.all(np.isfinite(u)):
        raise InputError("cannot extend non-finite samples")

    r2 = float(t_axis[-1])
    cutoff = cutoff if cutoff is not None else default_cutoff(r2)
    stretch = StretchMap(r2=r2)
    spline = CubicSpline(t_axis, u, axis=-1)

    def v(sigma: np.ndarray) -> np.ndarray:
        return spline(stretch.inverse(sigma))

    h = float(t_axis[1] - t_axis[0])
    s = -h * np.arange(collar_nodes(h, depth), 0, -1)
    outside = reflect(v, s, coeffs, cutoff)
    return np.concatenate([s, t_axis]), np.concatenate([outside, u], axis=-1)


def extend_along_collar(
    samples: np.ndarray,
    chart: Chart,
    coeffs: SeeleyCoefficients,
    cutoff: CutoffProfile | None,
    depth: float,
) -> np.ndarray:
    """extend_scalar_chart for a node field (*resolution, ...) of a collar chart."""
    axis = chart.dimension - 1
    moved = np.moveaxis(samples, axis, -1)
    _, extended = extend_scalar_chart(moved, chart.axes[-1], coeffs, cutoff, depth)
    return np.moveaxis(extended, -1, axis)


def _expand(weights: np.ndarray, values: np.ndarray) -> np.ndarray:
    return weights.reshape(weights.shape + (1,) * (values.ndim - weights.ndim))


def blend_outer_collars(
    atlas: ExtendedAtlas,
    local: ScalarField,
    raw_weights: ScalarField,
    transform: Transform | None = None,
    *,
    everywhere: bool = False,
) -> tuple[dict[str, np.ndarray], float]:
    """
    Combine the chart-wise extensions at nodes with t < 0 using the extended
    weights ψ̂, clamped at 0 and renormalized to sum 1. Nodes with t >= 0 keep
    their local value unless `everywhere` is set.
    `transform(transition, points, values)` rewrites values fetched from a
    neighbouring chart into the current chart's coordinates.

    Returns the blended fields and the least raw weight sum met.
    """
    skeleton = atlas.skeleton
    blended: dict[str, np.ndarray] = {}
    least = math.inf
    for chart_id, chart in skeleton.charts.items():
        values = np.array(local[chart_id], dtype=float, copy=True)
        mask = atlas.outer_mask(chart_id)
        if everywhere:
            mask = np.ones_like(mask)
        if not np.any(mask):
            blended[chart_id] = values
            continue
        points = chart.nodes[mask]
        own = values[mask]
        weight = np.clip(raw_weights[chart_id][mask], 0.0, None)
        numerator = _expand(weight, own) * own
        total = weight.copy()
        plain = own.copy()
        count = np.ones(len(points))
        for transition in skeleton.transitions_from(chart_id):
            inside = skeleton.overlap_mask(transition, points)
            if not np.any(inside):
                continue
            target = skeleton.chart(transition.target)
            images = target.wrap(transition(points[inside]))
            other = target.interpolator(local[target.id])(images)
            if transform is not None:
                other = transform(transition, points[inside], other)
            w = np.clip(target.interpolator(raw_weights[target.id])(images), 0, None)
            numerator[inside] += _expand(w, other) * other
            total[inside] += w
            plain[inside] += other
            count[inside] += 1
        least = min(least, float(total.min()))
        result = numerator / _expand(np.maximum(total, WEIGHT_FLOOR), numerator)
        if np.any(fallback := total <= WEIGHT_FLOOR):
            logger.warning(
                f"{chart_id}: extended weights vanish at {fallback.sum()} nodes, "
                "blending those equally"
            )
            result[fallback] = plain[fallback] / _expand(count[fallback], plain)
        values[mask] = result
        blended[chart_id] = values
    return blended, least


@dataclass(frozen=True, kw_only=True, eq=False)
class ExtendedScalarField:
    """A scalar field on X_r, sampled on the extended charts."""

    atlas: ExtendedAtlas
    values: Mapping[str, np.ndarray]
    least_weight_sum: float
    bound: float

    def restriction(self) -> dict[str, np.ndarray]:
        """The samples at the nodes of M."""
        return {
            chart_id: values[self.atlas.inner_index(chart_id)]
            for chart_id, values in self.values.items()
        }

    def min(self) -> float:
        return min(float(np.min(v)) for v in self.values.values())

    def max(self) -> float:
        return max(float(np.max(v)) for v in self.values.values())

    def to_document(self) -> dict[str, Any]:
        return {
            "charts": {k: v.tolist() for k, v in self.values.items()},
            "least_weight_sum": self.least_weight_sum,
            "bound": self.bound,
        }


def extend_chart_fields(
    atlas: ExtendedAtlas,
    field: ScalarField,
    coeffs: SeeleyCoefficients,
    cutoff: CutoffProfile | None,
    *,
    what: str,
) -> dict[str, np.ndarray]:
    """Seeley-extend per-chart node fields along the collar of every outer chart."""
    out = {}
    for chart_id in atlas.skeleton.charts:
        samples = field.get(chart_id)
        if samples is None:
            raise CoverageError(
                f"{what} has no samples on chart {chart_id!r}, which meets the ball"
            )
        if atlas.prepended[chart_id] == 0:
            out[chart_id] = np.asarray(samples, dtype=float)
            continue
        chart = atlas.source.chart(chart_id)
        out[chart_id] = extend_along_collar(samples, chart, coeffs, cutoff, atlas.depth)
    return out


def extend_scalar_global(
    u: ScalarField,
    manifold: PointedManifold,
    partition: PartitionOfUnity,
    coeffs: SeeleyCoefficients,
    cutoff: CutoffProfile | None = None,
    radius: float | None = None,
    *,
    depth: float | None = None,
) -> ExtendedScalarField:
    """
    E_M(u) on X_r: chart-wise extensions blended with the extended partition.
    Only charts meeting B(x⁰, radius) take part; `radius=None` keeps them all.
    """
    depth = manifold.constants.r2 if depth is None else depth
    atlas = extended_atlas(manifold, depth=depth, radius=radius)
    local = extend_chart_fields(atlas, u, coeffs, cutoff, what="scalar field")
    raw = extend_chart_fields(
        atlas, partition.weights, coeffs, cutoff, what="partition of unity"
    )
    values, least = blend_outer_collars(atlas, local, raw)
    for chart_id, samples in values.items():
        samples[atlas.inner_index(chart_id)] = u[chart_id]
    logger.debug(
        f"extended a scalar field over {len(values)} charts, least raw weight "
        f"sum {least:.3g}"
    )
    return ExtendedScalarField(
        atlas=atlas, values=values, least_weight_sum=least, bound=coeffs.bound
    )


def extend_positive(
    u: ScalarField,
    b: float,
    manifold: PointedManifold,
    partition: PartitionOfUnity,
    coeffs: SeeleyCoefficients,
    cutoff: CutoffProfile | None = None,
    radius: float | None = None,
    *,
    depth: float | None = None,
) -> tuple[ExtendedScalarField, float]:
    """
    F(u) = exp(E_M(ln u)) together with β = min(b, exp(-Σ|a_k| sup|ln u|)),
    a lower bound for F(u) on X_r.
    """
    if b <= 0:
        raise InputError(f"b must be > 0, got {b}")
    least = min(float(np.min(samples)) for samples in u.values())
    if least < b:
        raise PreconditionError(f"sample value {least:.6g} is below b = {b}")

    logs = {chart_id: np.log(samples) for chart_id, samples in u.items()}
    extended = extend_scalar_global(
        logs, manifold, partition, coeffs, cutoff, radius, depth=depth
    )
    values = {}
    for chart_id, samples in extended.values.items():
        positive = np.exp(samples)
        positive[extended.atlas.inner_index(chart_id)] = u[chart_id]
        values[chart_id] = positive

    sup = max(float(np.max(np.abs(logs[chart_id]))) for chart_id in values)
    beta = min(b, math.exp(-coeffs.bound * sup))
    logger.info(f"positive extension over {len(values)} charts, β = {beta:.6g}")
    field = ExtendedScalarField(
        atlas=extended.atlas,
        values=values,
        least_weight_sum=extended.least_weight_sum,
        bound=coeffs.bound,
    )
    return field, beta
