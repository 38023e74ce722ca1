"""
Bounded-geometry certificates and height-function validation.

Every check runs on a finite sample of grid nodes, so a passing certificate
means "passes at sample resolution". Conditions:

    i          the normal exponential map on ∂M × [0, 1/c] is injective with
               positive Jacobian on the sampled rays
    ii         inj_{∂g} >= 1/c on the boundary atlas
    iii        inj_g(x) >= min(d(x, ∂M), 1/c) at every sample
    iv         |∇^l Rm| <= c for l <= k
    v          |∇^l II| <= c for l <= k
    basepoint  d(x⁰, ∂M) >= 2/c
"""

import logging
import math
from collections.abc import Iterable, Mapping
from dataclasses import dataclass
from enum import StrEnum
from typing import Any

import numpy as np
import pandas as pd
from scipy.spatial import KDTree
from scipy.stats import norm, qmc

from collarforge.atlas_types import Chart, ChartPoint, ChartRole, PointedManifold
from collarforge.distance import (
    atlas_graph,
    boundary_distance,
    boundary_node_distances,
    distance_to_point,
    geodesic_distance,
    point_distances,
)
from collarforge.errors import EscapeError, InputError, RangeError, StencilError
from collarforge.geodesics import boundary_normal, trace_geodesic
from collarforge.manifold_atlas import boundary_atlas
from collarforge.tensor_calculus import (
    chart_geometry,
    covariant_derivative,
    curvature_report,
    grid_gradient,
    second_fundamental_form,
    tensor_norm,
)

logger = logging.getLogger(__name__)

REL_TOL = 1e-6
CURVATURE_HEADROOM = 0.05
DIRECTIONS_PER_DIMENSION = 16
CUT_SLACK_CELLS = 0.5
RAY_SAMPLES = 16
MAX_LEVELS = 64
RANGE_TOL = 1e-9
HEIGHT_BAND = 0.5
ZERO_CANDIDATES = 4


class Condition(StrEnum):
    NORMAL_EXPONENTIAL = "i"
    BOUNDARY_INJECTIVITY = "ii"
    INTERIOR_INJECTIVITY = "iii"
    CURVATURE = "iv"
    SECOND_FUNDAMENTAL_FORM = "v"
    BASEPOINT = "basepoint"


def _finite(value: float) -> float | None:
    return float(value) if math.isfinite(value) else None


@dataclass(frozen=True, kw_only=True)
class ConditionRecord:
    condition: Condition
    required: float
    measured: float
    passed: bool
    witness: ChartPoint | None = None
    samples: int = 0
    vacuous: bool = False
    detail: str = ""

    def __post_init__(self):
        if not self.passed and self.witness is None:
            raise InputError(f"failed condition ({self.condition}) needs a witness")

    def to_document(self) -> dict[str, Any]:
        return {
            "condition": str(self.condition),
            "required": _finite(self.required),
            "measured": _finite(self.measured),
            "passed": self.passed,
            "witness": None if self.witness is None else self.witness.to_document(),
            "samples": self.samples,
            "vacuous": self.vacuous,
            "detail": self.detail,
        }


@dataclass(frozen=True, kw_only=True, eq=False)
class BoundedGeometryCertificate:
    manifold: str
    c: float
    k: int
    records: tuple[ConditionRecord, ...]

    def __post_init__(self):
        found = sorted(str(r.condition) for r in self.records)
        if found != sorted(str(c) for c in Condition):
            raise InputError(f"certificate needs one record per condition, got {found}")

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.records)

    @property
    def failed(self) -> list[Condition]:
        return [r.condition for r in self.records if not r.passed]

    def record(self, condition: Condition | str) -> ConditionRecord:
        return next(r for r in self.records if r.condition == condition)

    def table(self) -> pd.DataFrame:
        return pd.DataFrame(
            [
                {
                    "condition": str(r.condition),
                    "required": r.required,
                    "measured": r.measured,
                    "passed": r.passed,
                    "vacuous": r.vacuous,
                    "samples": r.samples,
                    "witness": "" if r.witness is None else str(r.witness),
                }
                for r in self.records
            ]
        )

    def to_document(self) -> dict[str, Any]:
        return {
            "manifold": self.manifold,
            "c": self.c,
            "k": self.k,
            "passed": self.passed,
            "failed": [str(c) for c in self.failed],
            "records": [r.to_document() for r in self.records],
        }


## Sampling


def _axis_samples(count: int, periodic: bool, per_axis: int, margin: int) -> np.ndarray:
    if periodic:
        return np.arange(0, count, max(1, count // per_axis))
    lo, hi = margin, count - 1 - margin
    if hi < lo:
        return np.empty(0, dtype=int)
    return np.unique(np.linspace(lo, hi, per_axis).round().astype(int))


def sample_indices(
    chart: Chart, per_axis: int, margin: int = 0, *, face: bool = False
) -> list[np.ndarray]:
    """
    Strided node indices per axis, at least `margin` cells from every
    non-periodic face. With `face` set the last axis is pinned to t = 0.
    """
    picks = [
        _axis_samples(count, periodic, per_axis, margin)
        for count, periodic in zip(chart.resolution, chart.periodic, strict=True)
    ]
    if face:
        picks[-1] = np.array([0])
    return picks


def sample_points(
    chart: Chart, per_axis: int, margin: int = 0, *, face: bool = False
) -> np.ndarray:
    picks = sample_indices(chart, per_axis, margin, face=face)
    if any(len(p) == 0 for p in picks):
        return np.empty((0, chart.dimension))
    return chart.nodes[np.ix_(*picks)].reshape(-1, chart.dimension)


## Injectivity radius


def unit_directions(n: int) -> np.ndarray:
    """Euclidean unit vectors spread over the sphere, 16·(n-1) of them for n >= 2."""
    match n:
        case 1:
            return np.array([[1.0], [-1.0]])
        case 2:
            angles = 2.0 * np.pi * np.arange(DIRECTIONS_PER_DIMENSION)
            angles /= DIRECTIONS_PER_DIMENSION
            return np.stack([np.cos(angles), np.sin(angles)], axis=-1)
        case _:
            count = DIRECTIONS_PER_DIMENSION * (n - 1)
            # The first Halton point is the origin; it has no direction.
            uniform = qmc.Halton(d=n, scramble=False).random(count + 1)[1:]
            gauss = norm.ppf(uniform)
            return gauss / np.linalg.norm(gauss, axis=1, keepdims=True)


def sample_directions(g: np.ndarray, turn: np.ndarray | None = None) -> np.ndarray:
    """
    unit_directions, rotated by `turn` when given, carried into a
    g-orthonormal frame; one vector per row.
    """
    frame = np.linalg.inv(np.linalg.cholesky(g)).T
    unit = unit_directions(len(g))
    if turn is not None:
        unit = unit @ np.asarray(turn).T
    return unit @ frame.T


def injectivity_lower_bound(
    manifold: PointedManifold, point: ChartPoint, rmax: float
) -> float:
    """
    A lower bound for inj(point) at sample resolution, capped at rmax.

    Geodesics are shot in sampled directions. Each one stops at the first
    conjugate point found from its normal Jacobi fields, or as soon as the
    graph distance back to the start falls clearly below the arc length
    travelled, which means a shorter path (a loop or a cut) exists.
    Geodesics leaving the atlas carry no information and are skipped.
    """
    if not (rmax > 0 and math.isfinite(rmax)):
        raise InputError(f"rmax must be finite and > 0, got {rmax}")
    chart = manifold.chart(point.chart)
    x = chart.wrap(point.array)[0]
    start = ChartPoint.create(chart.id, x)
    g = chart.metric_at(x)[0]
    cells = np.asarray(chart.spacing) * np.sqrt(np.diag(g))
    slack = CUT_SLACK_CELLS * float(cells.min())
    from_start = point_distances(manifold, start)

    def shortcut(s: float, here: ChartPoint) -> bool:
        return s > slack and distance_to_point(manifold, from_start, here) < s - slack

    bound = rmax
    truncated = 0
    for direction in sample_directions(g):
        try:
            end = trace_geodesic(
                manifold, start, direction, bound + slack, jacobi=True, observe=shortcut
            )
        except EscapeError as e:
            short = e.arc_length is not None and e.arc_length < bound - slack
            if e.through_boundary and short:
                truncated += 1
            logger.debug(f"injectivity scan at {start}: {e}")
            continue
        if end.conjugate_at is not None:
            bound = min(bound, end.conjugate_at)
        if end.stopped:
            bound = min(bound, end.length - slack)
    if truncated:
        logger.warning(
            f"{truncated} geodesics from {start} left through the boundary before "
            f"arc length {bound:.4g}"
        )
    return max(0.0, bound)


## Conditions


def _vacuous(condition: Condition, required: float) -> ConditionRecord:
    return ConditionRecord(
        condition=condition,
        required=required,
        measured=math.nan,
        passed=True,
        vacuous=True,
        detail="no boundary",
    )


@dataclass(frozen=True, kw_only=True)
class _RaySample:
    foot: ChartPoint
    half_step: np.ndarray
    level: int
    image: ChartPoint


type Violation = tuple[int, ChartPoint, str]


def _forward(values: np.ndarray, axis: int, steps: np.ndarray, chart: Chart):
    size = values.shape[axis]
    lo = np.take(values, np.arange(size - 1), axis=axis)
    hi = np.take(values, np.arange(1, size), axis=axis)
    shape = [1] * values.ndim
    shape[axis] = size - 1
    return chart.displacement(lo, hi) / steps.reshape(shape)


def _jacobian_violations(
    chart: Chart, images: np.ndarray, picks: list[np.ndarray], dr: float
) -> list[Violation]:
    """Forward-difference Jacobians of (y, r) -> image on the ray lattice."""
    m = chart.dimension - 1
    if any(len(p) < 2 for p in picks[:m]) or images.shape[m] < 2:
        logger.debug(f"{chart.id}: ray lattice too small for a Jacobian check")
        return []
    columns = []
    for axis in range(m + 1):
        if axis < m:
            steps = np.diff(chart.axes[axis][picks[axis]])
        else:
            steps = np.full(images.shape[m] - 1, dr)
        column = _forward(images, axis, steps, chart)
        trim = tuple(
            slice(None) if b == axis else slice(0, -1) for b in range(m + 1)
        )
        columns.append(column[trim])
    jac = np.stack(columns, axis=-1)
    det = np.linalg.det(np.nan_to_num(jac))
    finite = np.all(np.isfinite(jac), axis=(-2, -1))
    found = []
    for index in np.argwhere(finite & (det <= 0.0)):
        level = int(index[-1])
        where = ChartPoint.create(chart.id, images[tuple(index)])
        found.append((level, where, "normal exponential map folds"))
    return found


def _near(manifold: PointedManifold, a: _RaySample, b: _RaySample) -> bool:
    if a.level != b.level:
        return False
    other = manifold.to_chart(b.foot, a.foot.chart)
    if other is None:
        return False
    chart = manifold.chart(a.foot.chart)
    gap = np.abs(chart.displacement(a.foot.array, other))[:-1]
    return bool(np.all(gap < a.half_step))


def _close_pairs(chart: Chart, coords: np.ndarray, radius: float) -> np.ndarray:
    """Index pairs of points closer than `radius`, periodic axes wrapped."""
    shifted = np.empty_like(coords)
    box = np.empty(chart.dimension)
    for a, periodic in enumerate(chart.periodic):
        span = chart.hi[a] - chart.lo[a]
        if periodic:
            column = np.mod(coords[:, a] - chart.lo[a], span)
            shifted[:, a] = np.where(column >= span, 0.0, column)
            box[a] = span
        else:
            shifted[:, a] = np.clip(coords[:, a] - chart.lo[a] + span, 0.0, 3 * span)
            box[a] = 3 * span + 1e-9
    return KDTree(shifted, boxsize=box).query_pairs(radius, output_type="ndarray")


def _collisions(
    manifold: PointedManifold, samples: list[_RaySample], spacing: float
) -> list[Violation]:
    """Distinct ray samples whose images come closer than a quarter spacing."""
    by_chart: dict[str, list[tuple[np.ndarray, int]]] = {}
    for i, sample in enumerate(samples):
        for rep in manifold.representations(sample.image):
            by_chart.setdefault(rep.chart, []).append((rep.array, i))
    found = []
    for chart_id, entries in by_chart.items():
        chart = manifold.chart(chart_id)
        coords = np.array([e[0] for e in entries])
        owners = np.array([e[1] for e in entries])
        # Euclidean coordinate radius holding every pair within metric reach.
        radius = 0.25 * spacing / math.sqrt(chart.min_eigenvalue)
        for a, b in _close_pairs(chart, coords, radius):
            i, j = int(owners[a]), int(owners[b])
            if i == j or _near(manifold, samples[i], samples[j]):
                continue
            delta = chart.displacement(coords[a], coords[b])
            g = chart.metric_at(coords[a] + 0.5 * delta)[0]
            if math.sqrt(max(float(delta @ g @ delta), 0.0)) >= 0.25 * spacing:
                continue
            level = max(samples[i].level, samples[j].level)
            where = ChartPoint.create(chart_id, coords[a])
            found.append((level, where, "normal exponential map is not injective"))
    return found


def _normal_exponential(manifold: PointedManifold, c: float) -> ConditionRecord:
    reach = 1.0 / c
    if not manifold.has_boundary:
        return _vacuous(Condition.NORMAL_EXPONENTIAL, reach)
    collars = manifold.charts_with_role(ChartRole.BOUNDARY_COLLAR)
    t_cell = min(
        chart.spacing[-1] * math.sqrt(float(chart.metric[..., -1, -1].min()))
        for chart in collars
    )
    levels = min(MAX_LEVELS, max(4, math.ceil(reach / t_cell)))
    dr = reach / levels
    n = manifold.dimension

    samples: list[_RaySample] = []
    violations: list[Violation] = []
    spacing = dr
    for chart in collars:
        picks = sample_indices(chart, RAY_SAMPLES, face=True)[: n - 1]
        lattice = tuple(len(p) for p in picks)
        steps = [
            float(np.diff(chart.axes[a][picks[a]]).min())
            if len(picks[a]) > 1
            else chart.hi[a] - chart.lo[a]
            for a in range(n - 1)
        ]
        half_step = 0.5 * np.asarray(steps)
        face = chart.metric[..., 0, :, :]
        for a in range(n - 1):
            metric_step = steps[a] * math.sqrt(float(face[..., a, a].min()))
            spacing = min(spacing, metric_step)
        images = np.full(lattice + (levels + 1, n), np.nan)
        for index in np.ndindex(lattice):
            y = [chart.axes[a][picks[a][i]] for a, i in enumerate(index)]
            foot = ChartPoint.create(chart.id, [*y, 0.0])
            point, velocity = foot, boundary_normal(manifold, foot)
            for level in range(levels + 1):
                if level:
                    try:
                        end = trace_geodesic(manifold, point, velocity, dr)
                    except EscapeError as e:
                        if e.through_boundary:
                            violations.append(
                                (level, e.exit_point, "normal ray left through ∂M")
                            )
                        break
                    point, velocity = end.point, end.velocity
                samples.append(
                    _RaySample(foot=foot, half_step=half_step, level=level, image=point)
                )
                coords = manifold.to_chart(point, chart.id)
                if coords is not None:
                    images[index + (level,)] = coords
        violations += _jacobian_violations(chart, images, picks, dr)
    violations += _collisions(manifold, samples, spacing)

    detail = f"{len(samples)} samples, radial step {dr:.4g}"
    if not violations:
        return ConditionRecord(
            condition=Condition.NORMAL_EXPONENTIAL,
            required=reach,
            measured=reach,
            passed=True,
            samples=len(samples),
            detail=detail,
        )
    level, witness, reason = min(violations, key=lambda v: v[0])
    logger.debug(f"condition (i) on {manifold.name!r}: {reason} at {witness}")
    return ConditionRecord(
        condition=Condition.NORMAL_EXPONENTIAL,
        required=reach,
        measured=max(0, level - 1) * dr,
        passed=False,
        witness=witness,
        samples=len(samples),
        detail=f"{reason}; {detail}",
    )


def _boundary_injectivity(
    manifold: PointedManifold, c: float, per_axis: int
) -> ConditionRecord:
    reach = 1.0 / c
    if not manifold.has_boundary:
        return _vacuous(Condition.BOUNDARY_INJECTIVITY, reach)
    boundary = boundary_atlas(manifold)
    worst, witness, count = math.inf, None, 0
    for chart in boundary.charts.values():
        for y in sample_points(chart, per_axis):
            value = injectivity_lower_bound(
                boundary, ChartPoint.create(chart.id, y), reach
            )
            count += 1
            if value < worst:
                worst, witness = value, ChartPoint.create(chart.id, np.append(y, 0.0))
    return ConditionRecord(
        condition=Condition.BOUNDARY_INJECTIVITY,
        required=reach,
        measured=worst,
        passed=worst >= reach * (1.0 - REL_TOL),
        witness=witness,
        samples=count,
    )


def _interior_injectivity(
    manifold: PointedManifold, c: float, per_axis: int
) -> ConditionRecord:
    """Measured as the least inj(x) / min(d(x, ∂M), 1/c); it must reach 1."""
    reach = 1.0 / c
    to_boundary = boundary_node_distances(manifold)
    worst, witness, count = math.inf, None, 0
    for chart in manifold.charts.values():
        for x in sample_points(chart, per_axis):
            point = ChartPoint.create(chart.id, x)
            radius = min(reach, distance_to_point(manifold, to_boundary, point))
            if radius <= 1e-12:
                continue
            ratio = injectivity_lower_bound(manifold, point, radius) / radius
            count += 1
            if ratio < worst:
                worst, witness = ratio, point
    return ConditionRecord(
        condition=Condition.INTERIOR_INJECTIVITY,
        required=1.0,
        measured=worst,
        passed=worst >= 1.0 - REL_TOL,
        witness=witness,
        samples=count,
        detail="least inj(x) / min(d(x, ∂M), 1/c)",
    )


def _curvature(
    manifold: PointedManifold, c: float, k: int, per_axis: int
) -> ConditionRecord:
    worst, witness, count = -math.inf, None, 0
    for chart in manifold.charts.values():
        for x in sample_points(chart, per_axis, margin=k + 3):
            report = curvature_report(manifold, chart.id, x, k)
            count += 1
            if (value := max(report.nabla_rm_norms)) > worst:
                worst, witness = value, report.point
    if not count:
        raise StencilError(
            f"no chart of {manifold.name!r} fits a curvature stencil for k = {k}"
        )
    return ConditionRecord(
        condition=Condition.CURVATURE,
        required=c,
        measured=worst,
        passed=worst <= c * (1.0 + CURVATURE_HEADROOM),
        witness=witness,
        samples=count,
    )


def _second_fundamental_form(
    manifold: PointedManifold, c: float, k: int, per_axis: int
) -> ConditionRecord:
    if not manifold.has_boundary:
        return _vacuous(Condition.SECOND_FUNDAMENTAL_FORM, c)
    worst, witness, count = -math.inf, None, 0
    for chart in manifold.charts_with_role(ChartRole.BOUNDARY_COLLAR):
        for x in sample_points(chart, per_axis, margin=k + 3, face=True):
            form = second_fundamental_form(manifold, ChartPoint.create(chart.id, x), k)
            count += 1
            if (value := max(form.nabla_ii_norms)) > worst:
                worst, witness = value, form.point
    if not count:
        raise StencilError(
            f"no collar of {manifold.name!r} fits a boundary stencil for k = {k}"
        )
    return ConditionRecord(
        condition=Condition.SECOND_FUNDAMENTAL_FORM,
        required=c,
        measured=worst,
        passed=worst <= c * (1.0 + CURVATURE_HEADROOM),
        witness=witness,
        samples=count,
    )


def _basepoint(manifold: PointedManifold, c: float) -> ConditionRecord:
    required = 2.0 / c
    distance, nearest = boundary_distance(manifold)
    return ConditionRecord(
        condition=Condition.BASEPOINT,
        required=required,
        measured=distance,
        passed=distance >= required * (1.0 - REL_TOL),
        witness=nearest,
        samples=1,
        vacuous=nearest is None,
    )


def certify(
    manifold: PointedManifold, c: float, k: int, *, samples_per_axis: int = 4
) -> BoundedGeometryCertificate:
    """Check conditions (i)-(v) and the basepoint clause for the constants (c, k)."""
    if not (c > 0 and math.isfinite(c)):
        raise InputError(f"c must be finite and > 0, got {c}")
    if k < 0:
        raise InputError(f"k must be >= 0, got {k}")
    if samples_per_axis < 1:
        raise InputError(f"samples_per_axis must be >= 1, got {samples_per_axis}")
    logger.info(f"certifying {manifold.name!r} for c = {c:g}, k = {k}")
    records = (
        _normal_exponential(manifold, c),
        _boundary_injectivity(manifold, c, samples_per_axis),
        _interior_injectivity(manifold, c, samples_per_axis),
        _curvature(manifold, c, k, samples_per_axis),
        _second_fundamental_form(manifold, c, k, samples_per_axis),
        _basepoint(manifold, c),
    )
    certificate = BoundedGeometryCertificate(
        manifold=manifold.name, c=c, k=k, records=records
    )
    verdict = "passed" if certificate.passed else f"failed {certificate.failed}"
    logger.info(f"certificate for {manifold.name!r} at c = {c:g}: {verdict}")
    return certificate


def certify_grid(
    manifold: PointedManifold,
    cs: Iterable[float],
    k: int,
    *,
    samples_per_axis: int = 4,
) -> pd.DataFrame:
    """One row per c (ascending): c, passed, failed conditions."""
    rows = []
    for c in sorted(set(cs)):
        certificate = certify(manifold, c, k, samples_per_axis=samples_per_axis)
        rows.append(
            {
                "c": c,
                "passed": certificate.passed,
                "failed": ",".join(str(f) for f in certificate.failed),
            }
        )
    return pd.DataFrame(rows, columns=["c", "passed", "failed"])


def smallest_passing(grid: pd.DataFrame) -> float | None:
    passing = grid.loc[grid["passed"], "c"]
    return float(passing.min()) if len(passing) else None


## Height functions


@dataclass(frozen=True, kw_only=True)
class HeightCertificate:
    """
    Measured data of a candidate height function f on a manifold without
    boundary, compared against the constant c.
    """

    c: float
    k: int
    delta: float
    sup_norms: tuple[float, ...]
    zero_distance: float
    base_value: float
    zero_locus_found: bool
    crossings: int = 0
    nearest_zero: ChartPoint | None = None

    @property
    def clauses(self) -> dict[str, bool]:
        c = self.c
        return {
            "i": self.zero_locus_found and self.delta >= (1.0 - REL_TOL) / c,
            "ii": self.base_value > 0 and 1.0 / c < self.zero_distance < c,
            "iii": all(v <= c * (1.0 + REL_TOL) for v in self.sup_norms),
        }

    @property
    def passed(self) -> bool:
        return all(self.clauses.values())

    def minimal_constant(self) -> float:
        """The least c this f passes with, or inf when no c works."""
        d = self.zero_distance
        if not (self.zero_locus_found and self.base_value > 0 and 0 < d < math.inf):
            return math.inf
        if not self.delta > 0:
            return math.inf
        # d must sit strictly inside (1/c, c).
        margin = 1.0 + 1e-3
        return max(1.0 / self.delta, *self.sup_norms, d * margin, margin / d)

    def to_document(self) -> dict[str, Any]:
        return {
            "c": self.c,
            "k": self.k,
            "passed": self.passed,
            "clauses": self.clauses,
            "delta": _finite(self.delta),
            "sup_norms": [_finite(v) for v in self.sup_norms],
            "zero_distance": _finite(self.zero_distance),
            "base_value": self.base_value,
            "zero_locus_found": self.zero_locus_found,
            "crossings": self.crossings,
            "nearest_zero": (
                None if self.nearest_zero is None else self.nearest_zero.to_document()
            ),
        }


def zero_crossings(chart: Chart, values: np.ndarray) -> np.ndarray:
    """
    Points where a node field changes sign along a grid edge, by linear
    interpolation, plus the nodes where it vanishes. Shape (M, n).
    """
    n = chart.dimension
    found = [chart.nodes[values == 0.0]]
    for a in range(n):
        if chart.periodic[a]:
            ahead = np.roll(values, -1, axis=a)
            valid = np.ones(values.shape, dtype=bool)
        else:
            ahead = np.take(values, np.arange(1, values.shape[a]), axis=a)
            pad = [(0, 0)] * values.ndim
            pad[a] = (0, 1)
            ahead = np.pad(ahead, pad, constant_values=np.nan)
            valid = np.isfinite(ahead)
        crossing = valid & (values * np.nan_to_num(ahead) < 0.0)
        if not np.any(crossing):
            continue
        here = values[crossing]
        fraction = here / (here - ahead[crossing])
        points = chart.nodes[crossing].copy()
        points[:, a] += fraction * chart.spacing[a]
        found.append(chart.wrap(points))
    return np.concatenate(found)


def _zero_candidates(
    manifold: PointedManifold, chart: Chart, points: np.ndarray, row: np.ndarray
) -> np.ndarray:
    """Cheap graph estimates of the distance from the base to each point."""
    graph = atlas_graph(manifold)
    ids, corners = chart.cell_corners(points)
    g = chart.metric.reshape(-1, chart.dimension, chart.dimension)[ids]
    delta = chart.wrap(points)[:, None, :] - corners
    lengths = np.sqrt(np.maximum(np.einsum("...i,...ij,...j->...", delta, g, delta), 0))
    return np.min(row[graph.node_ids(chart.id, ids)] + lengths, axis=1)


def validate_height_function(
    manifold: PointedManifold,
    f: Mapping[str, np.ndarray],
    c: float,
    k: int,
    base: ChartPoint | None = None,
) -> HeightCertificate:
    """
    Measure δ^∂(f) = min |∇f| over f⁻¹([-1/2, 1/2]), sup |∇^l f| for l <= k,
    f(x⁰) and d(x⁰, f⁻¹(0)) for a node field f on every chart.
    """
    if manifold.has_boundary:
        raise InputError("height functions are validated on manifolds without boundary")
    if not (c > 0 and math.isfinite(c)):
        raise InputError(f"c must be finite and > 0, got {c}")
    if k < 0:
        raise InputError(f"k must be >= 0, got {k}")
    base = base or manifold.base_point

    fields = {}
    for chart_id, chart in manifold.charts.items():
        values = f.get(chart_id)
        if values is None or np.shape(values) != chart.resolution:
            raise InputError(f"height field missing or misshapen on chart {chart_id!r}")
        values = np.asarray(values, dtype=float)
        if np.any(values > 1.0 + RANGE_TOL):
            index = np.unravel_index(np.argmax(values), values.shape)
            where = ChartPoint.create(chart_id, chart.nodes[index])
            peak = values.max()
            raise RangeError(f"height function reaches {peak:.6g} > 1 at {where}")
        fields[chart_id] = values

    delta = math.inf
    sups = [0.0] * (k + 1)
    from_base = point_distances(manifold, base)
    candidates: list[tuple[float, ChartPoint]] = []
    crossings = 0
    for chart_id, values in fields.items():
        chart = manifold.chart(chart_id)
        g_inv = np.linalg.inv(chart.metric)
        sups[0] = max(sups[0], float(np.abs(values).max()))
        tensor = grid_gradient(values, chart.spacing, chart.periodic)
        band = np.abs(values) <= HEIGHT_BAND
        if np.any(band):
            delta = min(delta, float(tensor_norm(tensor, g_inv)[band].min()))
        for order in range(1, k + 1):
            if order > 1:
                gamma = chart_geometry(chart).christoffel
                tensor = covariant_derivative(
                    tensor, gamma, chart.spacing, chart.periodic
                )
            sups[order] = max(sups[order], float(tensor_norm(tensor, g_inv).max()))

        points = zero_crossings(chart, values)
        crossings += len(points)
        if len(points):
            estimates = _zero_candidates(manifold, chart, points, from_base)
            for i in np.argsort(estimates)[:ZERO_CANDIDATES]:
                point = ChartPoint.create(chart_id, points[i])
                candidates.append((float(estimates[i]), point))

    base_chart = manifold.chart(base.chart)
    base_value = float(base_chart.interpolator(fields[base.chart])(base.array)[0])
    zero_distance, nearest = math.inf, None
    for _, point in sorted(candidates, key=lambda pair: pair[0])[:ZERO_CANDIDATES]:
        d = geodesic_distance(manifold, base, point, shoot=False)
        if d < zero_distance:
            zero_distance, nearest = d, point

    certificate = HeightCertificate(
        c=c,
        k=k,
        delta=delta,
        sup_norms=tuple(sups),
        zero_distance=zero_distance,
        base_value=base_value,
        zero_locus_found=crossings > 0,
        crossings=crossings,
        nearest_zero=nearest,
    )
    logger.info(
        f"height function on {manifold.name!r}: δ = {delta:.4g}, "
        f"d(x⁰, f⁻¹(0)) = {zero_distance:.4g}, passed = {certificate.passed}"
    )
    return certificate
