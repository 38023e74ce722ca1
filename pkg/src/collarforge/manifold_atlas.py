"""
Atlas-level operations on pointed manifolds: document I/O, builtin families,
the partition of unity, transition consistency checks, and the derived
boundary and extended atlases.
"""

import json
import logging
import math
from collections.abc import Mapping
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
from cachetools import LRUCache, cached
from cachetools.keys import hashkey

from collarforge.atlas_types import (
    CONTAINS_TOL,
    AtlasConstants,
    Chart,
    ChartPoint,
    ChartRole,
    PartitionOfUnity,
    PointedManifold,
    Transition,
    collar_nodes,
)
from collarforge.chart_maps import BoundarySliceMap, CollarProductMap, SampledMap
from collarforge.closed_forms import MapForm, MetricForm
from collarforge.distance import charts_meeting_ball
from collarforge.errors import CoverageError, InputError
from collarforge.family_loader import ensure_families, get_family
from collarforge.profiles import CutoffProfile
from collarforge.tensor_calculus import ck_norm

logger = logging.getLogger(__name__)

DEFAULT_BUMP = CutoffProfile(s0=0.1, s1=1.0)
PARTITION_TOL = 1e-9
RAW_SUM_FLOOR = 1e-12
JACOBIAN_STEP = 1e-6

_partition_cache: LRUCache = LRUCache(maxsize=32)
_boundary_cache: LRUCache = LRUCache(maxsize=16)
_extension_cache: LRUCache = LRUCache(maxsize=16)


## Documents


def _require(doc: Any, key: str, where: str) -> Any:
    try:
        return doc[key]
    except (KeyError, TypeError, IndexError):
        raise InputError(f"{where}: missing field {key!r}") from None


def _floats(values: Any, where: str) -> list[float]:
    try:
        return [float(v) for v in values]
    except (TypeError, ValueError):
        raise InputError(f"{where}: expected a list of numbers") from None


def _chart_from_document(doc: Mapping[str, Any], dimension: int) -> Chart:
    chart_id = str(_require(doc, "id", "chart"))
    where = f"chart {chart_id!r}"
    try:
        role = ChartRole(_require(doc, "role", where))
    except ValueError:
        raise InputError(f"{where}: unknown role {doc['role']!r}") from None
    box = _require(doc, "box", where)
    lo = _floats(_require(box, "lo", where), where)
    hi = _floats(_require(box, "hi", where), where)
    if (collar := doc.get("collar")) is not None:
        lo.append(float(_require(collar, "lo", where)))
        hi.append(float(_require(collar, "hi", where)))
    if len(lo) != dimension:
        raise InputError(f"{where}: {len(lo)} axes given, {dimension} needed")
    resolution = tuple(int(c) for c in _require(doc, "resolution", where))
    periodic = tuple(bool(p) for p in doc.get("periodic", ()))
    taper = tuple((float(a), float(b)) for a, b in doc.get("taper", ()))

    metric = _require(doc, "metric", where)
    match _require(metric, "kind", where):
        case "samples":
            data = np.asarray(_require(metric, "data", where), dtype=float)
            return Chart(
                id=chart_id,
                role=role,
                lo=tuple(lo),
                hi=tuple(hi),
                resolution=resolution,
                metric=data,
                periodic=periodic,
                taper=taper,
            )
        case "builtin":
            form = MetricForm(
                name=_require(metric, "family", where),
                params=dict(metric.get("params", {})),
                scale=float(metric.get("scale", 1.0)),
            )
            return Chart.from_form(
                id=chart_id,
                role=role,
                lo=tuple(lo),
                hi=tuple(hi),
                resolution=resolution,
                form=form,
                periodic=periodic,
                taper=taper,
            )
        case other:
            raise InputError(f"{where}: unknown metric kind {other!r}")


def _transition_from_document(doc: Mapping[str, Any]) -> Transition:
    source = str(_require(doc, "source", "transition"))
    target = str(_require(doc, "target", "transition"))
    where = f"transition {source}->{target}"
    overlap = _require(doc, "overlap", where)
    lo = tuple(_floats(_require(overlap, "lo", where), where))
    hi = tuple(_floats(_require(overlap, "hi", where), where))
    resolution = tuple(int(c) for c in _require(overlap, "resolution", where))
    map_doc = _require(doc, "map", where)
    match _require(map_doc, "kind", where):
        case "builtin":
            chart_map: Any = MapForm(
                name=_require(map_doc, "name", where),
                params={
                    k: tuple(v) if isinstance(v, list) else v
                    for k, v in map_doc.get("params", {}).items()
                },
            )
        case "samples":
            chart_map = SampledMap(
                lo=lo,
                hi=hi,
                values=np.asarray(_require(map_doc, "values", where), dtype=float),
                jacobians=np.asarray(
                    _require(map_doc, "jacobians", where), dtype=float
                ),
            )
        case other:
            raise InputError(f"{where}: unknown map kind {other!r}")
    return Transition(
        source=source,
        target=target,
        lo=lo,
        hi=hi,
        resolution=resolution,
        chart_map=chart_map,
    )


def load_manifold(document: Mapping[str, Any]) -> PointedManifold:
    """Build and validate a manifold from a parsed manifold document."""
    if not isinstance(document, Mapping):
        raise InputError("manifold document must be an object")
    dimension = int(_require(document, "dimension", "manifold"))
    constants = _require(document, "constants", "manifold")
    base = _require(document, "base_point", "manifold")
    charts = [
        _chart_from_document(doc, dimension)
        for doc in _require(document, "charts", "manifold")
    ]
    chart_map = {chart.id: chart for chart in charts}
    if len(chart_map) != len(charts):
        raise InputError("manifold: chart ids must be unique")
    manifold = PointedManifold(
        name=str(document.get("name", "manifold")),
        dimension=dimension,
        charts=chart_map,
        transitions=tuple(
            _transition_from_document(doc) for doc in document.get("transitions", [])
        ),
        base_point=ChartPoint.create(
            str(_require(base, "chart", "base_point")),
            _floats(_require(base, "coords", "base_point"), "base_point"),
        ),
        has_boundary=any(c.role == ChartRole.BOUNDARY_COLLAR for c in charts),
        constants=AtlasConstants(
            r1=float(_require(constants, "r1", "constants")),
            r2=float(_require(constants, "r2", "constants")),
            m0=int(_require(constants, "m0", "constants")),
            c0=float(_require(constants, "c0", "constants")),
        ),
    )
    if "has_boundary" in document and bool(document["has_boundary"]) != (
        manifold.has_boundary
    ):
        raise InputError("manifold: has_boundary disagrees with the chart roles")
    logger.info(
        f"loaded manifold {manifold.name!r}: {len(chart_map)} charts, "
        f"{len(manifold.transitions)} transitions"
    )
    return manifold


def _chart_document(chart: Chart) -> dict[str, Any]:
    base = slice(None, -1) if chart.is_collar else slice(None)
    doc: dict[str, Any] = {
        "id": chart.id,
        "role": str(chart.role),
        "box": {"lo": list(chart.lo[base]), "hi": list(chart.hi[base])},
        "resolution": list(chart.resolution),
        "periodic": list(chart.periodic),
        "taper": [list(pair) for pair in chart.taper],
    }
    if chart.is_collar:
        doc["collar"] = {"lo": chart.lo[-1], "hi": chart.hi[-1]}
    if chart.metric_form is not None:
        doc["metric"] = chart.metric_form.to_document()
    else:
        doc["metric"] = {"kind": "samples", "data": chart.metric.tolist()}
    return doc


def _transition_document(transition: Transition) -> dict[str, Any]:
    map_doc = transition.chart_map.to_document()
    if map_doc is None:
        map_doc = {
            "kind": "samples",
            "resolution": list(transition.resolution),
            "values": transition.map_samples.tolist(),
            "jacobians": transition.jacobian_samples.tolist(),
        }
    return {
        "source": transition.source,
        "target": transition.target,
        "overlap": {
            "lo": list(transition.lo),
            "hi": list(transition.hi),
            "resolution": list(transition.resolution),
        },
        "map": map_doc,
    }


def manifold_to_document(manifold: PointedManifold) -> dict[str, Any]:
    return {
        "name": manifold.name,
        "dimension": manifold.dimension,
        "has_boundary": manifold.has_boundary,
        "constants": manifold.constants.to_document(),
        "base_point": manifold.base_point.to_document(),
        "charts": [_chart_document(chart) for chart in manifold.charts.values()],
        "transitions": [_transition_document(t) for t in manifold.transitions],
    }


def read_document(path: Path) -> dict[str, Any]:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise InputError(f"{path}: malformed JSON ({e})") from e
    except OSError as e:
        raise InputError(f"{path}: cannot read ({e.strerror})") from e


def write_document(document: Mapping[str, Any], path: Path) -> None:
    Path(path).write_text(json.dumps(document, sort_keys=True, indent=2) + "\n")


def read_manifold(path: Path) -> PointedManifold:
    return load_manifold(read_document(path))


def save_manifold(manifold: PointedManifold, path: Path) -> None:
    write_document(manifold_to_document(manifold), path)


## Builtin families


def builtin_manifold(family: str, params: Mapping[str, Any]) -> PointedManifold:
    """A manifold from one of the registered family plugins."""
    ensure_families()
    plugin = get_family(family)
    if plugin is None:
        raise InputError(f"unknown family {family!r}")
    manifold = plugin.build(params)
    logger.info(f"built {family} manifold {manifold.name!r}")
    return manifold


def replace_charts(
    manifold: PointedManifold, charts: Mapping[str, Chart], *, name: str
) -> PointedManifold:
    return replace(manifold, name=name, charts=dict(charts))


def scale_metric(manifold: PointedManifold, factor: float) -> PointedManifold:
    """The same atlas with every metric sample multiplied by `factor`."""
    if not factor > 0:
        raise InputError(f"metric scale factor must be > 0, got {factor}")
    charts = {
        chart_id: replace(
            chart,
            metric=chart.metric * factor,
            metric_form=(
                None if chart.metric_form is None else chart.metric_form.scaled(factor)
            ),
        )
        for chart_id, chart in manifold.charts.items()
    }
    return replace_charts(manifold, charts, name=f"{manifold.name}*{factor:g}")


## Partition of unity


def _ramp(distance: np.ndarray, margin: float, profile: CutoffProfile) -> np.ndarray:
    return profile((margin - distance) * profile.s1 / margin)


def chart_bump(chart: Chart, points: np.ndarray, profile: CutoffProfile) -> np.ndarray:
    """Tensor-product bump of a chart, 1 inside its tapers and 0 outside it."""
    pts = chart.wrap(points)
    value = np.ones(pts.shape[:-1])
    for a, (low, high) in enumerate(chart.taper):
        if low > 0:
            value *= _ramp(pts[..., a] - chart.lo[a], low, profile)
        if high > 0:
            value *= _ramp(chart.hi[a] - pts[..., a], high, profile)
    return np.where(chart.contains(pts), value, 0.0)


def _raw_sum(
    manifold: PointedManifold, chart: Chart, points: np.ndarray, profile: CutoffProfile
) -> np.ndarray:
    total = chart_bump(chart, points, profile)
    for transition in manifold.transitions_from(chart.id):
        inside = manifold.overlap_mask(transition, points)
        if np.any(inside):
            target = manifold.chart(transition.target)
            total[inside] += chart_bump(target, transition(points[inside]), profile)
    return total


def partition_weight_at(
    manifold: PointedManifold,
    profile: CutoffProfile,
    chart_id: str,
    points: np.ndarray,
) -> np.ndarray:
    """ψ_ℓ at arbitrary points of chart ℓ, evaluated from the bumps directly."""
    chart = manifold.chart(chart_id)
    pts = chart.wrap(points)
    total = _raw_sum(manifold, chart, pts, profile)
    bump = chart_bump(chart, pts, profile)
    return np.divide(bump, total, out=np.zeros_like(bump), where=total > 0)


def _partition_key(manifold, profile=None, *, k=2):
    return hashkey(manifold, profile, k)


@cached(cache=_partition_cache, key=_partition_key)
def build_partition_of_unity(
    manifold: PointedManifold, profile: CutoffProfile | None = None, *, k: int = 2
) -> PartitionOfUnity:
    """
    ψ_ℓ = b_ℓ / Σ_ℓ' b_ℓ' for the tensor-product bumps b_ℓ of the charts,
    sampled on each chart grid. The sum is checked at every node and the
    largest finite-difference C^k norm of the weights is recorded.
    """
    profile = profile or DEFAULT_BUMP
    weights = {}
    for chart in manifold.charts.values():
        flat = chart.nodes.reshape(-1, chart.dimension)
        total = _raw_sum(manifold, chart, flat, profile)
        if np.any(bad := total < RAW_SUM_FLOOR):
            where = ChartPoint.create(chart.id, flat[np.argmax(bad)])
            raise CoverageError(f"no chart bump covers {where}")
        bump = chart_bump(chart, flat, profile)
        weights[chart.id] = (bump / total).reshape(chart.resolution)

    worst = 0.0
    for chart in manifold.charts.values():
        flat = chart.nodes.reshape(-1, chart.dimension)
        total = weights[chart.id].reshape(-1).copy()
        for transition in manifold.transitions_from(chart.id):
            inside = manifold.overlap_mask(transition, flat)
            if np.any(inside):
                images = transition(flat[inside])
                total[inside] += partition_weight_at(
                    manifold, profile, transition.target, images
                )
        worst = max(worst, float(np.abs(total - 1.0).max()))
    if worst > PARTITION_TOL:
        raise CoverageError(f"partition of unity misses 1 by {worst:.3g}")

    bound = max(
        ck_norm(weights[chart.id], chart.spacing, chart.periodic, k)
        for chart in manifold.charts.values()
    )
    logger.info(
        f"partition of unity on {manifold.name!r}: sum defect {worst:.2g}, "
        f"C^{k} bound {bound:.4g}"
    )
    return PartitionOfUnity(
        weights=weights,
        measured_ck_bound=bound,
        k=k,
        multiplicity=manifold.measured_multiplicity,
        profile=profile,
    )


## Transition consistency


@dataclass(frozen=True, kw_only=True, eq=False)
class ConsistencyReport:
    """One row per check: check, overlap, samples, defect, passed."""

    table: pd.DataFrame
    tol: float

    @property
    def passed(self) -> bool:
        return bool(self.table["passed"].all())

    @property
    def failures(self) -> list[str]:
        return self.table.loc[~self.table["passed"], "overlap"].tolist()

    def _max(self, check: str) -> float:
        defects = self.table.loc[self.table["check"] == check, "defect"]
        return float(defects.max()) if len(defects) else 0.0

    @property
    def max_cocycle_defect(self) -> float:
        return self._max("cocycle")

    @property
    def max_metric_mismatch(self) -> float:
        return self._max("metric_pullback")

    def to_document(self) -> dict[str, Any]:
        return {
            "passed": self.passed,
            "tol": self.tol,
            "max_cocycle_defect": self.max_cocycle_defect,
            "max_metric_mismatch": self.max_metric_mismatch,
            "checks": self.table.to_dict(orient="records"),
        }


def pull_back(jacobian: np.ndarray, metric: np.ndarray) -> np.ndarray:
    """Jᵀ g J, the metric g of the target chart in source coordinates."""
    return np.einsum("...ki,...kl,...lj->...ij", jacobian, metric, jacobian)


def _relative(defect: np.ndarray, reference: np.ndarray) -> float:
    scale = np.maximum(1.0, np.abs(reference).max(axis=(-2, -1)))
    return float((np.abs(defect).max(axis=(-2, -1)) / scale).max())


def check_transitions(
    manifold: PointedManifold, tol: float = 1e-6
) -> ConsistencyReport:
    """
    Compare every transition against the metric fields and its own map:
    pulled-back target metric against the source metric, recorded Jacobian
    against finite differences of the map, and compositions through a second
    transition against the direct transition (or the identity when the
    second one leads back).
    """
    rows = []
    for transition in manifold.transitions:
        source = manifold.chart(transition.source)
        target = manifold.chart(transition.target)
        nodes = transition.overlap_nodes.reshape(-1, manifold.dimension)
        mask = manifold.overlap_mask(transition, nodes) & source.contains(nodes)
        points = nodes[mask]
        if len(points) == 0:
            continue
        images = target.wrap(transition(points))
        jac = transition.jacobian(points)
        own = source.metric_at(points)
        pulled = pull_back(jac, target.metric_at(images))
        mismatch = _relative(pulled - own, own)
        rows.append(("metric_pullback", transition.name, len(points), mismatch))

        steps = JACOBIAN_STEP * np.eye(manifold.dimension)
        numeric = np.stack(
            [
                target.displacement(transition(points - e), transition(points + e))
                / (2 * JACOBIAN_STEP)
                for e in steps
            ],
            axis=-1,
        )
        defect = _relative(numeric - jac, jac)
        rows.append(("jacobian", transition.name, len(points), defect))

        for second in manifold.transitions_from(transition.target):
            final = manifold.chart(second.target)
            reach = manifold.overlap_mask(second, images)
            if second.target == transition.source:
                expected = points
            else:
                direct = manifold.transition(transition.source, second.target)
                if direct is None:
                    continue
                reach &= manifold.overlap_mask(direct, points)
                expected = np.empty_like(points)
                if np.any(reach):
                    expected[reach] = final.wrap(direct(points[reach]))
            if not np.any(reach):
                continue
            composed = final.wrap(second(images[reach]))
            defect = float(np.abs(final.displacement(expected[reach], composed)).max())
            name = f"{transition.name}->{second.target}"
            rows.append(("cocycle", name, int(reach.sum()), defect))

    table = pd.DataFrame(rows, columns=["check", "overlap", "samples", "defect"])
    table["passed"] = table["defect"] <= tol
    report = ConsistencyReport(table=table, tol=tol)
    if not report.passed:
        logger.warning(f"transition checks failed on {sorted(set(report.failures))}")
    return report


## Derived atlases


@cached(cache=_boundary_cache, key=lambda manifold: hashkey(manifold))
def boundary_atlas(manifold: PointedManifold) -> PointedManifold:
    """
    The (n-1)-dimensional atlas of ∂M with the induced metric: the t = 0
    slices of the boundary-collar charts, glued by the restricted transitions.
    """
    collars = manifold.charts_with_role(ChartRole.BOUNDARY_COLLAR)
    if not collars:
        raise InputError(f"{manifold.name!r} has no boundary")
    m = manifold.dimension - 1
    charts = {
        chart.id: Chart(
            id=chart.id,
            role=ChartRole.INTERIOR,
            lo=chart.lo[:m],
            hi=chart.hi[:m],
            resolution=chart.resolution[:m],
            metric=np.ascontiguousarray(chart.metric[..., 0, :m, :m]),
            periodic=chart.periodic[:m],
            taper=chart.taper[:m],
        )
        for chart in collars
    }
    transitions = tuple(
        Transition(
            source=t.source,
            target=t.target,
            lo=t.lo[:m],
            hi=t.hi[:m],
            resolution=t.resolution[:m],
            chart_map=BoundarySliceMap(base=t.chart_map),
        )
        for t in manifold.transitions
        if t.source in charts and t.target in charts and t.lo[-1] <= CONTAINS_TOL
    )
    first = collars[0]
    center = [axis[len(axis) // 2] for axis in first.axes[:m]]
    return PointedManifold(
        name=f"{manifold.name}/boundary",
        dimension=m,
        charts=charts,
        transitions=transitions,
        base_point=ChartPoint.create(first.id, center),
        has_boundary=False,
        constants=replace(manifold.constants, r2=0.0),
    )


@dataclass(frozen=True, kw_only=True, eq=False)
class ExtendedAtlas:
    """
    The chart layout of X_r: boundary-collar charts of M lengthened below
    t = 0 into outer collars, transitions between collars continued as
    products, and the interior charts as they are. `skeleton` is that layout
    with placeholder Euclidean metrics; `prepended[ℓ]` is the number of
    collar layers added below t = 0 on chart ℓ.
    """

    source: PointedManifold
    skeleton: PointedManifold
    depth: float
    prepended: Mapping[str, int]

    def inner_index(self, chart_id: str) -> tuple[slice, ...]:
        """Index selecting the nodes of M in an extended node field."""
        n = self.skeleton.dimension
        return (slice(None),) * (n - 1) + (slice(self.prepended[chart_id], None),)

    def outer_mask(self, chart_id: str) -> np.ndarray:
        chart = self.skeleton.chart(chart_id)
        mask = np.zeros(chart.resolution, dtype=bool)
        n = chart.dimension
        mask[(slice(None),) * (n - 1) + (slice(0, self.prepended[chart_id]),)] = True
        return mask


def _euclidean_field(resolution: tuple[int, ...], n: int) -> np.ndarray:
    return np.broadcast_to(np.eye(n), resolution + (n, n)).copy()


def _extension_key(manifold, *, depth, radius=None):
    return hashkey(manifold, depth, radius)


@cached(cache=_extension_cache, key=_extension_key)
def extended_atlas(
    manifold: PointedManifold, *, depth: float, radius: float | None = None
) -> ExtendedAtlas:
    """Chart layout of X_r for the charts meeting B(x⁰, radius)."""
    if not (depth > 0 and math.isfinite(depth)):
        raise InputError(f"extension depth must be finite and > 0, got {depth}")
    charts: dict[str, Chart] = {}
    prepended: dict[str, int] = {}
    for chart_id in charts_meeting_ball(manifold, radius):
        chart = manifold.chart(chart_id)
        if chart.role != ChartRole.BOUNDARY_COLLAR:
            charts[chart_id], prepended[chart_id] = chart, 0
            continue
        count = collar_nodes(chart.spacing[-1], depth)
        resolution = (*chart.resolution[:-1], chart.resolution[-1] + count)
        charts[chart_id] = Chart(
            id=chart_id,
            role=ChartRole.OUTER_COLLAR,
            lo=(*chart.lo[:-1], -count * chart.spacing[-1]),
            hi=chart.hi,
            resolution=resolution,
            metric=_euclidean_field(resolution, chart.dimension),
            periodic=chart.periodic,
            taper=chart.taper,
        )
        prepended[chart_id] = count

    transitions = []
    for t in manifold.transitions:
        if t.source not in charts or t.target not in charts:
            continue
        if prepended[t.source] and prepended[t.target] and t.lo[-1] <= CONTAINS_TOL:
            count = prepended[t.source]
            h = manifold.chart(t.source).spacing[-1]
            t = Transition(
                source=t.source,
                target=t.target,
                lo=(*t.lo[:-1], -count * h),
                hi=t.hi,
                resolution=(*t.resolution[:-1], t.resolution[-1] + count),
                chart_map=CollarProductMap(base=t.chart_map),
            )
        transitions.append(t)

    skeleton = PointedManifold(
        name=f"{manifold.name}+collar",
        dimension=manifold.dimension,
        charts=charts,
        transitions=tuple(transitions),
        base_point=manifold.base_point,
        has_boundary=False,
        constants=manifold.constants,
    )
    outer = sum(1 for count in prepended.values() if count)
    logger.debug(
        f"extended layout of {manifold.name!r}: {len(charts)} charts, {outer} "
        f"outer collars, depth {depth:g}"
    )
    return ExtendedAtlas(
        source=manifold, skeleton=skeleton, depth=depth, prepended=prepended
    )
