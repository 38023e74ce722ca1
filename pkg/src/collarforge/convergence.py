"""
Measuring convergence of pointed manifolds.

Finite nets stand in for metric balls around the base point. Two nets are
compared by the distortion of a correspondence that pairs the base points,
metrics on identified charts by the C^k norm of their difference. Level sets
of a nearby height function are aligned with those of a reference one by the
normalized gradient flow, and the alignment is blended into the identity
along geodesics.
"""

import logging
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field, replace
from enum import StrEnum
from itertools import combinations
from typing import Any

import networkx as nx
import numpy as np
from cachetools import LRUCache, cached
from cachetools.keys import hashkey
from scipy.sparse.csgraph import csgraph_from_dense, floyd_warshall
from scipy.stats import special_ortho_group

from collarforge.atlas_types import Chart, ChartPoint, ChartRole, PointedManifold
from collarforge.certifier import (
    injectivity_lower_bound,
    sample_directions,
    sample_indices,
)
from collarforge.chart_maps import ChartMap
from collarforge.closed_forms import MapForm
from collarforge.distance import (
    atlas_graph,
    distance_to_point,
    node_distances,
    point_distances,
    segment_distance,
)
from collarforge.errors import (
    CoverageError,
    EscapeError,
    InputError,
    PreconditionError,
    SizeError,
    StencilError,
    ToleranceError,
    UnreachableError,
)
from collarforge.geodesics import (
    exp_map,
    log_map,
    metric_norm,
    relocate,
    trace_geodesic,
)
from collarforge.manifold_atlas import pull_back
from collarforge.profiles import CutoffProfile
from collarforge.tensor_calculus import ck_norm, grid_gradient, tensor_norm

logger = logging.getLogger(__name__)

NET_TOL = 1e-6
EXACT_LIMIT = 9
LEVEL_TOL = 1e-8
MISMATCH_TOL = 1e-6
TIME_SLACK = 1e-3
# Samples are taken where |f∞| <= 1/4; the flow stays inside |f| <= 1/2.
SAMPLE_BAND = 0.25
LEVEL_BAND = 0.5
FLOW_STEP_CELLS = 0.25
MAX_FLOW_STEPS = 100_000
MAX_BISECTIONS = 200
JACOBIAN_CELLS = 0.5
EDGE_DEPTH = 1.0

_edge_cache: LRUCache = LRUCache(maxsize=16)


class NetMethod(StrEnum):
    FPS = "fps"
    POLAR = "polar"


class GHMode(StrEnum):
    EXACT = "exact"
    GREEDY = "greedy"


## Nets


@dataclass(frozen=True, kw_only=True, eq=False)
class FiniteNet:
    """Points of B(x⁰, r) with x⁰ first, and their pairwise distances."""

    manifold: str
    points: tuple[ChartPoint, ...]
    distances: np.ndarray
    radius: float
    method: NetMethod = NetMethod.FPS

    def __post_init__(self):
        count = len(self.points)
        d = self.distances
        if count < 1:
            raise InputError("a net needs at least one point")
        if d.shape != (count, count):
            raise InputError(f"distances must be {count}x{count}, got {d.shape}")
        if not np.all(np.isfinite(d)) or np.any(d < 0.0):
            raise InputError("distances must be finite and >= 0")
        if not np.array_equal(d, d.T):
            raise InputError("distances are not symmetric")
        if np.any(np.diag(d) != 0.0):
            raise InputError("distances have a nonzero diagonal")
        if (defect := self.triangle_defect()) > NET_TOL:
            raise InputError(f"distances break the triangle inequality by {defect:.3g}")
        if d[0].max() > self.radius + NET_TOL:
            raise InputError(
                f"a net point lies {d[0].max():.6g} from the base, beyond r = "
                f"{self.radius:g}"
            )

    @property
    def size(self) -> int:
        return len(self.points)

    @property
    def diameter(self) -> float:
        return float(self.distances.max())

    def triangle_defect(self) -> float:
        """max over all triples of d(i, j) - d(i, k) - d(k, j)."""
        d = self.distances
        worst = 0.0
        for k in range(len(d)):
            worst = max(worst, float(np.max(d - d[:, k, None] - d[None, k, :])))
        return worst

    def to_document(self) -> dict[str, Any]:
        return {
            "manifold": self.manifold,
            "method": str(self.method),
            "radius": self.radius,
            "points": [p.to_document() for p in self.points],
            "distances": self.distances.tolist(),
        }


def net_from_document(document: Mapping[str, Any]) -> FiniteNet:
    try:
        points = tuple(
            ChartPoint.create(p["chart"], p["coords"]) for p in document["points"]
        )
        return FiniteNet(
            manifold=str(document.get("manifold", "")),
            points=points,
            distances=np.asarray(document["distances"], dtype=float),
            radius=float(document["radius"]),
            method=NetMethod(document.get("method", NetMethod.FPS)),
        )
    except (KeyError, TypeError, ValueError) as e:
        if isinstance(e, InputError):
            raise
        raise InputError(f"malformed net document: {e}") from e


def pairwise_distances(
    manifold: PointedManifold,
    points: Sequence[ChartPoint],
    bounds: np.ndarray | None = None,
) -> np.ndarray:
    """
    Upper bounds for the distances between `points`, optionally capped by
    known `bounds`, then closed under shortest paths so that the triangle
    inequality holds exactly.
    """
    count = len(points)
    rows = [point_distances(manifold, p) for p in points]
    d = np.zeros((count, count))
    for i, j in combinations(range(count), 2):
        d[i, j] = d[j, i] = min(
            distance_to_point(manifold, rows[i], points[j]),
            segment_distance(manifold, points[i], points[j]),
        )
    if bounds is not None:
        d = np.minimum(d, bounds)
    if not np.all(np.isfinite(d)):
        i, j = np.argwhere(~np.isfinite(d))[0]
        raise UnreachableError(
            f"{points[i]} and {points[j]} lie in different components"
        )
    closed = floyd_warshall(csgraph_from_dense(d, null_value=np.inf), directed=False)
    return np.minimum(closed, closed.T)


@cached(cache=_edge_cache, key=lambda manifold: hashkey(manifold))
def atlas_edge_nodes(manifold: PointedManifold) -> np.ndarray:
    """Graph nodes on chart faces that are neither on ∂M nor inside another chart."""
    graph = atlas_graph(manifold)
    found = [np.empty(0, dtype=int)]
    for chart_id, chart in manifold.charts.items():
        flat = chart.nodes.reshape(-1, chart.dimension)
        face = np.zeros(len(flat), dtype=bool)
        for a, periodic in enumerate(chart.periodic):
            if periodic:
                continue
            lower = np.isclose(flat[:, a], chart.lo[a])
            if chart.role == ChartRole.BOUNDARY_COLLAR and a == chart.dimension - 1:
                lower[:] = False
            face |= lower | np.isclose(flat[:, a], chart.hi[a])
        for transition in manifold.transitions_from(chart_id):
            inside = manifold.overlap_mask(transition, flat) & face
            if np.any(inside):
                target = manifold.chart(transition.target)
                depth = target.depth(target.wrap(transition(flat[inside])))
                face[np.flatnonzero(inside)[depth >= EDGE_DEPTH]] = False
        found.append(graph.node_ids(chart_id, np.flatnonzero(face)))
    return np.concatenate(found)


def _check_window(
    manifold: PointedManifold, radius: float, from_base: np.ndarray
) -> None:
    edge = atlas_edge_nodes(manifold)
    reached = edge[from_base[edge] < radius]
    if reached.size:
        nearest = int(reached[np.argmin(from_base[reached])])
        raise EscapeError(
            f"B(x⁰, {radius:g}) reaches the edge of the atlas",
            exit_point=atlas_graph(manifold).locate(nearest),
        )


def _farthest_points(
    manifold: PointedManifold, radius: float, count: int
) -> list[ChartPoint]:
    graph = atlas_graph(manifold)
    from_base = point_distances(manifold, manifold.base_point)
    _check_window(manifold, radius, from_base)
    candidates = np.flatnonzero(from_base <= radius)
    gap = from_base[candidates].copy()
    points = [manifold.base_point]
    while len(points) < count:
        best = int(np.argmax(gap)) if candidates.size else -1
        if best < 0 or not gap[best] > 0.0:
            raise InputError(
                f"B(x⁰, {radius:g}) holds only {len(points)} distinct grid points, "
                f"{count} were asked for"
            )
        node = int(candidates[best])
        points.append(graph.locate(node))
        gap = np.minimum(gap, node_distances(graph, node)[candidates])
    return points


def _trace_ray(
    manifold: PointedManifold,
    base: ChartPoint,
    direction: np.ndarray,
    step: float,
    rings: int,
) -> list[tuple[ChartPoint, float]]:
    """Ring points along one geodesic ray; a ray that meets ∂M stays there."""
    found: list[tuple[ChartPoint, float]] = []
    start, velocity, travelled = base, direction, 0.0
    while len(found) < rings:
        try:
            end = trace_geodesic(manifold, start, velocity, step)
        except EscapeError as e:
            if not e.through_boundary:
                raise
            stop = (e.exit_point, travelled + (e.arc_length or 0.0))
            found += [stop] * (rings - len(found))
            break
        travelled += end.length
        start, velocity = end.point, end.velocity
        found.append((start, travelled))
    return found


def _polar_points(
    manifold: PointedManifold, radius: float, count: int, seed: int | None
) -> tuple[list[ChartPoint], np.ndarray]:
    base = manifold.base_point
    g = manifold.chart(base.chart).metric_at(base.array)[0]
    turn = None
    if seed is not None and len(g) > 1:
        turn = special_ortho_group.rvs(len(g), random_state=seed)
    directions = sample_directions(g, turn)
    rings = math.ceil((count - 1) / len(directions))
    step = radius / rings
    rays = [_trace_ray(manifold, base, u, step, rings) for u in directions]

    points, arcs, ray_ids = [base], [0.0], [-1]
    for ring in range(rings):
        for ray_id, ray in enumerate(rays):
            if len(points) == count:
                break
            point, arc = ray[ring]
            points.append(point)
            arcs.append(arc)
            ray_ids.append(ray_id)
    arc = np.array(arcs)
    ray_of = np.array(ray_ids)
    # Along a ray, and from the base, the traced arcs bound the distance.
    same_ray = (ray_of[:, None] == ray_of[None, :]) | (ray_of[:, None] < 0)
    same_ray |= ray_of[None, :] < 0
    bounds = np.where(same_ray, np.abs(arc[:, None] - arc[None, :]), np.inf)
    return points, bounds


def sample_net(
    manifold: PointedManifold,
    radius: float,
    count: int,
    *,
    method: NetMethod = NetMethod.FPS,
    seed: int | None = None,
) -> FiniteNet:
    """
    `count` points of B(x⁰, radius), x⁰ first. Farthest-point sampling picks
    grid nodes; the polar net puts rings of exponential-map images along
    directions spread in a g-orthonormal frame at x⁰, turned by a rotation
    drawn from `seed`. Farthest-point nets do not depend on the seed.
    """
    if not (radius > 0 and math.isfinite(radius)):
        raise InputError(f"net radius must be finite and > 0, got {radius}")
    if count < 1:
        raise InputError(f"a net needs at least one point, got {count}")
    bounds = None
    if count == 1:
        points = [manifold.base_point]
    else:
        match NetMethod(method):
            case NetMethod.FPS:
                points = _farthest_points(manifold, radius, count)
            case NetMethod.POLAR:
                points, bounds = _polar_points(manifold, radius, count, seed)
    net = FiniteNet(
        manifold=manifold.name,
        points=tuple(points),
        distances=pairwise_distances(manifold, points, bounds),
        radius=radius,
        method=NetMethod(method),
    )
    logger.info(
        f"{method} net of {count} points in B(x⁰, {radius:g}) on "
        f"{manifold.name!r}: diameter {net.diameter:.4g}"
    )
    return net


## Gromov-Hausdorff distance


@dataclass(frozen=True, kw_only=True)
class GHReport:
    epsilon: float
    distortion: float
    correspondence: tuple[tuple[int, int], ...]
    mode: GHMode

    def __post_init__(self):
        if not self.distortion >= 0:
            raise InputError(f"distortion must be >= 0, got {self.distortion}")
        if not math.isclose(self.epsilon, 0.5 * self.distortion, abs_tol=1e-15):
            raise InputError("epsilon must be half the distortion")
        if (0, 0) not in self.correspondence:
            raise InputError("the base points must correspond")

    def to_document(self) -> dict[str, Any]:
        return {
            "epsilon": self.epsilon,
            "distortion": self.distortion,
            "mode": str(self.mode),
            "correspondence": [list(pair) for pair in self.correspondence],
        }


def distortion(
    correspondence: Sequence[tuple[int, int]], a: np.ndarray, b: np.ndarray
) -> float:
    """max |d_A(x, x') - d_B(y, y')| over pairs of the correspondence."""
    pairs = np.asarray(correspondence, dtype=int)
    i, j = pairs[:, 0], pairs[:, 1]
    return float(np.max(np.abs(a[np.ix_(i, i)] - b[np.ix_(j, j)])))


def _covering_clique(
    gaps: np.ndarray, level: float, na: int, nb: int
) -> tuple[tuple[int, int], ...] | None:
    """
    A correspondence of distortion <= level, as a clique of compatible pairs
    through the base pair (node 0) that covers both nets.
    """
    adjacency = gaps <= level
    np.fill_diagonal(adjacency, False)
    graph = nx.from_numpy_array(adjacency.astype(int))
    for clique in nx.find_cliques(graph, nodes=[0]):
        if len({p // nb for p in clique}) == na and len({p % nb for p in clique}) == nb:
            return tuple(sorted(divmod(int(p), nb) for p in clique))
    return None


def _exact_correspondence(
    a: np.ndarray, b: np.ndarray
) -> tuple[tuple[int, int], ...]:
    na, nb = len(a), len(b)
    # gaps[(i, j), (k, l)] = |a[i, k] - b[j, l]|, pair (i, j) numbered i*nb + j.
    gaps = np.abs(a[:, None, :, None] - b[None, :, None, :]).reshape(na * nb, -1)
    levels = np.unique(gaps)
    lo, hi = 0, len(levels) - 1
    best = _covering_clique(gaps, levels[hi], na, nb)
    while lo < hi:
        mid = (lo + hi) // 2
        found = _covering_clique(gaps, levels[mid], na, nb)
        if found is None:
            lo = mid + 1
        else:
            hi, best = mid, found
    assert best is not None
    return best


def _farthest_order(d: np.ndarray) -> list[int]:
    order = [0]
    gap = d[0].copy()
    gap[0] = -np.inf
    while len(order) < len(d):
        pick = int(np.argmax(gap))
        order.append(pick)
        gap = np.minimum(gap, d[pick])
        gap[order] = -np.inf
    return order


def _best_partner(row: np.ndarray, other: np.ndarray, pairs) -> int:
    """The point of `other` whose distances best match `row` on the pairs so far."""
    mine = [p for p, _ in pairs]
    theirs = [q for _, q in pairs]
    cost = np.max(np.abs(row[mine][None, :] - other[:, theirs]), axis=1)
    return int(np.argmin(cost))


def _greedy_correspondence(
    a: np.ndarray, b: np.ndarray
) -> tuple[tuple[int, int], ...]:
    pairs = [(0, 0)]
    for i in _farthest_order(a)[1:]:
        pairs.append((i, _best_partner(a[i], b, pairs)))
    covered = {j for _, j in pairs}
    for j in _farthest_order(b)[1:]:
        if j not in covered:
            flipped = [(q, p) for p, q in pairs]
            pairs.append((_best_partner(b[j], a, flipped), j))
    return tuple(sorted(set(pairs)))


def gh_distance(
    a: FiniteNet, b: FiniteNet, mode: GHMode = GHMode.GREEDY
) -> GHReport:
    """
    ε = dis(R)/2 for a correspondence R between the nets that pairs their
    base points. Exact mode minimises over all such R; greedy mode matches
    points in farthest-point order and gives an upper bound.
    """
    mode = GHMode(mode)
    match mode:
        case GHMode.EXACT:
            if max(a.size, b.size) > EXACT_LIMIT:
                raise SizeError(
                    f"exact GH distance handles at most {EXACT_LIMIT} points per "
                    f"net, got {a.size} and {b.size}; use greedy mode"
                )
            pairs = _exact_correspondence(a.distances, b.distances)
        case GHMode.GREEDY:
            pairs = _greedy_correspondence(a.distances, b.distances)
    spread = distortion(pairs, a.distances, b.distances)
    report = GHReport(
        epsilon=0.5 * spread, distortion=spread, correspondence=pairs, mode=mode
    )
    logger.debug(f"{mode} GH between nets of {a.size} and {b.size}: {report.epsilon}")
    return report


def epsilon_isometry_defect(
    images: Sequence[ChartPoint | None], net: FiniteNet, target: PointedManifold
) -> float:
    """max |d_target(φx, φx') - d(x, x')| for a map φ given on every net point."""
    if len(images) != net.size:
        raise InputError(f"the map covers {len(images)} of {net.size} net points")
    mapped = []
    for i, image in enumerate(images):
        if image is None:
            raise InputError(f"net point {i} ({net.points[i]}) is not mapped")
        mapped.append(image)
    moved = pairwise_distances(target, mapped)
    return float(np.max(np.abs(moved - net.distances)))


## C^k comparison of metrics


@dataclass(frozen=True, kw_only=True, eq=False)
class ChartIdentification:
    """φ on one reference chart, into the coordinates of `target` on the candidate."""

    target: str
    chart_map: ChartMap


type Identification = Mapping[str, ChartIdentification]


def identity_identification(
    manifold: PointedManifold,
) -> dict[str, ChartIdentification]:
    identity = MapForm(name="identity")
    return {
        chart_id: ChartIdentification(target=chart_id, chart_map=identity)
        for chart_id in manifold.charts
    }


def _inner_window(chart: Chart, k: int) -> tuple[slice, ...]:
    """Grid slices k + 1 cells clear of every non-periodic face."""
    margin = k + 1
    needed = 3 if k else 1
    window = []
    for count, periodic in zip(chart.resolution, chart.periodic, strict=True):
        if periodic:
            window.append(slice(None))
        elif count - 2 * margin < needed:
            raise StencilError(
                f"chart {chart.id!r} has no room for a C^{k} stencil {margin} cells "
                "inside its faces"
            )
        else:
            window.append(slice(margin, count - margin))
    return tuple(window)


def ck_pullback_norm(
    reference: PointedManifold,
    candidate: PointedManifold,
    identification: Identification,
    k: int,
    *,
    charts: Sequence[str] | None = None,
) -> float:
    """
    max over the reference charts of |φ*g_candidate - g_reference|_{C^k}, on
    the nodes at least k + 1 cells inside each chart.
    """
    if k < 0:
        raise InputError(f"k must be >= 0, got {k}")
    worst = 0.0
    for chart_id in charts if charts is not None else list(identification):
        if chart_id not in identification:
            raise InputError(f"no identification given for chart {chart_id!r}")
        ref = reference.chart(chart_id)
        ident = identification[chart_id]
        target = candidate.chart(ident.target)
        window = _inner_window(ref, k)
        nodes = ref.nodes[window]
        flat = nodes.reshape(-1, ref.dimension)
        images = target.wrap(ident.chart_map(flat))
        if not np.all(target.contains(images)):
            raise InputError(
                f"the identification maps chart {chart_id!r} outside chart "
                f"{target.id!r}"
            )
        pulled = pull_back(ident.chart_map.jacobian(flat), target.metric_at(images))
        defect = pulled.reshape(nodes.shape[:-1] + pulled.shape[-2:])
        defect = defect - ref.metric[window]
        worst = max(worst, ck_norm(defect, ref.spacing, ref.periodic, k))
    return worst


## Level-set alignment


class NodeField:
    """A scalar node field on every chart of a manifold, read by interpolation."""

    def __init__(
        self, manifold: PointedManifold, values: Mapping[str, np.ndarray], what: str
    ):
        self.manifold = manifold
        self.values: dict[str, np.ndarray] = {}
        for chart_id, chart in manifold.charts.items():
            field_values = values.get(chart_id)
            if field_values is None or np.shape(field_values) != chart.resolution:
                raise InputError(f"{what} missing or misshapen on chart {chart_id!r}")
            self.values[chart_id] = np.asarray(field_values, dtype=float)
        self._interpolants = {
            chart_id: manifold.chart(chart_id).interpolator(values)
            for chart_id, values in self.values.items()
        }

    def __call__(self, point: ChartPoint) -> float:
        return float(self._interpolants[point.chart](point.array)[0])


class LevelFlow:
    """
    The flow of ∇f/|∇f| for a node field f. It has unit speed, so f changes
    at the rate |∇f| along it and reaching a level Δ away takes at most
    Δ / min|∇f|.
    """

    def __init__(self, level: NodeField):
        self.level = level
        self.manifold = level.manifold
        self._velocity = {}
        for chart_id, values in level.values.items():
            chart = self.manifold.chart(chart_id)
            df = grid_gradient(values, chart.spacing, chart.periodic)
            grad = np.einsum("...ij,...j->...i", np.linalg.inv(chart.metric), df)
            size = np.sqrt(np.maximum(np.einsum("...i,...i->...", df, grad), 0.0))
            with np.errstate(invalid="ignore", divide="ignore"):
                unit = np.where(size[..., None] > 0.0, grad / size[..., None], 0.0)
            self._velocity[chart_id] = chart.interpolator(unit)

    def _rk4(self, chart_id: str, x: np.ndarray, ds: float) -> np.ndarray:
        velocity = self._velocity[chart_id]
        k1 = velocity(x)[0]
        k2 = velocity(x + 0.5 * ds * k1)[0]
        k3 = velocity(x + 0.5 * ds * k2)[0]
        k4 = velocity(x + ds * k3)[0]
        return x + ds / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    def _value(self, chart_id: str, x: np.ndarray) -> float:
        return self.level(ChartPoint.create(chart_id, x))

    def to_level(self, start: ChartPoint, target: float) -> tuple[ChartPoint, float]:
        """
        The point where the flow from `start` meets f = target, and the signed
        flow time; the last step is bisected until f is within 1e-8.
        """
        chart_id = start.chart
        x = self.manifold.chart(chart_id).wrap(start.array)[0]
        gap = target - self._value(chart_id, x)
        if abs(gap) <= LEVEL_TOL:
            return ChartPoint.create(chart_id, x), 0.0
        sign = 1.0 if gap > 0 else -1.0
        elapsed = 0.0
        for _ in range(MAX_FLOW_STEPS):
            chart_id, x, _ = relocate(self.manifold, chart_id, x)
            chart = self.manifold.chart(chart_id)
            g = chart.metric_at(x)[0]
            h = FLOW_STEP_CELLS * float(
                (np.asarray(chart.spacing) * np.sqrt(np.diag(g))).min()
            )
            x_next = self._rk4(chart_id, x, sign * h)
            if not chart.contains(x_next)[0]:
                through = chart.role == ChartRole.BOUNDARY_COLLAR and x_next[-1] < 0
                raise EscapeError(
                    f"level flow left chart {chart_id!r} after time {elapsed:.6g}",
                    exit_point=ChartPoint.create(chart_id, x),
                    through_boundary=bool(through),
                    arc_length=elapsed,
                )
            if sign * (target - self._value(chart_id, x_next)) > 0.0:
                x = chart.wrap(x_next)[0]
                elapsed += h
                continue
            lo, hi = 0.0, h
            for _ in range(MAX_BISECTIONS):
                mid = 0.5 * (lo + hi)
                y = chart.wrap(self._rk4(chart_id, x, sign * mid))[0]
                residual = self._value(chart_id, y) - target
                if abs(residual) <= LEVEL_TOL:
                    return ChartPoint.create(chart_id, y), sign * (elapsed + mid)
                if sign * residual < 0.0:
                    lo = mid
                else:
                    hi = mid
            raise ToleranceError(
                f"bisection for f = {target:.6g} from {start} did not converge"
            )
        raise ToleranceError(f"level flow from {start} stalled before f = {target:.6g}")


@dataclass(frozen=True, kw_only=True, eq=False)
class AlignmentMap:
    """
    Samples x of the level band with D_∂(x) on the level f̃ = f∞(x) and the
    flow time t(x). After interpolate_diffeo, `interpolated` holds the full
    map D and `jacobians` its Jacobian determinants at the samples.
    """

    sources: tuple[ChartPoint, ...]
    images: tuple[ChartPoint, ...]
    times: np.ndarray
    levels: np.ndarray
    mismatch: float
    sup_difference: float
    gradient_floor: float
    reference: NodeField = field(repr=False)
    flow: LevelFlow = field(repr=False)
    cutoff: CutoffProfile | None = None
    interpolated: tuple[ChartPoint, ...] | None = None
    jacobians: np.ndarray | None = None

    def __post_init__(self):
        count = len(self.sources)
        if not (len(self.images) == len(self.times) == len(self.levels) == count):
            raise InputError("alignment samples, images, times and levels differ")
        if self.mismatch > MISMATCH_TOL:
            raise ToleranceError(
                f"aligned levels are off by {self.mismatch:.3g} > {MISMATCH_TOL}"
            )
        longest = self.longest_time
        if longest > self.time_bound * (1.0 + TIME_SLACK) + LEVEL_TOL:
            raise ToleranceError(
                f"flow time {longest:.6g} exceeds the bound {self.time_bound:.6g}"
            )

    @property
    def time_bound(self) -> float:
        """sup|f̃ - f∞| / δ^∂(f̃)."""
        return self.sup_difference / self.gradient_floor

    @property
    def longest_time(self) -> float:
        return float(np.max(np.abs(self.times), initial=0.0))

    @property
    def pairs(self) -> list[tuple[ChartPoint, ChartPoint]]:
        images = self.images if self.interpolated is None else self.interpolated
        return list(zip(self.sources, images, strict=True))

    def to_document(self) -> dict[str, Any]:
        samples = []
        for i, (source, image) in enumerate(self.pairs):
            samples.append(
                {
                    "source": source.to_document(),
                    "image": image.to_document(),
                    "boundary_image": self.images[i].to_document(),
                    "time": float(self.times[i]),
                    "level": float(self.levels[i]),
                    "jacobian": (
                        None if self.jacobians is None else float(self.jacobians[i])
                    ),
                }
            )
        return {
            "mismatch": self.mismatch,
            "sup_difference": self.sup_difference,
            "gradient_floor": self.gradient_floor,
            "time_bound": self.time_bound,
            "longest_time": self.longest_time,
            "cutoff": None if self.cutoff is None else self.cutoff.to_document(),
            "samples": samples,
        }


def _ball_masks(manifold: PointedManifold, radius: float) -> dict[str, np.ndarray]:
    graph = atlas_graph(manifold)
    within = point_distances(manifold, manifold.base_point) <= radius
    return {
        chart_id: within[graph.chart_slice(chart_id)].reshape(chart.resolution)
        for chart_id, chart in manifold.charts.items()
    }


def boundary_align(
    manifold: PointedManifold,
    f_inf: Mapping[str, np.ndarray],
    f_tilde: Mapping[str, np.ndarray],
    radius: float,
    *,
    samples_per_axis: int = 6,
) -> AlignmentMap:
    """
    D_∂(x) = Fl^{t(x)}(x) for the normalized gradient flow of f̃, with t(x)
    chosen so that f̃(D_∂(x)) = f∞(x), at strided nodes of B(x⁰, radius)
    where |f∞| <= 1/4.
    """
    reference = NodeField(manifold, f_inf, "f_inf")
    target = NodeField(manifold, f_tilde, "f_tilde")
    inside = _ball_masks(manifold, radius)

    sup_difference, floor = 0.0, math.inf
    for chart_id, mask in inside.items():
        chart = manifold.chart(chart_id)
        f0, f1 = reference.values[chart_id], target.values[chart_id]
        near = mask & (np.abs(f0) <= LEVEL_BAND)
        if np.any(near):
            sup_difference = max(sup_difference, float(np.abs(f1 - f0)[near].max()))
        band = mask & (np.abs(f1) <= LEVEL_BAND)
        if np.any(band):
            df = grid_gradient(f1, chart.spacing, chart.periodic)
            slope = tensor_norm(df, np.linalg.inv(chart.metric))
            floor = min(floor, float(slope[band].min()))
    if not sup_difference < SAMPLE_BAND:
        raise PreconditionError(
            f"sup |f̃ - f∞| = {sup_difference:.4g} must stay below {SAMPLE_BAND}"
        )
    if not (floor > 0 and math.isfinite(floor)):
        raise PreconditionError("f̃ has no positive gradient on the level band")

    flow = LevelFlow(target)
    sources, images, times, levels = [], [], [], []
    for chart_id, mask in inside.items():
        chart = manifold.chart(chart_id)
        picks = sample_indices(chart, samples_per_axis, margin=1)
        if any(len(p) == 0 for p in picks):
            continue
        grid = np.ix_(*picks)
        keep = mask[grid] & (np.abs(reference.values[chart_id][grid]) <= SAMPLE_BAND)
        for x, level in zip(
            chart.nodes[grid][keep], reference.values[chart_id][grid][keep], strict=True
        ):
            source = ChartPoint.create(chart_id, x)
            image, time = flow.to_level(source, float(level))
            sources.append(source)
            images.append(image)
            times.append(time)
            levels.append(float(level))
    if not sources:
        raise CoverageError(f"no node of B(x⁰, {radius:g}) lies in the level band")

    mismatch = max(
        abs(target(image) - level) for image, level in zip(images, levels, strict=True)
    )
    alignment = AlignmentMap(
        sources=tuple(sources),
        images=tuple(images),
        times=np.array(times),
        levels=np.array(levels),
        mismatch=mismatch,
        sup_difference=sup_difference,
        gradient_floor=floor,
        reference=reference,
        flow=flow,
    )
    logger.info(
        f"aligned {len(sources)} samples on {manifold.name!r}: longest flow time "
        f"{alignment.longest_time:.4g}, bound {alignment.time_bound:.4g}"
    )
    return alignment


class _Interpolation:
    """y -> exp_y(φ(|f∞(y)|) · exp_y⁻¹(D_∂(y)))."""

    def __init__(
        self,
        manifold: PointedManifold,
        alignment: AlignmentMap,
        cutoff: CutoffProfile,
    ):
        self.manifold = manifold
        self.alignment = alignment
        self.cutoff = cutoff

    def weight(self, point: ChartPoint) -> float:
        return float(self.cutoff(abs(self.alignment.reference(point))))

    def boundary_image(self, point: ChartPoint) -> ChartPoint:
        level = self.alignment.reference(point)
        return self.alignment.flow.to_level(point, level)[0]

    def displacement(self, point: ChartPoint, image: ChartPoint) -> np.ndarray:
        v = log_map(self.manifold, point, image)
        if v is None:
            raise PreconditionError(
                f"D_∂({point}) = {image} is not reached by a geodesic from {point}"
            )
        return v

    def __call__(
        self, point: ChartPoint, boundary_image: ChartPoint | None = None
    ) -> ChartPoint:
        phi = self.weight(point)
        if phi == 0.0:
            return point
        image = boundary_image
        if image is None:
            image = self.boundary_image(point)
        if phi == 1.0:
            return image
        v = self.displacement(point, image)
        g = self.manifold.chart(point.chart).metric_at(point.array)[0]
        length = metric_norm(g, v)
        if length == 0.0:
            return point
        return exp_map(self.manifold, point.chart, point.array, v, phi * length)

    def check_convexity(self, point: ChartPoint, image: ChartPoint) -> None:
        chart = self.manifold.chart(point.chart)
        g = chart.metric_at(point.array)[0]
        length = metric_norm(g, self.displacement(point, image))
        if length == 0.0:
            return
        cell = float((np.asarray(chart.spacing) * np.sqrt(np.diag(g))).min())
        rmax = max(4.0 * length, cell)
        bound = 0.5 * injectivity_lower_bound(self.manifold, point, rmax)
        if length > bound:
            raise PreconditionError(
                f"displacement {length:.4g} at {point} exceeds the convexity "
                f"bound {bound:.4g}"
            )

    def jacobian_det(self, point: ChartPoint) -> float:
        """Central-difference Jacobian of D in the coordinates of point's chart."""
        chart = self.manifold.chart(point.chart)
        x = chart.wrap(point.array)[0]
        columns = []
        for a in range(chart.dimension):
            h = JACOBIAN_CELLS * chart.spacing[a]
            ends = []
            for sign in (1.0, -1.0):
                shifted = x.copy()
                shifted[a] += sign * h
                moved = self(ChartPoint.create(chart.id, chart.wrap(shifted)[0]))
                coords = self.manifold.to_chart(moved, chart.id)
                if coords is None:
                    raise EscapeError(
                        f"D moved a neighbour of {point} out of chart {chart.id!r}",
                        exit_point=moved,
                    )
                ends.append(coords)
            columns.append(chart.displacement(ends[1], ends[0]) / (2.0 * h))
        return float(np.linalg.det(np.stack(columns, axis=-1)))


def interpolate_diffeo(
    alignment: AlignmentMap, cutoff: CutoffProfile, manifold: PointedManifold
) -> AlignmentMap:
    """
    Blends D_∂ into the identity along geodesics with φ = cutoff(|f∞|): the
    result is D_∂ where φ = 1 and the identity outside supp φ.
    """
    blend = _Interpolation(manifold, alignment, cutoff)
    images, dets = [], []
    for source, boundary_image in zip(alignment.sources, alignment.images, strict=True):
        if blend.weight(source) > 0.0:
            blend.check_convexity(source, boundary_image)
        images.append(blend(source, boundary_image))
        dets.append(blend.jacobian_det(source))
    jacobians = np.array(dets)
    if np.any(folded := jacobians <= 0.0):
        where = alignment.sources[int(np.argmax(folded))]
        raise PreconditionError(
            f"the interpolated map is not orientation preserving at {where}"
        )
    logger.info(
        f"interpolated {len(images)} samples: Jacobian determinants in "
        f"[{jacobians.min():.4g}, {jacobians.max():.4g}]"
    )
    return replace(
        alignment, cutoff=cutoff, interpolated=tuple(images), jacobians=jacobians
    )
