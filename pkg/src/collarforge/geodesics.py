"""
Geodesic integration on a sampled atlas.

Geodesics are traced by arc length with the classical fourth-order
Runge-Kutta scheme, using Γ from the chart geometry. The step is a quarter of
the shortest metric cell edge at the current point. When a trajectory comes
within two cells of a chart face it moves to the neighbouring chart in which
it sits deepest; it escapes when it leaves a chart and no neighbour holds it.

Along the way a g-orthonormal frame normal to the velocity is parallel
transported, and the normal Jacobi fields vanishing at the start are carried
in that frame, J = E·f with f'' + K f = 0, K_ab = <R(E_a, γ')γ', E_b>.
"""

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from collarforge.atlas_types import ChartPoint, ChartRole, PointedManifold
from collarforge.errors import DomainError, EscapeError, InputError
from collarforge.manifold_atlas import boundary_atlas
from collarforge.tensor_calculus import chart_geometry, inward_normal

logger = logging.getLogger(__name__)

STEP_FRACTION = 0.25
EDGE_CELLS = 2.0
MAX_STEPS = 200_000

# Called after every step with (arc length so far, current point); returning
# True stops the trace.
type Observer = Callable[[float, ChartPoint], bool]


@dataclass(frozen=True, kw_only=True, eq=False)
class GeodesicEnd:
    point: ChartPoint
    velocity: np.ndarray
    length: float
    conjugate_at: float | None = None
    stopped: bool = False


def metric_norm(g: np.ndarray, v: np.ndarray) -> float:
    return float(np.sqrt(max(float(v @ g @ v), 0.0)))


def normal_frame(g: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Columns: a g-orthonormal basis of the complement of the unit vector v."""
    n = len(v)
    basis = [v]
    for w in np.eye(n):
        for u in basis:
            w = w - (u @ g @ w) * u
        norm = metric_norm(g, w)
        if norm > 1e-8:
            basis.append(w / norm)
        if len(basis) == n:
            break
    return np.array(basis[1:]).T.reshape(n, n - 1)


def relocate(manifold: PointedManifold, chart_id: str, x: np.ndarray):
    """The chart holding x deepest among the current one and its neighbours."""
    chart = manifold.chart(chart_id)
    best_depth = float(chart.depth(x)[0])
    best = (chart_id, x, None)
    if best_depth >= EDGE_CELLS:
        return best
    for transition in manifold.transitions_from(chart_id):
        if not manifold.overlap_mask(transition, x)[0]:
            continue
        target = manifold.chart(transition.target)
        image = target.wrap(transition(x))[0]
        depth = float(target.depth(image)[0])
        if depth > best_depth:
            best_depth = depth
            best = (transition.target, image, transition.jacobian(x)[0])
    return best


class _State:
    """Packed (x, v, E, f, f') of a geodesic with its normal Jacobi fields."""

    def __init__(self, n: int, jacobi: bool):
        self.n = n
        self.m = n - 1 if jacobi else 0

    def pack(self, x, v, frame, f, fd) -> np.ndarray:
        parts = [x, v]
        if self.m:
            parts += [frame.ravel(), f.ravel(), fd.ravel()]
        return np.concatenate(parts)

    def unpack(self, y: np.ndarray):
        n, m = self.n, self.m
        x, v = y[:n], y[n : 2 * n]
        if not m:
            return x, v, None, None, None
        at = 2 * n
        frame = y[at : at + n * m].reshape(n, m)
        at += n * m
        f = y[at : at + m * m].reshape(m, m)
        fd = y[at + m * m :].reshape(m, m)
        return x, v, frame, f, fd


def _rhs(geometry, layout: _State, y: np.ndarray) -> np.ndarray:
    x, v, frame, f, fd = layout.unpack(y)
    g, gamma, r_up = geometry.at(x)
    dv = -np.einsum("ijk,j,k->i", gamma, v, v)
    if not layout.m:
        return np.concatenate([v, dv])
    d_frame = -np.einsum("ijk,j,ka->ia", gamma, v, frame)
    curvature = np.einsum("im,mjkl,j,ka,l,ib->ab", g, r_up, v, frame, v, frame)
    return layout.pack(v, dv, d_frame, fd, -curvature @ f)


def _rk4(geometry, layout: _State, y: np.ndarray, ds: float) -> np.ndarray:
    k1 = _rhs(geometry, layout, y)
    k2 = _rhs(geometry, layout, y + 0.5 * ds * k1)
    k3 = _rhs(geometry, layout, y + 0.5 * ds * k2)
    k4 = _rhs(geometry, layout, y + ds * k3)
    return y + ds / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _step_size(chart, g: np.ndarray) -> float:
    cells = np.asarray(chart.spacing) * np.sqrt(np.diag(g))
    return STEP_FRACTION * float(cells.min())


def trace_geodesic(
    manifold: PointedManifold,
    start: ChartPoint,
    direction: np.ndarray,
    length: float,
    *,
    jacobi: bool = False,
    observe: Observer | None = None,
) -> GeodesicEnd:
    """
    Follows the unit-speed geodesic leaving `start` along `direction` for arc
    length `length`. With `jacobi` set, also reports the first arc length at
    which a normal Jacobi field vanishing at the start vanishes again.
    """
    if length < 0 or not math.isfinite(length):
        raise InputError(f"geodesic length must be finite and >= 0, got {length}")
    chart_id = start.chart
    chart = manifold.chart(chart_id)
    x = chart.wrap(start.array)[0]
    g = chart.metric_at(x)[0]
    speed = metric_norm(g, np.asarray(direction, dtype=float))
    if not speed > 0:
        raise DomainError(f"zero initial velocity at {start}")
    v = np.asarray(direction, dtype=float) / speed
    if length == 0:
        return GeodesicEnd(point=ChartPoint.create(chart_id, x), velocity=v, length=0.0)

    n = manifold.dimension
    layout = _State(n, jacobi and n > 1)
    m = layout.m
    frame = normal_frame(g, v) if m else None
    y = layout.pack(x, v, frame, np.zeros((m, m)), np.eye(m))
    previous_det = None
    conjugate_at = None
    s = 0.0
    for _ in range(MAX_STEPS):
        if s >= length:
            break
        chart_id, x_new, jac = relocate(manifold, chart_id, layout.unpack(y)[0])
        if jac is not None:
            x, v, frame, f, fd = layout.unpack(y)
            moved = None if frame is None else jac @ frame
            y = layout.pack(x_new, jac @ v, moved, f, fd)
        chart = manifold.chart(chart_id)
        geometry = chart_geometry(chart)
        g_here = chart.metric_at(layout.unpack(y)[0])[0]
        ds = min(_step_size(chart, g_here), length - s)
        stepped = _rk4(geometry, layout, y, ds)
        x_next = stepped[:n]
        if not chart.contains(x_next)[0]:
            here = ChartPoint.create(chart_id, layout.unpack(y)[0])
            through = chart.role == ChartRole.BOUNDARY_COLLAR and x_next[-1] < 0.0
            raise EscapeError(
                f"geodesic left chart {chart_id!r} at arc length {s:.6g}",
                exit_point=here,
                through_boundary=bool(through),
                arc_length=s,
            )
        stepped[:n] = chart.wrap(x_next)[0]
        y = stepped
        s += ds

        if m:
            det = float(np.linalg.det(layout.unpack(y)[3]))
            if previous_det is not None and conjugate_at is None and det <= 0.0:
                # Interpolate the sign change within the last step.
                conjugate_at = s - ds * det / (det - previous_det)
            previous_det = det
        if observe is not None and observe(s, ChartPoint.create(chart_id, y[:n])):
            x, v, *_ = layout.unpack(y)
            return GeodesicEnd(
                point=ChartPoint.create(chart_id, x),
                velocity=v,
                length=s,
                conjugate_at=conjugate_at,
                stopped=True,
            )
    else:
        raise EscapeError(
            f"geodesic from {start} did not finish in {MAX_STEPS} steps",
            exit_point=ChartPoint.create(chart_id, y[:n]),
        )

    x, v, *_ = layout.unpack(y)
    return GeodesicEnd(
        point=ChartPoint.create(chart_id, x),
        velocity=v,
        length=s,
        conjugate_at=conjugate_at,
    )


def exp_map(
    manifold: PointedManifold,
    chart_id: str,
    coords: np.ndarray,
    velocity: np.ndarray,
    length: float,
) -> ChartPoint:
    """The point at arc length `length` along the geodesic leaving along `velocity`."""
    start = ChartPoint.create(chart_id, coords)
    return trace_geodesic(manifold, start, velocity, length).point


def normal_collar(
    manifold: PointedManifold, boundary_point: ChartPoint, v: np.ndarray, t: float
) -> ChartPoint:
    """
    κ_x(v, t): the boundary exponential map exp^{∂g}_x(v) followed by the
    inward normal geodesic of length t.
    """
    chart = manifold.chart(boundary_point.chart)
    x = chart.wrap(boundary_point.array)[0]
    if chart.role != ChartRole.BOUNDARY_COLLAR or abs(x[-1]) > 1e-9:
        raise DomainError(f"{boundary_point} is not on the boundary of a collar chart")
    if t < 0:
        raise InputError(f"collar depth must be >= 0, got {t}")
    v = np.asarray(v, dtype=float)
    m = manifold.dimension - 1

    y = x[:m]
    if np.any(v):
        boundary = boundary_atlas(manifold)
        length = metric_norm(boundary.chart(chart.id).metric_at(y)[0], v)
        foot = exp_map(boundary, chart.id, y, v, length)
        chart = manifold.chart(foot.chart)
        y = foot.array
    start = np.append(y, 0.0)
    if t == 0:
        return ChartPoint.create(chart.id, start)
    nu = inward_normal(np.linalg.inv(chart.metric_at(start)[0]))
    return exp_map(manifold, chart.id, start, nu, t)


def boundary_normal(manifold: PointedManifold, point: ChartPoint) -> np.ndarray:
    chart = manifold.chart(point.chart)
    return inward_normal(np.linalg.inv(chart.metric_at(point.array)[0]))


def log_map(
    manifold: PointedManifold, p: ChartPoint, q: ChartPoint
) -> np.ndarray | None:
    """
    exp_p⁻¹(q) in the coordinates of p's chart, found by shooting from the
    coordinate displacement. None when q is not in p's chart or the shot
    does not land on q.
    """
    chart = manifold.chart(p.chart)
    start = chart.wrap(p.array)[0]
    target = manifold.to_chart(q, p.chart)
    if target is None:
        return None
    guess = chart.displacement(start, target)
    if not np.any(guess):
        return guess
    g0 = chart.metric_at(start)[0]

    def residual(v: np.ndarray) -> np.ndarray:
        length = metric_norm(g0, v)
        if length == 0.0:
            return chart.displacement(target, start)
        end = exp_map(manifold, p.chart, start, v, length)
        coords = manifold.to_chart(end, p.chart)
        if coords is None:
            raise EscapeError("shot left the starting chart", exit_point=end)
        return chart.displacement(target, coords)

    try:
        fit = least_squares(residual, guess, method="lm", xtol=1e-12, ftol=1e-12)
    except EscapeError:
        return None
    if np.linalg.norm(fit.fun) > 1e-9 * (1.0 + np.linalg.norm(target)):
        return None
    return fit.x
