"""
Value types shared by the whole package: charts with sampled metric fields,
transitions between them, pointed manifolds and partitions of unity.

Everything here is immutable after construction and validated in
__post_init__. Arrays are never copied on access, so callers must not write
into them.
"""

import logging
from collections.abc import Callable, Mapping
from dataclasses import dataclass, field
from enum import StrEnum
from functools import cached_property
from typing import Any

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from collarforge.chart_maps import ChartMap
from collarforge.closed_forms import MetricForm
from collarforge.errors import GeometryError, InputError
from collarforge.profiles import CutoffProfile

logger = logging.getLogger(__name__)

type Interpolant = Callable[[np.ndarray], np.ndarray]

SYMMETRY_TOL = 1e-12
CONTAINS_TOL = 1e-9


class ChartRole(StrEnum):
    INTERIOR = "interior"
    BOUNDARY_COLLAR = "boundary-collar"
    OUTER_COLLAR = "outer-collar"


@dataclass(frozen=True, kw_only=True)
class ChartPoint:
    """A point given by a chart id and its coordinates in that chart."""

    chart: str
    coords: tuple[float, ...]

    @classmethod
    def create(cls, chart: str, coords: Any) -> ChartPoint:
        return cls(chart=chart, coords=tuple(float(c) for c in np.ravel(coords)))

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.coords, dtype=float)

    def to_document(self) -> dict[str, Any]:
        return {"chart": self.chart, "coords": list(self.coords)}

    def __str__(self) -> str:
        coords = ", ".join(f"{c:.6g}" for c in self.coords)
        return f"{self.chart}({coords})"


def collar_nodes(spacing: float, depth: float) -> int:
    """Number of grid steps of size `spacing` laid below t = 0 to reach `depth`."""
    return max(1, round(depth / spacing))


def grid_axes(
    lo: tuple[float, ...],
    hi: tuple[float, ...],
    resolution: tuple[int, ...],
    periodic: tuple[bool, ...],
) -> tuple[np.ndarray, ...]:
    """Node coordinates per axis; periodic axes leave out the endpoint."""
    return tuple(
        a + (b - a) / count * np.arange(count) if p else np.linspace(a, b, count)
        for a, b, count, p in zip(lo, hi, resolution, periodic, strict=True)
    )


def grid_nodes(axes: tuple[np.ndarray, ...]) -> np.ndarray:
    """Node coordinates, shape (*resolution, n)."""
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


def _first_index(mask: np.ndarray) -> tuple[int, ...]:
    return tuple(int(i) for i in np.argwhere(mask)[0])


@dataclass(frozen=True, kw_only=True, eq=False)
class Chart:
    """
    A coordinate box with the metric coefficients sampled on a regular grid.

    Collar charts carry the collar coordinate t as the last axis, with the
    boundary of M at t = 0. Periodic axes sample [lo, hi) without repeating
    the endpoint. `taper` holds, per axis, the widths over which the chart's
    partition bump falls to zero at the low and high faces.
    """

    id: str
    role: ChartRole
    lo: tuple[float, ...]
    hi: tuple[float, ...]
    resolution: tuple[int, ...]
    metric: np.ndarray
    periodic: tuple[bool, ...] = ()
    taper: tuple[tuple[float, float], ...] = ()
    metric_form: MetricForm | None = None

    @classmethod
    def from_form(
        cls,
        *,
        id: str,
        role: ChartRole,
        lo: tuple[float, ...],
        hi: tuple[float, ...],
        resolution: tuple[int, ...],
        form: MetricForm,
        periodic: tuple[bool, ...] = (),
        taper: tuple[tuple[float, float], ...] = (),
    ) -> Chart:
        """A chart whose metric samples are a closed form evaluated at the nodes."""
        flags = periodic or (False,) * len(lo)
        if len(flags) != len(lo) or len(hi) != len(lo) or len(resolution) != len(lo):
            raise InputError(f"chart {id!r}: box, resolution and periodic disagree")
        nodes = grid_nodes(grid_axes(lo, hi, resolution, flags))
        return cls(
            id=id,
            role=role,
            lo=tuple(lo),
            hi=tuple(hi),
            resolution=tuple(resolution),
            metric=form(nodes),
            periodic=flags,
            taper=taper,
            metric_form=form,
        )

    def __post_init__(self):
        n = len(self.lo)
        if not self.periodic:
            object.__setattr__(self, "periodic", (False,) * n)
        if not self.taper:
            object.__setattr__(self, "taper", ((0.0, 0.0),) * n)

        if n < 1:
            raise InputError(f"chart {self.id!r} has no axes")
        for name in ("hi", "resolution", "periodic", "taper"):
            if len(getattr(self, name)) != n:
                raise InputError(f"chart {self.id!r}: {name} must have {n} entries")
        if any(lo >= hi for lo, hi in zip(self.lo, self.hi, strict=True)):
            raise InputError(f"chart {self.id!r}: box must satisfy lo < hi")
        if any(count < 4 for count in self.resolution):
            raise InputError(f"chart {self.id!r}: resolution must be >= 4 per axis")
        if self.metric.shape != tuple(self.resolution) + (n, n):
            raise InputError(
                f"chart {self.id!r}: metric shape {self.metric.shape} does not "
                f"match resolution {self.resolution}"
            )
        if self.is_collar and self.periodic[-1]:
            raise InputError(f"chart {self.id!r}: collar axis cannot be periodic")
        if self.role == ChartRole.BOUNDARY_COLLAR and self.lo[-1] != 0.0:
            raise InputError(f"chart {self.id!r}: boundary must sit at t = 0")
        if self.role == ChartRole.OUTER_COLLAR and self.lo[-1] >= 0.0:
            raise InputError(f"chart {self.id!r}: outer collar must reach t < 0")
        self._check_metric()

    def _check_metric(self):
        g = self.metric
        if not np.all(np.isfinite(g)):
            raise GeometryError(
                "non-finite metric sample",
                chart=self.id,
                index=_first_index(~np.isfinite(g).all(axis=(-2, -1))),
            )
        scale = np.maximum(1.0, np.abs(g).max(axis=(-2, -1)))
        asym = np.abs(g - np.swapaxes(g, -1, -2)).max(axis=(-2, -1))
        if np.any(bad := asym > SYMMETRY_TOL * scale):
            raise GeometryError(
                "metric sample is not symmetric", chart=self.id, index=_first_index(bad)
            )
        if np.any(bad := self.eigenvalues[..., 0] <= 0.0):
            raise GeometryError(
                "metric sample is not positive definite",
                chart=self.id,
                index=_first_index(bad),
            )

    ## Shape of the grid

    @property
    def dimension(self) -> int:
        return len(self.lo)

    @property
    def is_collar(self) -> bool:
        return self.role in (ChartRole.BOUNDARY_COLLAR, ChartRole.OUTER_COLLAR)

    @property
    def collar_range(self) -> tuple[float, float] | None:
        return (self.lo[-1], self.hi[-1]) if self.is_collar else None

    @cached_property
    def spacing(self) -> tuple[float, ...]:
        return tuple(
            (hi - lo) / (count if periodic else count - 1)
            for lo, hi, count, periodic in zip(
                self.lo, self.hi, self.resolution, self.periodic, strict=True
            )
        )

    @cached_property
    def axes(self) -> tuple[np.ndarray, ...]:
        return grid_axes(self.lo, self.hi, self.resolution, self.periodic)

    @cached_property
    def nodes(self) -> np.ndarray:
        """Grid node coordinates, shape (*resolution, n)."""
        return grid_nodes(self.axes)

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.metric)

    @property
    def min_eigenvalue(self) -> float:
        return float(self.eigenvalues[..., 0].min())

    ## Point queries

    def wrap(self, points: np.ndarray) -> np.ndarray:
        """Map periodic coordinates into [lo, hi)."""
        pts = np.array(points, dtype=float, ndmin=2)
        for a, periodic in enumerate(self.periodic):
            if periodic:
                period = self.hi[a] - self.lo[a]
                pts[..., a] = self.lo[a] + np.mod(pts[..., a] - self.lo[a], period)
        return pts

    def contains(self, points: np.ndarray, tol: float = CONTAINS_TOL) -> np.ndarray:
        pts = np.atleast_2d(points)
        inside = np.ones(pts.shape[:-1], dtype=bool)
        for a, periodic in enumerate(self.periodic):
            if not periodic:
                inside &= (pts[..., a] >= self.lo[a] - tol) & (
                    pts[..., a] <= self.hi[a] + tol
                )
        return inside

    def depth(self, points: np.ndarray) -> np.ndarray:
        """Distance to the nearest non-periodic face, in grid cells."""
        pts = np.atleast_2d(points)
        depth = np.full(pts.shape[:-1], np.inf)
        for a, periodic in enumerate(self.periodic):
            if not periodic:
                gap = np.minimum(pts[..., a] - self.lo[a], self.hi[a] - pts[..., a])
                depth = np.minimum(depth, gap / self.spacing[a])
        return depth

    def interpolator(self, values: np.ndarray) -> Interpolant:
        """Multilinear interpolation of a node field of shape (*resolution, ...)."""
        axes = list(self.axes)
        data = values
        for a, periodic in enumerate(self.periodic):
            if periodic:
                axes[a] = np.append(axes[a], self.hi[a])
                data = np.concatenate([data, np.take(data, [0], axis=a)], axis=a)
        rgi = RegularGridInterpolator(
            tuple(axes), data, bounds_error=False, fill_value=None
        )

        def evaluate(points: np.ndarray) -> np.ndarray:
            return rgi(self.wrap(points))

        return evaluate

    @cached_property
    def _metric_interpolant(self) -> Interpolant:
        return self.interpolator(self.metric)

    def metric_at(self, points: np.ndarray) -> np.ndarray:
        """Metric at arbitrary points; exact when the chart has a closed form."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.metric_form is not None:
            return self.metric_form(pts)
        return self._metric_interpolant(pts)

    def cell_corners(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """
        Flat node numbers, shape (M, 2^n), and coordinates, shape (M, 2^n, n),
        of the corners of the grid cells containing `points`. On periodic axes
        the corner coordinates are unwrapped so they sit next to the point.
        """
        x = self.wrap(points)
        n = self.dimension
        base = np.empty(x.shape, dtype=int)
        for a in range(n):
            cell = np.floor((x[:, a] - self.lo[a]) / self.spacing[a]).astype(int)
            upper = self.resolution[a] - (1 if self.periodic[a] else 2)
            base[:, a] = np.clip(cell, 0, upper)
        offsets = np.array(np.meshgrid(*([[0, 1]] * n), indexing="ij"))
        offsets = offsets.reshape(n, -1).T
        corners = base[:, None, :] + offsets[None, :, :]
        coords = np.asarray(self.lo) + corners * np.asarray(self.spacing)
        flat = self.flat_index(corners.reshape(-1, n)).reshape(corners.shape[:-1])
        return flat, coords

    def displacement(self, start: np.ndarray, end: np.ndarray) -> np.ndarray:
        """end - start, going the short way round on periodic axes."""
        delta = np.asarray(end, dtype=float) - np.asarray(start, dtype=float)
        for a, periodic in enumerate(self.periodic):
            if periodic:
                period = self.hi[a] - self.lo[a]
                shifted = np.mod(delta[..., a] + 0.5 * period, period)
                delta[..., a] = shifted - 0.5 * period
        return delta

    def flat_index(self, indices: np.ndarray) -> np.ndarray:
        """Flat node numbers for integer grid indices of shape (M, n)."""
        idx = np.atleast_2d(indices)
        mode = tuple("wrap" if p else "raise" for p in self.periodic)
        return np.ravel_multi_index(tuple(idx.T), self.resolution, mode=mode)


@dataclass(frozen=True, kw_only=True, eq=False)
class Transition:
    """Coordinate change from `source` to `target` on a box of source coords."""

    source: str
    target: str
    lo: tuple[float, ...]
    hi: tuple[float, ...]
    resolution: tuple[int, ...]
    chart_map: ChartMap

    def __post_init__(self):
        n = len(self.lo)
        if len(self.hi) != n or len(self.resolution) != n:
            raise InputError(f"transition {self.name}: inconsistent dimensions")
        if any(lo >= hi for lo, hi in zip(self.lo, self.hi, strict=True)):
            raise InputError(f"transition {self.name}: overlap must satisfy lo < hi")
        if any(count < 2 for count in self.resolution):
            raise InputError(f"transition {self.name}: resolution must be >= 2")
        det = np.linalg.det(self.jacobian_samples)
        if np.any(bad := ~(np.abs(det) > 1e-12)):
            raise GeometryError(
                f"transition {self.name} has a singular jacobian",
                chart=self.source,
                index=_first_index(bad),
            )

    @property
    def name(self) -> str:
        return f"{self.source}->{self.target}"

    @cached_property
    def overlap_nodes(self) -> np.ndarray:
        axes = [
            np.linspace(lo, hi, count)
            for lo, hi, count in zip(self.lo, self.hi, self.resolution, strict=True)
        ]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    @cached_property
    def map_samples(self) -> np.ndarray:
        n = len(self.lo)
        flat = self.chart_map(self.overlap_nodes.reshape(-1, n))
        return flat.reshape(self.overlap_nodes.shape)

    @cached_property
    def jacobian_samples(self) -> np.ndarray:
        n = len(self.lo)
        flat = self.chart_map.jacobian(self.overlap_nodes.reshape(-1, n))
        return flat.reshape(self.overlap_nodes.shape + (n,))

    def in_overlap(self, points: np.ndarray, tol: float = CONTAINS_TOL) -> np.ndarray:
        pts = np.atleast_2d(points)
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        return np.all((pts >= lo - tol) & (pts <= hi + tol), axis=-1)

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return self.chart_map(np.atleast_2d(points))

    def jacobian(self, points: np.ndarray) -> np.ndarray:
        return self.chart_map.jacobian(np.atleast_2d(points))


@dataclass(frozen=True, kw_only=True)
class AtlasConstants:
    r1: float
    r2: float
    m0: int
    c0: float

    def __post_init__(self):
        if self.r1 <= 0 or self.r2 < 0 or self.c0 <= 0:
            raise InputError("constants must satisfy r1 > 0, r2 >= 0, c0 > 0")
        if self.m0 < 1:
            raise InputError("m0 must be >= 1")

    def to_document(self) -> dict[str, Any]:
        return {"r1": self.r1, "r2": self.r2, "m0": self.m0, "c0": self.c0}


@dataclass(frozen=True, kw_only=True, eq=False)
class PointedManifold:
    """A chart atlas with sampled metric, transitions and a base point."""

    name: str
    dimension: int
    charts: Mapping[str, Chart]
    transitions: tuple[Transition, ...]
    base_point: ChartPoint
    has_boundary: bool
    constants: AtlasConstants

    def __post_init__(self):
        if not self.charts:
            raise InputError("a manifold needs at least one chart")
        for chart_id, chart in self.charts.items():
            if chart.id != chart_id:
                raise InputError(f"chart key {chart_id!r} differs from its id")
            if chart.dimension != self.dimension:
                raise InputError(f"chart {chart_id!r} has the wrong dimension")
        for transition in self.transitions:
            if transition.source not in self.charts:
                raise InputError(f"transition {transition.name}: unknown source")
            if transition.target not in self.charts:
                raise InputError(f"transition {transition.name}: unknown target")
            if len(transition.lo) != self.dimension:
                raise InputError(f"transition {transition.name}: wrong dimension")

        base_chart = self.charts.get(self.base_point.chart)
        if base_chart is None:
            raise InputError(f"base point chart {self.base_point.chart!r} not found")
        if base_chart.role != ChartRole.INTERIOR:
            raise InputError("base point must lie in an interior chart")
        if len(self.base_point.coords) != self.dimension or not base_chart.contains(
            self.base_point.array, tol=0.0
        )[0]:
            raise InputError(f"base point {self.base_point} outside its chart")

        collars = any(c.role == ChartRole.BOUNDARY_COLLAR for c in self.charts.values())
        if collars != self.has_boundary:
            raise InputError("has_boundary must match the presence of collar charts")
        if self.constants.m0 < self.measured_multiplicity:
            raise InputError(
                f"m0 = {self.constants.m0} is below the measured chart "
                f"multiplicity {self.measured_multiplicity}"
            )

    def chart(self, chart_id: str) -> Chart:
        try:
            return self.charts[chart_id]
        except KeyError:
            raise InputError(f"unknown chart {chart_id!r}") from None

    @cached_property
    def _outgoing(self) -> dict[str, tuple[Transition, ...]]:
        return {
            chart_id: tuple(t for t in self.transitions if t.source == chart_id)
            for chart_id in self.charts
        }

    def transitions_from(self, chart_id: str) -> tuple[Transition, ...]:
        return self._outgoing.get(chart_id, ())

    def transition(self, source: str, target: str) -> Transition | None:
        for t in self.transitions_from(source):
            if t.target == target:
                return t
        return None

    def charts_with_role(self, role: ChartRole) -> list[Chart]:
        return [c for c in self.charts.values() if c.role == role]

    def to_chart(self, point: ChartPoint, target: str) -> np.ndarray | None:
        """Coordinates of `point` in chart `target`, if one step reaches it."""
        if point.chart == target:
            return self.chart(target).wrap(point.array)[0]
        transition = self.transition(point.chart, target)
        if transition is None or not transition.in_overlap(point.array)[0]:
            return None
        image = self.chart(target).wrap(transition(point.array))
        return image[0] if self.chart(target).contains(image)[0] else None

    def representations(self, point: ChartPoint) -> list[ChartPoint]:
        """The point in its own chart and in every chart one step away."""
        found = [point]
        for transition in self.transitions_from(point.chart):
            coords = self.to_chart(point, transition.target)
            if coords is not None:
                found.append(ChartPoint.create(transition.target, coords))
        return found

    def overlap_mask(self, transition: Transition, points: np.ndarray) -> np.ndarray:
        """Which source points lie in the overlap and land inside the target."""
        pts = np.atleast_2d(points)
        mask = transition.in_overlap(pts)
        if np.any(mask):
            target = self.chart(transition.target)
            images = target.wrap(transition(pts[mask]))
            inside = target.contains(images)
            mask[np.flatnonzero(mask)[~inside]] = False
        return mask

    @cached_property
    def measured_multiplicity(self) -> int:
        worst = 1
        for chart in self.charts.values():
            flat = chart.nodes.reshape(-1, chart.dimension)
            count = np.ones(len(flat), dtype=int)
            for transition in self.transitions_from(chart.id):
                count += self.overlap_mask(transition, flat)
            worst = max(worst, int(count.max()))
        return worst


@dataclass(frozen=True, kw_only=True, eq=False)
class PartitionOfUnity:
    """Per-chart weights ψ_ℓ sampled on the chart grids."""

    weights: Mapping[str, np.ndarray]
    measured_ck_bound: float
    k: int
    multiplicity: int = field(default=1)
    profile: CutoffProfile | None = None

    def __post_init__(self):
        if not np.isfinite(self.measured_ck_bound):
            raise InputError("partition Ck bound must be finite")
        for chart_id, psi in self.weights.items():
            if np.any(psi < -1e-12) or np.any(psi > 1.0 + 1e-12):
                raise InputError(f"partition weight on {chart_id!r} outside [0, 1]")
