"""
Finite-difference Riemannian kernels on chart grids.

Index conventions, all arrays carrying grid axes in front:

    dg[..., i, j, k]        = ∂_k g_ij
    Γ[..., i, j, k]         = Γ^i_{jk}
    R[..., i, j, k, l]      = R^i_{jkl}, with R(∂_k, ∂_l)∂_j = R^i_{jkl} ∂_i
    Rm[..., i, j, k, l]     = g_im R^m_{jkl}

Derivatives are second-order central differences with the grid spacing as
stencil width (one-sided second order at grid edges, wrapped on periodic
axes). Covariant derivatives append their new index last.
"""

import logging
import string
from dataclasses import dataclass
from functools import cached_property
from typing import Any

import numpy as np
from cachetools import LRUCache, cached
from cachetools.keys import hashkey
from scipy.interpolate import RegularGridInterpolator

from collarforge.atlas_types import (
    CONTAINS_TOL,
    Chart,
    ChartPoint,
    ChartRole,
    Interpolant,
    PointedManifold,
)
from collarforge.errors import DomainError, InputError, StencilError

logger = logging.getLogger(__name__)

_geometry_cache: LRUCache = LRUCache(maxsize=64)

# Step for differentiating closed-form metrics at a point.
CLOSED_FORM_STEP = 1e-5

## Grid differentiation


def grid_partial(
    values: np.ndarray, axis: int, h: float, periodic: bool = False
) -> np.ndarray:
    """∂ along grid axis `axis` of a node field."""
    if periodic:
        ahead = np.roll(values, -1, axis=axis)
        behind = np.roll(values, 1, axis=axis)
        return (ahead - behind) / (2.0 * h)
    return np.gradient(values, h, axis=axis, edge_order=2)


def grid_gradient(
    values: np.ndarray, spacing: tuple[float, ...], periodic: tuple[bool, ...]
) -> np.ndarray:
    """All first partials of a node field, stacked on a new last axis."""
    return np.stack(
        [
            grid_partial(values, a, h, p)
            for a, (h, p) in enumerate(zip(spacing, periodic, strict=True))
        ],
        axis=-1,
    )


def ck_norm(
    values: np.ndarray,
    spacing: tuple[float, ...],
    periodic: tuple[bool, ...],
    k: int,
) -> float:
    """max over l <= k of the largest coordinate partial of order l."""
    grid = len(spacing)
    worst = 0.0
    derivative = values
    for order in range(k + 1):
        if order:
            derivative = grid_gradient(derivative, spacing, periodic)
        worst = max(worst, float(np.max(np.abs(derivative))))
        # Partials of the same order sit on the trailing axes.
        derivative = derivative.reshape(derivative.shape[:grid] + (-1,))
    return worst


## Christoffel symbols and curvature


def christoffel(g: np.ndarray, g_inv: np.ndarray, dg: np.ndarray) -> np.ndarray:
    """Γ^i_{jk} = ½ g^{il} (∂_j g_lk + ∂_k g_lj - ∂_l g_jk)."""
    combined = (
        np.swapaxes(dg, -1, -2) + dg - np.einsum("...jkl->...ljk", dg)
    )
    return 0.5 * np.einsum("...il,...ljk->...ijk", g_inv, combined)


def riemann(gamma: np.ndarray, d_gamma: np.ndarray) -> np.ndarray:
    """R^i_{jkl} from Γ and d_gamma[..., i, j, k, m] = ∂_m Γ^i_{jk}."""
    return (
        np.einsum("...iljk->...ijkl", d_gamma)
        - np.einsum("...ikjl->...ijkl", d_gamma)
        + np.einsum("...ikp,...plj->...ijkl", gamma, gamma)
        - np.einsum("...ilp,...pkj->...ijkl", gamma, gamma)
    )


def lower_first(g: np.ndarray, r_up: np.ndarray) -> np.ndarray:
    return np.einsum("...im,...mjkl->...ijkl", g, r_up)


def covariant_derivative(
    tensor: np.ndarray,
    gamma: np.ndarray,
    spacing: tuple[float, ...],
    periodic: tuple[bool, ...],
) -> np.ndarray:
    """
    ∇T for a covariant tensor field T on a grid:
    (∇T)_{a₁…a_r b} = ∂_b T_{a₁…a_r} - Σ_s Γ^p_{b a_s} T_{a₁…p…a_r}.
    """
    grid = len(spacing)
    rank = tensor.ndim - grid
    out = grid_gradient(tensor, spacing, periodic)
    letters = string.ascii_lowercase[:rank]
    for s, index in enumerate(letters):
        contracted = letters[:s] + "z" + letters[s + 1 :]
        out -= np.einsum(
            f"...{contracted},...zy{index}->...{letters}y", tensor, gamma
        )
    return out


def tensor_norm(tensor: np.ndarray, g_inv: np.ndarray) -> np.ndarray:
    """|T|_g for a covariant tensor field, raising every index with g^{-1}."""
    grid = g_inv.ndim - 2
    rank = tensor.ndim - grid
    letters = string.ascii_lowercase[:rank]
    raised = tensor
    for s, index in enumerate(letters):
        renamed = letters[:s] + "z" + letters[s + 1 :]
        raised = np.einsum(f"...{letters},...z{index}->...{renamed}", raised, g_inv)
    axes = tuple(range(grid, tensor.ndim))
    return np.sqrt(np.maximum(np.sum(tensor * raised, axis=axes), 0.0))


def sectional_curvature(
    rm: np.ndarray, g: np.ndarray, u: np.ndarray, v: np.ndarray
) -> float:
    """K(u, v) = g(R(u, v)v, u) / (|u|²|v|² - g(u, v)²) at a point."""
    numerator = np.einsum("ijkl,i,j,k,l->", rm, u, v, u, v)
    area = (u @ g @ u) * (v @ g @ v) - (u @ g @ v) ** 2
    return float(numerator / area)


## Local windows


@dataclass(frozen=True, kw_only=True)
class _Window:
    """A block of grid nodes around a point, periodic axes unwrapped."""

    indices: tuple[np.ndarray, ...]
    axes: tuple[np.ndarray, ...]
    point: np.ndarray

    def take(self, field: np.ndarray) -> np.ndarray:
        return field[np.ix_(*self.indices)]

    def at_point(self, field: np.ndarray) -> np.ndarray:
        rgi = RegularGridInterpolator(self.axes, field)
        return rgi(self.point[None])[0]


def _window_axis(chart: Chart, a: int, x: float, width: int, where: ChartPoint):
    h = chart.spacing[a]
    center = int(round((x - chart.lo[a]) / h))
    idx = np.arange(center - width, center + width + 1)
    if chart.periodic[a]:
        return np.mod(idx, chart.resolution[a]), chart.lo[a] + idx * h
    if idx[0] < 0 or idx[-1] > chart.resolution[a] - 1:
        raise StencilError(
            f"a stencil of half-width {width} around {where} leaves the grid of "
            f"chart {chart.id!r} on axis {a}; refine the grid or move inward"
        )
    return idx, chart.axes[a][idx]


def _window(chart: Chart, x: np.ndarray, width: int, where: ChartPoint) -> _Window:
    indices, axes = zip(
        *(_window_axis(chart, a, x[a], width, where) for a in range(chart.dimension)),
        strict=True,
    )
    return _Window(indices=indices, axes=axes, point=x)


## Curvature reports


@dataclass(frozen=True, kw_only=True, eq=False)
class CurvatureReport:
    point: ChartPoint
    christoffel: np.ndarray
    rm: np.ndarray
    metric: np.ndarray
    nabla_rm_norms: tuple[float, ...]
    stencil_spacing: tuple[float, ...]
    symmetry_defects: dict[str, float]

    @property
    def k(self) -> int:
        return len(self.nabla_rm_norms) - 1

    def sectional_curvature(
        self, u: np.ndarray | None = None, v: np.ndarray | None = None
    ) -> float:
        n = self.metric.shape[-1]
        u = np.eye(n)[0] if u is None else u
        v = np.eye(n)[1] if v is None else v
        return sectional_curvature(self.rm, self.metric, u, v)

    def to_document(self) -> dict[str, Any]:
        return {
            "point": self.point.to_document(),
            "christoffel": self.christoffel.tolist(),
            "rm": self.rm.tolist(),
            "nabla_rm_norms": list(self.nabla_rm_norms),
            "stencil_spacing": list(self.stencil_spacing),
            "symmetry_defects": self.symmetry_defects,
        }


def _symmetry_defects(rm: np.ndarray) -> dict[str, float]:
    bianchi = (
        rm
        + np.einsum("...iklj->...ijkl", rm)
        + np.einsum("...iljk->...ijkl", rm)
    )
    return {
        "antisymmetry": float(np.abs(rm + np.swapaxes(rm, -4, -3)).max()),
        "pair_symmetry": float(
            np.abs(rm - np.einsum("...ijkl->...klij", rm)).max()
        ),
        "bianchi": float(np.abs(bianchi).max()),
    }


def curvature_report(
    manifold: PointedManifold, chart_id: str, point: np.ndarray, k: int = 0
) -> CurvatureReport:
    """
    Γ, Rm and |∇^l Rm|_g for l = 0..k at a point, from central differences of
    the sampled metric in a window of half-width k + 2 around it.
    """
    if k < 0:
        raise InputError(f"derivative order must be >= 0, got {k}")
    chart = manifold.chart(chart_id)
    x = chart.wrap(point)[0]
    where = ChartPoint.create(chart_id, x)
    window = _window(chart, x, k + 2, where)
    spacing = chart.spacing
    flat = (False,) * chart.dimension

    g = window.take(chart.metric)
    g_inv = np.linalg.inv(g)
    gamma = christoffel(g, g_inv, grid_gradient(g, spacing, flat))
    r_up = riemann(gamma, grid_gradient(gamma, spacing, flat))
    rm = lower_first(g, r_up)

    norms = []
    tensor = rm
    for order in range(k + 1):
        if order:
            tensor = covariant_derivative(tensor, gamma, spacing, flat)
        norms.append(float(window.at_point(tensor_norm(tensor, g_inv))))

    rm_here = window.at_point(rm)
    return CurvatureReport(
        point=where,
        christoffel=window.at_point(gamma),
        rm=rm_here,
        metric=window.at_point(g),
        nabla_rm_norms=tuple(norms),
        stencil_spacing=spacing,
        symmetry_defects=_symmetry_defects(rm_here),
    )


## Whole-chart geometry for integrators


@dataclass(frozen=True, kw_only=True, eq=False)
class ChartGeometry:
    """Γ and R^i_{jkl} on a whole chart grid, with point evaluation."""

    chart: Chart
    christoffel: np.ndarray
    riemann: np.ndarray

    @cached_property
    def _interpolant(self) -> Interpolant:
        res = self.chart.resolution
        stacked = np.concatenate(
            [
                self.chart.metric.reshape(res + (-1,)),
                self.christoffel.reshape(res + (-1,)),
                self.riemann.reshape(res + (-1,)),
            ],
            axis=-1,
        )
        return self.chart.interpolator(stacked)

    def at(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Metric, Γ and R^i_{jkl} at one point."""
        n = self.chart.dimension
        values = self._interpolant(np.asarray(x, dtype=float)[None])[0]
        g = values[: n**2].reshape(n, n)
        gamma = values[n**2 : n**2 + n**3].reshape(n, n, n)
        r_up = values[n**2 + n**3 :].reshape(n, n, n, n)
        form = self.chart.metric_form
        if form is not None:
            g, gamma = closed_form_christoffel(form, np.asarray(x, dtype=float))
        return g, gamma, r_up


def closed_form_christoffel(form, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Metric and Γ at x for a chart with a closed-form metric."""
    n = len(x)
    steps = CLOSED_FORM_STEP * np.eye(n)
    samples = form(np.concatenate([x[None], x + steps, x - steps]))
    g = samples[0]
    dg = np.moveaxis((samples[1 : n + 1] - samples[n + 1 :]), 0, -1)
    return g, christoffel(g, np.linalg.inv(g), dg / (2.0 * CLOSED_FORM_STEP))


@cached(cache=_geometry_cache, key=lambda chart: hashkey(chart))
def chart_geometry(chart: Chart) -> ChartGeometry:
    g = chart.metric
    g_inv = np.linalg.inv(g)
    gamma = christoffel(g, g_inv, grid_gradient(g, chart.spacing, chart.periodic))
    d_gamma = grid_gradient(gamma, chart.spacing, chart.periodic)
    logger.debug(f"computed Christoffel symbols and curvature on chart {chart.id!r}")
    r_up = riemann(gamma, d_gamma)
    return ChartGeometry(chart=chart, christoffel=gamma, riemann=r_up)


## Second fundamental form


@dataclass(frozen=True, kw_only=True, eq=False)
class SecondFundamentalForm:
    """
    II(u, w) = g(∇_u w, ν) for tangent u, w and the inward unit normal ν, so
    a convex boundary such as a round sphere bounding a ball is positive.
    `weingarten[a]` holds the components of ∇_{∂_a} ν.
    """

    point: ChartPoint
    ii: np.ndarray
    nabla_ii_norms: tuple[float, ...]
    inward_normal: np.ndarray
    boundary_metric: np.ndarray
    weingarten: np.ndarray

    def __post_init__(self):
        scale = max(1.0, float(np.abs(self.ii).max()))
        if np.abs(self.ii - self.ii.T).max() > 1e-8 * scale:
            raise ValueError(f"second fundamental form at {self.point} not symmetric")
        if self.inward_normal[-1] <= 0:
            raise ValueError(f"normal at {self.point} does not point inward")

    def to_document(self) -> dict[str, Any]:
        return {
            "point": self.point.to_document(),
            "ii": self.ii.tolist(),
            "nabla_ii_norms": list(self.nabla_ii_norms),
            "inward_normal": self.inward_normal.tolist(),
        }


def inward_normal(g_inv: np.ndarray) -> np.ndarray:
    """ν = grad t / |grad t| from the inverse metric of a collar chart."""
    return g_inv[..., :, -1] / np.sqrt(g_inv[..., -1, -1])[..., None]


def second_fundamental_form(
    manifold: PointedManifold, point: ChartPoint, k: int = 0
) -> SecondFundamentalForm:
    chart = manifold.chart(point.chart)
    x = chart.wrap(point.array)[0]
    if chart.role != ChartRole.BOUNDARY_COLLAR or abs(x[-1]) > CONTAINS_TOL:
        raise DomainError(f"{point} is not on the boundary face of a collar chart")
    n = chart.dimension
    m = n - 1
    x[-1] = 0.0

    # Tangential window around the point, three collar layers above t = 0.
    tangential = [_window_axis(chart, a, x[a], k + 2, point) for a in range(m)]
    indices = [idx for idx, _ in tangential] + [np.arange(3)]
    axes = tuple(ax for _, ax in tangential)
    g = chart.metric[np.ix_(*indices)]
    dg = grid_gradient(g, chart.spacing, (False,) * n)
    g0 = g[..., 0, :, :]
    dg0 = dg[..., 0, :, :, :]
    g0_inv = np.linalg.inv(g0)

    # Γ_{j,ab} = ½(∂_a g_jb + ∂_b g_ja - ∂_j g_ab)
    first_kind = 0.5 * (
        np.swapaxes(dg0, -1, -2) + dg0 - np.einsum("...abj->...jab", dg0)
    )
    nu = inward_normal(g0_inv)
    ii = np.einsum("...jab,...j->...ab", first_kind[..., :m, :m], nu)

    h = g0[..., :m, :m]
    h_inv = np.linalg.inv(h)
    tangential_spacing = chart.spacing[:m]
    flat = (False,) * m
    gamma_h = christoffel(h, h_inv, dg0[..., :m, :m, :m])

    gamma = christoffel(g0, g0_inv, dg0)
    d_nu = grid_gradient(nu, tangential_spacing, flat)  # (..., i, a)
    weingarten = np.swapaxes(d_nu, -1, -2) + np.einsum(
        "...iaj,...j->...ai", gamma[..., :, :m, :], nu
    )

    def at_point(field: np.ndarray) -> np.ndarray:
        rgi = RegularGridInterpolator(axes, field)
        return rgi(x[None, :m])[0]

    norms = []
    tensor = ii
    for order in range(k + 1):
        if order:
            tensor = covariant_derivative(tensor, gamma_h, tangential_spacing, flat)
        norms.append(float(at_point(tensor_norm(tensor, h_inv))))

    return SecondFundamentalForm(
        point=ChartPoint.create(chart.id, x),
        ii=at_point(ii),
        nabla_ii_norms=tuple(norms),
        inward_normal=at_point(nu),
        boundary_metric=at_point(h),
        weingarten=at_point(weingarten),
    )
