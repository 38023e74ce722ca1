from dataclasses import dataclass
from functools import cached_property
from typing import Any, Protocol

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from collarforge.errors import InputError


class ChartMap(Protocol):
    """A coordinate change from a source chart into a target chart."""

    def __call__(self, points: np.ndarray) -> np.ndarray: ...

    def jacobian(self, points: np.ndarray) -> np.ndarray: ...

    def to_document(self) -> dict[str, Any] | None: ...


@dataclass(frozen=True, kw_only=True, eq=False)
class SampledMap:
    """
    A coordinate change known only at the nodes of the overlap grid. Values in
    between are multilinear interpolations of the samples.
    """

    lo: tuple[float, ...]
    hi: tuple[float, ...]
    values: np.ndarray  # (*resolution, n)
    jacobians: np.ndarray  # (*resolution, n, n)

    def __post_init__(self):
        n = len(self.lo)
        resolution = self.values.shape[:-1]
        if len(resolution) != n or self.values.shape[-1] != n:
            raise InputError("sampled map values must have shape (*resolution, n)")
        if self.jacobians.shape != resolution + (n, n):
            raise InputError("sampled map jacobians must be (*resolution, n, n)")
        if not np.all(np.isfinite(self.values)) or not np.all(
            np.isfinite(self.jacobians)
        ):
            raise InputError("sampled map contains non-finite values")

    @cached_property
    def _axes(self) -> tuple[np.ndarray, ...]:
        resolution = self.values.shape[:-1]
        return tuple(
            np.linspace(lo, hi, count)
            for lo, hi, count in zip(self.lo, self.hi, resolution, strict=True)
        )

    @cached_property
    def _value_interpolator(self) -> RegularGridInterpolator:
        return RegularGridInterpolator(
            self._axes, self.values, bounds_error=False, fill_value=None
        )

    @cached_property
    def _jacobian_interpolator(self) -> RegularGridInterpolator:
        return RegularGridInterpolator(
            self._axes, self.jacobians, bounds_error=False, fill_value=None
        )

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return self._value_interpolator(np.atleast_2d(points))

    def jacobian(self, points: np.ndarray) -> np.ndarray:
        return self._jacobian_interpolator(np.atleast_2d(points))

    def to_document(self) -> dict[str, Any] | None:
        return {
            "kind": "samples",
            "resolution": list(self.values.shape[:-1]),
            "values": self.values.tolist(),
            "jacobians": self.jacobians.tolist(),
        }


@dataclass(frozen=True, kw_only=True, eq=False)
class BoundarySliceMap:
    """Restriction of a collar-to-collar map to the t = 0 slice."""

    base: ChartMap

    @staticmethod
    def _lift(points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.concatenate([pts, np.zeros(pts.shape[:-1] + (1,))], axis=-1)

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return self.base(self._lift(points))[..., :-1]

    def jacobian(self, points: np.ndarray) -> np.ndarray:
        return self.base.jacobian(self._lift(points))[..., :-1, :-1]

    def to_document(self) -> dict[str, Any] | None:
        return None


@dataclass(frozen=True, kw_only=True, eq=False)
class CollarProductMap:
    """
    Extension of a collar-to-collar map to negative collar coordinates. For
    t >= 0 it is the base map; for t < 0 it is (y, t) -> (base(y, 0), t).
    """

    base: ChartMap

    def __call__(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        images = np.empty_like(pts)
        outside = pts[..., -1] < 0.0
        if np.any(~outside):
            images[~outside] = self.base(pts[~outside])
        if np.any(outside):
            slice_map = BoundarySliceMap(base=self.base)
            images[outside, :-1] = slice_map(pts[outside, :-1])
            images[outside, -1] = pts[outside, -1]
        return images

    def jacobian(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        n = pts.shape[-1]
        jac = np.zeros(pts.shape[:-1] + (n, n))
        outside = pts[..., -1] < 0.0
        if np.any(~outside):
            jac[~outside] = self.base.jacobian(pts[~outside])
        if np.any(outside):
            slice_map = BoundarySliceMap(base=self.base)
            jac[outside, :-1, :-1] = slice_map.jacobian(pts[outside, :-1])
            jac[outside, -1, -1] = 1.0
        return jac

    def to_document(self) -> dict[str, Any] | None:
        return None
