"""
Closed-form chart metrics and coordinate changes.

The builtin families are assembled from these. Manifold documents can refer to
them by name (kind "builtin"), which lets a document be rebuilt exactly rather
than from interpolated samples.
"""

from collections.abc import Callable, Mapping
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from collarforge.errors import InputError

type MetricFn = Callable[..., np.ndarray]
type MapFn = Callable[..., tuple[np.ndarray, np.ndarray]]


def _diag(*entries: np.ndarray) -> np.ndarray:
    n = len(entries)
    shape = np.broadcast(*entries).shape
    g = np.zeros(shape + (n, n))
    for i, entry in enumerate(entries):
        g[..., i, i] = entry
    return g


## Metric coefficient fields. Each takes points of shape (..., n).


def _euclidean(points: np.ndarray) -> np.ndarray:
    n = points.shape[-1]
    return np.broadcast_to(np.eye(n), points.shape[:-1] + (n, n)).copy()


def _flat_polar(points: np.ndarray) -> np.ndarray:
    r = points[..., 0]
    return _diag(np.ones_like(r), r**2)


def _round_polar(points: np.ndarray, *, sphere_radius: float = 1.0) -> np.ndarray:
    theta = points[..., 0]
    rho2 = sphere_radius**2
    return _diag(np.full_like(theta, rho2), rho2 * np.sin(theta) ** 2)


def _polar_collar(points: np.ndarray, *, radius: float) -> np.ndarray:
    t = points[..., 1]
    return _diag((radius - t) ** 2, np.ones_like(t))


def _cap_collar(
    points: np.ndarray, *, sphere_radius: float, polar_angle: float
) -> np.ndarray:
    t = points[..., 1]
    theta = polar_angle - t / sphere_radius
    return _diag(sphere_radius**2 * np.sin(theta) ** 2, np.ones_like(t))


def _stereographic(points: np.ndarray, *, sphere_radius: float = 1.0) -> np.ndarray:
    n = points.shape[-1]
    factor = 4.0 * sphere_radius**2 / (1.0 + np.sum(points**2, axis=-1)) ** 2
    return factor[..., None, None] * np.eye(n)


def _revolution(
    points: np.ndarray, *, radius: float, bulge: float, height: float
) -> np.ndarray:
    t = points[..., 1]
    profile = radius * (1.0 + bulge * np.sin(np.pi * t / height))
    return _diag(profile**2, np.ones_like(t))


METRICS: dict[str, MetricFn] = {
    "euclidean": _euclidean,
    "flat_polar": _flat_polar,
    "round_polar": _round_polar,
    "polar_collar": _polar_collar,
    "cap_collar": _cap_collar,
    "stereographic": _stereographic,
    "revolution": _revolution,
}


@dataclass(frozen=True, kw_only=True, eq=False)
class MetricForm:
    """A named closed-form metric, optionally multiplied by a constant."""

    name: str
    params: Mapping[str, float] = field(default_factory=dict)
    scale: float = 1.0

    def __post_init__(self):
        if self.name not in METRICS:
            raise InputError(f"unknown builtin metric {self.name!r}")
        if self.scale <= 0:
            raise InputError("metric scale must be > 0")

    def __call__(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        try:
            values = METRICS[self.name](pts, **self.params)
        except TypeError as e:
            raise InputError(f"bad parameters for metric {self.name!r}: {e}") from e
        return self.scale * values

    def scaled(self, factor: float) -> MetricForm:
        return MetricForm(name=self.name, params=self.params, scale=self.scale * factor)

    def to_document(self) -> dict[str, Any]:
        return {
            "kind": "builtin",
            "family": self.name,
            "params": dict(self.params),
            "scale": self.scale,
        }


## Coordinate changes. Each returns (images, jacobians), the jacobian rows
## indexing output coordinates.


def _identity(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return points.copy(), _euclidean(points)


def _shift(
    points: np.ndarray, *, offset: tuple[float, ...]
) -> tuple[np.ndarray, np.ndarray]:
    return points + np.asarray(offset, dtype=float), _euclidean(points)


def _flip_collar(
    points: np.ndarray, *, height: float
) -> tuple[np.ndarray, np.ndarray]:
    images = points.copy()
    images[..., -1] = height - points[..., -1]
    jac = _euclidean(points)
    jac[..., -1, -1] = -1.0
    return images, jac


def _polar_to_cartesian(
    points: np.ndarray, *, radius: float
) -> tuple[np.ndarray, np.ndarray]:
    phi, t = points[..., 0], points[..., 1]
    r = radius - t
    cos, sin = np.cos(phi), np.sin(phi)
    images = np.stack([r * cos, r * sin], axis=-1)
    jac = np.empty(points.shape[:-1] + (2, 2))
    jac[..., 0, 0], jac[..., 0, 1] = -r * sin, -cos
    jac[..., 1, 0], jac[..., 1, 1] = r * cos, -sin
    return images, jac


def _cartesian_to_polar(
    points: np.ndarray, *, radius: float
) -> tuple[np.ndarray, np.ndarray]:
    x, y = points[..., 0], points[..., 1]
    r2 = x**2 + y**2
    r = np.sqrt(r2)
    images = np.stack([np.mod(np.arctan2(y, x), 2 * np.pi), radius - r], axis=-1)
    jac = np.empty(points.shape[:-1] + (2, 2))
    jac[..., 0, 0], jac[..., 0, 1] = -y / r2, x / r2
    jac[..., 1, 0], jac[..., 1, 1] = -x / r, -y / r
    return images, jac


def _cap_collar_to_stereo(
    points: np.ndarray, *, sphere_radius: float, polar_angle: float
) -> tuple[np.ndarray, np.ndarray]:
    phi, t = points[..., 0], points[..., 1]
    half = 0.5 * (polar_angle - t / sphere_radius)
    s = np.tan(half)
    ds_dt = -0.5 / (sphere_radius * np.cos(half) ** 2)
    cos, sin = np.cos(phi), np.sin(phi)
    images = np.stack([s * cos, s * sin], axis=-1)
    jac = np.empty(points.shape[:-1] + (2, 2))
    jac[..., 0, 0], jac[..., 0, 1] = -s * sin, ds_dt * cos
    jac[..., 1, 0], jac[..., 1, 1] = s * cos, ds_dt * sin
    return images, jac


def _stereo_to_cap_collar(
    points: np.ndarray, *, sphere_radius: float, polar_angle: float
) -> tuple[np.ndarray, np.ndarray]:
    x, y = points[..., 0], points[..., 1]
    s2 = x**2 + y**2
    s = np.sqrt(s2)
    theta = 2.0 * np.arctan(s)
    phi = np.mod(np.arctan2(y, x), 2 * np.pi)
    images = np.stack([phi, sphere_radius * (polar_angle - theta)], axis=-1)
    dt_ds = -2.0 * sphere_radius / (1.0 + s2)
    jac = np.empty(points.shape[:-1] + (2, 2))
    jac[..., 0, 0], jac[..., 0, 1] = -y / s2, x / s2
    jac[..., 1, 0], jac[..., 1, 1] = dt_ds * x / s, dt_ds * y / s
    return images, jac


def _inversion(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = points.shape[-1]
    r2 = np.sum(points**2, axis=-1)[..., None]
    images = points / r2
    outer = np.einsum("...i,...j->...ij", points, points)
    jac = (np.eye(n) * r2[..., None] - 2.0 * outer) / (r2[..., None] ** 2)
    return images, jac


MAPS: dict[str, MapFn] = {
    "identity": _identity,
    "shift": _shift,
    "flip_collar": _flip_collar,
    "polar_to_cartesian": _polar_to_cartesian,
    "cartesian_to_polar": _cartesian_to_polar,
    "cap_collar_to_stereo": _cap_collar_to_stereo,
    "stereo_to_cap_collar": _stereo_to_cap_collar,
    "inversion": _inversion,
}


@dataclass(frozen=True, kw_only=True, eq=False)
class MapForm:
    """A named closed-form coordinate change between two charts."""

    name: str
    params: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.name not in MAPS:
            raise InputError(f"unknown builtin transition map {self.name!r}")

    def _evaluate(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        try:
            return MAPS[self.name](pts, **self.params)
        except TypeError as e:
            raise InputError(f"bad parameters for map {self.name!r}: {e}") from e

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return self._evaluate(points)[0]

    def jacobian(self, points: np.ndarray) -> np.ndarray:
        return self._evaluate(points)[1]

    def to_document(self) -> dict[str, Any] | None:
        params = {
            k: list(v) if isinstance(v, tuple | list) else v
            for k, v in self.params.items()
        }
        return {"kind": "builtin", "name": self.name, "params": params}
