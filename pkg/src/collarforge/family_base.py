import math
from abc import ABC, abstractmethod
from collections.abc import Mapping
from typing import Any

from collarforge.atlas_types import AtlasConstants, PointedManifold, Transition
from collarforge.closed_forms import MapForm
from collarforge.errors import InputError

type Params = Mapping[str, Any]

# Declared partition bound of the builtin atlases; measured bounds stay below it.
BUILTIN_C0 = 1.0e3


def grid_count(length: float, density: float, *, periodic: bool = False) -> int:
    """Nodes along an axis of `length` at about `density` nodes per unit length."""
    cells = max(1, math.ceil(length * density - 1e-9))
    return max(4, cells if periodic else cells + 1)


def even(count: int) -> int:
    """Rounds a node count up to an even number, keeping box centres off the grid."""
    return count + count % 2


def map_transition(
    source: str,
    target: str,
    lo: tuple[float, ...],
    hi: tuple[float, ...],
    resolution: tuple[int, ...],
    map_name: str,
    **params: Any,
) -> Transition:
    return Transition(
        source=source,
        target=target,
        lo=lo,
        hi=hi,
        resolution=resolution,
        chart_map=MapForm(name=map_name, params=params),
    )


def builtin_constants(*, r1: float, r2: float, m0: int = 2) -> AtlasConstants:
    return AtlasConstants(r1=r1, r2=r2, m0=m0, c0=BUILTIN_C0)


class FamilyBase(ABC):
    """Base class for all builtin manifold family plugins."""

    @property
    @abstractmethod
    def name(self) -> str:
        """The token used on the command line and in `builtin_manifold`."""
        ...

    @property
    @abstractmethod
    def summary(self) -> str:
        """One line describing the family and its parameters."""
        ...

    @property
    def defaults(self) -> Mapping[str, Any]:
        return {}

    @abstractmethod
    def build(self, params: Params) -> PointedManifold:
        """Builds the manifold for the given parameters."""
        ...

    ## Parameter helpers shared by the plugins

    def resolve(self, params: Params) -> dict[str, Any]:
        """Defaults overlaid with `params`; unknown names are rejected."""
        unknown = set(params) - set(self.defaults)
        if unknown:
            raise InputError(f"{self.name}: unknown parameters {sorted(unknown)}")
        return {**self.defaults, **params}

    def positive(self, params: Params, key: str) -> float:
        try:
            value = float(params[key])
        except (TypeError, ValueError):
            raise InputError(f"{self.name}: {key} must be a number") from None
        if not value > 0:
            raise InputError(f"{self.name}: {key} must be > 0, got {value}")
        return value

    def count(self, params: Params, key: str, minimum: int = 4) -> int:
        try:
            value = int(params[key])
        except (TypeError, ValueError):
            raise InputError(f"{self.name}: {key} must be an integer") from None
        if value < minimum:
            raise InputError(f"{self.name}: {key} must be >= {minimum}, got {value}")
        return value

    def dimension(self, params: Params, allowed: tuple[int, ...]) -> int:
        n = self.count(params, "n", minimum=1)
        if n not in allowed:
            raise InputError(f"{self.name}: n must be one of {allowed}, got {n}")
        return n
