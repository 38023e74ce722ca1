"""Exceptions raised by collarforge.

Every error derives from CollarforgeError and from the builtin that best
describes it, so callers can keep catching ValueError or RuntimeError.
"""

from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from collarforge.atlas_types import ChartPoint


class CollarforgeError(Exception):
    """Root of the package's exception hierarchy."""


## Bad inputs


class InputError(CollarforgeError, ValueError):
    """Malformed document, unknown family, bad parameter."""


class GeometryError(CollarforgeError, ValueError):
    """A metric sample is not symmetric positive definite."""

    def __init__(self, message: str, *, chart: str, index: tuple[int, ...]):
        super().__init__(f"{message} (chart {chart!r}, grid index {index})")
        self.chart = chart
        self.index = index


class DomainError(CollarforgeError, ValueError):
    pass


class PreconditionError(CollarforgeError, ValueError):
    pass


class RangeError(CollarforgeError, ValueError):
    pass


class SizeError(CollarforgeError, ValueError):
    pass


class ConditioningError(CollarforgeError, ValueError):
    pass


## Failures while computing


class StencilError(CollarforgeError, RuntimeError):
    """A finite-difference stencil does not fit on the chart grid."""


class EscapeError(CollarforgeError, RuntimeError):
    """A curve left the atlas.

    `through_boundary` is True when the curve crossed the t = 0 face of a
    boundary-collar chart, i.e. it left M rather than the sampled region.
    """

    def __init__(
        self,
        message: str,
        *,
        exit_point: ChartPoint,
        through_boundary: bool = False,
        arc_length: float | None = None,
    ):
        super().__init__(f"{message} at {exit_point}")
        self.exit_point = exit_point
        self.through_boundary = through_boundary
        self.arc_length = arc_length


class CoverageError(CollarforgeError, RuntimeError):
    pass


class UnreachableError(CollarforgeError, RuntimeError):
    pass


class ToleranceError(CollarforgeError, RuntimeError):
    pass


# Errors that the command line reports as bad input (exit code 2).
INPUT_ERRORS: tuple[type[CollarforgeError], ...] = (
    InputError,
    GeometryError,
    SizeError,
)
