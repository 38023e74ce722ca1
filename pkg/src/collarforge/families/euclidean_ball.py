import math

from collarforge.atlas_types import Chart, ChartPoint, ChartRole, PointedManifold
from collarforge.closed_forms import MetricForm
from collarforge.errors import InputError
from collarforge.family_base import (
    FamilyBase,
    Params,
    builtin_constants,
    even,
    grid_count,
    map_transition,
)


class EuclideanBall(FamilyBase):
    """
    The closed disk of radius R: a Cartesian core square and a periodic polar
    collar (φ, t) with t = R - |x|. The square lies between the inner collar
    circle and the inscribed square of the disk.
    """

    @property
    def name(self) -> str:
        return "euclidean_ball"

    @property
    def summary(self) -> str:
        return (
            "closed Euclidean disk (n=2): radius, r2 (collar width, default "
            "radius/2), resolution (core nodes per side)"
        )

    @property
    def defaults(self) -> Params:
        return {"n": 2, "radius": 3.0, "r2": None, "resolution": 48}

    def build(self, params: Params) -> PointedManifold:
        p = self.resolve(params)
        self.dimension(p, (2,))
        radius = self.positive(p, "radius")
        r2 = 0.5 * radius if p["r2"] is None else self.positive(p, "r2")
        narrowest = radius * (1.0 - 1.0 / math.sqrt(2.0))
        if not narrowest < r2 < radius:
            raise InputError(
                f"{self.name}: r2 must lie in ({narrowest:.4g}, {radius:g}), got {r2:g}"
            )
        count = self.count(p, "resolution")

        half = 0.5 * ((radius - r2) + radius / math.sqrt(2.0))
        margin = 0.5 * (half - (radius - r2))
        density = (count - 1) / (2.0 * half)
        core = Chart.from_form(
            id="core",
            role=ChartRole.INTERIOR,
            lo=(-half, -half),
            hi=(half, half),
            resolution=(count, count),
            form=MetricForm(name="euclidean"),
            taper=((margin, margin), (margin, margin)),
        )
        collar_res = (
            grid_count(2.0 * math.pi * radius, density, periodic=True),
            grid_count(r2, density),
        )
        collar = Chart.from_form(
            id="collar",
            role=ChartRole.BOUNDARY_COLLAR,
            lo=(0.0, 0.0),
            hi=(2.0 * math.pi, r2),
            resolution=collar_res,
            form=MetricForm(name="polar_collar", params={"radius": radius}),
            periodic=(True, False),
            taper=((0.0, 0.0), (0.0, 0.5 * r2)),
        )
        transitions = (
            map_transition(
                "core",
                "collar",
                core.lo,
                core.hi,
                (even(count), even(count)),
                "cartesian_to_polar",
                radius=radius,
            ),
            map_transition(
                "collar",
                "core",
                collar.lo,
                collar.hi,
                collar_res,
                "polar_to_cartesian",
                radius=radius,
            ),
        )
        return PointedManifold(
            name=f"euclidean_ball(radius={radius:g})",
            dimension=2,
            charts={"core": core, "collar": collar},
            transitions=transitions,
            base_point=ChartPoint.create("core", (0.0, 0.0)),
            has_boundary=True,
            constants=builtin_constants(r1=math.pi, r2=r2),
        )
