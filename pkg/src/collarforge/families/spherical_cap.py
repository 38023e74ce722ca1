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


class SphericalCap(FamilyBase):
    """
    The cap θ <= θmax of a round sphere of radius ρ, centred at the north pole.
    A stereographic square around the pole overlaps a collar chart (φ, t) with
    t = ρ(θmax - θ), in which the metric is diag(ρ² sin²θ, 1).
    """

    @property
    def name(self) -> str:
        return "spherical_cap"

    @property
    def summary(self) -> str:
        return (
            "round spherical cap (n=2): sphere_radius, polar_angle or "
            "boundary_distance, r2 (default half the boundary distance), "
            "resolution (stereographic nodes per side)"
        )

    @property
    def defaults(self) -> Params:
        return {
            "n": 2,
            "sphere_radius": 1.0,
            "polar_angle": math.pi / 3.0,
            "boundary_distance": None,
            "r2": None,
            "resolution": 48,
        }

    def build(self, params: Params) -> PointedManifold:
        p = self.resolve(params)
        self.dimension(p, (2,))
        rho = self.positive(p, "sphere_radius")
        if p["boundary_distance"] is not None:
            theta_max = self.positive(p, "boundary_distance") / rho
        else:
            theta_max = self.positive(p, "polar_angle")
        if not theta_max < math.pi:
            raise InputError(f"{self.name}: the cap must stay below the south pole")
        r2 = 0.5 * rho * theta_max if p["r2"] is None else self.positive(p, "r2")
        count = self.count(p, "resolution")

        inner = math.tan(0.5 * (theta_max - r2 / rho))
        outer = math.tan(0.5 * theta_max) / math.sqrt(2.0)
        if not (r2 < rho * theta_max and inner < outer):
            raise InputError(
                f"{self.name}: r2 = {r2:g} leaves no room for the stereographic "
                "chart between the collar and the cap"
            )
        half = 0.5 * (inner + outer)
        margin = 0.5 * (half - inner)
        sphere = {"sphere_radius": rho}
        cap = {"sphere_radius": rho, "polar_angle": theta_max}

        stereo = Chart.from_form(
            id="stereo",
            role=ChartRole.INTERIOR,
            lo=(-half, -half),
            hi=(half, half),
            resolution=(count, count),
            form=MetricForm(name="stereographic", params=sphere),
            taper=((margin, margin), (margin, margin)),
        )
        # Nodes per unit of arc length at the pole.
        density = (count - 1) / (4.0 * rho * math.atan(half))
        rim = 2.0 * math.pi * rho * math.sin(theta_max)
        collar_res = (
            grid_count(rim, density, periodic=True),
            grid_count(r2, density),
        )
        collar = Chart.from_form(
            id="collar",
            role=ChartRole.BOUNDARY_COLLAR,
            lo=(0.0, 0.0),
            hi=(2.0 * math.pi, r2),
            resolution=collar_res,
            form=MetricForm(name="cap_collar", params=cap),
            periodic=(True, False),
            taper=((0.0, 0.0), (0.0, 0.5 * r2)),
        )
        transitions = (
            map_transition(
                "stereo",
                "collar",
                stereo.lo,
                stereo.hi,
                (even(count), even(count)),
                "stereo_to_cap_collar",
                **cap,
            ),
            map_transition(
                "collar",
                "stereo",
                collar.lo,
                collar.hi,
                collar_res,
                "cap_collar_to_stereo",
                **cap,
            ),
        )
        return PointedManifold(
            name=f"spherical_cap(rho={rho:g}, angle={theta_max:.6g})",
            dimension=2,
            charts={"stereo": stereo, "collar": collar},
            transitions=transitions,
            base_point=ChartPoint.create("stereo", (0.0, 0.0)),
            has_boundary=True,
            constants=builtin_constants(r1=math.pi, r2=r2),
        )
