from collarforge.atlas_types import Chart, ChartPoint, ChartRole, PointedManifold
from collarforge.closed_forms import MetricForm
from collarforge.errors import InputError
from collarforge.family_base import (
    FamilyBase,
    Params,
    builtin_constants,
    even,
    map_transition,
)


class RoundSphere(FamilyBase):
    """
    The round 2-sphere in two stereographic charts centred at the north and
    the south pole, glued by the inversion x -> x/|x|². Each square reaches past
    the equator; the bumps are flat on |x|∞ <= half - margin.
    """

    @property
    def name(self) -> str:
        return "round_sphere"

    @property
    def summary(self) -> str:
        return (
            "round sphere (n=2, no boundary): sphere_radius, half (chart "
            "half-width), resolution"
        )

    @property
    def defaults(self) -> Params:
        return {"n": 2, "sphere_radius": 1.0, "half": 1.5, "resolution": 64}

    def build(self, params: Params) -> PointedManifold:
        p = self.resolve(params)
        self.dimension(p, (2,))
        rho = self.positive(p, "sphere_radius")
        half = self.positive(p, "half")
        count = even(self.count(p, "resolution"))
        margin = 0.5 * (half - 1.0)
        if margin <= 0:
            raise InputError(f"{self.name}: half must exceed 1 to pass the equator")
        charts = {
            chart_id: Chart.from_form(
                id=chart_id,
                role=ChartRole.INTERIOR,
                lo=(-half, -half),
                hi=(half, half),
                resolution=(count, count),
                form=MetricForm(name="stereographic", params={"sphere_radius": rho}),
                taper=((margin, margin), (margin, margin)),
            )
            for chart_id in ("north", "south")
        }
        transitions = tuple(
            map_transition(
                a, b, (-half, -half), (half, half), (count, count), "inversion"
            )
            for a, b in (("north", "south"), ("south", "north"))
        )
        return PointedManifold(
            name=f"round_sphere(rho={rho:g})",
            dimension=2,
            charts=charts,
            transitions=transitions,
            base_point=ChartPoint.create("north", (0.0, 0.0)),
            has_boundary=False,
            constants=builtin_constants(r1=half, r2=0.0),
        )
