from collarforge.atlas_types import Chart, ChartPoint, ChartRole, PointedManifold
from collarforge.closed_forms import MetricForm
from collarforge.family_base import FamilyBase, Params, builtin_constants, grid_count


class FlatBox(FamilyBase):
    """A window [-side/2, side/2]^n of Euclidean space in one chart."""

    @property
    def name(self) -> str:
        return "flat_box"

    @property
    def summary(self) -> str:
        return "Euclidean box window (n=2 or 3): side, resolution (nodes per unit)"

    @property
    def defaults(self) -> Params:
        return {"n": 2, "side": 10.0, "resolution": 8}

    def build(self, params: Params) -> PointedManifold:
        p = self.resolve(params)
        n = self.dimension(p, (2, 3))
        side = self.positive(p, "side")
        count = grid_count(side, self.count(p, "resolution", minimum=1))
        chart = Chart.from_form(
            id="box",
            role=ChartRole.INTERIOR,
            lo=(-0.5 * side,) * n,
            hi=(0.5 * side,) * n,
            resolution=(count,) * n,
            form=MetricForm(name="euclidean"),
        )
        return PointedManifold(
            name=f"flat_box(n={n}, side={side:g})",
            dimension=n,
            charts={"box": chart},
            transitions=(),
            base_point=ChartPoint.create("box", (0.0,) * n),
            has_boundary=False,
            constants=builtin_constants(r1=0.5 * side, r2=0.0, m0=1),
        )
