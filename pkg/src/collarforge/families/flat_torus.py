from collarforge.atlas_types import Chart, ChartPoint, ChartRole, PointedManifold
from collarforge.closed_forms import MetricForm
from collarforge.family_base import FamilyBase, Params, builtin_constants, grid_count


class FlatTorus(FamilyBase):
    """The square flat torus of the given side, one chart periodic on every axis."""

    @property
    def name(self) -> str:
        return "flat_torus"

    @property
    def summary(self) -> str:
        return "flat torus (n=2 or 3, no boundary): side, resolution (nodes per unit)"

    @property
    def defaults(self) -> Params:
        return {"n": 2, "side": 1.0, "resolution": 32}

    def build(self, params: Params) -> PointedManifold:
        p = self.resolve(params)
        n = self.dimension(p, (2, 3))
        side = self.positive(p, "side")
        count = grid_count(side, self.count(p, "resolution", minimum=1), periodic=True)
        chart = Chart.from_form(
            id="torus",
            role=ChartRole.INTERIOR,
            lo=(0.0,) * n,
            hi=(side,) * n,
            resolution=(count,) * n,
            form=MetricForm(name="euclidean"),
            periodic=(True,) * n,
        )
        return PointedManifold(
            name=f"flat_torus(n={n}, side={side:g})",
            dimension=n,
            charts={"torus": chart},
            transitions=(),
            base_point=ChartPoint.create("torus", (0.5 * side,) * n),
            has_boundary=False,
            constants=builtin_constants(r1=0.5 * side, r2=0.0, m0=1),
        )
