from collarforge.atlas_types import Chart, ChartPoint, ChartRole, PointedManifold
from collarforge.closed_forms import MetricForm
from collarforge.errors import InputError
from collarforge.family_base import (
    FamilyBase,
    Params,
    builtin_constants,
    grid_count,
    map_transition,
)

EUCLIDEAN = MetricForm(name="euclidean")


class FlatSlab(FamilyBase):
    """
    [-w, w]^(n-1) × [0, H] with the Euclidean metric and boundary t = 0. The
    side faces and the top face are edges of the atlas window, not boundary.

    With charts=2 a collar chart of height r2 overlaps an interior chart
    starting at r2/2. With charts=1 a single collar chart spans the slab and
    the base point sits in a small interior patch nested inside it.
    """

    @property
    def name(self) -> str:
        return "flat_slab"

    @property
    def summary(self) -> str:
        return (
            "flat slab (n=2 or 3): width (half-width w), r2, height, base_height, "
            "resolution (nodes per unit length), charts (1 or 2)"
        )

    @property
    def defaults(self) -> Params:
        return {
            "n": 2,
            "width": 2.0,
            "r2": 1.0,
            "height": 3.0,
            "base_height": 1.5,
            "resolution": 16,
            "charts": 2,
        }

    def build(self, params: Params) -> PointedManifold:
        p = self.resolve(params)
        n = self.dimension(p, (2, 3))
        width = self.positive(p, "width")
        r2 = self.positive(p, "r2")
        height = self.positive(p, "height")
        base = self.positive(p, "base_height")
        density = self.count(p, "resolution", minimum=1)
        charts = self.count(p, "charts", minimum=1)
        if charts not in (1, 2):
            raise InputError(f"{self.name}: charts must be 1 or 2, got {charts}")
        if not r2 < height:
            raise InputError(f"{self.name}: r2 must be below the height")
        if not (0.5 * r2 if charts == 2 else 0.0) < base < height:
            raise InputError(f"{self.name}: base_height outside the interior chart")

        m = n - 1
        side = grid_count(2.0 * width, density)
        flat_sides = ((0.0, 0.0),) * m
        if charts == 2:
            collar = Chart.from_form(
                id="collar",
                role=ChartRole.BOUNDARY_COLLAR,
                lo=(-width,) * m + (0.0,),
                hi=(width,) * m + (r2,),
                resolution=(side,) * m + (grid_count(r2, density),),
                form=EUCLIDEAN,
                taper=flat_sides + ((0.0, 0.5 * r2),),
            )
            core = Chart.from_form(
                id="core",
                role=ChartRole.INTERIOR,
                lo=(-width,) * m + (0.5 * r2,),
                hi=(width,) * m + (height,),
                resolution=(side,) * m + (grid_count(height - 0.5 * r2, density),),
                form=EUCLIDEAN,
                taper=flat_sides + ((0.5 * r2, 0.0),),
            )
            overlap_lo, overlap_hi = core.lo, collar.hi
        else:
            collar = Chart.from_form(
                id="collar",
                role=ChartRole.BOUNDARY_COLLAR,
                lo=(-width,) * m + (0.0,),
                hi=(width,) * m + (height,),
                resolution=(side,) * m + (grid_count(height, density),),
                form=EUCLIDEAN,
            )
            half = 0.5 * min(width, base, height - base)
            core = Chart.from_form(
                id="core",
                role=ChartRole.INTERIOR,
                lo=(-half,) * m + (base - half,),
                hi=(half,) * m + (base + half,),
                resolution=(grid_count(2.0 * half, density),) * n,
                form=EUCLIDEAN,
                taper=((0.5 * half, 0.5 * half),) * n,
            )
            overlap_lo, overlap_hi = core.lo, core.hi

        overlap_res = tuple(
            grid_count(b - a, density) for a, b in zip(overlap_lo, overlap_hi)
        )
        transitions = tuple(
            map_transition(a, b, overlap_lo, overlap_hi, overlap_res, "identity")
            for a, b in (("collar", "core"), ("core", "collar"))
        )
        return PointedManifold(
            name=f"flat_slab(n={n}, r2={r2:g}, charts={charts})",
            dimension=n,
            charts={"collar": collar, "core": core},
            transitions=transitions,
            base_point=ChartPoint.create("core", (0.0,) * m + (base,)),
            has_boundary=True,
            constants=builtin_constants(r1=width, r2=r2),
        )
