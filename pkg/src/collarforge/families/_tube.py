import math
from abc import abstractmethod

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


class TubeFamily(FamilyBase):
    """
    Surfaces of revolution over φ ∈ [0, 2π) and height t ∈ [0, H] with metric
    diag(a(t)², 1), a(t) = radius·(1 + bulge·sin(πt/H)). Both ends are
    boundary circles. The bottom collar uses t, the top collar t' = H - t; the
    profile is symmetric under t -> H - t, so both collars share one closed
    form. The interior chart covers [r2/2, H - r2/2].
    """

    @property
    def defaults(self) -> Params:
        return {
            "n": 2,
            "radius": 1.0,
            "height": 2.0,
            "r2": None,
            "resolution": 16,
            "circle_nodes": 32,
            **self.extra_defaults,
        }

    @property
    @abstractmethod
    def extra_defaults(self) -> Params: ...

    @abstractmethod
    def bulge(self, params: Params) -> float: ...

    def build(self, params: Params) -> PointedManifold:
        p = self.resolve(params)
        self.dimension(p, (2,))
        radius = self.positive(p, "radius")
        height = self.positive(p, "height")
        r2 = min(1.0, 0.25 * height) if p["r2"] is None else self.positive(p, "r2")
        if not r2 <= 0.5 * height:
            raise InputError(f"{self.name}: r2 must be at most half the height")
        density = self.count(p, "resolution", minimum=1)
        around = self.count(p, "circle_nodes")
        bulge = self.bulge(p)
        if not -1.0 < bulge:
            raise InputError(f"{self.name}: bulge must be > -1, got {bulge}")

        form = MetricForm(
            name="revolution",
            params={"radius": radius, "bulge": bulge, "height": height},
        )
        periodic = (True, False)
        collar_hi = (2.0 * math.pi, r2)
        collar_res = (around, grid_count(r2, density))
        collars = {
            chart_id: Chart.from_form(
                id=chart_id,
                role=ChartRole.BOUNDARY_COLLAR,
                lo=(0.0, 0.0),
                hi=collar_hi,
                resolution=collar_res,
                form=form,
                periodic=periodic,
                taper=((0.0, 0.0), (0.0, 0.5 * r2)),
            )
            for chart_id in ("bottom", "top")
        }
        core = Chart.from_form(
            id="core",
            role=ChartRole.INTERIOR,
            lo=(0.0, 0.5 * r2),
            hi=(2.0 * math.pi, height - 0.5 * r2),
            resolution=(around, grid_count(height - r2, density)),
            form=form,
            periodic=periodic,
            taper=((0.0, 0.0), (0.5 * r2, 0.5 * r2)),
        )

        overlap_res = (around + 1, grid_count(0.5 * r2, density))
        below = ((0.0, 0.5 * r2), (2.0 * math.pi, r2))
        above = ((0.0, height - r2), (2.0 * math.pi, height - 0.5 * r2))
        transitions = (
            map_transition("core", "bottom", *below, overlap_res, "identity"),
            map_transition("bottom", "core", *below, overlap_res, "identity"),
            map_transition(
                "core", "top", *above, overlap_res, "flip_collar", height=height
            ),
            map_transition(
                "top", "core", *below, overlap_res, "flip_collar", height=height
            ),
        )
        return PointedManifold(
            name=f"{self.name}(radius={radius:g}, height={height:g}, bulge={bulge:g})",
            dimension=2,
            charts={"bottom": collars["bottom"], "core": core, "top": collars["top"]},
            transitions=transitions,
            base_point=ChartPoint.create("core", (math.pi, 0.5 * height)),
            has_boundary=True,
            constants=builtin_constants(r1=math.pi, r2=r2),
        )
