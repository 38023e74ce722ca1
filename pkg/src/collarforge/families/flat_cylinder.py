from collarforge.families._tube import TubeFamily
from collarforge.family_base import Params


class FlatCylinder(TubeFamily):
    @property
    def name(self) -> str:
        return "flat_cylinder"

    @property
    def summary(self) -> str:
        return (
            "flat cylinder S¹(radius) × [0, height] (n=2): radius, height, r2, "
            "resolution (nodes per unit height), circle_nodes"
        )

    @property
    def extra_defaults(self) -> Params:
        return {}

    def bulge(self, params: Params) -> float:
        return 0.0
