from collarforge.errors import InputError
from collarforge.families._tube import TubeFamily
from collarforge.family_base import Params


class RevolutionSurface(TubeFamily):
    @property
    def name(self) -> str:
        return "revolution_surface"

    @property
    def summary(self) -> str:
        return (
            "surface of revolution with profile radius·(1 + bulge·sin(πt/height)) "
            "(n=2): radius, bulge, height, r2, resolution, circle_nodes"
        )

    @property
    def extra_defaults(self) -> Params:
        return {"bulge": 0.25}

    def bulge(self, params: Params) -> float:
        try:
            return float(params["bulge"])
        except (TypeError, ValueError):
            raise InputError(f"{self.name}: bulge must be a number") from None
