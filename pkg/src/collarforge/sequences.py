"""
Sequence experiments on families of pointed manifolds.

Every member is compared with the last one: by the GH distance between nets
of the r-window around the base point and, where the members share an atlas,
by the C^k norm of the metric difference. The distance from the base point
to the boundary decides whether the boundary survives in the limit.
"""

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from enum import StrEnum
from pathlib import Path
from typing import Any

import pandas as pd

from collarforge.atlas_types import PointedManifold
from collarforge.convergence import (
    FiniteNet,
    GHMode,
    NetMethod,
    ck_pullback_norm,
    gh_distance,
    identity_identification,
    pairwise_distances,
    sample_net,
)
from collarforge.distance import boundary_distance
from collarforge.errors import InputError
from collarforge.manifold_atlas import builtin_manifold, scale_metric
from collarforge.metric_extension import build_height_function, extend_metric
from collarforge.reports import (
    SEQUENCE_COLUMNS,
    monotonicity,
    records,
    sequence_table,
    write_table,
)
from collarforge.seeley import DEFAULT_ORDER

logger = logging.getLogger(__name__)

MEMBER_RESOLUTION = 32
# Euclidean balls wider than the window plus this margin share one window.
WINDOW_MARGIN = 1.0


class SequenceFamily(StrEnum):
    EUCLIDEAN_BALLS = "euclidean_balls"
    SPHERICAL_CAPS = "spherical_caps"
    SHRINKING_PERTURBATION = "shrinking_perturbation"

    @property
    def shares_atlas(self) -> bool:
        """Whether all members live on one atlas, identified chart by chart."""
        return self == SequenceFamily.SHRINKING_PERTURBATION


def sequence_member(family: SequenceFamily, index: int) -> PointedManifold:
    """
    Member `index` of a family: the Euclidean ball of radius i, the cap at
    distance 1 from its pole on the sphere of radius i, or the unit cap of
    polar angle π/3 with metric (1 + 1/i)·g.
    """
    match SequenceFamily(family):
        case SequenceFamily.EUCLIDEAN_BALLS:
            return builtin_manifold(
                "euclidean_ball",
                {"radius": float(index), "resolution": MEMBER_RESOLUTION},
            )
        case SequenceFamily.SPHERICAL_CAPS:
            return builtin_manifold(
                "spherical_cap",
                {
                    "sphere_radius": float(index),
                    "boundary_distance": 1.0,
                    "resolution": MEMBER_RESOLUTION,
                },
            )
        case SequenceFamily.SHRINKING_PERTURBATION:
            cap = builtin_manifold(
                "spherical_cap", {"resolution": MEMBER_RESOLUTION}
            )
            return scale_metric(cap, 1.0 + 1.0 / index)


def window_manifold(
    family: SequenceFamily, index: int, radius: float, member: PointedManifold
) -> PointedManifold:
    """
    A manifold whose B(x⁰, radius) is isometric to that of `member`. A
    Euclidean ball wider than radius + WINDOW_MARGIN has the flat disk of
    that radius as its window, so all such members are sampled on one
    manifold at one grid spacing.
    """
    if (
        SequenceFamily(family) == SequenceFamily.EUCLIDEAN_BALLS
        and index > radius + WINDOW_MARGIN
    ):
        return builtin_manifold(
            "euclidean_ball",
            {"radius": radius + WINDOW_MARGIN, "resolution": MEMBER_RESOLUTION},
        )
    return member


def push_net(net: FiniteNet, target: PointedManifold) -> FiniteNet:
    """The same chart points on a manifold sharing the atlas, with its distances."""
    distances = pairwise_distances(target, net.points)
    return FiniteNet(
        manifold=target.name,
        points=net.points,
        distances=distances,
        radius=max(net.radius, float(distances[0].max())),
        method=net.method,
    )


@dataclass(frozen=True, kw_only=True, eq=False)
class ConvergenceReport:
    family: SequenceFamily
    radius: float
    k: int
    threshold: float
    mode: GHMode
    count: int
    table: pd.DataFrame
    tolerance: float = 1e-6
    settings: dict[str, Any] = field(default_factory=dict)

    @property
    def limit_has_boundary(self) -> bool:
        """Whether d(x⁰_i, ∂M_i) stays within the threshold along the sequence."""
        return bool(self.table["boundary_distance"].max() <= self.threshold)

    @property
    def monotonicity(self) -> dict[str, dict[str, bool | None]]:
        return monotonicity(self.table, ["gh_epsilon", "ck_norm"], self.tolerance)

    @property
    def converging(self) -> bool:
        """GH epsilons, and C^k norms where measured, fall along the sequence."""
        summary = self.monotonicity
        return all(
            summary[column]["non_increasing"] is not False
            for column in ("gh_epsilon", "ck_norm")
        )

    def to_document(self) -> dict[str, Any]:
        return {
            "family": str(self.family),
            "radius": self.radius,
            "k": self.k,
            "threshold": self.threshold,
            "gh_mode": str(self.mode),
            "net_count": self.count,
            "limit_has_boundary": self.limit_has_boundary,
            "monotonicity": self.monotonicity,
            "converging": self.converging,
            "settings": self.settings,
            "rows": records(self.table),
        }

    def to_csv(self, path: Path) -> None:
        write_table(self.table, path, SEQUENCE_COLUMNS)


def _height_constant(member: PointedManifold, order: int, k: int) -> float:
    extended = build_height_function(extend_metric(member, order), k=k)
    certificate = extended.height_certificate
    return math.nan if certificate is None else certificate.c


def run_sequence(
    family: SequenceFamily | str,
    indices: Sequence[int],
    radius: float,
    k: int,
    *,
    threshold: float | None = None,
    count: int = 9,
    mode: GHMode = GHMode.EXACT,
    extend: bool = True,
    seeley_order: int = DEFAULT_ORDER,
    tolerance: float = 1e-6,
    seed: int | None = None,
    settings: dict[str, Any] | None = None,
) -> ConvergenceReport:
    """
    Builds the members for `indices`, samples polar nets of B(x⁰, radius)
    and compares each member with the last. With `extend` each member is
    also extended past its boundary and the constant of its height function
    recorded. The boundary is kept in the limit when every d(x⁰_i, ∂M_i) is
    at most `threshold`, the window radius by default. Every net is turned
    by the same `seed`, so ray indices match across members.
    """
    try:
        family = SequenceFamily(family)
    except ValueError:
        raise InputError(
            f"unknown sequence family {family!r}, expected one of "
            f"{[str(f) for f in SequenceFamily]}"
        ) from None
    indices = [int(i) for i in indices]
    if not indices:
        raise InputError("a sequence needs at least one index")
    if indices[0] < 1 or any(b <= a for a, b in zip(indices, indices[1:])):
        raise InputError(f"indices must be ascending and >= 1, got {indices}")
    threshold = radius if threshold is None else threshold

    members = [sequence_member(family, i) for i in indices]
    reference = members[-1]
    if family.shares_atlas:
        canonical = sample_net(
            reference, radius, count, method=NetMethod.POLAR, seed=seed
        )
        nets = [push_net(canonical, member) for member in members]
        identification = identity_identification(reference)
    else:
        windows = [
            window_manifold(family, i, radius, member)
            for i, member in zip(indices, members, strict=True)
        ]
        sampled: dict[str, FiniteNet] = {}
        for window in windows:
            if window.name not in sampled:
                sampled[window.name] = sample_net(
                    window, radius, count, method=NetMethod.POLAR, seed=seed
                )
        nets = [sampled[window.name] for window in windows]

    rows = []
    for index, member, net in zip(indices, members, nets, strict=True):
        row: dict[str, Any] = {
            "index": index,
            "gh_epsilon": gh_distance(net, nets[-1], mode).epsilon,
            "ck_norm": math.nan,
            "boundary_distance": boundary_distance(member)[0],
        }
        if family.shares_atlas:
            row["ck_norm"] = ck_pullback_norm(reference, member, identification, k)
        if extend:
            row["height_constant"] = _height_constant(member, seeley_order, k)
        rows.append(row)
        logger.info(
            f"{family} member {index}: GH ε = {row['gh_epsilon']:.4g}, "
            f"d(x⁰, ∂M) = {row['boundary_distance']:.4g}"
        )

    report = ConvergenceReport(
        family=family,
        radius=radius,
        k=k,
        threshold=threshold,
        mode=GHMode(mode),
        count=count,
        table=sequence_table(rows),
        tolerance=tolerance,
        settings=settings or {},
    )
    logger.info(
        f"{family} over {indices[0]}..{indices[-1]}: limit has boundary = "
        f"{report.limit_has_boundary}, converging = {report.converging}"
    )
    return report
