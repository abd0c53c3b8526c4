"""Pairwise inter-personal distances and risk classification.

Distances are 3-D Euclidean between person centroids.  Risk tiers with
the default thresholds: dangerous below 1 m, risky in the closed
interval [1, 2] m, safe above 2 m.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from itertools import combinations
from typing import Sequence

from .people import PersonMeasurement
from .scaling import ScaleParams


class Risk(str, Enum):
    SAFE = "safe"
    RISKY = "risky"
    DANGEROUS = "dangerous"


@dataclass(frozen=True)
class RiskThresholds:
    """Boundaries of the risk tiers; both boundary values are risky."""

    dangerous_below: float = 1.0
    safe_above: float = 2.0

    def __post_init__(self):
        if not 0 < self.dangerous_below < self.safe_above:
            raise ValueError(
                "thresholds must satisfy 0 < dangerous_below < safe_above"
            )


@dataclass(frozen=True)
class PairDistance:
    """Distance and risk class for one unordered person pair (id_a < id_b)."""

    id_a: int
    id_b: int
    distance: float
    risk: Risk

    def __post_init__(self):
        if not self.id_a < self.id_b:
            raise ValueError("pair ids must satisfy id_a < id_b")
        if not self.distance >= 0:
            raise ValueError("distance must be non-negative")


@dataclass(frozen=True)
class FrameReport:
    """Everything the pipeline derived from one frame."""

    frame_id: str
    persons: tuple[PersonMeasurement, ...]
    pairs: tuple[PairDistance, ...]
    scale: ScaleParams
    control_points_used: int


def classify_risk(distance: float, t: RiskThresholds = RiskThresholds()) -> Risk:
    """Risk tier of a distance; the tiers partition [0, inf)."""
    if distance < 0:
        raise ValueError(f"distance must be non-negative, got {distance}")
    if distance < t.dangerous_below:
        return Risk.DANGEROUS
    if distance <= t.safe_above:
        return Risk.RISKY
    return Risk.SAFE


def measure_frame(
    persons: Sequence[PersonMeasurement],
    t: RiskThresholds = RiskThresholds(),
) -> list[PairDistance]:
    """Distance and risk for every unordered pair, sorted by (id_a, id_b)."""
    ids = [p.instance_id for p in persons]
    if len(set(ids)) != len(ids):
        raise ValueError("persons must have distinct instance ids")
    ordered = sorted(persons, key=lambda p: p.instance_id)
    out = []
    for a, b in combinations(ordered, 2):
        d = math.dist(a.position, b.position)
        out.append(
            PairDistance(
                id_a=a.instance_id, id_b=b.instance_id,
                distance=d, risk=classify_risk(d, t),
            )
        )
    return out
