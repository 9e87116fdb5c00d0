"""Quantization quality and ranking metrics.

Quantization side: codebook utilization (distinct triples over total
capacity), independent coding rate (fraction of POIs whose triple is
unshared), and the geographic dispersion of each SID group around its own
geo-centroid (mean plus nearest-rank p90/p95 over the pooled distances).

Ranking side: Hit@N and NDCG@N for a single relevant item over an
externally supplied prediction list.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Mapping, Sequence

from .geo import EarthModel, GeoPoint, geo_centroid, haversine_km
from .sid import Sid

__all__ = [
    "QuantReport",
    "RankingCase",
    "build_quant_report",
    "cur",
    "geo_dispersion",
    "hit_at_n",
    "icr",
    "ndcg_at_n",
    "nearest_rank",
]


@dataclass(frozen=True)
class QuantReport:
    """One row of the quantization-metrics table.

    ``cur`` counts distinct observed triples against the full triple
    capacity K1*K2*K3 (the denominator choice is part of the report's
    meaning, so it is echoed by the table formatter).
    """

    cur: float
    icr: float
    avg_dist_km: float
    p90_dist_km: float
    p95_dist_km: float
    group_count: int
    poi_count: int

    def __post_init__(self) -> None:
        if not 0.0 <= self.cur <= 1.0 or not 0.0 <= self.icr <= 1.0:
            raise ValueError("cur and icr must lie in [0, 1]")
        if min(self.avg_dist_km, self.p90_dist_km, self.p95_dist_km) < 0.0:
            raise ValueError("distances must be >= 0")
        if self.p90_dist_km > self.p95_dist_km:
            raise ValueError("p90 cannot exceed p95")

    def as_dict(self) -> dict:
        return {
            "cur": self.cur,
            "icr": self.icr,
            "avg_dist_km": self.avg_dist_km,
            "p90_dist_km": self.p90_dist_km,
            "p95_dist_km": self.p95_dist_km,
            "group_count": self.group_count,
            "poi_count": self.poi_count,
        }


@dataclass(frozen=True)
class RankingCase:
    """A prediction list and the single relevant SID it is scored against."""

    predicted: tuple[Sid, ...]
    truth: Sid

    def __post_init__(self) -> None:
        if not self.predicted:
            raise ValueError("predicted list must be non-empty")
        object.__setattr__(self, "predicted", tuple(self.predicted))

    @property
    def has_duplicates(self) -> bool:
        return len(set(self.predicted)) != len(self.predicted)


def icr(assignments: Mapping[str, Sid]) -> float:
    """Fraction of POIs whose SID triple is shared with no other POI."""
    if not assignments:
        raise ValueError("icr of an empty assignment set")
    counts = Counter(sid.key for sid in assignments.values())
    unique = sum(1 for sid in assignments.values() if counts[sid.key] == 1)
    return unique / len(assignments)


def cur(assignments: Mapping[str, Sid], capacities: tuple[int, int, int]) -> float:
    """Distinct observed triples over the total triple capacity."""
    if not assignments:
        raise ValueError("cur of an empty assignment set")
    total = 1
    for cap in capacities:
        if cap <= 0:
            raise ValueError(f"layer capacities must be positive, got {capacities}")
        total *= cap
    distinct = len({sid.key for sid in assignments.values()})
    return distinct / total


def nearest_rank(sorted_values: Sequence[float], q: float) -> float:
    """Nearest-rank percentile: the ceil(q*N)-th smallest value (1-based)."""
    if not sorted_values:
        raise ValueError("percentile of an empty sequence")
    if not 0.0 < q <= 1.0:
        raise ValueError(f"q must be in (0, 1], got {q}")
    return sorted_values[math.ceil(q * len(sorted_values)) - 1]


def geo_dispersion(
    assignments: Mapping[str, Sid],
    locations: Mapping[str, GeoPoint],
    earth: EarthModel = EarthModel(),
) -> tuple[float, float, float]:
    """(avg, p90, p95) distance in km from POIs to their SID group centroid.

    POIs are grouped by the bare triple; each group's reference point is
    the geographic centroid of its members. The average is over all POIs,
    and the percentiles are nearest-rank over the pooled distance list.
    """
    if not assignments:
        raise ValueError("geo_dispersion of an empty assignment set")
    missing = [pid for pid in assignments if pid not in locations]
    if missing:
        raise ValueError(f"missing locations for POIs: {missing[:5]}")
    groups: dict[tuple[int, int, int], list[str]] = {}
    for poi_id in sorted(assignments):
        groups.setdefault(assignments[poi_id].key, []).append(poi_id)
    dists: list[float] = []
    for members in groups.values():
        center = geo_centroid([locations[pid] for pid in members])
        dists.extend(haversine_km(center, locations[pid], earth) for pid in members)
    dists.sort()
    avg = sum(dists) / len(dists)
    return avg, nearest_rank(dists, 0.90), nearest_rank(dists, 0.95)


def build_quant_report(
    assignments: Mapping[str, Sid],
    locations: Mapping[str, GeoPoint],
    capacities: tuple[int, int, int],
    earth: EarthModel = EarthModel(),
) -> QuantReport:
    """Assemble the full metrics row for one assignment set."""
    avg, p90, p95 = geo_dispersion(assignments, locations, earth)
    return QuantReport(
        cur=cur(assignments, capacities),
        icr=icr(assignments),
        avg_dist_km=avg,
        p90_dist_km=p90,
        p95_dist_km=p95,
        group_count=len({sid.key for sid in assignments.values()}),
        poi_count=len(assignments),
    )


def hit_at_n(case: RankingCase, n: int) -> int:
    """1 iff the truth appears among the first ``n`` predictions."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    return int(any(sid == case.truth for sid in case.predicted[:n]))


def ndcg_at_n(case: RankingCase, n: int) -> float:
    """1/log2(1+rank) for the first occurrence of the truth within the top
    ``n``; 0 when absent. Single-relevant-item form, so values lie in [0, 1]."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    for rank, sid in enumerate(case.predicted[:n], start=1):
        if sid == case.truth:
            return 1.0 / math.log2(1.0 + rank)
    return 0.0
