"""Pairing extracted records with reference records, and distance-weighted scoring."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

from arete.errors import NoCoordinateDataError
from arete.geo import distance_matrix_km, great_circle_km
from arete.records import OccurrenceRecord
from arete.validation.levenshtein import fold, levenshtein, similarity
from arete.validation.metrics import ConfusionCounts, MetricSet, confusion_metrics

DEFAULT_COORD_TOLERANCE_DEG = 0.02
DEFAULT_LOCALITY_THRESHOLD = 0.8


@dataclass(frozen=True)
class MatchedPair:
    pred_index: int
    obs_index: int
    coord_error_km: float | None  # None unless both sides carry coordinates
    locality_distance: int


@dataclass
class MatchSet:
    pred: list[OccurrenceRecord]
    obs: list[OccurrenceRecord]
    pairs: list[MatchedPair] = field(default_factory=list)
    unmatched_pred: list[int] = field(default_factory=list)
    unmatched_obs: list[int] = field(default_factory=list)

    def counts(self) -> ConfusionCounts:
        return ConfusionCounts(len(self.pairs), len(self.unmatched_pred), len(self.unmatched_obs))


def _admissible(p: OccurrenceRecord, o: OccurrenceRecord, tol: float, threshold: float) -> bool:
    if p.coordinate is not None and o.coordinate is not None:
        dlat = abs(p.coordinate.latitude - o.coordinate.latitude)
        dlon = abs(p.coordinate.longitude - o.coordinate.longitude)
        dlon = min(dlon, 360.0 - dlon)
        if max(dlat, dlon) <= tol:
            return True
    return bool(p.locality and o.locality) and similarity(p.locality, o.locality) >= threshold


def match_records(
    pred: Sequence[OccurrenceRecord],
    obs: Sequence[OccurrenceRecord],
    coord_tolerance_deg: float = DEFAULT_COORD_TOLERANCE_DEG,
    locality_threshold: float = DEFAULT_LOCALITY_THRESHOLD,
) -> MatchSet:
    """Greedy one-to-one matching within each species.

    Admissible pairs are taken in ascending order of folded locality edit
    distance, then coordinate error, then obs position, then pred position.
    """
    if coord_tolerance_deg < 0:
        raise ValueError("coord_tolerance_deg must be >= 0")
    candidates = []
    for oi, o in enumerate(obs):
        for pi, p in enumerate(pred):
            if p.species != o.species or not _admissible(p, o, coord_tolerance_deg, locality_threshold):
                continue
            err = None
            if p.coordinate is not None and o.coordinate is not None:
                err = great_circle_km(p.coordinate, o.coordinate)
            dist = levenshtein(fold(p.locality), fold(o.locality))
            candidates.append((dist, math.inf if err is None else err, oi, pi, err))
    candidates.sort(key=lambda c: c[:4])
    used_pred: set[int] = set()
    used_obs: set[int] = set()
    ms = MatchSet(list(pred), list(obs))
    for dist, _, oi, pi, err in candidates:
        if oi in used_obs or pi in used_pred:
            continue
        used_obs.add(oi)
        used_pred.add(pi)
        ms.pairs.append(MatchedPair(pi, oi, err, dist))
    ms.pairs.sort(key=lambda m: m.obs_index)
    ms.unmatched_pred = [i for i in range(len(pred)) if i not in used_pred]
    ms.unmatched_obs = [i for i in range(len(obs)) if i not in used_obs]
    return ms


def _mean_obs_spread(obs: Sequence[OccurrenceRecord]) -> dict[int, float]:
    idx = [i for i, r in enumerate(obs) if r.coordinate is not None]
    if len(idx) < 2:
        return {i: 0.0 for i in idx}
    dist = distance_matrix_km([obs[i].coordinate for i in idx])
    means = dist.sum(axis=1) / (len(idx) - 1)
    return {i: float(m) for i, m in zip(idx, means)}


def pair_weight(error_km: float | None, spread_km: float | None) -> float:
    """w = 1 / (1 + e / mean_spread); missing obs coordinates give 1, missing pred ones 0."""
    if spread_km is None:
        return 1.0
    if error_km is None:
        return 0.0
    if error_km == 0:
        return 1.0
    if spread_km == 0:
        return 0.0
    return 1.0 / (1.0 + error_km / spread_km)


def weighted_counts(ms: MatchSet) -> ConfusionCounts:
    if not any(r.coordinate is not None for r in ms.obs) or not any(r.coordinate is not None for r in ms.pred):
        raise NoCoordinateDataError("distance weighting needs coordinates on both sides")
    tp = residual = 0.0
    for w in pair_weights(ms):
        tp += w
        residual += 1.0 - w
    return ConfusionCounts(tp, len(ms.unmatched_pred) + residual, len(ms.unmatched_obs) + residual)


def distance_weighted_metrics(ms: MatchSet) -> MetricSet:
    return confusion_metrics(weighted_counts(ms))


def pair_weights(ms: MatchSet) -> list[float]:
    spread = _mean_obs_spread(ms.obs)
    return [pair_weight(m.coord_error_km, spread.get(m.obs_index)) for m in ms.pairs]
