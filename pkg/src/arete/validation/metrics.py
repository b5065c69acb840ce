"""Confusion counts, precision/recall/F1 and the proximity-weighted F1."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from arete.errors import ScoreOutOfRangeError

LOCALITY_SCORES = (0.0, 0.25, 0.5, 0.75, 1.0)
COORDINATE_SCORES = (0.0, 1.0)


@dataclass(frozen=True)
class ConfusionCounts:
    """True negatives do not exist for open-ended extraction, so they are absent."""

    tp: float = 0
    fp: float = 0
    fn: float = 0

    def __post_init__(self) -> None:
        for name in ("tp", "fp", "fn"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {value}")

    def __add__(self, other: ConfusionCounts) -> ConfusionCounts:
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)


def _ratio(num: float, den: float) -> float | None:
    return None if den == 0 else num / den


def f1_score(precision: float | None, recall: float | None) -> float | None:
    """Harmonic mean; undefined when either input is undefined or both are 0."""
    if precision is None or recall is None:
        return None
    return _ratio(2 * precision * recall, precision + recall)


@dataclass(frozen=True)
class MetricSet:
    """Metrics in [0, 1]; ``None`` marks an undefined 0/0 value."""

    accuracy: float | None
    recall: float | None
    precision: float | None
    f1: float | None

    def as_dict(self) -> dict[str, float | None]:
        return {"accuracy": self.accuracy, "recall": self.recall, "precision": self.precision, "f1": self.f1}


def confusion_metrics(c: ConfusionCounts) -> MetricSet:
    precision = _ratio(c.tp, c.tp + c.fp)
    recall = _ratio(c.tp, c.tp + c.fn)
    return MetricSet(
        accuracy=_ratio(c.tp, c.tp + c.fp + c.fn),
        recall=recall,
        precision=precision,
        f1=f1_score(precision, recall),
    )


def format_metric(value: float | None, digits: int = 3) -> str:
    return "n/a" if value is None else f"{value:.{digits}f}"


@dataclass(frozen=True)
class ScoredRow:
    """Human proximity scores for one row of the reference (obs) or extracted (pred) sheet.

    ``claimed`` applies to pred rows only: True when the row was paired with a
    reference row already counted as a true positive.
    """

    loc_score: float
    coord_score: float
    side: str = "obs"
    claimed: bool = False

    def __post_init__(self) -> None:
        if self.loc_score not in LOCALITY_SCORES:
            raise ScoreOutOfRangeError(f"locality score {self.loc_score} not in {LOCALITY_SCORES}")
        if self.coord_score not in COORDINATE_SCORES:
            raise ScoreOutOfRangeError(f"coordinate score {self.coord_score} must be 0 or 1")
        if self.side not in ("obs", "pred"):
            raise ValueError("side must be 'obs' or 'pred'")


@dataclass(frozen=True)
class RowScore:
    classification: str  # "TP", "FP" or "FN"
    weight: float


def score_obs(row: ScoredRow) -> RowScore:
    x, y = row.loc_score, row.coord_score
    if x == 0 and y == 0:
        return RowScore("FN", 1.0)
    return RowScore("TP", (x + y) / 2)


def score_pred(row: ScoredRow) -> RowScore:
    # claimed rows were already counted on the obs side
    if row.claimed:
        return RowScore("TP", 0.0)
    x, y = row.loc_score, row.coord_score
    return RowScore("FP", (2 - (x + y)) / 2)


def weighted_f1(obs_rows: Iterable[ScoredRow], pred_rows: Iterable[ScoredRow]) -> tuple[ConfusionCounts, MetricSet]:
    tp = fp = fn = 0.0
    for s in [score_obs(r) for r in obs_rows] + [score_pred(r) for r in pred_rows]:
        if s.classification == "TP":
            tp += s.weight
        elif s.classification == "FP":
            fp += s.weight
        else:
            fn += s.weight
    counts = ConfusionCounts(tp, fp, fn)
    return counts, confusion_metrics(counts)


def read_scored_rows(path: str | Path, side: str) -> list[ScoredRow]:
    """Load a scoring sheet with ``loc_score``, ``coord_score`` and, for pred, ``claimed`` columns."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            claimed = rec.get("claimed", "").strip().lower() in ("1", "true", "yes", "tp")
            try:
                x, y = float(rec["loc_score"]), float(rec["coord_score"])
            except (KeyError, ValueError) as exc:
                raise ScoreOutOfRangeError(f"bad score row {rec}: {exc}") from exc
            rows.append(ScoredRow(x, y, side, claimed and side == "pred"))
    return rows
