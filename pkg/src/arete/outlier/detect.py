"""Geographic, environmental and SVM-envelope outlier flags."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Sequence, TextIO

import numpy as np

from arete.errors import (
    DegenerateClassesError,
    DimensionMismatchError,
    InsufficientPointsError,
    MissingGridError,
    OutlierError,
    OutsideGridError,
)
from arete.geo import EnvFeatureGrid, distance_matrix_km, env_vector_at
from arete.outlier.svm import SvmModel, fit_svm
from arete.records import Coordinate, OccurrenceRecord

logger = logging.getLogger(__name__)

METHODS = ("geo", "env", "svm")


@dataclass(frozen=True)
class OutlierConfig:
    quantile: float = 0.95
    methods: tuple[str, ...] = METHODS
    min_points: int = 5
    svm_c: float = 1.0
    svm_gamma: float | None = None  # None: 1 / n_features
    pseudo_absence_count: int | None = None  # None: max(100, 2 * n_presence)
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if not 0 < self.quantile <= 1:
            raise ValueError("quantile must lie in (0, 1]")
        if not self.methods:
            raise ValueError("at least one method is required")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ValueError(f"unknown outlier methods: {sorted(unknown)}")
        if self.svm_c <= 0:
            raise ValueError("svm_c must be positive")
        if self.svm_gamma is not None and self.svm_gamma <= 0:
            raise ValueError("svm_gamma must be positive")
        if self.pseudo_absence_count is not None and self.pseudo_absence_count < 1:
            raise ValueError("pseudo_absence_count must be positive")


@dataclass
class DistanceFlags:
    """Per-point mean distances and flags; ``None`` where a point was not resolvable."""

    stats: list[float | None]
    flags: list[bool | None]
    threshold: float | None = None
    notice: str | None = None


def _flag_by_quantile(stats: list[float | None], cfg: OutlierConfig) -> DistanceFlags:
    present = [s for s in stats if s is not None]
    if len(present) < cfg.min_points:
        return DistanceFlags(
            stats,
            [None if s is None else False for s in stats],
            None,
            f"only {len(present)} points (< {cfg.min_points}); nothing flagged",
        )
    threshold = float(np.quantile(present, cfg.quantile))
    return DistanceFlags(stats, [None if s is None else s > threshold for s in stats], threshold)


def _mean_to_others(dist: np.ndarray) -> list[float]:
    n = len(dist)
    if n < 2:
        return [0.0] * n
    return [float(x) for x in dist.sum(axis=1) / (n - 1)]


def detect_outliers_geo(points: Sequence[Coordinate], cfg: OutlierConfig = OutlierConfig()) -> DistanceFlags:
    """Flag points whose mean great-circle distance to the rest exceeds the quantile."""
    stats = _mean_to_others(distance_matrix_km(points)) if points else []
    return _flag_by_quantile(list(stats), cfg)


def _resolve(points: Sequence[Coordinate], grid: EnvFeatureGrid) -> list[tuple[float, ...] | None]:
    out: list[tuple[float, ...] | None] = []
    for p in points:
        try:
            out.append(env_vector_at(grid, p))
        except OutsideGridError:
            logger.warning("(%s, %s) has no environmental data; not assessed", p.latitude, p.longitude)
            out.append(None)
    return out


def detect_outliers_env(
    points: Sequence[Coordinate], grid: EnvFeatureGrid, cfg: OutlierConfig = OutlierConfig()
) -> DistanceFlags:
    """Same rule as the geographic check, in normalized environmental space."""
    vectors = _resolve(points, grid)
    idx = [i for i, v in enumerate(vectors) if v is not None]
    stats: list[float | None] = [None] * len(points)
    if idx:
        arr = np.array([vectors[i] for i in idx], dtype=float)
        diff = arr[:, None, :] - arr[None, :, :]
        means = _mean_to_others(np.sqrt((diff * diff).sum(axis=2)))
        for i, m in zip(idx, means):
            stats[i] = m
    return _flag_by_quantile(stats, cfg)


def train_svm(
    presence: Sequence[Sequence[float]],
    pseudo_absence: Sequence[Sequence[float]],
    cfg: OutlierConfig = OutlierConfig(),
    tol: float = 1e-3,
    max_passes: int = 10_000,
) -> SvmModel:
    """Two-class RBF SVM: presences +1, (pseudo-)absences -1."""
    pres = np.asarray(presence, dtype=float)
    absn = np.asarray(pseudo_absence, dtype=float)
    if len(pres) < 2 or len(absn) < 2:
        raise DegenerateClassesError("each class needs at least two points")
    if pres.ndim != 2 or absn.ndim != 2 or pres.shape[1] != absn.shape[1]:
        raise DimensionMismatchError("presence and absence vectors differ in length")
    x = np.vstack([pres, absn])
    y = np.concatenate([np.ones(len(pres)), -np.ones(len(absn))])
    return fit_svm(x, y, cfg.svm_c, cfg.svm_gamma, tol, max_passes)


def sample_pseudo_absences(
    grid: EnvFeatureGrid, presence_points: Sequence[Coordinate], count: int, seed: int
) -> list[tuple[float, ...]]:
    """Draw env vectors uniformly from populated cells holding no presence.

    Candidates are taken in sorted cell order so the draw does not depend on
    the order of the presence points.
    """
    occupied = {grid.cell_of(p) for p in presence_points}
    candidates = sorted(k for k in grid.cells if k not in occupied)
    if not candidates:
        return []
    rng = np.random.default_rng(seed)
    replace = count > len(candidates)
    picks = rng.choice(len(candidates), size=count, replace=replace)
    return [grid.cells[candidates[i]] for i in sorted(picks)]


@dataclass
class SvmFlags:
    flags: list[bool | None]
    model: SvmModel


def detect_outliers_svm(
    points: Sequence[Coordinate],
    grid: EnvFeatureGrid,
    cfg: OutlierConfig = OutlierConfig(),
    true_absences: Sequence[Coordinate] | None = None,
) -> SvmFlags:
    """Flag presences that fall outside the SVM environmental envelope."""
    vectors = _resolve(points, grid)
    idx = [i for i, v in enumerate(vectors) if v is not None]
    if len(idx) < cfg.min_points:
        raise InsufficientPointsError(f"{len(idx)} resolvable presences, need {cfg.min_points}")
    presence = [vectors[i] for i in idx]
    if true_absences:
        absence = [v for v in _resolve(true_absences, grid) if v is not None]
    else:
        count = cfg.pseudo_absence_count or max(100, 2 * len(presence))
        absence = sample_pseudo_absences(grid, [points[i] for i in idx], count, cfg.rng_seed)
    model = train_svm(presence, absence, cfg)
    decision = model.decision_function(np.array(presence))
    flags: list[bool | None] = [None] * len(points)
    for i, d in zip(idx, decision):
        flags[i] = bool(d < 0)
    return SvmFlags(flags, model)


@dataclass
class OutlierRow:
    record: OccurrenceRecord
    geo_stat: float | None = None
    geo_flag: bool | None = None
    env_stat: float | None = None
    env_flag: bool | None = None
    svm_flag: bool | None = None

    @property
    def assessed(self) -> bool:
        return self.record.coordinate is not None


@dataclass
class OutlierReport:
    rows: list[OutlierRow]
    thresholds: dict[str, dict[str, float | None]] = field(default_factory=dict)
    notices: list[str] = field(default_factory=list)

    def flagged(self, method: str) -> list[OutlierRow]:
        return [r for r in self.rows if getattr(r, f"{method}_flag")]


def detect_outliers(
    records: Sequence[OccurrenceRecord],
    grid: EnvFeatureGrid | None = None,
    cfg: OutlierConfig = OutlierConfig(),
    true_absences: Sequence[Coordinate] | None = None,
) -> OutlierReport:
    """Run each configured method per species. Records are never modified."""
    if grid is None and {"env", "svm"} & set(cfg.methods):
        raise MissingGridError("env and svm methods need an environmental grid")
    rows = [OutlierRow(r) for r in records]
    report = OutlierReport(rows)
    groups: dict[str, list[int]] = {}
    for i, r in enumerate(records):
        if r.coordinate is not None:
            groups.setdefault(r.species, []).append(i)
    for species in sorted(groups):
        idx = groups[species]
        pts = [records[i].coordinate for i in idx]
        thresholds = report.thresholds.setdefault(species, {})
        if "geo" in cfg.methods:
            res = detect_outliers_geo(pts, cfg)
            thresholds["geo"] = res.threshold
            if res.notice:
                report.notices.append(f"{species} geo: {res.notice}")
            for i, s, f in zip(idx, res.stats, res.flags):
                rows[i].geo_stat, rows[i].geo_flag = s, f
        if "env" in cfg.methods:
            res = detect_outliers_env(pts, grid, cfg)
            thresholds["env"] = res.threshold
            if res.notice:
                report.notices.append(f"{species} env: {res.notice}")
            for i, s, f in zip(idx, res.stats, res.flags):
                rows[i].env_stat, rows[i].env_flag = s, f
        if "svm" in cfg.methods:
            try:
                svm = detect_outliers_svm(pts, grid, cfg, true_absences)
            except OutlierError as exc:
                report.notices.append(f"{species} svm: {exc}")
            else:
                for i, f in zip(idx, svm.flags):
                    rows[i].svm_flag = f
    return report


OUTLIER_CSV_HEADER = ("species", "latitude", "longitude", "geo_stat", "geo_flag", "env_stat", "env_flag", "svm_flag", "assessed")


def _fmt(value: float | bool | None) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    return f"{value:.6f}"


def write_outlier_report(report: OutlierReport, fh: TextIO) -> None:
    writer = csv.writer(fh)
    writer.writerow(OUTLIER_CSV_HEADER)
    for row in report.rows:
        c = row.record.coordinate
        writer.writerow([
            row.record.species,
            "" if c is None else repr(c.latitude),
            "" if c is None else repr(c.longitude),
            _fmt(row.geo_stat), _fmt(row.geo_flag),
            _fmt(row.env_stat), _fmt(row.env_flag),
            _fmt(row.svm_flag),
            _fmt(row.assessed),
        ])
