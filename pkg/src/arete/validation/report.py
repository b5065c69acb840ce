"""Per-species and global markdown validation reports."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from arete.errors import EmptyReferenceError, NoCoordinateDataError, ReportIoError
from arete.records import OccurrenceRecord
from arete.validation.levenshtein import mean_min_levenshtein
from arete.validation.matching import (
    DEFAULT_COORD_TOLERANCE_DEG,
    DEFAULT_LOCALITY_THRESHOLD,
    match_records,
    weighted_counts,
)
from arete.validation.metrics import ConfusionCounts, MetricSet, confusion_metrics, format_metric

GLOBAL_REPORT = "global.md"


@dataclass
class ValidationSummary:
    label: str
    n_pred: int
    n_obs: int
    counts: ConfusionCounts
    metrics: MetricSet
    weighted: ConfusionCounts | None = None
    weighted_metrics: MetricSet | None = None
    mean_min_levenshtein: float | None = None


@dataclass
class ValidationReport:
    overall: ValidationSummary
    species: dict[str, ValidationSummary] = field(default_factory=dict)
    files: list[Path] = field(default_factory=list)


def species_slug(name: str) -> str:
    slug = re.sub(r"[^0-9a-z]+", "_", name.casefold()).strip("_") or "unnamed"
    return f"species_{slug}" if slug == "global" else slug


def summarize(
    label: str,
    pred: Sequence[OccurrenceRecord],
    obs: Sequence[OccurrenceRecord],
    coord_tolerance_deg: float = DEFAULT_COORD_TOLERANCE_DEG,
    locality_threshold: float = DEFAULT_LOCALITY_THRESHOLD,
) -> ValidationSummary:
    ms = match_records(pred, obs, coord_tolerance_deg, locality_threshold)
    counts = ms.counts()
    summary = ValidationSummary(label, len(pred), len(obs), counts, confusion_metrics(counts))
    try:
        summary.weighted = weighted_counts(ms)
        summary.weighted_metrics = confusion_metrics(summary.weighted)
    except NoCoordinateDataError:
        pass
    try:
        summary.mean_min_levenshtein = mean_min_levenshtein(
            [r.locality for r in obs if r.locality], [r.locality for r in pred if r.locality]
        )
    except EmptyReferenceError:
        pass
    return summary


def _num(value: float) -> str:
    return str(int(value)) if float(value).is_integer() else f"{value:.3f}"


def render_summary(s: ValidationSummary, generated_at: str | None = None) -> str:
    lines = [f"# Validation report: {s.label}", ""]
    if generated_at:
        lines += [f"Generated: {generated_at}", ""]
    lines += [
        f"Extracted records: {s.n_pred}  ",
        f"Reference records: {s.n_obs}",
        "",
        "## Counts",
        "",
        "| | TP | FP | FN |",
        "|---|---|---|---|",
        f"| plain | {_num(s.counts.tp)} | {_num(s.counts.fp)} | {_num(s.counts.fn)} |",
    ]
    if s.weighted is not None:
        w = s.weighted
        lines.append(f"| distance-weighted | {_num(w.tp)} | {_num(w.fp)} | {_num(w.fn)} |")
    lines += ["", "## Metrics", "", "| metric | plain | distance-weighted |", "|---|---|---|"]
    plain = s.metrics.as_dict()
    weighted = s.weighted_metrics.as_dict() if s.weighted_metrics else {}
    for name in ("accuracy", "recall", "precision", "f1"):
        lines.append(f"| {name} | {format_metric(plain[name])} | {format_metric(weighted.get(name))} |")
    lines += ["", "## Locality strings", ""]
    mml = "n/a" if s.mean_min_levenshtein is None else f"{s.mean_min_levenshtein:.3f}"
    lines += [f"Mean minimum Levenshtein distance: {mml}", ""]
    return "\n".join(lines)


def _write(path: Path, text: str) -> None:
    try:
        path.write_text(text, encoding="utf-8", newline="\n")
    except OSError as exc:
        raise ReportIoError(f"cannot write {path}: {exc}") from exc


def performance_report(
    pred: Sequence[OccurrenceRecord],
    obs: Sequence[OccurrenceRecord],
    out_dir: str | Path,
    coord_tolerance_deg: float = DEFAULT_COORD_TOLERANCE_DEG,
    locality_threshold: float = DEFAULT_LOCALITY_THRESHOLD,
    generated_at: str | None = None,
) -> ValidationReport:
    """Write ``<species_slug>.md`` for every species seen on either side, plus ``global.md``.

    ``generated_at`` is printed verbatim; leave it None for byte-stable output.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ReportIoError(f"cannot create {out}: {exc}") from exc
    overall = summarize("all species", pred, obs, coord_tolerance_deg, locality_threshold)
    report = ValidationReport(overall)
    for species in sorted({r.species for r in pred} | {r.species for r in obs}):
        report.species[species] = summarize(
            species,
            [r for r in pred if r.species == species],
            [r for r in obs if r.species == species],
            coord_tolerance_deg,
            locality_threshold,
        )
    for species, summary in report.species.items():
        path = out / f"{species_slug(species)}.md"
        _write(path, render_summary(summary, generated_at))
        report.files.append(path)
    path = out / GLOBAL_REPORT
    text = render_summary(overall, generated_at)
    table = ["## Per species", "", "| species | TP | FP | FN | f1 |", "|---|---|---|---|---|"]
    for species, s in report.species.items():
        table.append(f"| {species} | {_num(s.counts.tp)} | {_num(s.counts.fp)} | {_num(s.counts.fn)} | {format_metric(s.metrics.f1)} |")
    _write(path, text + "\n" + "\n".join(table) + "\n")
    report.files.append(path)
    return report
