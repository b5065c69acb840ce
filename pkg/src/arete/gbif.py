"""GBIF occurrence search client and extracted-vs-GBIF dataset comparison."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

import requests

from arete.errors import (
    AreteError,
    FixtureMissingError,
    ApiError,
    NetworkError,
    OutOfRangeError,
    RequestTimeoutError,
)
from arete.geo import Region, eoo_area_km2, point_in_polygon
from arete.ratelimit import Clock, SlidingWindowLimiter
from arete.records import Coordinate, OccurrenceRecord
from arete.validation.report import species_slug

logger = logging.getLogger(__name__)

GBIF_SEARCH_URL = "https://api.gbif.org/v1/occurrence/search"
MAX_PAGE_SIZE = 300
MAX_LIMIT = 10_000
DEFAULT_GBIF_REQUESTS_PER_MINUTE = 60
IUCN_EOO_BANDS = (100.0, 5000.0, 20000.0)
IUCN_CATEGORIES = ("CR", "EN", "VU")


class GbifBackend(Protocol):
    def page(self, species: str, offset: int, limit: int) -> dict: ...


def page_filename(species: str, offset: int) -> str:
    return f"{species_slug(species)}.{offset}.json"


class LiveGbif:
    """HTTP backend. Optionally writes every page it fetches into ``record_dir``."""

    def __init__(
        self,
        *,
        url: str = GBIF_SEARCH_URL,
        session: requests.Session | None = None,
        limiter: SlidingWindowLimiter | None = None,
        clock: Clock | None = None,
        timeout_seconds: float = 30.0,
        record_dir: str | Path | None = None,
    ):
        self.url = url
        self.session = session or requests.Session()
        self.limiter = limiter or SlidingWindowLimiter(DEFAULT_GBIF_REQUESTS_PER_MINUTE, 60.0, clock)
        self.timeout_seconds = timeout_seconds
        self.record_dir = Path(record_dir) if record_dir else None

    def page(self, species: str, offset: int, limit: int) -> dict:
        self.limiter.acquire()
        params = {"scientificName": species, "limit": limit, "offset": offset}
        logger.debug("GET %s %s", self.url, params)
        try:
            resp = self.session.get(self.url, params=params, timeout=self.timeout_seconds)
        except requests.Timeout:
            raise RequestTimeoutError(f"GBIF did not answer within {self.timeout_seconds}s") from None
        except requests.RequestException as exc:
            raise NetworkError(f"GBIF request failed: {exc}") from None
        if not 200 <= resp.status_code < 300:
            raise ApiError(f"GBIF returned HTTP {resp.status_code}", resp.status_code)
        try:
            data = resp.json()
        except ValueError:
            raise ApiError("GBIF returned a non-JSON body", resp.status_code) from None
        if self.record_dir is not None:
            self.record_dir.mkdir(parents=True, exist_ok=True)
            path = self.record_dir / page_filename(species, offset)
            path.write_text(json.dumps(data, indent=1, sort_keys=True, ensure_ascii=False), encoding="utf-8")
        return data


class FixtureGbif:
    """Reads pages recorded as ``<species_slug>.<offset>.json``."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        if not self.directory.is_dir():
            raise FixtureMissingError(f"GBIF fixture directory {self.directory} does not exist")

    def page(self, species: str, offset: int, limit: int) -> dict:
        path = self.directory / page_filename(species, offset)
        if not path.is_file():
            raise FixtureMissingError(f"no recorded GBIF page {path.name}")
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)


def _to_record(species: str, row: dict) -> OccurrenceRecord | None:
    coord = None
    lat, lon = row.get("decimalLatitude"), row.get("decimalLongitude")
    if lat is not None and lon is not None:
        try:
            coord = Coordinate(float(lat), float(lon))
        except (OutOfRangeError, TypeError, ValueError):
            coord = None
    locality = str(row.get("locality") or row.get("verbatimLocality") or row.get("country") or "").strip()
    if coord is None and not locality:
        return None
    key = row.get("key", row.get("gbifID", ""))
    return OccurrenceRecord(species, locality, coord, f"gbif:{key}", 0)


def fetch_occurrences(species: str, limit: int, backend: GbifBackend) -> list[OccurrenceRecord]:
    """Page through the occurrence search until ``limit`` rows or the end of records.

    Rows with neither coordinates nor any place name are dropped.
    """
    if not 1 <= limit <= MAX_LIMIT:
        raise ValueError(f"limit must be in [1, {MAX_LIMIT}]")
    rows: list[dict] = []
    offset = 0
    while len(rows) < limit:
        data = backend.page(species, offset, min(MAX_PAGE_SIZE, limit - len(rows)))
        results = data.get("results") or []
        rows.extend(results)
        if data.get("endOfRecords", True) or not results:
            break
        offset += len(results)
    records = []
    for row in rows[:limit]:
        rec = _to_record(species, row)
        if rec is None:
            logger.info("GBIF row %s has no location data; skipped", row.get("key"))
        else:
            records.append(rec)
    return records


def iucn_category(eoo_km2: float, bands: Sequence[float] = IUCN_EOO_BANDS) -> str:
    """Criterion-B EOO band; "-" when above the largest threshold."""
    for threshold, name in zip(bands, IUCN_CATEGORIES):
        if eoo_km2 < threshold:
            return name
    return "-"


@dataclass
class DatasetSummary:
    species_count: int = 0
    record_count: int = 0
    georeferenced_record_count: int = 0
    country_counts: dict[str, int] = field(default_factory=dict)


@dataclass
class EooComparison:
    species: str
    gbif_km2: float
    extracted_km2: float
    ratio: float
    gbif_category: str
    extracted_category: str

    @property
    def category_changed(self) -> bool:
        return self.gbif_category != self.extracted_category


@dataclass
class ComparisonSummary:
    extracted: DatasetSummary
    gbif: DatasetSummary
    overlap_species_count: int
    new_country_counts: dict[str, int] = field(default_factory=dict)
    eoo: list[EooComparison] = field(default_factory=list)
    notices: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        out = asdict(self)
        for item, cmp in zip(out["eoo"], self.eoo):
            item["category_changed"] = cmp.category_changed
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_markdown(self) -> str:
        e, g = self.extracted, self.gbif
        lines = [
            "| | extracted | GBIF |",
            "|---|---|---|",
            f"| species | {e.species_count} | {g.species_count} |",
            f"| records | {e.record_count} | {g.record_count} |",
            f"| georeferenced records | {e.georeferenced_record_count} | {g.georeferenced_record_count} |",
            f"| countries | {len(e.country_counts)} | {len(g.country_counts)} |",
            "",
            f"Species in both datasets: {self.overlap_species_count}",
        ]
        if self.eoo:
            lines += [
                "",
                "| species | GBIF EOO km² | extracted EOO km² | ratio | category change |",
                "|---|---|---|---|---|",
            ]
            for c in self.eoo:
                change = f"{c.gbif_category} -> {c.extracted_category}" if c.category_changed else "no"
                lines.append(f"| {c.species} | {c.gbif_km2:.1f} | {c.extracted_km2:.1f} | {c.ratio:.3f} | {change} |")
        countries = sorted(set(e.country_counts) | set(g.country_counts))
        if countries:
            lines += ["", "| country | extracted species | GBIF species | new with extraction |", "|---|---|---|---|"]
            for name in countries:
                lines.append(
                    f"| {name} | {e.country_counts.get(name, 0)} | {g.country_counts.get(name, 0)} "
                    f"| {self.new_country_counts.get(name, 0)} |"
                )
        return "\n".join(lines) + "\n"


def _species_by_region(records: Sequence[OccurrenceRecord], regions: Sequence[Region]) -> dict[str, set[str]]:
    found: dict[str, set[str]] = {}
    for r in records:
        if r.coordinate is None:
            continue
        for region in regions:
            if point_in_polygon(r.coordinate, region):
                found.setdefault(region.name, set()).add(r.species)
    return found


def _summary(records: Sequence[OccurrenceRecord], by_region: dict[str, set[str]]) -> DatasetSummary:
    return DatasetSummary(
        species_count=len({r.species for r in records}),
        record_count=len(records),
        georeferenced_record_count=sum(r.coordinate is not None for r in records),
        country_counts={name: len(s) for name, s in sorted(by_region.items())},
    )


def _points(records: Sequence[OccurrenceRecord], species: str) -> list[Coordinate]:
    return [r.coordinate for r in records if r.species == species and r.coordinate is not None]


def compare_datasets(
    extracted: Sequence[OccurrenceRecord],
    gbif: Sequence[OccurrenceRecord],
    regions: Sequence[Region] | None = None,
    iucn_bands: Sequence[float] = IUCN_EOO_BANDS,
) -> ComparisonSummary:
    """Counts, species overlap, optional per-region tallies and per-species EOO ratios.

    A ratio is reported only when both datasets give the species at least three
    points with a nonzero hull area. Ratio is extracted / GBIF.
    """
    regions = list(regions or [])
    ext_regions = _species_by_region(extracted, regions)
    gbif_regions = _species_by_region(gbif, regions)
    new_counts = {}
    for name, species in sorted(ext_regions.items()):
        fresh = species - gbif_regions.get(name, set())
        if fresh:
            new_counts[name] = len(fresh)
    ext_species = {r.species for r in extracted}
    gbif_species = {r.species for r in gbif}
    summary = ComparisonSummary(
        _summary(extracted, ext_regions),
        _summary(gbif, gbif_regions),
        len(ext_species & gbif_species),
        new_counts,
    )
    for species in sorted(ext_species & gbif_species):
        e_pts, g_pts = _points(extracted, species), _points(gbif, species)
        if len(e_pts) < 3 or len(g_pts) < 3:
            continue
        try:
            e_area, g_area = eoo_area_km2(e_pts), eoo_area_km2(g_pts)
        except AreteError as exc:
            summary.notices.append(f"{species}: {exc}")
            continue
        if e_area <= 0 or g_area <= 0:
            summary.notices.append(f"{species}: collinear points, no EOO")
            continue
        summary.eoo.append(
            EooComparison(
                species, g_area, e_area, e_area / g_area,
                iucn_category(g_area, iucn_bands), iucn_category(e_area, iucn_bands),
            )
        )
    return summary
