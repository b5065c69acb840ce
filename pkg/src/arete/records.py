"""Core record types and the occurrence CSV format."""

from __future__ import annotations

import csv
import io
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, TextIO

from arete.errors import OutOfRangeError, SchemaError

CSV_HEADER = ("species", "locality", "latitude", "longitude", "source_document", "chunk_index")


@dataclass(frozen=True, order=True)
class Coordinate:
    """A point in decimal degrees."""

    latitude: float
    longitude: float

    def __post_init__(self) -> None:
        lat, lon = float(self.latitude), float(self.longitude)
        if not (math.isfinite(lat) and math.isfinite(lon)):
            raise OutOfRangeError(f"non-finite coordinate ({lat}, {lon})")
        if abs(lat) > 90:
            raise OutOfRangeError(f"latitude {lat} outside [-90, 90]")
        if abs(lon) > 180:
            raise OutOfRangeError(f"longitude {lon} outside [-180, 180]")
        object.__setattr__(self, "latitude", lat)
        object.__setattr__(self, "longitude", lon)


@dataclass(frozen=True)
class OccurrenceRecord:
    species: str
    locality: str
    coordinate: Coordinate | None = None
    source_document: str = ""
    chunk_index: int = 0

    def __post_init__(self) -> None:
        if not self.species:
            raise ValueError("species must be nonempty")
        if not self.locality and self.coordinate is None:
            raise ValueError("record needs a locality or a coordinate")

    @property
    def key(self) -> tuple[str, str, Coordinate | None]:
        return (self.species, self.locality, self.coordinate)


_WS = re.compile(r"\s+")


def normalize_species(name: str) -> str:
    """Trim, collapse whitespace, capitalize the genus and lowercase the rest.

    Markdown emphasis markers that models like to wrap names in are dropped.
    """
    name = _WS.sub(" ", name.strip().strip("*_").strip())
    if not name:
        return ""
    genus, *rest = name.split(" ")
    genus = genus[:1].upper() + genus[1:].lower()
    return " ".join([genus, *(w.lower() for w in rest)])


def write_records(records: Iterable[OccurrenceRecord], fh: TextIO) -> None:
    writer = csv.writer(fh)
    writer.writerow(CSV_HEADER)
    for r in records:
        c = r.coordinate
        writer.writerow([
            r.species,
            r.locality,
            "" if c is None else repr(c.latitude),
            "" if c is None else repr(c.longitude),
            r.source_document,
            r.chunk_index,
        ])


def records_to_csv(records: Iterable[OccurrenceRecord]) -> str:
    buf = io.StringIO()
    write_records(records, buf)
    return buf.getvalue()


def read_records(fh: TextIO) -> list[OccurrenceRecord]:
    """Parse an occurrence CSV; raises SchemaError if the header differs."""
    reader = csv.reader(fh)
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
        raise SchemaError(f"expected header {','.join(CSV_HEADER)}, got {header}")
    out = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(CSV_HEADER):
            raise SchemaError(f"line {lineno}: expected {len(CSV_HEADER)} fields, got {len(row)}")
        species, locality, lat, lon, doc, idx = row
        coord = None
        if lat.strip() or lon.strip():
            try:
                coord = Coordinate(float(lat), float(lon))
            except ValueError as exc:
                raise SchemaError(f"line {lineno}: bad coordinate: {exc}") from exc
        try:
            chunk_index = int(idx) if idx.strip() else 0
        except ValueError as exc:
            raise SchemaError(f"line {lineno}: bad chunk_index {idx!r}") from exc
        try:
            out.append(OccurrenceRecord(species, locality, coord, doc, chunk_index))
        except ValueError as exc:
            raise SchemaError(f"line {lineno}: {exc}") from exc
    return out


def load_records(path: str | Path) -> list[OccurrenceRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        return read_records(fh)


def save_records(records: Iterable[OccurrenceRecord], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        write_records(records, fh)
