"""Turn model reply tables into occurrence records."""

from __future__ import annotations

import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable

from arete.errors import NoTableFoundError, OutOfRangeError
from arete.records import Coordinate, OccurrenceRecord, normalize_species

logger = logging.getLogger(__name__)

HEADER_CELLS = frozenset({"species", "location", "coordinates"})
EMPTY_CELLS = frozenset({"", "na", "n/a", "n.a.", "-", "–", "—", "none", "null", "unknown", "not given", "not specified"})


@dataclass(frozen=True)
class RawRow:
    species_cell: str
    location_cell: str
    coordinates_cell: str
    source: tuple[str, int] = ("", 0)


@dataclass
class ParsedTable:
    rows: list[RawRow] = field(default_factory=list)
    skipped: int = 0


def _split_row(line: str) -> list[str]:
    line = line.strip()
    if line.startswith("|"):
        line = line[1:]
    if line.endswith("|"):
        line = line[:-1]
    return [cell.strip() for cell in line.split("|")]


def _is_separator(cells: list[str]) -> bool:
    return all(c and set(c) <= set("-: ") for c in cells) and any("-" in c for c in cells)


def parse_response_table(text: str, source: tuple[str, int] = ("", 0)) -> ParsedTable:
    """Collect three-cell ``|`` rows from a model reply.

    Header and markdown separator rows are dropped silently. Lines with pipes
    that do not form a three-cell row are counted in ``skipped``. Raises
    NoTableFoundError when no data row survives.
    """
    table = ParsedTable()
    for line in text.splitlines():
        pipes = line.count("|")
        if pipes == 0:
            continue
        if pipes == 1:
            table.skipped += 1
            continue
        cells = _split_row(line)
        if _is_separator(cells):
            continue
        if any(c.strip("*_ ").lower() in HEADER_CELLS for c in cells):
            continue
        if len(cells) != 3 or not any(cells):
            table.skipped += 1
            continue
        table.rows.append(RawRow(cells[0], cells[1], cells[2], source))
    if table.skipped:
        logger.warning("chunk %s: skipped %d malformed table lines", source, table.skipped)
    if not table.rows:
        raise NoTableFoundError(f"no table rows in reply for chunk {source}", table.skipped)
    return table


def _component(p: str, pre: bool = True, post: bool = True) -> str:
    pre_pat = rf"(?P<{p}pre>[NSEW])?" if pre else rf"(?P<{p}pre>(?!))?"
    post_pat = rf"(?P<{p}post>[NSEW])?" if post else rf"(?P<{p}post>(?!))?"
    return rf"""
        {pre_pat}\s*
        (?P<{p}sign>[-+])?\s*
        (?:
            (?P<{p}deg>\d+(?:\.\d+)?)\s*°\s*
            (?:(?P<{p}min>\d+(?:\.\d+)?)\s*'(?!')\s*)?
            (?:(?P<{p}sec>\d+(?:\.\d+)?)\s*(?:"|'')\s*)?
          |
            (?P<{p}dec>\d+(?:\.\d+)?|\.\d+)
        )
        \s*{post_pat}
    """


def _pair(pre: bool, post: bool) -> re.Pattern[str]:
    return re.compile(
        rf"""^\s*{_component("a", pre, post)}(?:\s*[,;/]\s*|\s+|(?<=[NSEW])|(?=[NSEW])){_component("b", pre, post)}\s*$""",
        re.VERBOSE | re.IGNORECASE,
    )


# letters consistently before, consistently after, then anything goes
_PAIRS = (_pair(True, False), _pair(False, True), _pair(True, True))
_GLYPHS = str.maketrans({
    "º": "°", "˚": "°",
    "′": "'", "’": "'", "‘": "'", "´": "'",
    "″": '"', "“": '"', "”": '"',
    "−": "-",
})


@dataclass(frozen=True)
class _Part:
    value: float
    sign: str | None
    hemisphere: str | None


def _part(m: re.Match[str], p: str) -> _Part | None:
    pre, post = m[f"{p}pre"], m[f"{p}post"]
    if pre and post and pre.upper() != post.upper():
        return None
    hemisphere = (pre or post or "").upper() or None
    if m[f"{p}dec"] is not None:
        value = float(m[f"{p}dec"])
    else:
        value = float(m[f"{p}deg"])
        minutes = float(m[f"{p}min"] or 0)
        seconds = float(m[f"{p}sec"] or 0)
        if minutes >= 60 or seconds >= 60:
            return None
        if (minutes or seconds) and value != int(value):
            return None
        value += minutes / 60 + seconds / 3600
    return _Part(value, m[f"{p}sign"], hemisphere)


def _signed(part: _Part) -> float:
    negative = part.sign == "-"
    if part.hemisphere is not None:
        hemi_negative = part.hemisphere in "SW"
        if part.sign is not None and negative != hemi_negative:
            logger.warning("sign contradicts hemisphere %s; using the hemisphere", part.hemisphere)
        negative = hemi_negative
    return -part.value if negative else part.value


def parse_coordinates(cell: str) -> Coordinate | None:
    """Parse a latitude/longitude pair, latitude first unless letters say otherwise.

    Accepts signed decimals, decimals with N/S/E/W before or after, and
    degree-minute-second notation. Returns None for anything unrecognised and
    raises OutOfRangeError for a recognised pair beyond valid bounds.
    """
    text = cell.translate(_GLYPHS).strip()
    if text.lower() in EMPTY_CELLS:
        return None
    for pattern in _PAIRS:
        m = pattern.match(text)
        if m is None:
            continue
        first, second = _part(m, "a"), _part(m, "b")
        if first is not None and second is not None:
            break
    else:
        return None
    lat_letters, lon_letters = set("NS"), set("EW")
    h1, h2 = first.hemisphere, second.hemisphere
    if (h1 in lon_letters and h2 not in lon_letters) or (h2 in lat_letters and h1 not in lat_letters):
        first, second = second, first
    elif (h1 and h1 not in lat_letters) or (h2 and h2 not in lon_letters):
        return None
    lat, lon = _signed(first), _signed(second)
    if abs(lat) > 90 or abs(lon) > 180:
        raise OutOfRangeError(f"coordinate ({lat}, {lon}) out of range in {cell!r}")
    return Coordinate(lat, lon)


def clean_locality(cell: str) -> str:
    cell = cell.strip()
    return "" if cell.lower() in EMPTY_CELLS else cell


def assemble_records(
    rows: Iterable[RawRow],
    tax_filter: str | None = None,
    stats: Counter | None = None,
) -> list[OccurrenceRecord]:
    """Build normalized, de-duplicated records from parsed rows.

    Row-level problems never raise; they are tallied into ``stats`` when a
    Counter is passed.
    """
    stats = stats if stats is not None else Counter()
    wanted = normalize_species(tax_filter).lower() if tax_filter else None
    seen: set[tuple] = set()
    out: list[OccurrenceRecord] = []
    for row in rows:
        species = normalize_species(row.species_cell)
        if not species:
            stats["missing_species"] += 1
            continue
        if wanted is not None and species.lower() != wanted:
            stats["filtered_taxon"] += 1
            continue
        locality = clean_locality(row.location_cell)
        try:
            coord = parse_coordinates(row.coordinates_cell)
        except OutOfRangeError as exc:
            logger.warning("dropping coordinate: %s", exc)
            stats["coordinate_out_of_range"] += 1
            coord = None
        if not locality and coord is None:
            stats["no_location_data"] += 1
            continue
        doc, idx = row.source
        key = (doc, species, locality, coord)
        if key in seen:
            stats["duplicate"] += 1
            continue
        seen.add(key)
        out.append(OccurrenceRecord(species, locality, coord, doc, idx))
    return out
