"""Command-line entry point: ``arete extract | outliers | report | compare``."""

from __future__ import annotations

import argparse
import csv
import datetime as dt
import logging
import os
import sys
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

from arete import __version__
from arete.errors import AreteError, FixtureMissingError, EmptyDocumentError, GatewayError, NoTableFoundError
from arete.extraction import RawRow, assemble_records, parse_response_table
from arete.geo import load_regions, normalize_features, read_env_grid
from arete.ingest import DEFAULT_PDF_EXTRACTOR_CMD, DEFAULT_TOKEN_BUDGET, chunk_text, load_document
from arete.llm import (
    API_KEY_ENV,
    DEFAULT_ENDPOINT,
    DEFAULT_MODEL,
    ChatClient,
    Completer,
    CompletionResult,
    FixtureStore,
    LlmConfig,
    PromptText,
    build_prompt,
)
from arete.outlier import METHODS, OutlierConfig, detect_outliers, write_outlier_report
from arete.records import Coordinate, OccurrenceRecord, load_records, write_records

logger = logging.getLogger("arete")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NETWORK = 3
EXIT_NO_DATA = 4

SERVICES = ("openai",)

# option dest -> (default, converter) for values a config file may also supply
CONFIG_KEYS: dict[str, tuple[object, Callable[[str], object]]] = {
    "key": ("", str),
    "tier": ("free", str),
    "service": ("openai", str),
    "model": (DEFAULT_MODEL, str),
    "endpoint": (DEFAULT_ENDPOINT, str),
    "rpm": (0, int),
    "max_retries": (3, int),
    "timeout": (60.0, float),
    "token_budget": (DEFAULT_TOKEN_BUDGET, int),
    "pdf_extractor_cmd": (DEFAULT_PDF_EXTRACTOR_CMD, str),
    "tax": (None, str),
    "jobs": (1, int),
    "quantile": (0.95, float),
    "min_points": (5, int),
    "svm_c": (1.0, float),
    "svm_gamma": (None, float),
    "pseudo_absences": (None, int),
    "seed": (0, int),
    "coord_tolerance": (0.02, float),
    "locality_threshold": (0.8, float),
    "gbif_limit": (300, int),
}


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_INPUT):
        super().__init__(message)
        self.code = code


def read_config_file(path: str | Path) -> dict[str, str]:
    """Parse a flat ``key = value`` file. ``#`` starts a comment; quotes are optional."""
    out: dict[str, str] = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise CliError(f"cannot read config file {path}: {exc}") from exc
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line or line.startswith(("#", "[")):
            continue
        if "=" not in line:
            raise CliError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if len(value) >= 2 and value[0] == value[-1] and value[0] in "'\"":
            value = value[1:-1]
        out[key.replace("-", "_")] = value
    return out


def resolve_config(args: argparse.Namespace) -> argparse.Namespace:
    """Fill unset options from the config file, then the environment, then defaults."""
    file_values = read_config_file(args.config) if getattr(args, "config", None) else {}
    unknown = set(file_values) - set(CONFIG_KEYS)
    if unknown:
        raise CliError(f"unknown config keys: {', '.join(sorted(unknown))}")
    for dest, (default, convert) in CONFIG_KEYS.items():
        if not hasattr(args, dest) or getattr(args, dest) is not None:
            continue
        if dest in file_values:
            try:
                value = convert(file_values[dest])
            except ValueError as exc:
                raise CliError(f"config key {dest}: {exc}") from exc
        elif dest == "key":
            value = os.environ.get(API_KEY_ENV, default)
        else:
            value = default
        setattr(args, dest, value)
    return args


# extract


@dataclass
class DocumentResult:
    rows: list[RawRow] = field(default_factory=list)
    chunks: int = 0
    no_table: int = 0
    skipped_lines: int = 0


class RecordingCompleter:
    """Live completer that stores every response in a fixture directory."""

    def __init__(self, inner: Completer, store: FixtureStore):
        self.inner = inner
        self.store = store

    def complete(self, prompt: PromptText) -> CompletionResult:
        result = self.inner.complete(prompt)
        self.store.record(prompt, result.text)
        return result


def _make_completer(args: argparse.Namespace) -> Completer:
    if args.replay:
        if not Path(args.replay).is_dir():
            raise CliError(f"replay fixture directory {args.replay} does not exist")
        return FixtureStore(args.replay)
    if args.service not in SERVICES:
        raise CliError(f"unsupported service {args.service!r}; available: {', '.join(SERVICES)}")
    if not args.key:
        raise CliError(f"an API key is required: pass --key, set key in --config, or export {API_KEY_ENV}")
    try:
        config = LlmConfig(
            api_key=args.key,
            endpoint_url=args.endpoint,
            model_name=args.model,
            tier=args.tier,
            requests_per_minute=args.rpm,
            max_retries=args.max_retries,
            timeout_seconds=args.timeout,
        )
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    client: Completer = ChatClient(config)
    if args.record:
        client = RecordingCompleter(client, FixtureStore(args.record))
    return client


def _process_document(path: str, args: argparse.Namespace, completer: Completer) -> DocumentResult:
    doc = load_document(path, args.pdf_extractor_cmd)
    result = DocumentResult()
    try:
        chunks = chunk_text(doc.sanitized_text, args.token_budget, doc.id)
    except EmptyDocumentError:
        logger.warning("%s contains no text; skipped", doc.id)
        return result
    for chunk in chunks:
        if not chunk.text.strip():
            continue
        result.chunks += 1
        reply = completer.complete(build_prompt(chunk))
        try:
            table = parse_response_table(reply.text, chunk.ref)
        except NoTableFoundError as exc:
            logger.info("%s", exc)
            result.no_table += 1
            result.skipped_lines += exc.skipped
            continue
        result.rows.extend(table.rows)
        result.skipped_lines += table.skipped
    logger.info("%s: %d chunks, %d table rows, %d without a table", doc.id, result.chunks, len(result.rows), result.no_table)
    return result


def cmd_extract(args: argparse.Namespace) -> int:
    if args.replay and args.record:
        raise CliError("--replay and --record are mutually exclusive")
    if args.token_budget < 64:
        raise CliError("--token-budget must be at least 64")
    if args.jobs < 1:
        raise CliError("--jobs must be >= 1")
    for path in args.paths:
        if not Path(path).is_file():
            raise CliError(f"input file not found: {path}")
    completer = _make_completer(args)
    if args.jobs == 1:
        results = [_process_document(p, args, completer) for p in args.paths]
    else:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(lambda p: _process_document(p, args, completer), args.paths))
    stats: Counter = Counter()
    rows = [row for res in results for row in res.rows]
    records = assemble_records(rows, args.tax, stats)
    for name, count in sorted(stats.items()):
        logger.info("%s: %d", name.replace("_", " "), count)
    _emit(args.out, lambda fh: write_records(records, fh))
    logger.info("wrote %d records", len(records))
    if not records and any(r.no_table for r in results):
        logger.warning("no records extracted")
        return EXIT_NO_DATA
    return EXIT_OK


def _emit(out: str | None, write: Callable) -> None:
    if out is None or out == "-":
        write(sys.stdout)
        sys.stdout.flush()
        return
    try:
        with open(out, "w", newline="", encoding="utf-8") as fh:
            write(fh)
    except OSError as exc:
        raise CliError(f"cannot write {out}: {exc}") from exc


# outliers


def _read_points(path: str) -> list[Coordinate]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if not reader.fieldnames or not {"latitude", "longitude"} <= set(reader.fieldnames):
                raise CliError(f"{path}: needs latitude and longitude columns")
            return [Coordinate(float(r["latitude"]), float(r["longitude"])) for r in reader]
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}") from exc
    except ValueError as exc:
        raise CliError(f"{path}: {exc}") from exc


def cmd_outliers(args: argparse.Namespace) -> int:
    records = load_records(args.records)
    grid = None
    if args.grid:
        grid = normalize_features(read_env_grid(args.grid))
    methods = tuple(m.strip() for m in args.methods.split(",")) if args.methods else (METHODS if grid else ("geo",))
    if grid is None and {"env", "svm"} & set(methods):
        raise CliError("the env and svm methods need --grid")
    try:
        cfg = OutlierConfig(
            quantile=args.quantile,
            methods=methods,
            min_points=args.min_points,
            svm_c=args.svm_c,
            svm_gamma=args.svm_gamma,
            pseudo_absence_count=args.pseudo_absences,
            rng_seed=args.seed,
        )
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    absences = _read_points(args.absences) if args.absences else None
    report = detect_outliers(records, grid, cfg, absences)
    for notice in report.notices:
        logger.info("%s", notice)
    by_species: dict[str, Counter] = {}
    for row in report.rows:
        c = by_species.setdefault(row.record.species, Counter())
        for m in methods:
            c[m] += bool(getattr(row, f"{m}_flag"))
    for species, c in sorted(by_species.items()):
        logger.info("%s: %s", species, ", ".join(f"{m} {c[m]}" for m in methods))
    _emit(args.out, lambda fh: write_outlier_report(report, fh))
    return EXIT_OK


# report


def cmd_report(args: argparse.Namespace) -> int:
    from arete.validation import format_metric, performance_report

    pred = load_records(args.pred)
    obs = load_records(args.obs)
    stamp = args.fixed_clock or dt.datetime.now(dt.timezone.utc).replace(microsecond=0).isoformat()
    rep = performance_report(
        pred, obs, args.out_dir, args.coord_tolerance, args.locality_threshold, generated_at=stamp
    )
    for path in rep.files:
        logger.info("wrote %s", path)
    m = rep.overall.metrics
    sys.stdout.write(
        "".join(f"{name}\t{format_metric(getattr(m, name))}\n" for name in ("accuracy", "recall", "precision", "f1"))
    )
    return EXIT_OK


# compare


def cmd_compare(args: argparse.Namespace) -> int:
    from arete.gbif import IUCN_EOO_BANDS, FixtureGbif, LiveGbif, compare_datasets, fetch_occurrences

    extracted = load_records(args.extracted)
    regions = load_regions(args.regions) if args.regions else None
    bands = IUCN_EOO_BANDS
    if args.iucn_bands:
        try:
            bands = tuple(float(x) for x in args.iucn_bands.split(","))
        except ValueError as exc:
            raise CliError(f"--iucn-bands: {exc}") from exc
        if len(bands) != 3 or list(bands) != sorted(bands):
            raise CliError("--iucn-bands needs three increasing thresholds")
    if args.fixtures:
        backend = FixtureGbif(args.fixtures)
    else:
        backend = LiveGbif(record_dir=args.record)
    species = sorted({r.species for r in extracted})

    def fetch(name: str) -> list[OccurrenceRecord]:
        return fetch_occurrences(name, args.gbif_limit, backend)

    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            pages = list(pool.map(fetch, species))
    else:
        pages = [fetch(s) for s in species]
    gbif = [r for page in pages for r in page]
    logger.info("fetched %d GBIF records for %d species", len(gbif), len(species))
    summary = compare_datasets(extracted, gbif, regions, bands)
    for notice in summary.notices:
        logger.info("%s", notice)
    _emit(args.out, lambda fh: fh.write(summary.to_json()))
    if args.markdown:
        _emit(args.markdown, lambda fh: fh.write(summary.to_markdown()))
    return EXIT_OK


# parser


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key=value file supplying defaults for any option")
    p.add_argument("-v", "--verbose", action="count", default=0, help="log progress to stderr (repeat for debug)")
    p.add_argument("--jobs", type=int, default=None, help="parallel workers (default 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="arete", description="Extract and screen species occurrence records.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="extract occurrence records from documents")
    p.add_argument("paths", nargs="+", help=".txt or .pdf documents")
    p.add_argument("--tax", default=None, help="keep only this species")
    p.add_argument("--key", default=None, help=f"API key (else config file, else ${API_KEY_ENV})")
    p.add_argument("--tier", choices=("free", "premium"), default=None)
    p.add_argument("--service", default=None, help="completion service (only 'openai')")
    p.add_argument("--model", default=None)
    p.add_argument("--endpoint", default=None, help="base URL of an OpenAI-compatible API")
    p.add_argument("--rpm", type=int, default=None, help="requests per minute (default from tier)")
    p.add_argument("--max-retries", type=int, default=None)
    p.add_argument("--timeout", type=float, default=None)
    p.add_argument("--token-budget", type=int, default=None)
    p.add_argument("--pdf-extractor-cmd", default=None, help="command with {path}, printing text to stdout")
    p.add_argument("--replay", metavar="DIR", help="answer prompts from recorded fixtures; no network")
    p.add_argument("--record", metavar="DIR", help="store live responses as fixtures")
    p.add_argument("--out", help="output CSV (default stdout)")
    _add_common(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("outliers", help="flag suspicious coordinates")
    p.add_argument("records", help="records CSV")
    p.add_argument("--grid", help="environmental grid CSV (lon,lat,f1..fn)")
    p.add_argument("--methods", help=f"comma-separated subset of {','.join(METHODS)}")
    p.add_argument("--quantile", type=float, default=None)
    p.add_argument("--min-points", type=int, default=None)
    p.add_argument("--svm-c", type=float, default=None)
    p.add_argument("--svm-gamma", type=float, default=None)
    p.add_argument("--pseudo-absences", type=int, default=None)
    p.add_argument("--absences", help="CSV of true absence points (latitude,longitude)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", help="output CSV (default stdout)")
    _add_common(p)
    p.set_defaults(func=cmd_outliers)

    p = sub.add_parser("report", help="score extracted records against a reference")
    p.add_argument("pred", help="extracted records CSV")
    p.add_argument("obs", help="reference records CSV")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--coord-tolerance", type=float, default=None, help="degrees (default 0.02)")
    p.add_argument("--locality-threshold", type=float, default=None, help="similarity (default 0.8)")
    p.add_argument("--fixed-clock", metavar="TIMESTAMP", help="timestamp printed in reports instead of now")
    _add_common(p)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("compare", help="compare extracted records with GBIF")
    p.add_argument("extracted", help="extracted records CSV")
    p.add_argument("--fixtures", metavar="DIR", help="read recorded GBIF pages; no network")
    p.add_argument("--record", metavar="DIR", help="store fetched GBIF pages")
    p.add_argument("--gbif-limit", type=int, default=None, help="max records per species (default 300)")
    p.add_argument("--regions", help="JSON country polygons for per-country tallies")
    p.add_argument("--iucn-bands", help="EOO thresholds in km2 (default 100,5000,20000)")
    p.add_argument("--out", help="summary JSON (default stdout)")
    p.add_argument("--markdown", help="also write a markdown summary here")
    _add_common(p)
    p.set_defaults(func=cmd_compare)
    return parser


def _exit_code(exc: AreteError) -> int:
    # a missing fixture is a problem with the inputs, not with the network
    if isinstance(exc, GatewayError) and not isinstance(exc, FixtureMissingError):
        return EXIT_NETWORK
    return EXIT_INPUT


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING if args.verbose == 0 else logging.INFO if args.verbose == 1 else logging.DEBUG
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    root = logging.getLogger("arete")
    root.handlers[:] = [handler]
    root.setLevel(level)
    root.propagate = False
    try:
        resolve_config(args)
        return args.func(args)
    except CliError as exc:
        print(f"arete: error: {exc}", file=sys.stderr)
        return exc.code
    except OSError as exc:
        print(f"arete: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except AreteError as exc:
        print(f"arete: error: {exc}", file=sys.stderr)
        return _exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
