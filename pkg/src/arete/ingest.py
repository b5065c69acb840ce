"""Document loading, text sanitization and token-budgeted chunking."""

from __future__ import annotations

import logging
import math
import re
import shlex
import subprocess
import unicodedata
from dataclasses import dataclass
from pathlib import Path

from arete.errors import (
    EmptyDocumentError,
    ExtractorError,
    PdfNoTextLayerError,
    UnsupportedFormatError,
)

logger = logging.getLogger(__name__)

DEFAULT_TOKEN_BUDGET = 3000
MIN_TOKEN_BUDGET = 64
CHARS_PER_TOKEN = 4
# Any command that writes the PDF's text layer to stdout works; {path} is substituted.
DEFAULT_PDF_EXTRACTOR_CMD = "pdftotext -enc UTF-8 {path} -"

COORDINATE_PUNCTUATION = frozenset("°′″'\".,;:-–()/")


@dataclass(frozen=True)
class Document:
    id: str
    source_path: Path
    raw_text: str
    sanitized_text: str
    page_count: int = 0


@dataclass(frozen=True)
class Chunk:
    document_id: str
    index: int
    text: str
    token_estimate: int

    @property
    def ref(self) -> tuple[str, int]:
        return (self.document_id, self.index)


def estimate_tokens(text: str) -> int:
    return math.ceil(len(text) / CHARS_PER_TOKEN)


def _is_kept(ch: str) -> bool:
    if ch in COORDINATE_PUNCTUATION or ch.isspace():
        return True
    cat = unicodedata.category(ch)
    # combining marks are kept so decomposed accents survive
    return cat[0] in "LM" or cat == "Nd"


def sanitize_text(raw: str) -> str:
    """Replace characters the model should not see.

    ``|`` becomes ``/`` (the pipe is the reply-table delimiter); anything that
    is not a letter, digit, whitespace or coordinate punctuation becomes one
    space.
    """
    out = []
    for ch in raw:
        if ch == "|":
            out.append("/")
        elif _is_kept(ch):
            out.append(ch)
        else:
            out.append(" ")
    return "".join(out)


def document_id(path: str | Path) -> str:
    return Path(path).name


def _extract_pdf_text(path: Path, extractor_cmd: str) -> str:
    parts = shlex.split(extractor_cmd)
    if not parts:
        raise ExtractorError("empty PDF extractor command")
    if any("{path}" in p for p in parts):
        argv = [p.replace("{path}", str(path)) for p in parts]
    else:
        argv = [*parts, str(path)]
    try:
        proc = subprocess.run(argv, capture_output=True, check=False)
    except FileNotFoundError as exc:
        raise ExtractorError(
            f"PDF extractor {argv[0]!r} not found; set pdf-extractor-cmd"
        ) from exc
    if proc.returncode != 0:
        msg = proc.stderr.decode("utf-8", errors="replace").strip()
        raise ExtractorError(f"PDF extractor exited with {proc.returncode}: {msg}")
    return proc.stdout.decode("utf-8", errors="replace")


def load_document(path: str | Path, pdf_extractor_cmd: str = DEFAULT_PDF_EXTRACTOR_CMD) -> Document:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    suffix = path.suffix.lower()
    page_count = 0
    if suffix == ".txt":
        raw = path.read_bytes().decode("utf-8", errors="replace")
    elif suffix == ".pdf":
        raw = _extract_pdf_text(path, pdf_extractor_cmd)
        if not raw.strip():
            raise PdfNoTextLayerError(
                f"{path} has no embedded text layer; run OCR on it first"
            )
        # pdftotext-style extractors separate pages with form feeds
        page_count = raw.rstrip("\f").count("\f") + 1 if "\f" in raw else 0
    else:
        raise UnsupportedFormatError(f"unsupported file type {suffix!r}: {path}")
    logger.debug("loaded %s (%d chars)", path, len(raw))
    return Document(
        id=document_id(path),
        source_path=path,
        raw_text=raw,
        sanitized_text=sanitize_text(raw),
        page_count=page_count,
    )


_PARAGRAPH_BREAK = re.compile(r"\n[^\S\n]*\n\s*")
_SENTENCE_BREAK = re.compile(r"[.!?][\"')\]]*\s+")


def _last_break(pattern: re.Pattern[str], window: str) -> int:
    # a break only counts once the piece before it holds some text
    first_text = len(window) - len(window.lstrip())
    end = 0
    for m in pattern.finditer(window):
        if m.start() > first_text:
            end = m.end()
    return end


def chunk_text(
    text: str,
    token_budget: int = DEFAULT_TOKEN_BUDGET,
    document_id: str = "",
) -> list[Chunk]:
    """Split text into consecutive slices that each fit within ``token_budget``.

    Cuts prefer paragraph breaks, then sentence ends, then fall back to a hard
    cut at the budget. Chunks are contiguous slices of the stripped text, so
    joining them in order reproduces it exactly.
    """
    if token_budget < MIN_TOKEN_BUDGET:
        raise ValueError(f"token_budget must be >= {MIN_TOKEN_BUDGET}")
    text = text.strip()
    if not text:
        raise EmptyDocumentError("document contains no text")
    max_chars = token_budget * CHARS_PER_TOKEN
    chunks: list[Chunk] = []
    start = 0
    while start < len(text):
        if len(text) - start <= max_chars:
            end = len(text)
        else:
            window = text[start : start + max_chars]
            cut = _last_break(_PARAGRAPH_BREAK, window) or _last_break(_SENTENCE_BREAK, window)
            end = start + (cut or max_chars)
        piece = text[start:end]
        chunks.append(Chunk(document_id, len(chunks), piece, estimate_tokens(piece)))
        start = end
    return chunks
