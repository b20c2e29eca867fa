"""Streaming parser for the SNAP amazon-meta product metadata dump.

The dump is a plain-text file of blank-line-separated record blocks.  Each
block starts with ``Id:`` and ``ASIN:`` lines; live products then carry
indented ``title:``, ``group:``, ``salesrank:``, ``similar:``, ``categories:``
and ``reviews:`` fields, while dead ones carry the single sentinel line
``discontinued product``.  The parser is single-pass and bounded-memory: it
yields one record at a time and never holds more than the current block.
"""

from __future__ import annotations

import gzip
import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

log = logging.getLogger(__name__)

CANONICAL_GROUPS = ("Book", "DVD", "Music", "Video")

_CAT_TOKEN_RE = re.compile(r"^(.*)\[(-?\d+)\]$", re.DOTALL)
_REVIEW_SUMMARY_RE = re.compile(
    r"total:\s*(\d+)\s+downloaded:\s*(\d+)\s+avg rating:\s*([0-9.]+)"
)


class MetadataParseError(ValueError):
    """A record block that does not follow the amazon-meta format.

    Carries the offending record id (when known) and the byte offset of the
    line that failed, so callers in skip-and-log mode can report precisely.
    """

    def __init__(self, message: str, record_id: int | None = None, offset: int | None = None):
        self.record_id = record_id
        self.offset = offset
        where = []
        if record_id is not None:
            where.append(f"Id {record_id}")
        if offset is not None:
            where.append(f"byte offset {offset}")
        suffix = f" ({', '.join(where)})" if where else ""
        super().__init__(message + suffix)


@dataclass(frozen=True)
class CategoryPath:
    """One hierarchical category assignment: ordered (name, cat_id) levels."""

    levels: tuple[tuple[str, int], ...]

    @property
    def ids(self) -> tuple[int, ...]:
        return tuple(cid for _, cid in self.levels)

    @property
    def depth(self) -> int:
        return len(self.levels)

    def format(self) -> str:
        return "".join(f"|{name}[{cid}]" for name, cid in self.levels)


@dataclass(frozen=True)
class ReviewSummary:
    total: int
    downloaded: int
    avg_rating: float


@dataclass
class ProductRecord:
    """One parsed metadata entry.

    ``count_mismatch`` flags records whose declared ``similar:`` or
    ``categories:`` count disagrees with the number of items actually found;
    such records are kept but marked malformed.
    """

    id: int
    asin: str
    title: str | None = None
    group: str | None = None
    salesrank: int | None = None
    similar_asins: tuple[str, ...] = ()
    category_paths: tuple[CategoryPath, ...] = ()
    review_summary: ReviewSummary | None = None
    discontinued: bool = False
    count_mismatch: bool = False


def parse_category_line(line: str) -> CategoryPath:
    """Parse one ``|Name[id]|Name[id]|...`` category path line.

    The cat_id is the integer inside the final bracket pair of each token;
    names may contain any character except the ``|`` delimiter (including
    further brackets).
    """
    tokens = line.strip().split("|")
    if tokens and tokens[0] == "":
        tokens = tokens[1:]
    if not tokens:
        raise MetadataParseError(f"empty category path line: {line!r}")
    levels = []
    for token in tokens:
        m = _CAT_TOKEN_RE.match(token)
        if m is None:
            raise MetadataParseError(f"category token without bracketed id: {token!r}")
        levels.append((m.group(1), int(m.group(2))))
    return CategoryPath(tuple(levels))


def _open_lines(source) -> Iterator[bytes]:
    """Yield raw line bytes from a path, bytes stream, or text stream."""
    if isinstance(source, (str, Path)):
        path = Path(source)
        opener = gzip.open if path.suffix == ".gz" else open
        with opener(path, "rb") as fh:
            yield from fh
    elif isinstance(source, bytes):
        yield from source.splitlines(keepends=True)
    elif hasattr(source, "read"):
        first = source.readline()
        if isinstance(first, str):
            yield first.encode("utf-8")
            for line in source:
                yield line.encode("utf-8")
        else:
            yield first
            yield from source
    else:  # iterable of lines
        for line in source:
            yield line if isinstance(line, bytes) else line.encode("utf-8")


def _decode(raw: bytes) -> str:
    # lenient per-field decoding: titles are display-only downstream
    return raw.decode("utf-8", errors="replace").rstrip("\r\n")


class _BlockReader:
    """Line reader with one-line pushback and byte-offset tracking."""

    def __init__(self, lines: Iterator[bytes]):
        self._lines = lines
        self._pushed: bytes | None = None
        self.offset = 0  # byte position just past the last line read

    def next_line(self) -> bytes | None:
        if self._pushed is not None:
            line, self._pushed = self._pushed, None
            return line
        line = next(self._lines, None)
        if line is not None:
            self.offset += len(line)
        return line

    def push_back(self, line: bytes) -> None:
        assert self._pushed is None
        self._pushed = line


def parse_metadata(source, on_error: str = "raise") -> Iterator[ProductRecord]:
    """Stream-parse an amazon-meta dump into :class:`ProductRecord` values.

    ``source`` may be a file path (gzip detected by ``.gz`` suffix), a binary
    or text file object, raw bytes, or an iterable of lines.  Header/comment
    lines before the first ``Id:`` are skipped.  Records are yielded in file
    order.

    ``on_error`` chooses the recovery policy for malformed blocks:
    ``"raise"`` aborts with :class:`MetadataParseError`; ``"skip"`` logs the
    error, drops the block, and resynchronises at the next blank line.
    """
    if on_error not in ("raise", "skip"):
        raise ValueError(f"on_error must be 'raise' or 'skip', got {on_error!r}")
    reader = _BlockReader(iter(_open_lines(source)))

    # skip preamble (comments, "Total items:" header, leading blanks)
    while True:
        raw = reader.next_line()
        if raw is None:
            return
        if _decode(raw).startswith("Id:"):
            reader.push_back(raw)
            break

    while True:
        raw = reader.next_line()
        if raw is None:
            return
        line = _decode(raw)
        if not line.strip():
            continue
        try:
            record = _parse_block(reader, line)
        except MetadataParseError as exc:
            if on_error == "raise":
                raise
            log.warning("skipping malformed record: %s", exc)
            _skip_to_blank(reader)
            continue
        yield record


def _skip_to_blank(reader: _BlockReader) -> None:
    while True:
        raw = reader.next_line()
        if raw is None or not _decode(raw).strip():
            return


def _parse_block(reader: _BlockReader, first_line: str) -> ProductRecord:
    offset = reader.offset
    if not first_line.startswith("Id:"):
        raise MetadataParseError(f"record does not start with 'Id:': {first_line!r}", offset=offset)
    try:
        rec_id = int(first_line[3:].strip())
    except ValueError:
        raise MetadataParseError(f"unparseable Id line: {first_line!r}", offset=offset) from None

    asin: str | None = None
    title = group = None
    salesrank: int | None = None
    similar: tuple[str, ...] = ()
    paths: list[CategoryPath] = []
    summary: ReviewSummary | None = None
    discontinued = False
    mismatch = False

    while True:
        raw = reader.next_line()
        if raw is None:
            break
        line = _decode(raw)
        stripped = line.strip()
        if not stripped:
            break
        if stripped.startswith("Id:"):
            # missing blank separator; treat as start of the next record
            reader.push_back(raw)
            break

        if stripped.startswith("ASIN:"):
            asin = stripped[5:].strip()
        elif stripped == "discontinued product":
            discontinued = True
        elif stripped.startswith("title:"):
            title = stripped[6:].strip()
        elif stripped.startswith("group:"):
            group = stripped[6:].strip()
        elif stripped.startswith("salesrank:"):
            try:
                salesrank = int(stripped[10:].strip())
            except ValueError:
                raise MetadataParseError(
                    f"bad salesrank: {stripped!r}", record_id=rec_id, offset=reader.offset
                ) from None
        elif stripped.startswith("similar:"):
            tokens = stripped[8:].split()
            if not tokens:
                raise MetadataParseError("empty similar line", record_id=rec_id, offset=reader.offset)
            try:
                declared = int(tokens[0])
            except ValueError:
                raise MetadataParseError(
                    f"bad similar count: {tokens[0]!r}", record_id=rec_id, offset=reader.offset
                ) from None
            raw_asins = tokens[1:]
            if len(raw_asins) != declared:
                mismatch = True
            similar = tuple(dict.fromkeys(raw_asins))  # dedupe, keep order
        elif stripped.startswith("categories:"):
            try:
                declared = int(stripped[11:].strip())
            except ValueError:
                raise MetadataParseError(
                    f"bad categories count: {stripped!r}", record_id=rec_id, offset=reader.offset
                ) from None
            for _ in range(declared):
                sub = reader.next_line()
                if sub is None:
                    raise MetadataParseError(
                        "truncated final record (categories)", record_id=rec_id, offset=reader.offset
                    )
                sub_line = _decode(sub)
                if not sub_line.lstrip().startswith("|"):
                    # fewer path lines than declared: flag and resume
                    reader.push_back(sub)
                    mismatch = True
                    break
                try:
                    paths.append(parse_category_line(sub_line))
                except MetadataParseError as exc:
                    raise MetadataParseError(
                        str(exc), record_id=rec_id, offset=reader.offset
                    ) from None
        elif stripped.startswith("reviews:"):
            m = _REVIEW_SUMMARY_RE.search(stripped)
            if m is None:
                raise MetadataParseError(
                    f"bad reviews summary: {stripped!r}", record_id=rec_id, offset=reader.offset
                )
            summary = ReviewSummary(int(m.group(1)), int(m.group(2)), float(m.group(3)))
            # consume (permissively) the per-review rows that follow
            while True:
                sub = reader.next_line()
                if sub is None:
                    break
                sub_line = _decode(sub)
                if not sub_line.strip() or not sub_line.startswith("    "):
                    reader.push_back(sub)
                    break
        elif stripped.startswith("|"):
            # stray category line outside a categories block
            raise MetadataParseError(
                f"unexpected category line: {stripped!r}", record_id=rec_id, offset=reader.offset
            )
        else:
            raise MetadataParseError(
                f"unrecognised field line: {stripped!r}", record_id=rec_id, offset=reader.offset
            )

    if asin is None:
        raise MetadataParseError("record has no ASIN", record_id=rec_id, offset=offset)
    return ProductRecord(
        id=rec_id,
        asin=asin,
        title=title,
        group=group,
        salesrank=salesrank,
        similar_asins=similar,
        category_paths=tuple(paths),
        review_summary=summary,
        discontinued=discontinued,
        count_mismatch=mismatch,
    )


def filter_valid(records: Iterable[ProductRecord]) -> Iterator[ProductRecord]:
    """Drop records that are discontinued or missing title/group.

    Records with empty similar lists are retained: products without
    co-purchase references become isolated nodes, which the pipeline keeps.
    """
    for rec in records:
        if rec.discontinued:
            continue
        if rec.title is None or rec.group is None:
            continue
        yield rec


def format_record(rec: ProductRecord) -> str:
    """Render a record back into the amazon-meta text format."""
    lines = [f"Id:   {rec.id}", f"ASIN: {rec.asin}"]
    if rec.discontinued:
        lines.append("  discontinued product")
    if rec.title is not None:
        lines.append(f"  title: {rec.title}")
    if rec.group is not None:
        lines.append(f"  group: {rec.group}")
    if rec.salesrank is not None:
        lines.append(f"  salesrank: {rec.salesrank}")
    if rec.similar_asins or rec.title is not None:
        sim = "  ".join(rec.similar_asins)
        lines.append(f"  similar: {len(rec.similar_asins)}" + (f"  {sim}" if sim else ""))
    if rec.category_paths or rec.title is not None:
        lines.append(f"  categories: {len(rec.category_paths)}")
        for path in rec.category_paths:
            lines.append(f"   {path.format()}")
    if rec.review_summary is not None:
        s = rec.review_summary
        rating = int(s.avg_rating) if s.avg_rating == int(s.avg_rating) else s.avg_rating
        lines.append(f"  reviews: total: {s.total}  downloaded: {s.downloaded}  avg rating: {rating}")
    return "\n".join(lines) + "\n"


def write_metadata(records: Iterable[ProductRecord], path) -> int:
    """Write records in the amazon-meta text format; returns the count."""
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(format_record(rec))
            fh.write("\n")
            n += 1
    return n
