"""Parsers for event logs, questionnaires, grades and the material manifest.

Every parser takes a path, raw bytes or a binary stream. Malformed rows raise
:class:`IngestError` carrying the 1-based line number; the questionnaire and
grade parsers can instead collect row errors into a caller-supplied list.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from collections import defaultdict
from dataclasses import dataclass
from operator import attrgetter
from typing import IO, Iterable, Iterator, Mapping, Union

from .model import SCALE_IDS, EventKind, RawEvent, kind_from_label

logger = logging.getLogger(__name__)

Source = Union[str, os.PathLike, bytes, IO[bytes], IO[str]]

EVENT_COLUMNS = ("student_id", "material_id", "page", "event_type", "timestamp_ms")
DEFAULT_SCALE_ITEMS = {"DECI": 8, "DECE": 8, "MW-S": 4, "MW-D": 4}
LIKERT_MIN, LIKERT_MAX = 1, 7
GRADE_MIN, GRADE_MAX = 0.0, 4.0


class IngestError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class MaterialManifestEntry:
    material_id: str
    n_pages: int


@dataclass(frozen=True)
class QuestionnaireResponse:
    student_id: str
    scale_id: str
    item_scores: tuple[int, ...]


def _text_stream(source: Source) -> IO[str]:
    if isinstance(source, (str, os.PathLike)):
        return open(source, encoding="utf-8", newline="")
    if isinstance(source, bytes):
        return io.StringIO(source.decode("utf-8"), newline="")
    if isinstance(source, io.TextIOBase):
        return source
    return io.TextIOWrapper(source, encoding="utf-8", newline="")


def _parse_int(text: str, what: str, line: int) -> int:
    try:
        return int(text)
    except (TypeError, ValueError):
        raise IngestError(f"{what} is not an integer: {text!r}", line) from None


def _make_event(fields: Mapping[str, object], line: int) -> RawEvent:
    label = str(fields["event_type"]).strip()
    if not label:
        raise IngestError("empty event_type", line)
    student = str(fields["student_id"])
    material = str(fields["material_id"])
    if not student or not material:
        raise IngestError("empty student_id or material_id", line)
    page = _parse_int(fields["page"], "page", line)
    ts = _parse_int(fields["timestamp_ms"], "timestamp_ms", line)
    if page < 1:
        raise IngestError(f"page must be >= 1, got {page}", line)
    if ts < 0:
        raise IngestError(f"timestamp must be >= 0, got {ts}", line)
    return RawEvent(student, material, page, kind_from_label(label), ts, label)


def _iter_csv_events(stream: IO[str]) -> Iterator[RawEvent]:
    reader = csv.reader(stream)
    header = next(reader, None)
    if header is None:
        return
    header = [h.strip() for h in header]
    missing = [c for c in EVENT_COLUMNS if c not in header]
    if missing:
        raise IngestError(f"missing required column(s): {', '.join(missing)}", 1)
    idx = [header.index(c) for c in EVENT_COLUMNS]
    width = max(idx) + 1
    i_st, i_mat, i_page, i_kind, i_ts = idx
    kinds = {}
    for line, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) < width:
            raise IngestError(f"expected {len(header)} fields, got {len(row)}", line)
        # Fast path; the generic validator runs only when a field looks off.
        try:
            page = int(row[i_page])
            ts = int(row[i_ts])
        except ValueError:
            page = ts = -1
        label = row[i_kind].strip()
        if page < 1 or ts < 0 or not label or not row[i_st] or not row[i_mat]:
            yield _make_event(dict(zip(EVENT_COLUMNS, (row[i] for i in idx))), line)
            continue
        kind = kinds.get(label)
        if kind is None:
            kind = kinds[label] = kind_from_label(label)
        yield RawEvent(row[i_st], row[i_mat], page, kind, ts, label)


def _iter_jsonl_events(stream: IO[str]) -> Iterator[RawEvent]:
    for line, text in enumerate(stream, start=1):
        text = text.strip()
        if not text:
            continue
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise IngestError(f"invalid JSON: {exc.msg}", line) from None
        if not isinstance(obj, dict):
            raise IngestError("expected a JSON object", line)
        missing = [c for c in EVENT_COLUMNS if c not in obj]
        if missing:
            raise IngestError(f"missing required field(s): {', '.join(missing)}", line)
        yield _make_event(obj, line)


def iter_events(source: Source, format: str = "csv") -> Iterator[RawEvent]:
    """Yield events in file order without grouping or sorting."""
    stream = _text_stream(source)
    try:
        if format == "csv":
            yield from _iter_csv_events(stream)
        elif format == "jsonl":
            yield from _iter_jsonl_events(stream)
        else:
            raise ValueError(f"unknown event format {format!r}")
    finally:
        if isinstance(source, (str, os.PathLike)):
            stream.close()


def group_events(events: Iterable[RawEvent]) -> dict[str, list[RawEvent]]:
    """Group by student (sorted ids) and stable-sort each stream by timestamp."""
    grouped: dict[str, list[RawEvent]] = defaultdict(list)
    for ev in events:
        grouped[ev.student_id].append(ev)
    key = attrgetter("timestamp")
    out = {}
    for sid in sorted(grouped):
        evs = grouped[sid]
        evs.sort(key=key)
        out[sid] = evs
    return out


def parse_events(source: Source, format: str = "csv") -> dict[str, list[RawEvent]]:
    return group_events(iter_events(source, format))


def format_from_path(path: str | os.PathLike) -> str:
    return "jsonl" if os.fspath(path).endswith((".jsonl", ".ndjson")) else "csv"


def write_events(events: Iterable[RawEvent], stream: IO[str], format: str = "csv") -> None:
    if format == "csv":
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(EVENT_COLUMNS)
        writer.writerows((e.student_id, e.material_id, e.page, e.label, e.timestamp) for e in events)
    elif format == "jsonl":
        for e in events:
            record = dict(zip(EVENT_COLUMNS, (e.student_id, e.material_id, e.page, e.label, e.timestamp)))
            stream.write(json.dumps(record) + "\n")
    else:
        raise ValueError(f"unknown event format {format!r}")


def _data_rows(stream: IO[str], first_column: str) -> Iterator[tuple[int, list[str]]]:
    """Yield (line, cells) for non-empty rows, skipping an optional header row."""
    for line, row in enumerate(csv.reader(stream), start=1):
        cells = [c.strip() for c in row]
        if not any(cells):
            continue
        if line == 1 and cells[0] == first_column:
            continue
        yield line, cells


def _reject(errors: list[IngestError] | None, err: IngestError) -> None:
    if errors is None:
        raise err
    logger.warning("rejected row: %s", err)
    errors.append(err)


def parse_questionnaire(
    source: Source,
    scale_spec: Mapping[str, int] = DEFAULT_SCALE_ITEMS,
    errors: list[IngestError] | None = None,
) -> list[QuestionnaireResponse]:
    """Parse ``student_id,scale_id,item1..itemK`` rows.

    Trailing empty cells are ignored so scales of different length can share
    one file. Pass ``errors`` to collect bad rows instead of raising.
    """
    responses = []
    with open_text(source) as stream:
        for line, cells in _data_rows(stream, "student_id"):
            if len(cells) < 2:
                _reject(errors, IngestError("expected student_id,scale_id,items...", line))
                continue
            sid, scale = cells[0], cells[1]
            items = cells[2:]
            while items and items[-1] == "":
                items.pop()
            if scale not in scale_spec:
                _reject(errors, IngestError(f"unknown scale {scale!r}", line))
                continue
            if len(items) != scale_spec[scale]:
                _reject(errors, IngestError(f"{scale} needs {scale_spec[scale]} items, got {len(items)}", line))
                continue
            try:
                scores = tuple(int(x) for x in items)
            except ValueError:
                _reject(errors, IngestError(f"non-integer item score in {items}", line))
                continue
            bad = [s for s in scores if not LIKERT_MIN <= s <= LIKERT_MAX]
            if bad:
                _reject(errors, IngestError(f"item score {bad[0]} outside [{LIKERT_MIN},{LIKERT_MAX}]", line))
                continue
            responses.append(QuestionnaireResponse(sid, scale, scores))
    return responses


def parse_grades(source: Source, errors: list[IngestError] | None = None) -> dict[str, float]:
    grades: dict[str, float] = {}
    with open_text(source) as stream:
        for line, cells in _data_rows(stream, "student_id"):
            if len(cells) < 2 or not cells[0]:
                _reject(errors, IngestError("expected student_id,grade", line))
                continue
            try:
                grade = float(cells[1])
            except ValueError:
                _reject(errors, IngestError(f"grade is not numeric: {cells[1]!r}", line))
                continue
            if not (GRADE_MIN <= grade <= GRADE_MAX) or math.isnan(grade):
                _reject(errors, IngestError(f"grade {grade} outside [{GRADE_MIN:g},{GRADE_MAX:g}]", line))
                continue
            if cells[0] in grades:
                logger.warning("line %d: duplicate grade for %s, keeping the last", line, cells[0])
            grades[cells[0]] = grade
    return grades


def parse_manifest(source: Source) -> dict[str, MaterialManifestEntry]:
    manifest: dict[str, MaterialManifestEntry] = {}
    with open_text(source) as stream:
        for line, cells in _data_rows(stream, "material_id"):
            if len(cells) < 2:
                raise IngestError("expected material_id,n_pages", line)
            n_pages = _parse_int(cells[1], "n_pages", line)
            if n_pages < 1:
                raise IngestError(f"n_pages must be >= 1, got {n_pages}", line)
            if cells[0] in manifest:
                raise IngestError(f"duplicate material_id {cells[0]!r}", line)
            manifest[cells[0]] = MaterialManifestEntry(cells[0], n_pages)
    return manifest


class open_text:
    def __init__(self, source: Source):
        self.source = source
        self.stream = _text_stream(source)

    def __enter__(self) -> IO[str]:
        return self.stream

    def __exit__(self, *exc: object) -> None:
        if isinstance(self.source, (str, os.PathLike)):
            self.stream.close()


def responses_by_student(responses: Iterable[QuestionnaireResponse]) -> dict[str, dict[str, QuestionnaireResponse]]:
    out: dict[str, dict[str, QuestionnaireResponse]] = defaultdict(dict)
    for r in responses:
        if r.scale_id in out[r.student_id]:
            logger.warning("duplicate %s response for %s, keeping the last", r.scale_id, r.student_id)
        out[r.student_id][r.scale_id] = r
    return dict(out)


__all__ = [
    "EVENT_COLUMNS",
    "DEFAULT_SCALE_ITEMS",
    "EventKind",
    "IngestError",
    "MaterialManifestEntry",
    "QuestionnaireResponse",
    "SCALE_IDS",
    "format_from_path",
    "group_events",
    "iter_events",
    "parse_events",
    "parse_grades",
    "parse_manifest",
    "parse_questionnaire",
    "responses_by_student",
    "write_events",
]
