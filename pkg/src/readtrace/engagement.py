"""Engagement indicator: activity sub-metrics, cohort percentile ranks, mean score."""

from __future__ import annotations

import csv
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import IO, Mapping, Sequence

import numpy as np

from .ingest import MaterialManifestEntry, Source, open_text
from .model import EventKind, Session

logger = logging.getLogger(__name__)

DAY_MS = 86_400_000

# Activity quantities measured both per page and per material.
ACTIVITY = ("events", "time_spent_ms", "reading_days", "events_ge_3s", "highlights", "notes")
SUBMETRIC_NAMES = tuple(f"{a}_{lvl}" for a in ACTIVITY for lvl in ("page", "material")) + ("completion",)


@dataclass(frozen=True)
class EngagementConfig:
    highlight_labels: tuple[str, ...] = ("MARKER",)
    note_labels: tuple[str, ...] = ("MEMO",)
    utc_offset_minutes: int = 0
    dwell_ms: int = 3_000

    def is_highlight(self, label: str) -> bool:
        up = label.upper()
        return any(tok.upper() in up for tok in self.highlight_labels)

    def is_note(self, label: str) -> bool:
        up = label.upper()
        return any(tok.upper() in up for tok in self.note_labels)


@dataclass(frozen=True)
class EngagementSubMetrics:
    student_id: str
    values: dict[str, float]

    def __getitem__(self, name: str) -> float:
        return self.values[name]


@dataclass(frozen=True)
class EngagementScore:
    student_id: str
    score: float
    ranks: dict[str, float] = field(default_factory=dict)


class _PageTally:
    __slots__ = ("events", "time", "days", "ge3", "highlights", "notes")

    def __init__(self) -> None:
        self.events = 0
        self.time = 0
        self.days: set[int] = set()
        self.ge3 = 0
        self.highlights = 0
        self.notes = 0


def compute_submetrics(
    student_id: str,
    sessions: Sequence[Session],
    manifest: Mapping[str, MaterialManifestEntry],
    config: EngagementConfig = EngagementConfig(),
) -> EngagementSubMetrics:
    """Activity totals (material level), per-page means and completion for one student.

    Time spent sums the intervals between consecutive events of a session, so
    gaps that split sessions never count. A material missing from the
    manifest is left out of completion with a warning.
    """
    offset = config.utc_offset_minutes * 60_000
    dwell = config.dwell_ms
    other = EventKind.OTHER
    label_class: dict[str, tuple[bool, bool]] = {}
    pages: dict[tuple[str, int], _PageTally] = defaultdict(_PageTally)
    all_days: set[int] = set()

    for s in sessions:
        events = s.events
        last = len(events) - 1
        for i, ev in enumerate(events):
            tally = pages[(ev.material_id, ev.page)]
            tally.events += 1
            day = (ev.timestamp + offset) // DAY_MS
            tally.days.add(day)
            all_days.add(day)
            if i < last:
                dt = events[i + 1].timestamp - ev.timestamp
                tally.time += dt
                if dt >= dwell:
                    tally.ge3 += 1
            if ev.kind is other:
                cls = label_class.get(ev.label)
                if cls is None:
                    cls = label_class[ev.label] = (config.is_highlight(ev.label), config.is_note(ev.label))
                tally.highlights += cls[0]
                tally.notes += cls[1]

    tallies = list(pages.values())
    n_pages = len(tallies)
    per_page = {
        "events": [t.events for t in tallies],
        "time_spent_ms": [t.time for t in tallies],
        "reading_days": [len(t.days) for t in tallies],
        "events_ge_3s": [t.ge3 for t in tallies],
        "highlights": [t.highlights for t in tallies],
        "notes": [t.notes for t in tallies],
    }
    values: dict[str, float] = {}
    for name in ACTIVITY:
        col = per_page[name]
        values[f"{name}_page"] = math.fsum(col) / n_pages if n_pages else 0.0
        values[f"{name}_material"] = float(len(all_days) if name == "reading_days" else sum(col))

    visited: dict[str, set[int]] = defaultdict(set)
    for material, page in pages:
        visited[material].add(page)
    ratios = []
    for material in sorted(visited):
        entry = manifest.get(material)
        if entry is None:
            logger.warning("%s: material %r not in manifest, skipped for completion", student_id, material)
            continue
        seen = sum(1 for p in visited[material] if p <= entry.n_pages)
        ratios.append(seen / entry.n_pages)
    values["completion"] = math.fsum(ratios) / len(ratios) if ratios else 0.0
    return EngagementSubMetrics(student_id, values)


def percentile_rank(values: Sequence[float] | np.ndarray) -> np.ndarray:
    """Midrank of each value divided by n; ties share the average rank."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("percentile_rank needs at least one value")
    ordered = np.sort(v)
    below = np.searchsorted(ordered, v, side="left")
    through = np.searchsorted(ordered, v, side="right")
    return (below + through + 1) / (2.0 * v.size)


def engagement_score(submetrics: Mapping[str, EngagementSubMetrics]) -> dict[str, EngagementScore]:
    if not submetrics:
        raise ValueError("engagement_score needs at least one student")
    ids = sorted(submetrics)
    if len(ids) == 1:
        logger.warning("single-student cohort: every percentile rank is 1.0")
    names = SUBMETRIC_NAMES
    matrix = np.array([[submetrics[sid].values[n] for n in names] for sid in ids], dtype=float)
    ranks = np.column_stack([percentile_rank(matrix[:, j]) for j in range(len(names))])
    scores = ranks.mean(axis=1)
    return {
        sid: EngagementScore(sid, float(scores[i]), dict(zip(names, ranks[i].tolist())))
        for i, sid in enumerate(ids)
    }


def compute_engagement(
    sessions_by_student: Mapping[str, Sequence[Session]],
    manifest: Mapping[str, MaterialManifestEntry],
    config: EngagementConfig = EngagementConfig(),
) -> tuple[dict[str, EngagementSubMetrics], dict[str, EngagementScore]]:
    subs = {
        sid: compute_submetrics(sid, sessions, manifest, config)
        for sid, sessions in sessions_by_student.items()
        if sessions
    }
    return subs, engagement_score(subs)


def write_engagement(
    subs: Mapping[str, EngagementSubMetrics], scores: Mapping[str, EngagementScore], stream: IO[str]
) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    header = ["student_id", "score"]
    for n in SUBMETRIC_NAMES:
        header += [n, f"{n}_rank"]
    writer.writerow(header)
    for sid in sorted(scores):
        row: list[object] = [sid, repr(scores[sid].score)]
        for n in SUBMETRIC_NAMES:
            row += [repr(subs[sid].values[n]), repr(scores[sid].ranks[n])]
        writer.writerow(row)


def read_engagement(source: Source) -> dict[str, float]:
    with open_text(source) as stream:
        return {row["student_id"]: float(row["score"]) for row in csv.DictReader(stream)}
