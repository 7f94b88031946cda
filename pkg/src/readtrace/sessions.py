"""Split a student's event stream into reading sessions."""

from __future__ import annotations

import csv
import logging
from typing import IO, Iterable, Sequence

from .model import (
    CLOSED,
    DEFAULT_GAP_MS,
    END_OF_STREAM,
    EventKind,
    RawEvent,
    Session,
    timeout,
)

logger = logging.getLogger(__name__)

SESSION_COLUMNS = ("student_id", "material_id", "session_index", "start_ms", "end_ms", "n_events", "terminal", "flags")


def sessionize(events: Sequence[RawEvent], gap_threshold_ms: int = DEFAULT_GAP_MS) -> list[Session]:
    """Segment one student's time-ordered events into sessions.

    A new session starts when the material changes, when the gap to the
    previous event is at least ``gap_threshold_ms``, or right after a Close.
    The Close itself stays as the last event of the session it ends.

    A material switch without a long gap leaves the finished session with an
    ``end`` terminal: the stream for that material ended, nothing timed out.
    """
    if not events:
        return []
    student = events[0].student_id
    close = EventKind.CLOSE
    sessions: list[Session] = []
    start = 0
    prev = events[0]
    for i in range(1, len(events)):
        ev = events[i]
        if ev.student_id != student:
            raise ValueError(f"events from several students: {student!r}, {ev.student_id!r}")
        gap = ev.timestamp - prev.timestamp
        if gap < 0:
            raise ValueError(f"events not sorted by timestamp at position {i}")
        if prev.kind is close:
            terminal = CLOSED
        elif gap >= gap_threshold_ms:
            terminal = timeout(gap)
        elif ev.material_id != prev.material_id:
            terminal = END_OF_STREAM
        else:
            prev = ev
            continue
        sessions.append(Session(student, prev.material_id, tuple(events[start:i]), terminal))
        start = i
        prev = ev
    last = events[-1]
    sessions.append(
        Session(student, last.material_id, tuple(events[start:]), CLOSED if last.kind is close else END_OF_STREAM)
    )
    orphans = sum(s.is_orphan_close for s in sessions)
    if orphans:
        logger.warning("%s: %d session(s) consist of a lone Close event", student, orphans)
    return sessions


def sessionize_all(streams: dict[str, list[RawEvent]], gap_threshold_ms: int = DEFAULT_GAP_MS) -> dict[str, list[Session]]:
    return {sid: sessionize(evs, gap_threshold_ms) for sid, evs in streams.items()}


def write_sessions(sessions_by_student: dict[str, list[Session]], stream: IO[str]) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(SESSION_COLUMNS)
    for sid in sorted(sessions_by_student):
        for idx, s in enumerate(sessions_by_student[sid]):
            flags = "orphan_close" if s.is_orphan_close else ""
            writer.writerow((sid, s.material_id, idx, s.start_ms, s.end_ms, len(s.events), str(s.terminal), flags))


def flatten(sessions: Iterable[Session]) -> list[RawEvent]:
    return [ev for s in sessions for ev in s.events]
