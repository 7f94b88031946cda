"""Per-session sequence metrics and their per-student aggregation."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import IO, Iterable, Mapping, Sequence

from .encoding import EncodedSequence, collapse_jumps, encode
from .ingest import Source, open_text
from .model import DEFAULT_THRESHOLDS, METRIC_NAMES, IntervalThresholds, Session, TerminalKind

METRICS_COLUMNS = ("student_id",) + METRIC_NAMES + ("n_stops", "n_sessions")


def _tokens(seq: EncodedSequence | str) -> str:
    return seq.tokens if isinstance(seq, EncodedSequence) else seq


@dataclass(frozen=True)
class IntervalCensus:
    n_short: int
    n_medium: int
    n_long: int

    def __post_init__(self) -> None:
        if min(self.n_short, self.n_medium, self.n_long) < 0:
            raise ValueError(f"negative interval count: {self}")

    @property
    def total(self) -> int:
        return self.n_short + self.n_medium + self.n_long


@dataclass(frozen=True)
class SequenceMetrics:
    """Metrics of one session. Ratios are ``None`` when undefined."""

    n_jumps: int
    n_responsive: int
    sequential: float | None
    stickiness: float | None
    quickness: float | None
    stableness: float | None

    def as_dict(self) -> dict[str, float | None]:
        return {name: getattr(self, name) for name in METRIC_NAMES}


def n_jumps(seq: EncodedSequence | str) -> int:
    """Count X, Y and J tokens; expects a collapsed sequence."""
    t = _tokens(seq)
    return t.count("X") + t.count("Y") + t.count("J")


def n_responsive(seq: EncodedSequence | str) -> int:
    return _tokens(seq).count("E")


def sequential(seq: EncodedSequence | str) -> float | None:
    """Share of forward moves (N, X) among navigation tokens N, P, X, Y, J."""
    t = _tokens(seq)
    forward = t.count("N") + t.count("X")
    nav = forward + t.count("P") + t.count("Y") + t.count("J")
    return forward / nav if nav else None


def interval_census(seq: EncodedSequence | str) -> IntervalCensus:
    t = _tokens(seq)
    return IntervalCensus(t.count("s"), t.count("m"), t.count("l"))


def predominance(census: IntervalCensus) -> tuple[float, float, float] | None:
    """(stickiness, quickness, stableness): squared share of long, short, medium counts."""
    s2, m2, l2 = census.n_short**2, census.n_medium**2, census.n_long**2
    total = s2 + m2 + l2
    if total == 0:
        return None
    return l2 / total, s2 / total, m2 / total


def n_stops(sessions: Iterable[Session | EncodedSequence]) -> int:
    """Sessions that ended by timeout rather than a Close or the end of the log."""
    return sum(s.terminal.kind is TerminalKind.TIMEOUT for s in sessions)


def sequence_metrics(collapsed: EncodedSequence | str) -> SequenceMetrics:
    pred = predominance(interval_census(collapsed))
    stick, quick, stable = pred if pred is not None else (None, None, None)
    return SequenceMetrics(
        n_jumps(collapsed), n_responsive(collapsed), sequential(collapsed), stick, quick, stable
    )


def session_metrics(
    session: Session,
    thresholds: IntervalThresholds = DEFAULT_THRESHOLDS,
    append_terminal_gap: bool = True,
) -> SequenceMetrics:
    return sequence_metrics(collapse_jumps(encode(session, append_terminal_gap, thresholds)))


@dataclass(frozen=True)
class StudentMetrics:
    student_id: str
    means: dict[str, float | None]
    n_stops: int
    n_sessions: int


def student_means(
    student_id: str, per_session: Sequence[SequenceMetrics], stops: int
) -> StudentMetrics | None:
    """Average each metric over the sessions where it is defined.

    Returns ``None`` for a student without sessions.
    """
    if not per_session:
        return None
    means: dict[str, float | None] = {}
    for name in METRIC_NAMES:
        vals = [v for m in per_session if (v := getattr(m, name)) is not None]
        means[name] = math.fsum(vals) / len(vals) if vals else None
    return StudentMetrics(student_id, means, stops, len(per_session))


def student_metrics(
    student_id: str,
    sessions: Sequence[Session],
    thresholds: IntervalThresholds = DEFAULT_THRESHOLDS,
) -> StudentMetrics | None:
    per_session = [session_metrics(s, thresholds) for s in sessions]
    return student_means(student_id, per_session, n_stops(sessions))


def compute_all(
    sessions_by_student: Mapping[str, Sequence[Session]],
    thresholds: IntervalThresholds = DEFAULT_THRESHOLDS,
) -> dict[str, StudentMetrics]:
    out = {}
    for sid in sorted(sessions_by_student):
        sm = student_metrics(sid, sessions_by_student[sid], thresholds)
        if sm is not None:
            out[sid] = sm
    return out


def _fmt(v: float | int | None) -> str:
    if v is None:
        return ""
    return repr(v) if isinstance(v, float) else str(v)


def write_metrics(metrics: Mapping[str, StudentMetrics], stream: IO[str]) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(METRICS_COLUMNS)
    for sid in sorted(metrics):
        m = metrics[sid]
        writer.writerow([sid, *(_fmt(m.means[n]) for n in METRIC_NAMES), m.n_stops, m.n_sessions])


def read_metrics(source: Source) -> dict[str, StudentMetrics]:
    out = {}
    with open_text(source) as stream:
        for row in csv.DictReader(stream):
            means = {n: (float(row[n]) if row[n] != "" else None) for n in METRIC_NAMES}
            out[row["student_id"]] = StudentMetrics(
                row["student_id"], means, int(row["n_stops"]), int(row["n_sessions"])
            )
    return out
