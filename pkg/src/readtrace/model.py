"""Shared domain types: raw events, sessions, interval classes and profiles."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import NamedTuple


class EventKind(enum.Enum):
    NEXT = "N"
    PREV = "P"
    JUMP = "J"
    OPEN = "O"
    CLOSE = "C"
    OTHER = "E"

    @property
    def symbol(self) -> str:
        return self.value


# Raw event-type strings recognised as navigation; anything else is OTHER.
KIND_BY_LABEL = {
    "NEXT": EventKind.NEXT,
    "PREV": EventKind.PREV,
    "JUMP": EventKind.JUMP,
    "OPEN": EventKind.OPEN,
    "CLOSE": EventKind.CLOSE,
}


def kind_from_label(label: str) -> EventKind:
    return KIND_BY_LABEL.get(label.strip().upper(), EventKind.OTHER)


class RawEvent(NamedTuple):
    """One logged interaction.

    ``label`` keeps the raw event-type string; for ``EventKind.OTHER`` it is
    the only thing distinguishing a highlight from a note or a search.
    """

    student_id: str
    material_id: str
    page: int
    kind: EventKind
    timestamp: int
    label: str

    def validate(self) -> None:
        if self.timestamp < 0:
            raise ValueError(f"negative timestamp {self.timestamp}")
        if self.page < 1:
            raise ValueError(f"page must be >= 1, got {self.page}")
        if self.kind is EventKind.OTHER and not self.label:
            raise ValueError("OTHER events need a non-empty label")


class IntervalClass(enum.Enum):
    SUPPRESSED = ""
    SHORT = "s"
    MEDIUM = "m"
    LONG = "l"

    @property
    def symbol(self) -> str:
        return self.value


@dataclass(frozen=True)
class IntervalThresholds:
    """Half-open class boundaries in milliseconds: [short, medium), [medium, long), [long, inf)."""

    short_ms: int = 3_000
    medium_ms: int = 10_000
    long_ms: int = 120_000

    def __post_init__(self) -> None:
        if not 0 <= self.short_ms <= self.medium_ms <= self.long_ms:
            raise ValueError(f"thresholds must be ordered: {self}")


DEFAULT_THRESHOLDS = IntervalThresholds()
DEFAULT_GAP_MS = 360_000


def classify_interval(delta_ms: int, thresholds: IntervalThresholds = DEFAULT_THRESHOLDS) -> IntervalClass:
    if delta_ms < 0:
        raise ValueError(f"interval must be non-negative, got {delta_ms}")
    if delta_ms < thresholds.short_ms:
        return IntervalClass.SUPPRESSED
    if delta_ms < thresholds.medium_ms:
        return IntervalClass.SHORT
    if delta_ms < thresholds.long_ms:
        return IntervalClass.MEDIUM
    return IntervalClass.LONG


class TerminalKind(enum.Enum):
    CLOSED = "closed"
    TIMEOUT = "timeout"
    END_OF_STREAM = "end"


@dataclass(frozen=True)
class Terminal:
    kind: TerminalKind
    gap_ms: int | None = None

    def __str__(self) -> str:
        if self.kind is TerminalKind.TIMEOUT:
            return f"timeout:{self.gap_ms}"
        return self.kind.value

    @classmethod
    def parse(cls, text: str) -> Terminal:
        if text.startswith("timeout:"):
            return cls(TerminalKind.TIMEOUT, int(text.split(":", 1)[1]))
        return cls(TerminalKind(text))


CLOSED = Terminal(TerminalKind.CLOSED)
END_OF_STREAM = Terminal(TerminalKind.END_OF_STREAM)


def timeout(gap_ms: int) -> Terminal:
    return Terminal(TerminalKind.TIMEOUT, gap_ms)


@dataclass(frozen=True)
class Session:
    student_id: str
    material_id: str
    events: tuple[RawEvent, ...]
    terminal: Terminal

    @property
    def start_ms(self) -> int:
        return self.events[0].timestamp

    @property
    def end_ms(self) -> int:
        return self.events[-1].timestamp

    @property
    def is_timeout(self) -> bool:
        return self.terminal.kind is TerminalKind.TIMEOUT

    @property
    def is_orphan_close(self) -> bool:
        """A session made of a single Close event with nothing before it."""
        return len(self.events) == 1 and self.events[0].kind is EventKind.CLOSE


def validate_session(session: Session, gap_threshold_ms: int = DEFAULT_GAP_MS) -> None:
    """Raise ``ValueError`` if ``session`` breaks any session invariant."""
    events = session.events
    if not events:
        raise ValueError("session has no events")
    last = len(events) - 1
    for i, ev in enumerate(events):
        if ev.student_id != session.student_id or ev.material_id != session.material_id:
            raise ValueError(f"event {i} does not belong to session {session.student_id}/{session.material_id}")
        if ev.kind is EventKind.CLOSE and i != last:
            raise ValueError(f"Close at position {i} is not the final event")
        if i:
            gap = ev.timestamp - events[i - 1].timestamp
            if gap < 0:
                raise ValueError(f"timestamps decrease at position {i}")
            if gap >= gap_threshold_ms:
                raise ValueError(f"interior gap of {gap} ms at position {i}")
    if session.terminal.kind is TerminalKind.CLOSED and events[-1].kind is not EventKind.CLOSE:
        raise ValueError("terminal=closed but last event is not Close")


METRIC_NAMES = ("n_jumps", "n_responsive", "sequential", "stickiness", "quickness", "stableness")
SCALE_IDS = ("DECI", "DECE", "MW-S", "MW-D")


@dataclass
class StudentProfile:
    """Joined per-student row. ``None`` marks an absent source, never a default."""

    student_id: str
    mean_metrics: dict[str, float | None] = field(default_factory=dict)
    n_stops: int | None = None
    n_sessions: int = 0
    engagement: float | None = None
    deci: float | None = None
    dece: float | None = None
    mw_s: float | None = None
    mw_d: float | None = None
    grade: float | None = None

    def value(self, name: str) -> float | None:
        """Look up a variable by its analysis name (``DECI``, ``N_Stops``, ``Engagement``...)."""
        key = _PROFILE_ALIASES.get(name, name)
        if key in METRIC_NAMES:
            return self.mean_metrics.get(key)
        return getattr(self, key)


_PROFILE_ALIASES = {
    "DECI": "deci",
    "DECE": "dece",
    "MW-S": "mw_s",
    "MW_S": "mw_s",
    "MW-D": "mw_d",
    "MW_D": "mw_d",
    "Engagement": "engagement",
    "Grade": "grade",
    "N_Jumps": "n_jumps",
    "N_Stops": "n_stops",
    "N_Responsive": "n_responsive",
    "Sequential": "sequential",
    "Stickiness": "stickiness",
    "Quickness": "quickness",
    "Stableness": "stableness",
}
