from __future__ import annotations

import numpy as np
import pytest

from readtrace.model import EventKind, RawEvent, Session, Terminal

LABELS = {
    EventKind.NEXT: "NEXT",
    EventKind.PREV: "PREV",
    EventKind.JUMP: "JUMP",
    EventKind.OPEN: "OPEN",
    EventKind.CLOSE: "CLOSE",
    EventKind.OTHER: "ADD MARKER",
}


def ev(symbol: str, t: int, material: str = "M1", page: int = 1, sid: str = "s1", label: str | None = None) -> RawEvent:
    kind = EventKind(symbol)
    return RawEvent(sid, material, page, kind, t, label or LABELS[kind])


def session(*pairs: tuple[str, int], terminal: Terminal, material: str = "M1", sid: str = "s1") -> Session:
    return Session(sid, material, tuple(ev(k, t, material, sid=sid) for k, t in pairs), terminal)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240601)
