"""Symbol encoding of sessions and the complete-jump recoding step.

Event symbols: O (open), C (close), N (next), P (previous), J (jump to page),
E (any non-navigational event), plus X / Y for recoded forward / backward
complete jumps. Interval symbols: s, m, l.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .model import (
    DEFAULT_THRESHOLDS,
    IntervalThresholds,
    Session,
    Terminal,
    TerminalKind,
    classify_interval,
)

EVENT_SYMBOLS = frozenset("OCNPJXYE")
INTERVAL_SYMBOLS = frozenset("sml")
SYMBOLS = EVENT_SYMBOLS | INTERVAL_SYMBOLS

# Maximal runs of two or more N/P with nothing in between.
_NP_RUN = re.compile(r"[NP]{2,}")


@dataclass(frozen=True)
class EncodedSequence:
    """Session as a symbol string; one character per token."""

    tokens: str
    terminal: Terminal

    def __post_init__(self) -> None:
        check_sequence(self.tokens)

    def __str__(self) -> str:
        return self.tokens

    @property
    def ends_with_gap(self) -> bool:
        return bool(self.tokens) and self.tokens[-1] in INTERVAL_SYMBOLS


def check_sequence(tokens: str) -> None:
    bad = set(tokens) - SYMBOLS
    if bad:
        raise ValueError(f"unknown symbol(s) {sorted(bad)} in {tokens!r}")
    if tokens and tokens[0] in INTERVAL_SYMBOLS:
        raise ValueError(f"sequence must start with an event symbol: {tokens!r}")
    for a, b in zip(tokens, tokens[1:]):
        if a in INTERVAL_SYMBOLS and b in INTERVAL_SYMBOLS:
            raise ValueError(f"adjacent interval symbols in {tokens!r}")


def encode(
    session: Session,
    append_terminal_gap: bool = True,
    thresholds: IntervalThresholds = DEFAULT_THRESHOLDS,
) -> EncodedSequence:
    events = session.events
    short, medium, long_ = thresholds.short_ms, thresholds.medium_ms, thresholds.long_ms
    parts = [events[0].kind.value]
    prev_ts = events[0].timestamp
    # Inlined classify_interval; this loop runs once per logged event.
    for ev in events[1:]:
        dt = ev.timestamp - prev_ts
        if dt >= short:
            parts.append("s" if dt < medium else "m" if dt < long_ else "l")
        parts.append(ev.kind.value)
        prev_ts = ev.timestamp
    if append_terminal_gap and session.terminal.kind is TerminalKind.TIMEOUT:
        parts.append(classify_interval(session.terminal.gap_ms, thresholds).symbol)
    return EncodedSequence("".join(parts), session.terminal)


def decode_events(tokens: str) -> str:
    """Event symbols only, intervals stripped."""
    return "".join(t for t in tokens if t in EVENT_SYMBOLS)


def _recode_run(match: re.Match[str]) -> str:
    run = match.group(0)
    net = run.count("N") - run.count("P")
    return "Y" if net < 0 else "X"


def collapse_jumps(seq: EncodedSequence | str) -> EncodedSequence | str:
    """Replace each maximal N/P run of length >= 2 with X (net forward or tied) or Y.

    Accepts an :class:`EncodedSequence` or a bare token string and returns the
    same type.
    """
    if isinstance(seq, EncodedSequence):
        return EncodedSequence(_NP_RUN.sub(_recode_run, seq.tokens), seq.terminal)
    return _NP_RUN.sub(_recode_run, seq)
