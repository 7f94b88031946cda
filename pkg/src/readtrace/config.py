"""Run configuration: plain ``key = value`` text, CLI flags override."""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, fields
from typing import Any, Mapping

from .engagement import EngagementConfig
from .model import IntervalThresholds


@dataclass(frozen=True)
class Config:
    gap_ms: int = 360_000
    short_ms: int = 3_000
    medium_ms: int = 10_000
    long_ms: int = 120_000
    alpha: float = 0.05
    k: int = 4
    utc_offset_minutes: int = 0
    cluster_features: tuple[str, ...] = ("stickiness", "quickness", "n_stops")
    highlight_labels: tuple[str, ...] = ("MARKER",)
    note_labels: tuple[str, ...] = ("MEMO",)
    append_terminal_gap: bool = True
    center_traits: bool = False
    grid_points: int = 25

    @property
    def thresholds(self) -> IntervalThresholds:
        return IntervalThresholds(self.short_ms, self.medium_ms, self.long_ms)

    @property
    def engagement(self) -> EngagementConfig:
        return EngagementConfig(self.highlight_labels, self.note_labels, self.utc_offset_minutes, self.short_ms)

    def updated(self, **overrides: Any) -> Config:
        clean = {k: v for k, v in overrides.items() if v is not None}
        return dataclasses.replace(self, **{k: _coerce(k, v) for k, v in clean.items()})

    @classmethod
    def from_mapping(cls, values: Mapping[str, str]) -> Config:
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ValueError(f"unknown config key(s): {', '.join(sorted(unknown))}")
        return cls().updated(**values)

    @classmethod
    def load(cls, path: str | os.PathLike) -> Config:
        values: dict[str, str] = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ValueError(f"{path}:{lineno}: expected key = value")
                key, value = (s.strip() for s in line.split("=", 1))
                values[key] = value
        return cls.from_mapping(values)


_TYPES = {f.name: f.type for f in fields(Config)}


def _coerce(key: str, value: Any) -> Any:
    if key not in _TYPES:
        raise ValueError(f"unknown config key {key!r}")
    if not isinstance(value, str):
        return tuple(value) if isinstance(value, list) else value
    kind = _TYPES[key]
    if kind.startswith("tuple"):
        return tuple(v.strip() for v in value.split(",") if v.strip())
    if kind == "bool":
        lowered = value.lower()
        if lowered not in {"true", "false", "1", "0", "yes", "no"}:
            raise ValueError(f"{key}: not a boolean: {value!r}")
        return lowered in {"true", "1", "yes"}
    if kind == "int":
        return int(value)
    if kind == "float":
        return float(value)
    return value
