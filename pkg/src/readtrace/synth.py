"""Seeded synthetic cohorts: event logs per reading archetype, questionnaires, planted grades."""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .engagement import EngagementConfig, compute_engagement
from .ingest import DEFAULT_SCALE_ITEMS, MaterialManifestEntry, QuestionnaireResponse, write_events
from .model import DEFAULT_GAP_MS, EventKind, RawEvent
from .scales import scale_score
from .sessions import sessionize

BASE_MS = 1_744_070_400_000  # 2025-04-08T00:00:00Z
INTERVAL_CLASSES = ("suppressed", "short", "medium", "long")
# Sampling ranges in ms; long stays below the session gap so it never splits a session.
_INTERVAL_RANGES = {
    "suppressed": (300, 3_000),
    "short": (3_000, 10_000),
    "medium": (10_000, 120_000),
    "long": (120_000, DEFAULT_GAP_MS - 1_000),
}
OTHER_LABELS = ("ADD MARKER", "ADD MEMO", "ADD BOOKMARK", "SEARCH")

# Trait means / SDs used for the Likert scales, with DECI-DECE and MW-S/MW-D correlations.
TRAIT_MOMENTS = {"DECI": (4.27, 1.21), "DECE": (4.20, 1.26), "MW-S": (4.51, 1.21), "MW-D": (4.36, 1.48)}
TRAIT_CORR = {("DECI", "DECE"): 0.75, ("MW-S", "MW-D"): 0.45}


@dataclass(frozen=True)
class ArchetypeSpec:
    name: str
    interval_probs: Mapping[str, float]
    jump_rate: float
    responsive_rate: float
    sessions_mean: float
    events_mean: float
    timeout_prob: float

    def __post_init__(self) -> None:
        if set(self.interval_probs) != set(INTERVAL_CLASSES):
            raise ValueError(f"{self.name}: interval_probs needs keys {INTERVAL_CLASSES}")
        if min(self.interval_probs.values()) < 0 or not math.isclose(sum(self.interval_probs.values()), 1.0):
            raise ValueError(f"{self.name}: interval probabilities must be >= 0 and sum to 1")
        rates = (self.jump_rate, self.responsive_rate, self.sessions_mean, self.events_mean)
        if min(rates) < 0 or self.jump_rate + self.responsive_rate > 1:
            raise ValueError(f"{self.name}: rates must be >= 0 with jump + responsive <= 1")
        if not 0 <= self.timeout_prob <= 1:
            raise ValueError(f"{self.name}: timeout_prob must lie in [0, 1]")


def _probs(sup: float, s: float, m: float, l: float) -> dict[str, float]:
    return dict(zip(INTERVAL_CLASSES, (sup, s, m, l)))


ARCHETYPES: dict[str, ArchetypeSpec] = {
    "balanced": ArchetypeSpec("balanced", _probs(0.15, 0.30, 0.40, 0.15), 0.05, 0.03, 12, 30, 0.25),
    "sticky": ArchetypeSpec("sticky", _probs(0.10, 0.15, 0.35, 0.40), 0.03, 0.03, 10, 25, 0.55),
    "jumpy": ArchetypeSpec("jumpy", _probs(0.15, 0.35, 0.35, 0.15), 0.20, 0.05, 12, 30, 0.30),
    "quick": ArchetypeSpec("quick", _probs(0.30, 0.50, 0.15, 0.05), 0.05, 0.02, 12, 30, 0.15),
}


@dataclass(frozen=True)
class PlantedModel:
    intercept: float
    engagement: float
    deci: float
    dece: float
    engagement_deci: float
    engagement_dece: float
    noise_sd: float = 0.5

    def __post_init__(self) -> None:
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be >= 0")

    def predictor(self, engagement: np.ndarray, deci: np.ndarray, dece: np.ndarray) -> np.ndarray:
        return (
            self.intercept
            + self.engagement * engagement
            + self.deci * deci
            + self.dece * dece
            + self.engagement_deci * engagement * deci
            + self.engagement_dece * engagement * dece
        )

    def coefficients(self) -> dict[str, float]:
        return {
            "Intercept": self.intercept,
            "Engagement": self.engagement,
            "DECI": self.deci,
            "DECE": self.dece,
            "Engagement:DECI": self.engagement_deci,
            "Engagement:DECE": self.engagement_dece,
        }


# Published three-stage grade model (engagement on a 0-1 scale, traits on 1-7, grade 0-4).
REFERENCE_GRADE_MODEL = PlantedModel(-3.99, 10.24, 1.4, -0.39, -2.06, 0.82, 0.5)


@dataclass
class SynthCohort:
    events: list[RawEvent]
    responses: list[QuestionnaireResponse]
    grades: dict[str, float]
    manifest: dict[str, MaterialManifestEntry]
    archetypes: dict[str, str]
    engagement: dict[str, float] = field(default_factory=dict)
    n_clipped: int = 0

    def write(self, out_dir: str | os.PathLike) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            name: out / f"{name}.csv" for name in ("events", "questionnaire", "grades", "materials", "archetypes")
        }
        with open(paths["events"], "w", encoding="utf-8", newline="") as fh:
            write_events(self.events, fh)
        width = max(DEFAULT_SCALE_ITEMS.values())
        with open(paths["questionnaire"], "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["student_id", "scale_id", *(f"item{i + 1}" for i in range(width))])
            for r in self.responses:
                w.writerow([r.student_id, r.scale_id, *r.item_scores, *[""] * (width - len(r.item_scores))])
        with open(paths["grades"], "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["student_id", "grade"])
            w.writerows((sid, repr(g)) for sid, g in sorted(self.grades.items()))
        with open(paths["materials"], "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["material_id", "n_pages"])
            w.writerows((m.material_id, m.n_pages) for m in self.manifest.values())
        with open(paths["archetypes"], "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["student_id", "archetype"])
            w.writerows(sorted(self.archetypes.items()))
        return paths


def parse_mix(text: str) -> dict[str, float]:
    """``"quick=0.5,sticky=0.5"`` -> mapping."""
    mix = {}
    for part in text.split(","):
        name, _, weight = part.partition("=")
        mix[name.strip()] = float(weight)
    return mix


def _check_mix(mix: Mapping[str, float], archetypes: Mapping[str, ArchetypeSpec]) -> tuple[list[str], np.ndarray]:
    unknown = set(mix) - set(archetypes)
    if unknown:
        raise ValueError(f"unknown archetype(s): {', '.join(sorted(unknown))}")
    names = sorted(mix)
    weights = np.array([mix[n] for n in names], dtype=float)
    if (weights < 0).any() or not math.isclose(weights.sum(), 1.0, abs_tol=1e-9):
        raise ValueError(f"archetype mix must be non-negative and sum to 1, got {dict(mix)}")
    return names, weights


def _truncated_normal(rng: np.random.Generator, mean: float, sd: float, z: float, lo: float = 1.0, hi: float = 7.0) -> float:
    v = mean + sd * z
    while not lo <= v <= hi:
        v = mean + sd * rng.standard_normal()
    return v


def _draw_traits(rng: np.random.Generator) -> dict[str, float]:
    out = {}
    for (a, b), rho in TRAIT_CORR.items():
        z1, z2 = rng.standard_normal(2)
        z2 = rho * z1 + math.sqrt(1 - rho * rho) * z2
        out[a] = _truncated_normal(rng, *TRAIT_MOMENTS[a], z1)
        out[b] = _truncated_normal(rng, *TRAIT_MOMENTS[b], z2)
    return out


def _draw_items(rng: np.random.Generator, level: float, k: int) -> tuple[int, ...]:
    raw = np.rint(level + 0.6 * rng.standard_normal(k))
    return tuple(int(v) for v in np.clip(raw, 1, 7))


def _student_events(
    rng: np.random.Generator,
    sid: str,
    spec: ArchetypeSpec,
    manifest: list[MaterialManifestEntry],
    activity: float,
) -> list[RawEvent]:
    n_sessions = 1 + int(rng.poisson(max(spec.sessions_mean * activity - 1, 0)))
    probs = np.array([spec.interval_probs[c] for c in INTERVAL_CLASSES])
    lows = np.array([_INTERVAL_RANGES[c][0] for c in INTERVAL_CLASSES])
    highs = np.array([_INTERVAL_RANGES[c][1] for c in INTERVAL_CLASSES])
    kinds = (EventKind.NEXT, EventKind.PREV, EventKind.JUMP, EventKind.OTHER)
    events: list[RawEvent] = []
    t = BASE_MS + int(rng.integers(0, 3 * 86_400_000))
    for _ in range(n_sessions):
        mat = manifest[int(rng.integers(len(manifest)))]
        n_pages = mat.n_pages
        page = int(rng.integers(1, max(2, n_pages // 3)))
        n_ev = 2 + int(rng.poisson(max(spec.events_mean - 2, 0)))
        cls = rng.choice(4, size=n_ev, p=probs)
        gaps = rng.integers(lows[cls], highs[cls])
        u = rng.random(n_ev)
        burst = rng.integers(2, 5, size=n_ev)
        forward = rng.random(n_ev) < 0.8
        jump_pages = rng.integers(1, n_pages + 1, size=n_ev)
        label_idx = rng.integers(len(OTHER_LABELS), size=n_ev)
        if rng.random() < 0.9:
            events.append(RawEvent(sid, mat.material_id, page, EventKind.OPEN, t, "OPEN"))
        else:
            events.append(RawEvent(sid, mat.material_id, page, EventKind.NEXT, t, "NEXT"))
        for i in range(1, n_ev):
            t += int(gaps[i])
            if u[i] < spec.jump_rate:
                if u[i] < spec.jump_rate / 2:
                    page = int(jump_pages[i])
                    events.append(RawEvent(sid, mat.material_id, page, EventKind.JUMP, t, "JUMP"))
                else:
                    # Rapid page flipping: collapses to one complete jump.
                    step = 1 if forward[i] else -1
                    kind = EventKind.NEXT if step > 0 else EventKind.PREV
                    for b in range(int(burst[i])):
                        if b:
                            t += 500 + int(u[i] * 2000)
                        page = min(max(page + step, 1), n_pages)
                        events.append(RawEvent(sid, mat.material_id, page, kind, t, kind.name))
            elif u[i] < spec.jump_rate + spec.responsive_rate:
                label = OTHER_LABELS[int(label_idx[i])]
                events.append(RawEvent(sid, mat.material_id, page, kinds[3], t, label))
            elif u[i] < spec.jump_rate + spec.responsive_rate + 0.1 * (1 - spec.jump_rate - spec.responsive_rate):
                page = max(page - 1, 1)
                events.append(RawEvent(sid, mat.material_id, page, kinds[1], t, "PREV"))
            else:
                page = min(page + 1, n_pages)
                events.append(RawEvent(sid, mat.material_id, page, kinds[0], t, "NEXT"))
        if rng.random() < spec.timeout_prob:
            t += DEFAULT_GAP_MS + int(rng.integers(0, 3_600_000))
        else:
            t += int(rng.integers(*_INTERVAL_RANGES["medium"]))
            events.append(RawEvent(sid, mat.material_id, page, EventKind.CLOSE, t, "CLOSE"))
            t += 600_000 + int(rng.integers(0, 2 * 86_400_000))
    return events


def gen_cohort(
    n: int,
    archetype_mix: Mapping[str, float],
    planted: PlantedModel = REFERENCE_GRADE_MODEL,
    seed: int = 0,
    activity: float = 1.0,
    clip: bool = True,
    archetypes: Mapping[str, ArchetypeSpec] = ARCHETYPES,
    engagement_config: EngagementConfig = EngagementConfig(),
) -> SynthCohort:
    """Generate ``n`` students. Output depends only on the arguments.

    Grades come from ``planted`` evaluated on the *observed* covariates:
    the engagement score computed from the generated logs and the scale
    means of the generated questionnaire items.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    names, weights = _check_mix(archetype_mix, archetypes)
    root = np.random.SeedSequence(seed)
    setup_seq, grade_seq, *student_seqs = root.spawn(n + 2)
    setup = np.random.default_rng(setup_seq)
    manifest = {
        f"M{j + 1:02d}": MaterialManifestEntry(f"M{j + 1:02d}", int(setup.integers(20, 61))) for j in range(12)
    }
    materials = list(manifest.values())
    width = len(str(n))
    events: list[RawEvent] = []
    responses: list[QuestionnaireResponse] = []
    assigned: dict[str, str] = {}
    scores: dict[str, dict[str, float]] = {}
    streams: dict[str, list[RawEvent]] = {}
    for i, seq in enumerate(student_seqs):
        rng = np.random.default_rng(seq)
        sid = f"S{i + 1:0{width}d}"
        arche = names[int(rng.choice(len(names), p=weights))]
        assigned[sid] = arche
        traits = _draw_traits(rng)
        scores[sid] = {}
        for scale, k in DEFAULT_SCALE_ITEMS.items():
            r = QuestionnaireResponse(sid, scale, _draw_items(rng, traits[scale], k))
            responses.append(r)
            scores[sid][scale] = scale_score(r)
        streams[sid] = _student_events(rng, sid, archetypes[arche], materials, activity)
        events.extend(streams[sid])

    sessions = {sid: sessionize(evs) for sid, evs in streams.items()}
    _, eng = compute_engagement(sessions, manifest, engagement_config)
    ids = sorted(streams)
    e = np.array([eng[s].score for s in ids])
    deci = np.array([scores[s]["DECI"] for s in ids])
    dece = np.array([scores[s]["DECE"] for s in ids])
    noise = np.random.default_rng(grade_seq).standard_normal(n) * planted.noise_sd
    raw = planted.predictor(e, deci, dece) + noise
    grades = np.clip(raw, 0.0, 4.0) if clip else raw
    n_clipped = int(np.sum((raw < 0) | (raw > 4)))
    return SynthCohort(
        events,
        responses,
        {s: float(g) for s, g in zip(ids, grades)},
        manifest,
        assigned,
        {s: float(v) for s, v in zip(ids, e)},
        n_clipped,
    )
