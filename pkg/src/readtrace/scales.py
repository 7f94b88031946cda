"""Questionnaire scale scores and Cronbach's alpha."""

from __future__ import annotations

import csv
import math
from typing import IO, Iterable, Mapping, Sequence

import numpy as np

from .ingest import QuestionnaireResponse, Source, open_text
from .model import SCALE_IDS

SCALE_COLUMNS = ("student_id", "DECI", "DECE", "MW_S", "MW_D")


def scale_score(response: QuestionnaireResponse) -> float:
    return math.fsum(response.item_scores) / len(response.item_scores)


def cronbach_alpha(items: Sequence[Sequence[float]] | np.ndarray) -> float | None:
    """Alpha for an n_respondents x k_items matrix; ``None`` if total scores do not vary."""
    m = np.asarray(items, dtype=float)
    if m.ndim != 2:
        raise ValueError("item matrix must be two-dimensional")
    n, k = m.shape
    if n < 2 or k < 2:
        raise ValueError(f"need at least 2 respondents and 2 items, got {m.shape}")
    if np.isnan(m).any():
        raise ValueError("item matrix has missing cells")
    total_var = float(np.var(m.sum(axis=1), ddof=1))
    if total_var == 0.0:
        return None
    item_var = float(np.var(m, axis=0, ddof=1).sum())
    return k / (k - 1) * (1.0 - item_var / total_var)


def score_all(responses: Iterable[QuestionnaireResponse]) -> dict[str, dict[str, float]]:
    """student -> scale -> mean item score. Later duplicates replace earlier ones."""
    out: dict[str, dict[str, float]] = {}
    for r in responses:
        out.setdefault(r.student_id, {})[r.scale_id] = scale_score(r)
    return dict(sorted(out.items()))


def reliability(responses: Iterable[QuestionnaireResponse]) -> dict[str, float | None]:
    by_scale: dict[str, dict[str, tuple[int, ...]]] = {}
    for r in responses:
        by_scale.setdefault(r.scale_id, {})[r.student_id] = r.item_scores
    out: dict[str, float | None] = {}
    for scale in SCALE_IDS:
        rows = by_scale.get(scale)
        out[scale] = cronbach_alpha(list(rows.values())) if rows and len(rows) >= 2 else None
    return out


def write_scales(scores: Mapping[str, Mapping[str, float]], stream: IO[str]) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(SCALE_COLUMNS)
    for sid in sorted(scores):
        s = scores[sid]
        writer.writerow([sid, *(repr(s[k]) if k in s else "" for k in SCALE_IDS)])


def read_scales(source: Source) -> dict[str, dict[str, float]]:
    out = {}
    with open_text(source) as stream:
        for row in csv.DictReader(stream):
            out[row["student_id"]] = {
                scale: float(row[col])
                for scale, col in zip(SCALE_IDS, SCALE_COLUMNS[1:])
                if row.get(col, "") != ""
            }
    return out
