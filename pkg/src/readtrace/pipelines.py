"""The two analysis workflows over joined student profiles.

``run_rq1`` relates trait-level flow and engagement to grades; ``run_rq2``
relates averaged sequence metrics, reading-strategy clusters and flow to
grades. Both return plain JSON-ready dictionaries of table blocks.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from typing import IO, Any, Mapping, Sequence

import numpy as np

from .clustering import ward_cluster, znorm
from .config import Config
from .engagement import compute_engagement
from .ingest import Source, open_text, parse_events, parse_grades, parse_manifest, parse_questionnaire
from .metrics import StudentMetrics, compute_all
from .model import METRIC_NAMES, SCALE_IDS, StudentProfile
from .scales import reliability, score_all
from .sessions import sessionize_all
from .stats import (
    Design,
    RegressionReport,
    descriptives,
    ols_fit,
    partial_f,
    pearson,
    predict_with_intervals,
    stepwise_select,
)

logger = logging.getLogger(__name__)

SOURCES = ("metrics", "engagement", "scales", "grades")
METRIC_LABELS = {
    "n_jumps": "N_Jumps",
    "n_stops": "N_Stops",
    "n_responsive": "N_Responsive",
    "sequential": "Sequential",
    "stickiness": "Stickiness",
    "quickness": "Quickness",
    "stableness": "Stableness",
}
METRIC_ORDER = ("N_Jumps", "N_Stops", "N_Responsive", "Sequential", "Stickiness", "Quickness", "Stableness")
RQ1_VARIABLES = ("DECI", "DECE", "Engagement", "Grade", "MW-S", "MW-D")
MIN_CLUSTER_SIZE = 3


class AnalysisError(ValueError):
    pass


@dataclass
class JoinResult:
    profiles: list[StudentProfile]
    attrition: dict[str, Any]


def join_profiles(
    metrics: Mapping[str, StudentMetrics] | None = None,
    engagement: Mapping[str, float] | None = None,
    scales: Mapping[str, Mapping[str, float]] | None = None,
    grades: Mapping[str, float] | None = None,
    require: Sequence[str] = SOURCES,
    require_scales: Sequence[str] = SCALE_IDS,
) -> JoinResult:
    """Inner join on student id over the ``require``d sources.

    Optional sources that are present still fill their fields for students
    in the join. Raises :class:`AnalysisError` if nobody survives.
    """
    given = {"metrics": metrics, "engagement": engagement, "scales": scales, "grades": grades}
    for name in require:
        if name not in given:
            raise ValueError(f"unknown source {name!r}")
        if given[name] is None:
            raise AnalysisError(f"required source {name!r} not provided")
    complete_scales = (
        {sid for sid, s in scales.items() if all(k in s for k in require_scales)} if scales is not None else set()
    )
    keysets = {
        name: (complete_scales if name == "scales" else set(src))
        for name, src in given.items()
        if src is not None
    }
    universe = set().union(*keysets.values()) if keysets else set()
    kept = set(universe)
    for name in require:
        kept &= keysets[name]
    attrition = {
        "sources": {name: len(keys) for name, keys in sorted(keysets.items())},
        "missing_from": {name: len(universe - keysets[name]) for name in require},
        "union": len(universe),
        "joined": len(kept),
    }
    if not kept:
        raise AnalysisError(f"empty join over {list(require)}: {attrition}")
    logger.info("joined %d of %d students (%s)", len(kept), len(universe), attrition["missing_from"])
    profiles = []
    for sid in sorted(kept):
        p = StudentProfile(sid)
        if metrics is not None and sid in metrics:
            m = metrics[sid]
            p.mean_metrics = dict(m.means)
            p.n_stops = m.n_stops
            p.n_sessions = m.n_sessions
        if engagement is not None and sid in engagement:
            p.engagement = float(engagement[sid])
        if scales is not None and sid in scales:
            s = scales[sid]
            p.deci, p.dece, p.mw_s, p.mw_d = (s.get(k) for k in SCALE_IDS)
        if grades is not None and sid in grades:
            p.grade = float(grades[sid])
        profiles.append(p)
    return JoinResult(profiles, attrition)


PROFILE_COLUMNS = ("student_id",) + METRIC_NAMES + (
    "n_stops",
    "n_sessions",
    "engagement",
    "DECI",
    "DECE",
    "MW_S",
    "MW_D",
    "grade",
)


def _cell(v: float | int | None) -> str:
    if v is None:
        return ""
    return repr(float(v)) if isinstance(v, float) else str(v)


def write_profiles(profiles: Sequence[StudentProfile], stream: IO[str]) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(PROFILE_COLUMNS)
    for p in profiles:
        w.writerow(
            [p.student_id]
            + [_cell(p.mean_metrics.get(n)) for n in METRIC_NAMES]
            + [_cell(v) for v in (p.n_stops, p.n_sessions, p.engagement, p.deci, p.dece, p.mw_s, p.mw_d, p.grade)]
        )


def read_profiles(source: Source) -> list[StudentProfile]:
    def num(text: str) -> float | None:
        return float(text) if text != "" else None

    out = []
    with open_text(source) as stream:
        for row in csv.DictReader(stream):
            out.append(
                StudentProfile(
                    row["student_id"],
                    {n: num(row[n]) for n in METRIC_NAMES},
                    int(row["n_stops"]) if row["n_stops"] != "" else None,
                    int(row["n_sessions"] or 0),
                    num(row["engagement"]),
                    num(row["DECI"]),
                    num(row["DECE"]),
                    num(row["MW_S"]),
                    num(row["MW_D"]),
                    num(row["grade"]),
                )
            )
    return out


def _column(profiles: Sequence[StudentProfile], name: str) -> np.ndarray:
    vals = [p.value(name) for p in profiles]
    if any(v is None for v in vals):
        raise AnalysisError(f"variable {name} missing for some students")
    return np.array(vals, dtype=float)


def _usable(profiles: Sequence[StudentProfile], names: Sequence[str]) -> tuple[list[StudentProfile], int]:
    keep = [p for p in profiles if all(p.value(n) is not None for n in names)]
    return keep, len(profiles) - len(keep)


def _frame(profiles: Sequence[StudentProfile], names: Sequence[str]) -> dict[str, np.ndarray]:
    return {n: _column(profiles, n) for n in names}


def _corr_cell(x: np.ndarray, y: np.ndarray) -> dict[str, float] | None:
    c = pearson(x, y)
    return None if c is None else {"r": c.r, "p": c.p}


def _model_row(label: str, rep: RegressionReport) -> list[Any]:
    return [label, rep.r2, {"f": rep.f_model, "df1": rep.df_model, "df2": rep.df_resid}, None, None, None, rep.p_model]


def _coef_rows(rep: RegressionReport) -> list[list[Any]]:
    rows = []
    for c in rep.coefficients():
        name = "Constant" if c["term"] == "Intercept" else c["term"]
        rows.append([name, None, None, c["beta"], c["ci95"], c["t"], c["p"]])
    return rows


def _ftest_note(label: str, test) -> str:
    eta = f", partial eta2={test.partial_eta_sq:.3f}" if test.partial_eta_sq is not None else ""
    return f"{label}: dR2={test.delta_r2:.3f}, F({test.df1},{test.df2})={test.f:.2f}, p={test.p:.3g}{eta}"


def _block(name: str, title: str, columns: Sequence[str], rows: list[list[Any]], notes: Sequence[str] = (), **data: Any) -> dict[str, Any]:
    block: dict[str, Any] = {"name": name, "title": title, "columns": list(columns), "rows": rows, "notes": list(notes)}
    if data:
        block["data"] = data
    return block


REGRESSION_COLUMNS = ("Predictor", "R2", "F", "beta", "beta 95%", "t", "p")


def _center(frame: dict[str, np.ndarray], names: Sequence[str]) -> None:
    for n in names:
        frame[n] = frame[n] - frame[n].mean()


def run_rq1(
    profiles: Sequence[StudentProfile],
    config: Config = Config(),
    reliability: Mapping[str, float | None] | None = None,
    attrition: Mapping[str, Any] | None = None,
) -> dict[str, Any]:
    """Correlations, engagement-on-traits regressions and the three-stage grade model."""
    usable, dropped = _usable(profiles, RQ1_VARIABLES)
    if len(usable) < 8:
        raise AnalysisError(f"rq1 needs at least 8 complete profiles, got {len(usable)}")
    frame = _frame(usable, RQ1_VARIABLES)
    n = len(usable)

    desc_rows = []
    for v in RQ1_VARIABLES:
        scale = 100.0 if v == "Engagement" else 1.0
        d = descriptives(frame[v] * scale)
        alpha = reliability.get(v) if reliability else None
        desc_rows.append([v, d.n, {"mean": d.mean, "sd": d.sd}, d.skewness, d.excess_kurtosis, alpha])
    blocks = [
        _block(
            "descriptives",
            "Descriptive statistics (engagement in percent, grades on 0-4)",
            ("Measure", "N", "Mean (SD)", "Skew", "Kurtosis", "Cronbach's alpha"),
            desc_rows,
        )
    ]

    corr_rows = []
    for i, a in enumerate(RQ1_VARIABLES[:-1]):
        row: list[Any] = [a]
        for j, b in enumerate(RQ1_VARIABLES[1:], start=1):
            row.append(_corr_cell(frame[a], frame[b]) if j > i else None)
        corr_rows.append(row)
    blocks.append(
        _block("correlations", "Pearson correlations", ("",) + RQ1_VARIABLES[1:], corr_rows, ["*p<0.05, **p<0.01"])
    )

    fit_frame = dict(frame)
    if config.center_traits:
        _center(fit_frame, ("DECI", "DECE"))
    eng_models = [("DECI + DECE", ("DECI", "DECE")), ("DECI + DECE + MW-S + MW-D", ("DECI", "DECE", "MW-S", "MW-D"))]
    eng_rows = []
    for label, terms in eng_models:
        rep = ols_fit(Design("Engagement", terms), fit_frame)
        eng_rows.append([label, rep.r2, {"f": rep.f_model, "df1": rep.df_model, "df2": rep.df_resid}, rep.p_model])
    blocks.append(_block("engagement_on_traits", "Regression of engagement on trait predictors", ("Model", "R2", "F", "p"), eng_rows))

    m1 = ols_fit(Design("Grade", ("Engagement",)), fit_frame)
    m2 = ols_fit(Design("Grade", ("Engagement", "DECI", "DECE")), fit_frame)
    m3 = ols_fit(
        Design("Grade", ("Engagement", "DECI", "DECE", "Engagement:DECI", "Engagement:DECE")), fit_frame
    )
    t12, t23, t13 = partial_f(m1, m2), partial_f(m2, m3), partial_f(m1, m3)
    rows = [_model_row("Model 1", m1), _model_row("Model 2", m2), _model_row("Model 3", m3)] + _coef_rows(m3)
    blocks.append(
        _block(
            "grade_models",
            "Stepwise regression of grades on engagement and DEC",
            REGRESSION_COLUMNS,
            rows,
            [_ftest_note("Model 1-2", t12), _ftest_note("Model 2-3", t23), _ftest_note("Model 1-3", t13)],
            tests={"1-2": t12.to_dict(), "2-3": t23.to_dict(), "1-3": t13.to_dict()},
            models={"1": m1.to_dict(), "2": m2.to_dict(), "3": m3.to_dict()},
        )
    )
    return {
        "analysis": "rq1",
        "n": n,
        "excluded_incomplete": dropped,
        "attrition": dict(attrition or {}),
        "config": {"center_traits": config.center_traits},
        "blocks": blocks,
    }


def run_rq2(
    profiles: Sequence[StudentProfile],
    config: Config = Config(),
    attrition: Mapping[str, Any] | None = None,
) -> dict[str, Any]:
    """Metric correlations, stepwise metric selection, DEC augmentation and cluster moderation."""
    k = config.k
    needed = METRIC_ORDER + ("Engagement", "Grade", "DECI", "DECE")
    usable, dropped = _usable(profiles, needed)
    if len(usable) < max(8, k):
        raise AnalysisError(f"rq2 needs at least {max(8, k)} complete profiles, got {len(usable)}")
    frame = _frame(usable, needed)
    if config.center_traits:
        _center(frame, ("DECI", "DECE"))
    alpha = config.alpha
    blocks = []

    # Metric correlations with engagement, grade and each other.
    corr_rows = []
    for label in ("Engagement", "Grade") + METRIC_ORDER[:-1]:
        row: list[Any] = [label]
        start = METRIC_ORDER.index(label) + 1 if label in METRIC_ORDER else 0
        for j, m in enumerate(METRIC_ORDER):
            row.append(_corr_cell(frame[label], frame[m]) if j >= start else None)
        corr_rows.append(row)
    blocks.append(
        _block("metric_correlations", "Pearson correlations of sequence metrics", ("",) + METRIC_ORDER, corr_rows, ["*p<0.05, **p<0.01"])
    )

    grade_corr = {m: pearson(frame[m], frame["Grade"]) for m in METRIC_ORDER}
    correlated = [m for m in METRIC_ORDER if grade_corr[m] is not None and grade_corr[m].p < alpha]
    starts = [[m] for m in correlated] or None
    sel = stepwise_select([], list(METRIC_ORDER), frame, "Grade", alpha=alpha, starts=starts)
    path = list(sel.path)
    rows = [_model_row(f"Model {i + 1}", rep) for i, rep in enumerate(path)] + _coef_rows(sel.report)
    notes = [_ftest_note(f"Model {i + 1}-{i + 2}", partial_f(a, b)) for i, (a, b) in enumerate(zip(path, path[1:]))]
    selected = list(sel.report.terms)
    blocks.append(
        _block(
            "metric_selection",
            "Stepwise regression of grades on selected sequence metrics",
            REGRESSION_COLUMNS,
            rows,
            notes,
            selected=selected,
            grade_correlated=correlated,
            finalists=[{"terms": list(f.terms), "r2": f.r2} for f in sel.finalists],
        )
    )
    trace_rows = [
        [" + ".join(rec.start) or "(intercept)", rec.step, " + ".join(rec.model) or "(intercept)", cand, f, p, d, cand == rec.added]
        for rec in sel.trace
        for cand, f, p, d in rec.candidates
    ]
    blocks.append(
        _block("selection_trace", "Forward-selection trace", ("start", "step", "model", "candidate", "F", "p", "dR2", "added"), trace_rows)
    )

    eng_only = ols_fit(Design("Grade", ("Engagement",)), frame)
    comparison = []
    if selected:
        eng_plus = ols_fit(Design("Grade", ("Engagement", *selected)), frame)
        t_metrics = partial_f(eng_only, eng_plus)
        comparison.append(["Engagement + selected metrics vs Engagement", t_metrics.to_dict()])
        base = sel.report
    else:
        base = ols_fit(Design("Grade", ()), frame)
    dec = ols_fit(Design("Grade", (*selected, "DECI", "DECE")), frame)
    t_dec = partial_f(base, dec)
    comparison.append(["Selected metrics + DECI + DECE vs selected metrics", t_dec.to_dict()])
    blocks.append(
        _block(
            "added_value",
            "Partial F tests of added predictors",
            ("comparison", "test"),
            comparison,
            models={"engagement": eng_only.to_dict(), "dec_augmented": dec.to_dict()},
        )
    )

    blocks.extend(_cluster_blocks(usable, frame, config))
    return {
        "analysis": "rq2",
        "n": len(usable),
        "k": k,
        "excluded_incomplete": dropped,
        "attrition": dict(attrition or {}),
        "config": {"alpha": alpha, "cluster_features": list(config.cluster_features), "center_traits": config.center_traits},
        "blocks": blocks,
    }


def _feature_label(name: str) -> str:
    return METRIC_LABELS.get(name, name)


def _cluster_blocks(profiles: Sequence[StudentProfile], frame: dict[str, np.ndarray], config: Config) -> list[dict[str, Any]]:
    k = config.k
    features = [_feature_label(f) for f in config.cluster_features]
    x = znorm(np.column_stack([frame[f] for f in features]), features)
    assignment = ward_cluster(x, k)
    labels = assignment.labels
    sizes = assignment.sizes
    profile_z = znorm(np.column_stack([frame[m] for m in METRIC_ORDER]), METRIC_ORDER)
    rows = []
    for c in range(k):
        members = labels == c
        rows.append([c, sizes[c], *profile_z[members].mean(axis=0).tolist()])
    blocks = [
        _block(
            "clusters",
            "Cluster sizes and z-normalised metric means",
            ("cluster", "n", *METRIC_ORDER),
            rows,
            [f"clustered on: {', '.join(features)}"],
            assignments={p.student_id: int(lab) for p, lab in zip(profiles, labels.tolist())},
            merges=assignment.merge_tree_json(),
        )
    ]

    data = dict(frame)
    data["cluster"] = labels
    if k < 2:
        blocks.append(_block("cluster_moderation", "Cluster moderation of DEC", (), [], ["k < 2: no cluster contrasts to test"]))
        return blocks
    small = [c for c in range(k) if sizes[c] < MIN_CLUSTER_SIZE]
    if small:
        msg = f"omnibus tests refused: cluster(s) {small} have fewer than {MIN_CLUSTER_SIZE} members (sizes {sizes})"
        logger.warning(msg)
        blocks.append(_block("cluster_moderation", "Cluster moderation of DEC", (), [], [msg]))
        return blocks

    terms = (
        "C(cluster)",
        "DECI",
        "DECE",
        "C(cluster):DECI",
        "C(cluster):DECE",
        "Engagement",
        "Engagement:DECI",
        "Engagement:DECE",
    )
    design = Design("Grade", terms)
    full = ols_fit(design, data)
    tests = {}
    for label, block in (("DECI", "C(cluster):DECI"), ("DECE", "C(cluster):DECE")):
        reduced = ols_fit(design.without([block]), data, full.levels)
        tests[label] = partial_f(reduced, full)
    omni_rows = [[f"C(cluster):{lab}", t.f, t.df1, t.df2, t.p, t.partial_eta_sq] for lab, t in tests.items()]
    blocks.append(
        _block(
            "cluster_moderation",
            "Omnibus F tests of cluster x DEC interaction blocks",
            ("block", "F", "df1", "df2", "p", "partial eta2"),
            omni_rows,
            [
                f"full model: R2={full.r2:.3f}, F({full.df_model},{full.df_resid})={full.f_model:.2f}, p={full.p_model:.3g}",
                f"reference cluster: {full.levels['cluster'][0]}",
            ],
            model=full.to_dict(),
        )
    )

    grid_rows = []
    dece_mean = float(frame["DECE"].mean())
    eng_mean = float(frame["Engagement"].mean())
    for c in range(k):
        members = labels == c
        lo, hi = float(frame["DECI"][members].min()), float(frame["DECI"][members].max())
        deci = np.linspace(lo, hi, config.grid_points)
        m = len(deci)
        grid = {"DECI": deci, "DECE": np.full(m, dece_mean), "Engagement": np.full(m, eng_mean), "cluster": np.full(m, c)}
        pred = predict_with_intervals(full, grid)
        for i in range(m):
            grid_rows.append(
                [c, float(deci[i]), float(pred.fit[i]), float(pred.ci_low[i]), float(pred.ci_high[i]), float(pred.pi_low[i]), float(pred.pi_high[i])]
            )
    blocks.append(
        _block(
            "prediction_grid",
            "Predicted grade over each cluster's DECI range (DECE and engagement at cohort means)",
            ("cluster", "DECI", "fit", "ci_low", "ci_high", "pi_low", "pi_high"),
            grid_rows,
        )
    )
    return blocks


@dataclass
class Inputs:
    """Everything the analyses need, loaded from the raw files."""

    metrics: dict[str, StudentMetrics]
    engagement: dict[str, float]
    scales: dict[str, dict[str, float]]
    grades: dict[str, float]
    reliability: dict[str, float | None]


def load_inputs(
    events: Source,
    materials: Source,
    questionnaire: Source,
    grades: Source,
    config: Config = Config(),
    events_format: str = "csv",
) -> Inputs:
    streams = parse_events(events, events_format)
    sessions = sessionize_all(streams, config.gap_ms)
    metrics = compute_all(sessions, config.thresholds)
    _, eng = compute_engagement(sessions, parse_manifest(materials), config.engagement)
    responses = parse_questionnaire(questionnaire)
    return Inputs(
        metrics,
        {sid: s.score for sid, s in eng.items()},
        score_all(responses),
        parse_grades(grades),
        reliability(responses),
    )
