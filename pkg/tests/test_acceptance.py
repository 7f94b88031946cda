"""Acceptance suite: one test per criterion, each printing a single PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``; the verdict lines are
written straight to the terminal, bypassing output capture.
"""

from __future__ import annotations

import math
import random
import time

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from readtrace.clustering import ward_cluster, ward_linkage
from readtrace.config import Config
from readtrace.encoding import EncodedSequence, collapse_jumps
from readtrace.engagement import SUBMETRIC_NAMES, EngagementSubMetrics, compute_engagement, engagement_score
from readtrace.metrics import IntervalCensus, compute_all, n_jumps, n_responsive, n_stops, predominance, sequential
from readtrace.model import CLOSED, EventKind, RawEvent, timeout
from readtrace.pipelines import join_profiles, load_inputs, run_rq1, run_rq2
from readtrace.report import emit_report
from readtrace.scales import cronbach_alpha, score_all
from readtrace.sessions import sessionize_all
from readtrace.stats import Design, descriptives, ols_fit, omnibus_block_test, partial_f, pearson, stepwise_select
from readtrace.stats.distributions import reg_inc_beta
from readtrace.stats.regression import build_matrix, partial_f_r2, term_key
from readtrace.synth import REFERENCE_GRADE_MODEL, PlantedModel, gen_cohort

from .oracles import alpha_loop, descriptives_loop, ols_normal_equations, pearson_loop, reg_inc_beta_quad, ward_brute

MIX = {"balanced": 0.25, "sticky": 0.25, "jumpy": 0.25, "quick": 0.25}
GRADE_TERMS = ("Engagement", "DECI", "DECE", "Engagement:DECI", "Engagement:DECE")


@pytest.fixture
def verdict(capsys):
    def emit(number: int, title: str, ok: bool, detail: str, started: float) -> None:
        with capsys.disabled():
            status = "PASS" if ok else "FAIL"
            print(f"\n[criterion {number:2d}] {status} {title}: {detail} ({time.perf_counter() - started:.1f} s)")
        assert ok, detail

    return emit


# 1. golden worked examples


def test_c01_golden_worked_examples(verdict):
    t0 = time.perf_counter()
    stops = n_stops(
        [
            EncodedSequence("OsNsXmJsC", CLOSED),
            EncodedSequence("OsPsNl", timeout(420_000)),
            EncodedSequence("NmNC", CLOSED),
        ]
    )
    seq = sequential("OsNsXmNmEmNmXmYmXmNsN")
    pred = predominance(IntervalCensus(n_short=6, n_medium=4, n_long=1))
    checks = {
        "N_Jumps=3": n_jumps("OsNsXmJmNsXsC") == 3,
        "N_Stops=1": stops == 1,
        "N_Responsive=2": n_responsive("OsXsEsNlNmEmC") == 2,
        "Sequential=8/9": abs(seq - 8 / 9) <= 0.005 and round(seq, 2) == 0.89,
        "predominance=(0.02,0.68,0.30)": all(abs(a - b) <= 0.005 for a, b in zip(pred, (0.02, 0.68, 0.30))),
    }
    elapsed = time.perf_counter() - t0
    failed = [k for k, v in checks.items() if not v]
    verdict(1, "golden worked examples", not failed and elapsed < 1, f"failed={failed or 'none'}", t0)


# 2. jump recoding


def test_c02_jump_recode_and_idempotence(verdict):
    t0 = time.perf_counter()
    single = collapse_jumps("NNNPNNP") == "X"
    rnd = random.Random(7)
    alphabet = "ONPJECsml"
    bad = 0
    for _ in range(10_000):
        s = "".join(rnd.choice(alphabet) for _ in range(rnd.randint(0, 40)))
        once = collapse_jumps(s)
        bad += collapse_jumps(once) != once
    elapsed = time.perf_counter() - t0
    ok = single and bad == 0 and elapsed < 5
    verdict(2, "jump recoding", ok, f"NNNPNNP->X {single}, non-idempotent {bad}/10000", t0)


# 3. published F arithmetic

PUBLISHED_F = [
    # label, r2_reduced, r2_full, df1, df2, delta_r2, F, p
    ("Table 6 models 1-2", 0.255, 0.333, 2, 96, 0.078, 5.61, 0.005),
    ("Table 6 models 2-3", 0.333, 0.377, 2, 92, 0.044, 3.25, 0.043),
    ("Table 8 models 1-2", 0.081, 0.152, 1, 97, 0.071, 8.12, 0.005),
    ("Table 8 models 2-3", 0.152, 0.201, 1, 96, 0.049, 5.88, 0.017),
    ("DEC on sequence model", 0.255, 0.255 + 0.082, 3, 95, 0.082, 3.92, 0.01),
]


def test_c03_published_f_arithmetic(verdict):
    t0 = time.perf_counter()
    misses = []
    for label, r2_red, r2_full, df1, df2, d_r2, f, p in PUBLISHED_F:
        res = partial_f_r2(r2_red, r2_full, df1, df2)
        if abs(res.delta_r2 - d_r2) > 5e-4 or abs(res.f - f) > 0.01 or abs(res.p - p) > 0.001:
            misses.append(f"{label}: dR2={res.delta_r2:.3f} F={res.f:.3f} p={res.p:.4f} vs {d_r2}/{f}/{p}")
    ok = not misses and time.perf_counter() - t0 < 1
    verdict(3, "published F arithmetic", ok, "; ".join(misses) or "5/5 triples within tolerance", t0)


# 4. statistical oracles


def test_c04_statistical_oracles(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(404)
    worst = {"pearson": 0.0, "descriptives": 0.0, "alpha": 0.0, "beta": 0.0, "orthogonality": 0.0}
    for _ in range(1000):
        n = int(rng.integers(6, 30))
        x, y = rng.normal(size=n), rng.normal(size=n)
        c = pearson(x, y)
        r, p = pearson_loop(x.tolist(), y.tolist())
        worst["pearson"] = max(worst["pearson"], abs(c.r - r), abs(c.p - p))

        d = descriptives(x)
        ref = descriptives_loop(x.tolist())
        got = (d.mean, d.sd, d.skewness, d.excess_kurtosis)
        worst["descriptives"] = max(worst["descriptives"], *(abs(a - b) for a, b in zip(got, ref)))

        items = rng.integers(1, 8, size=(n, int(rng.integers(2, 7)))).astype(float)
        a = cronbach_alpha(items)
        if a is not None:
            worst["alpha"] = max(worst["alpha"], abs(a - alpha_loop(items.tolist())))

        k = int(rng.integers(1, 5))
        names = tuple(f"x{j}" for j in range(k))
        data = {nm: rng.normal(size=n) for nm in names}
        data["y"] = rng.normal(size=n)
        fit = ols_fit(Design("y", names), data)
        xm = build_matrix(Design("y", names), data).x
        worst["beta"] = max(worst["beta"], float(np.max(np.abs(fit.beta - ols_normal_equations(xm, data["y"])))))
        worst["orthogonality"] = max(worst["orthogonality"], float(np.max(np.abs(xm.T @ fit.residuals))))
    ok = all(v <= 1e-9 for k, v in worst.items() if k != "orthogonality") and worst["orthogonality"] < 1e-8
    ok = ok and time.perf_counter() - t0 < 30
    verdict(4, "statistical oracles", ok, ", ".join(f"{k} {v:.1e}" for k, v in worst.items()), t0)


# 5. incomplete beta accuracy


def test_c05_incomplete_beta_accuracy(verdict):
    t0 = time.perf_counter()
    shapes = np.geomspace(0.1, 1000.0, 10)
    xs = np.linspace(0.001, 0.999, 10)
    worst, where = 0.0, None
    for a in shapes:
        for b in shapes:
            for x in xs:
                err = abs(reg_inc_beta(a, b, x) - reg_inc_beta_quad(a, b, x))
                if err > worst:
                    worst, where = err, (a, b, x)
    ok = worst <= 1e-10 and time.perf_counter() - t0 < 30
    verdict(5, "incomplete beta vs quadrature", ok, f"max |err| {worst:.1e} over 1000 points at {where}", t0)


# 6. calibration under the null


@pytest.mark.slow
def test_c06_null_calibration(verdict):
    t0 = time.perf_counter()
    slopes = {"a": 0.5, "b": -1.0, "c": 0.0}
    p_partial, p_omnibus = [], []
    covered = total = 0
    for seed in range(1000):
        rng = np.random.default_rng(seed)
        n = 200
        data = {v: rng.normal(size=n) for v in "abcde"}
        data["g"] = rng.integers(0, 3, size=n)
        data["y"] = 1.0 + sum(s * data[v] for v, s in slopes.items()) + rng.normal(size=n)
        full = ols_fit(Design("y", ("a", "b", "c", "d", "e")), data)
        reduced = ols_fit(Design("y", ("a", "b", "c")), data)
        p_partial.append(partial_f(reduced, full).p)
        p_omnibus.append(omnibus_block_test(Design("y", ("a", "C(g)", "C(g):d")), ["C(g):d"], data).p)
        for v, s in slopes.items():
            lo, hi = reduced.ci95[reduced.columns.index(v)]
            covered += lo <= s <= hi
            total += 1
    ks_partial = sps.kstest(p_partial, "uniform").statistic
    ks_omnibus = sps.kstest(p_omnibus, "uniform").statistic
    coverage = covered / total
    ok = ks_partial < 0.05 and ks_omnibus < 0.05 and abs(coverage - 0.95) <= 0.015
    ok = ok and time.perf_counter() - t0 < 300
    detail = f"KS partial {ks_partial:.3f}, KS omnibus {ks_omnibus:.3f}, slope CI coverage {coverage:.3%} ({total} intervals)"
    verdict(6, "null calibration", ok, detail, t0)


# 7. Ward against brute force


def test_c07_ward_oracle(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(707)
    mismatches = 0
    for i in range(500):
        n = int(rng.integers(2, 9))
        d = int(rng.integers(1, 4))
        pts = rng.integers(0, 3, size=(n, d)).astype(float) if i % 3 == 0 else rng.normal(size=(n, d))
        ref = ward_brute(pts)
        merges = ward_linkage(pts)
        same_pairs = [(m.left, m.right) for m in merges] == [r[:2] for r in ref]
        same_heights = all(math.isclose(m.height, r[2], rel_tol=1e-9, abs_tol=1e-12) for m, r in zip(merges, ref))
        mismatches += not (same_pairs and same_heights)

    coincident = np.array([[0.0, 0.0], [5.0, 5.0], [5.0, 5.0], [10.0, -3.0], [-7.0, 2.0]])
    first = ward_linkage(coincident)[0]
    coincident_ok = (first.left, first.right, first.height) == (1, 2, 0.0)
    far = ward_cluster(np.array([[0.0, 0.0], [100.0, 100.0], [0.0, 1.0], [100.0, 101.0]]), 2).labels
    far_ok = far[0] == far[2] != far[1] == far[3]

    ok = mismatches == 0 and coincident_ok and far_ok and time.perf_counter() - t0 < 60
    detail = f"mismatches {mismatches}/500, coincident pair first {coincident_ok}, far pairs split {far_ok}"
    verdict(7, "Ward vs exhaustive agglomeration", ok, detail, t0)


# 8. planted recovery end to end


def _frame(cohort, scales, ids):
    return {
        "Grade": np.array([cohort.grades[s] for s in ids]),
        "Engagement": np.array([cohort.engagement[s] for s in ids]),
        "DECI": np.array([scales[s]["DECI"] for s in ids]),
        "DECE": np.array([scales[s]["DECE"] for s in ids]),
    }


@pytest.mark.slow
def test_c08_planted_recovery(verdict):
    t0 = time.perf_counter()
    # Unclipped grades keep the planted model linear; they stay in memory because
    # the grade file format only admits values on the 0-4 scale.
    cohort = gen_cohort(5000, MIX, REFERENCE_GRADE_MODEL, seed=8, clip=False)
    streams: dict[str, list[RawEvent]] = {}
    for e in cohort.events:
        streams.setdefault(e.student_id, []).append(e)
    sessions = sessionize_all(streams)
    _, eng = compute_engagement(sessions, cohort.manifest)
    joined = join_profiles(
        compute_all(sessions), {s: v.score for s, v in eng.items()}, score_all(cohort.responses), cohort.grades
    )
    report = run_rq1(joined.profiles)
    model3 = next(b for b in report["blocks"] if b["name"] == "grade_models")["data"]["models"]["3"]
    planted = REFERENCE_GRADE_MODEL.coefficients()
    outside = []
    for row in model3["coefficients"]:
        lo, hi = row["ci95"]
        if not lo <= planted[row["term"]] <= hi:
            outside.append(f"{row['term']} {planted[row['term']]} not in [{lo:.3f}, {hi:.3f}]")

    quiet = PlantedModel(**{**REFERENCE_GRADE_MODEL.__dict__, "noise_sd": 0.05})
    want = {term_key(t) for t in GRADE_TERMS}
    recalled = 0
    for seed in range(100):
        small = gen_cohort(200, MIX, quiet, seed=seed, clip=False)
        scales = score_all(small.responses)
        data = _frame(small, scales, sorted(small.grades))
        chosen = stepwise_select([], ["Engagement", "DECI", "DECE"], data, "Grade", alpha=0.05).selected
        recalled += want <= {term_key(t) for t in chosen}

    ok = not outside and recalled >= 99 and time.perf_counter() - t0 < 300
    detail = f"n={report['n']}, CI misses: {'; '.join(outside) or 'none'}; stepwise recall {recalled}/100"
    verdict(8, "planted recovery", ok, detail, t0)


# 9. invariances

INVARIANCE = settings(max_examples=1000, deadline=None, derandomize=True, suppress_health_check=list(HealthCheck))


@st.composite
def _cohort_submetrics(draw):
    n = draw(st.integers(2, 25))
    cells = st.floats(0.0, 1e4, allow_nan=False).map(lambda v: round(v, 2))
    rows = draw(st.lists(st.lists(cells, min_size=13, max_size=13), min_size=n, max_size=n))
    return {f"s{i}": EngagementSubMetrics(f"s{i}", dict(zip(SUBMETRIC_NAMES, row))) for i, row in enumerate(rows)}


@st.composite
def _event_stream(draw):
    kinds = [EventKind.OPEN, EventKind.NEXT, EventKind.PREV, EventKind.JUMP, EventKind.OTHER, EventKind.CLOSE]
    labels = {EventKind.OTHER: "ADD MARKER"}
    gaps = st.one_of(st.integers(0, 3_000), st.integers(3_000, 130_000), st.integers(300_000, 800_000))
    t = draw(st.integers(0, 10**12))
    out = []
    for _ in range(draw(st.integers(1, 40))):
        t += draw(gaps)
        k = draw(st.sampled_from(kinds))
        out.append(RawEvent("s1", draw(st.sampled_from(["M1", "M2"])), draw(st.integers(1, 9)), k, t, labels.get(k, k.name)))
    return out


def _student_metrics(events):
    return compute_all(sessionize_all({"s1": events}))["s1"]


@st.composite
def _ols_case(draw):
    n = draw(st.integers(8, 40))
    k = draw(st.integers(1, 4))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    data = {f"x{j}": rng.normal(size=n) for j in range(k)}
    data["y"] = rng.normal(size=n) + sum(data.values())
    return data, k, draw(st.integers(0, k - 1)), draw(st.floats(1e-3, 1e3))


def test_c09_invariances(verdict):
    t0 = time.perf_counter()
    failures: dict[str, str] = {}

    @INVARIANCE
    @given(_cohort_submetrics(), st.integers(0, 12), st.floats(1e-3, 1e3))
    def engagement_rank_invariance(subs, column, factor):
        name = SUBMETRIC_NAMES[column]
        scaled = {
            sid: EngagementSubMetrics(sid, {**s.values, name: s.values[name] * factor}) for sid, s in subs.items()
        }
        before, after = engagement_score(subs), engagement_score(scaled)
        assert all(before[s].score == after[s].score for s in subs)

    @INVARIANCE
    @given(_event_stream(), st.integers(-10**11, 10**12))
    def metric_translation_invariance(events, shift):
        shift = max(shift, -events[0].timestamp)
        moved = [RawEvent(e.student_id, e.material_id, e.page, e.kind, e.timestamp + shift, e.label) for e in events]
        assert _student_metrics(events) == _student_metrics(moved)

    @INVARIANCE
    @given(_ols_case())
    def ols_scale_invariance(case):
        data, k, j, factor = case
        names = tuple(f"x{i}" for i in range(k))
        base = ols_fit(Design("y", names), data)
        scaled = ols_fit(Design("y", names), {**data, f"x{j}": data[f"x{j}"] * factor})
        np.testing.assert_allclose(scaled.t, base.t, rtol=1e-8)
        np.testing.assert_allclose(scaled.p, base.p, rtol=1e-8, atol=1e-15)
        assert math.isclose(scaled.r2, base.r2, rel_tol=1e-10, abs_tol=1e-14)

    for name, prop in [
        ("engagement", engagement_rank_invariance),
        ("translation", metric_translation_invariance),
        ("ols", ols_scale_invariance),
    ]:
        try:
            prop()
        except Exception as exc:  # noqa: BLE001 - any falsified property is a criterion failure
            failures[name] = f"{type(exc).__name__}: {exc}"[:300]
    ok = not failures and time.perf_counter() - t0 < 120
    verdict(9, "invariance properties", ok, f"falsified: {failures or 'none'} (1000 cases each)", t0)


# 10. throughput


@pytest.mark.slow
def test_c10_throughput(verdict, tmp_path):
    paths = gen_cohort(1100, MIX, seed=10).write(tmp_path / "cohort")
    t0 = time.perf_counter()
    cfg = Config()
    inputs = load_inputs(paths["events"], paths["materials"], paths["questionnaire"], paths["grades"], cfg)
    joined = join_profiles(inputs.metrics, inputs.engagement, inputs.scales, inputs.grades)
    rq1 = run_rq1(joined.profiles, cfg, inputs.reliability, joined.attrition)
    rq2 = run_rq2(joined.profiles, cfg, joined.attrition)
    emit_report(rq1, "json", tmp_path / "rq1.json")
    emit_report(rq2, "json", tmp_path / "rq2.json")
    elapsed = time.perf_counter() - t0
    n_events = sum(1 for _ in open(paths["events"], encoding="utf-8")) - 1
    ok = n_events >= 400_000 and elapsed < 10
    verdict(10, "throughput", ok, f"{n_events} events, {len(joined.profiles)} students in {elapsed:.2f} s", t0)
