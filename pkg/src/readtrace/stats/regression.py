"""Ordinary least squares with interactions and treatment-coded factors.

Terms are strings: ``"x"`` is a numeric main effect, ``"C(g)"`` a categorical
factor, and ``"a:b"`` the element-wise product of its factors (uncentered).
An intercept is always fitted.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .distributions import f_sf, t_critical, t_sf_two_sided

INTERCEPT = "Intercept"
RANK_TOL = 1e-10
# Sums of squares below this fraction of SST are rounding residue, treated as zero.
SS_RTOL = 1e-14

Data = Mapping[str, Sequence[Any] | np.ndarray]


class RankDeficientError(ValueError):
    def __init__(self, columns: Sequence[str]):
        self.columns = tuple(columns)
        super().__init__(f"design is rank deficient; linearly dependent column(s): {', '.join(self.columns)}")


def factors(term: str) -> tuple[str, ...]:
    return tuple(f.strip() for f in term.split(":"))


def term_key(term: str) -> frozenset[str]:
    return frozenset(factors(term))


def _categorical_name(factor: str) -> str | None:
    if factor.startswith("C(") and factor.endswith(")"):
        return factor[2:-1].strip()
    return None


def interact(*terms: str) -> str:
    return ":".join(terms)


def cross(left: Sequence[str], right: Sequence[str]) -> list[str]:
    """Main effects of both sides plus every left:right product, like ``l * (r1 + r2)``."""
    out = list(left) + [r for r in right if r not in left]
    out += [interact(a, b) for a in left for b in right]
    return out


@dataclass(frozen=True)
class Design:
    response: str
    terms: tuple[str, ...]
    reference: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "terms", tuple(self.terms))
        keys = [term_key(t) for t in self.terms]
        if len(set(keys)) != len(keys):
            raise ValueError(f"duplicate terms in {self.terms}")

    def with_terms(self, terms: Iterable[str]) -> Design:
        return Design(self.response, tuple(terms), self.reference)

    def without(self, block: Iterable[str]) -> Design:
        drop = {term_key(t) for t in block}
        missing = drop - {term_key(t) for t in self.terms}
        if missing:
            raise ValueError(f"block terms not in model: {sorted(':'.join(sorted(m)) for m in missing)}")
        return self.with_terms(t for t in self.terms if term_key(t) not in drop)

    def variables(self) -> set[str]:
        out = {self.response}
        for t in self.terms:
            for f in factors(t):
                out.add(_categorical_name(f) or f)
        return out


def factor_levels(values: Sequence[Any] | np.ndarray, reference: Any = None) -> tuple[Any, list[Any]]:
    """(reference, non-reference levels). Default reference: most frequent level, ties to the smallest."""
    counts = Counter(np.asarray(values).tolist())
    levels = sorted(counts)
    if reference is None:
        reference = min(levels, key=lambda lv: (-counts[lv], levels.index(lv)))
    elif reference not in counts:
        raise ValueError(f"reference level {reference!r} not present in data")
    return reference, [lv for lv in levels if lv != reference]


@dataclass(frozen=True)
class ModelMatrix:
    x: np.ndarray
    columns: tuple[str, ...]
    term_columns: dict[str, tuple[int, ...]]
    levels: dict[str, tuple[Any, tuple[Any, ...]]]


def build_matrix(
    design: Design, data: Data, levels: Mapping[str, tuple[Any, Sequence[Any]]] | None = None
) -> ModelMatrix:
    """Expand ``design`` into a model matrix with a leading intercept column."""
    first = next(iter(data.values()))
    n = len(first)
    levels = dict(levels or {})
    cols: list[np.ndarray] = [np.ones(n)]
    names: list[str] = [INTERCEPT]
    term_columns: dict[str, tuple[int, ...]] = {}
    for term in design.terms:
        parts: list[tuple[str, np.ndarray]] = [("", np.ones(n))]
        for f in factors(term):
            cat = _categorical_name(f)
            if cat is None:
                if f not in data:
                    raise KeyError(f"variable {f!r} missing from data")
                v = np.asarray(data[f], dtype=float)
                parts = [(f"{lbl}:{f}" if lbl else f, col * v) for lbl, col in parts]
            else:
                raw = np.asarray(data[cat])
                if cat not in levels:
                    ref, others = factor_levels(raw, design.reference.get(cat))
                    levels[cat] = (ref, tuple(others))
                _, others = levels[cat]
                expanded = []
                for lbl, col in parts:
                    for lv in others:
                        name = f"C({cat})[T.{lv}]"
                        expanded.append((f"{lbl}:{name}" if lbl else name, col * (raw == lv)))
                parts = expanded
        start = len(cols)
        for lbl, col in parts:
            names.append(lbl)
            cols.append(np.asarray(col, dtype=float))
        term_columns[term] = tuple(range(start, len(cols)))
    x = np.column_stack(cols)
    return ModelMatrix(x, tuple(names), term_columns, {k: (v[0], tuple(v[1])) for k, v in levels.items()})


@dataclass(frozen=True)
class RegressionReport:
    design: Design
    columns: tuple[str, ...]
    term_columns: dict[str, tuple[int, ...]]
    levels: dict[str, tuple[Any, tuple[Any, ...]]]
    beta: np.ndarray
    se: np.ndarray
    t: np.ndarray
    p: np.ndarray
    ci95: np.ndarray
    r2: float
    f_model: float | None
    p_model: float | None
    df_model: int
    df_resid: int
    residual_variance: float
    beta_covariance: np.ndarray
    sse: float
    sst: float
    n: int
    residuals: np.ndarray = field(repr=False)

    @property
    def terms(self) -> tuple[str, ...]:
        return self.design.terms

    def coef(self, column: str) -> float:
        return float(self.beta[self.columns.index(column)])

    def coefficients(self) -> list[dict[str, Any]]:
        return [
            {
                "term": name,
                "beta": float(self.beta[i]),
                "ci95": [float(self.ci95[i, 0]), float(self.ci95[i, 1])],
                "se": float(self.se[i]),
                "t": _finite(self.t[i]),
                "p": _finite(self.p[i]),
            }
            for i, name in enumerate(self.columns)
        ]

    def to_dict(self) -> dict[str, Any]:
        return {
            "response": self.design.response,
            "terms": list(self.design.terms),
            "n": self.n,
            "r2": self.r2,
            "f": _finite(self.f_model),
            "df_model": self.df_model,
            "df_resid": self.df_resid,
            "p": _finite(self.p_model),
            "residual_variance": self.residual_variance,
            "coefficients": self.coefficients(),
        }


def _finite(v: float | None) -> float | None:
    if v is None:
        return None
    v = float(v)
    return v if math.isfinite(v) else None


def _two_sided_p(t: float, df: int) -> float:
    if math.isnan(t):
        return 1.0
    return t_sf_two_sided(t, df)


def ols_fit(design: Design, data: Data, levels: Mapping[str, tuple[Any, Sequence[Any]]] | None = None) -> RegressionReport:
    """Least-squares fit through a Householder QR decomposition.

    Raises :class:`RankDeficientError` naming every column that is (numerically)
    a combination of the columns before it.
    """
    mm = build_matrix(design, data, levels)
    x = mm.x
    y = np.asarray(data[design.response], dtype=float)
    n, k = x.shape
    if n <= k:
        raise ValueError(f"need more observations ({n}) than model columns ({k})")
    q, r = np.linalg.qr(x)
    diag = np.abs(np.diag(r))
    norms = np.linalg.norm(x, axis=0)
    dependent = [mm.columns[j] for j in range(k) if norms[j] == 0 or diag[j] <= RANK_TOL * norms[j]]
    if dependent:
        raise RankDeficientError(dependent)
    qty = q.T @ y
    beta = np.linalg.solve(r, qty)
    resid = y - x @ beta
    sse = float(resid @ resid)
    dy = y - y.mean()
    sst = float(dy @ dy)
    if sst == 0.0:
        raise ValueError(f"response {design.response!r} is constant")
    df_model = k - 1
    df_resid = n - k
    sigma2 = sse / df_resid
    r_inv = np.linalg.solve(r, np.eye(k))
    cov = sigma2 * (r_inv @ r_inv.T)
    se = np.sqrt(np.diag(cov))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(se > 0, beta / se, np.where(beta == 0, np.nan, np.copysign(np.inf, beta)))
    p = np.array([_two_sided_p(float(tv), df_resid) for tv in t])
    tc = t_critical(df_resid)
    ci = np.column_stack([beta - tc * se, beta + tc * se])
    r2 = max(0.0, min(1.0, 1.0 - sse / sst))
    if df_model == 0:
        f_model = p_model = None
    elif sse == 0.0:
        f_model, p_model = math.inf, 0.0
    else:
        f_model = ((sst - sse) / df_model) / sigma2
        p_model = f_sf(f_model, df_model, df_resid)
    return RegressionReport(
        design=design,
        columns=mm.columns,
        term_columns=mm.term_columns,
        levels=mm.levels,
        beta=beta,
        se=se,
        t=t,
        p=p,
        ci95=ci,
        r2=r2,
        f_model=f_model,
        p_model=p_model,
        df_model=df_model,
        df_resid=df_resid,
        residual_variance=sigma2,
        beta_covariance=cov,
        sse=sse,
        sst=sst,
        n=n,
        residuals=resid,
    )


@dataclass(frozen=True)
class FTestResult:
    delta_r2: float
    f: float
    df1: int
    df2: int
    p: float
    partial_eta_sq: float | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "delta_r2": self.delta_r2,
            "f": _finite(self.f),
            "df1": self.df1,
            "df2": self.df2,
            "p": self.p,
            "partial_eta_sq": self.partial_eta_sq,
        }

    def __str__(self) -> str:
        eta = f", partial eta^2={self.partial_eta_sq:.2f}" if self.partial_eta_sq is not None else ""
        return f"dR2={self.delta_r2:.3f}, F({self.df1},{self.df2})={self.f:.2f}, p={self.p:.3g}{eta}"


def partial_f_r2(r2_reduced: float, r2_full: float, df1: int, df2: int) -> FTestResult:
    """Nested-model F test from the two R-squared values and degrees of freedom."""
    if df1 < 1 or df2 < 1:
        raise ValueError(f"degrees of freedom must be >= 1, got ({df1}, {df2})")
    delta = r2_full - r2_reduced
    if delta < 0 and not math.isclose(r2_full, r2_reduced, abs_tol=1e-12):
        raise ValueError(f"full model R2 {r2_full} below reduced {r2_reduced}; models are not nested")
    delta = max(delta, 0.0)
    if r2_full >= 1.0:
        f = math.inf if delta > 0 else 0.0
    else:
        f = (delta / df1) / ((1.0 - r2_full) / df2)
    return FTestResult(delta, f, df1, df2, f_sf(f, df1, df2))


def partial_f(reduced: RegressionReport, full: RegressionReport) -> FTestResult:
    """Compare nested fits of the same data; also reports partial eta squared."""
    reduced_keys = {term_key(t) for t in reduced.terms}
    full_keys = {term_key(t) for t in full.terms}
    if not reduced_keys <= full_keys:
        raise ValueError("reduced model terms are not a subset of the full model terms")
    if (
        reduced.design.response != full.design.response
        or reduced.n != full.n
        or not math.isclose(reduced.sst, full.sst, rel_tol=1e-9, abs_tol=1e-12)
    ):
        raise ValueError("models were not fitted to the same data")
    df1 = full.df_model - reduced.df_model
    if df1 < 1:
        raise ValueError("full model adds no columns over the reduced model")
    df2 = full.df_resid
    tol = SS_RTOL * full.sst
    sse_full = full.sse if full.sse > tol else 0.0
    d_ssr = reduced.sse - full.sse
    d_ssr = d_ssr if d_ssr > tol else 0.0
    if sse_full == 0.0:
        f = math.inf if d_ssr > 0 else 0.0
    else:
        f = (d_ssr / df1) / (sse_full / df2)
    eta = d_ssr / (d_ssr + sse_full) if (d_ssr + sse_full) > 0 else None
    delta_r2 = max(full.r2 - reduced.r2, 0.0)
    return FTestResult(delta_r2, f, df1, df2, f_sf(f, df1, df2), eta)


def omnibus_block_test(full_design: Design, block: Iterable[str], data: Data) -> FTestResult:
    """Joint F test that every coefficient of ``block`` is zero."""
    block = list(block)
    if not block:
        raise ValueError("empty block")
    full = ols_fit(full_design, data)
    reduced = ols_fit(full_design.without(block), data, full.levels)
    return partial_f(reduced, full)


@dataclass(frozen=True)
class Prediction:
    fit: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    pi_low: np.ndarray
    pi_high: np.ndarray


def predict_with_intervals(
    report: RegressionReport, grid: Data | np.ndarray, level: float = 0.95
) -> Prediction:
    """Fitted values with confidence and prediction bands.

    ``grid`` is either a mapping of variables (expanded with the fit's factor
    coding) or a raw matrix whose columns match ``report.columns``.
    """
    if isinstance(grid, np.ndarray):
        x = np.atleast_2d(grid).astype(float)
    else:
        missing = report.design.variables() - {report.design.response} - set(grid)
        if missing:
            raise ValueError(f"grid lacks variable(s) {sorted(missing)}")
        mm = build_matrix(report.design, grid, report.levels)
        x = mm.x
    if x.shape[1] != len(report.columns):
        raise ValueError(f"grid has {x.shape[1]} columns, model has {len(report.columns)}")
    fit = x @ report.beta
    var_mean = np.einsum("ij,jk,ik->i", x, report.beta_covariance, x)
    var_mean = np.maximum(var_mean, 0.0)
    tc = t_critical(report.df_resid, level)
    ci = tc * np.sqrt(var_mean)
    pi = tc * np.sqrt(var_mean + report.residual_variance)
    return Prediction(fit, fit - ci, fit + ci, fit - pi, fit + pi)


@dataclass(frozen=True)
class StepRecord:
    start: tuple[str, ...]
    step: int
    model: tuple[str, ...]
    candidates: tuple[tuple[str, float, float, float], ...]  # term, F, p, delta R2
    added: str | None


@dataclass(frozen=True)
class StepwiseResult:
    report: RegressionReport
    trace: tuple[StepRecord, ...]
    finalists: tuple[RegressionReport, ...]
    path: tuple[RegressionReport, ...]

    @property
    def selected(self) -> tuple[str, ...]:
        return self.report.terms


def candidate_terms(model_terms: Sequence[str], pool: Sequence[str], interactions: bool = True) -> list[str]:
    """Main effects from ``pool`` plus two-way products among model and pool terms.

    Products only form between single-factor terms, so both parents are
    always in the model or in the pool.
    """
    have = {term_key(t) for t in model_terms}
    out: list[str] = []
    seen: set[frozenset[str]] = set()

    def add(term: str) -> None:
        key = term_key(term)
        if key not in have and key not in seen:
            seen.add(key)
            out.append(term)

    for t in pool:
        if len(factors(t)) > 1:
            parents = factors(t)
            known = have | {term_key(p) for p in pool}
            if all(frozenset([p]) in known for p in parents):
                add(t)
        else:
            add(t)
    if interactions:
        singles = [t for t in list(model_terms) + list(pool) if len(factors(t)) == 1]
        ordered = list(dict.fromkeys(singles))
        for i, a in enumerate(ordered):
            for b in ordered[i + 1 :]:
                add(interact(a, b))
    return out


def _forward(
    response: str,
    start: Sequence[str],
    pool: Sequence[str],
    data: Data,
    alpha: float,
    interactions: bool,
    trace: list[StepRecord],
) -> list[RegressionReport]:
    terms = list(start)
    current = ols_fit(Design(response, tuple(terms)), data)
    path = [current]
    step = 0
    while True:
        step += 1
        scored = []
        for cand in candidate_terms(terms, pool, interactions):
            try:
                fit = ols_fit(Design(response, tuple(terms + [cand])), data)
            except RankDeficientError:
                continue
            test = partial_f(current, fit)
            scored.append((test.p, -fit.r2, cand, test, fit))
        scored.sort(key=lambda s: (s[0], s[1]))
        best = scored[0] if scored and scored[0][0] < alpha else None
        trace.append(
            StepRecord(
                tuple(start),
                step,
                tuple(terms),
                tuple((c, t.f, t.p, t.delta_r2) for _, _, c, t, _ in scored),
                best[2] if best else None,
            )
        )
        if best is None:
            return path
        terms.append(best[2])
        current = best[4]
        path.append(current)


def stepwise_select(
    base_terms: Sequence[str],
    candidate_pool: Sequence[str],
    data: Data,
    response: str,
    alpha: float = 0.05,
    interactions: bool = True,
    starts: Sequence[Sequence[str]] | None = None,
) -> StepwiseResult:
    """Forward selection by partial F tests.

    Each step adds the eligible candidate with the smallest p-value when that
    p-value is below ``alpha``. Interactions may enter without their main
    effects. With several ``starts`` (alternative base models) every start is
    run; the largest final model wins and equal sizes go to the higher R2.
    """
    runs = [list(s) for s in starts] if starts else [list(base_terms)]
    trace: list[StepRecord] = []
    paths = []
    for start in runs:
        pool = [t for t in candidate_pool if term_key(t) not in {term_key(s) for s in start}]
        paths.append(_forward(response, start, pool, data, alpha, interactions, trace))
    best = max(paths, key=lambda p: (len(p[-1].terms), p[-1].r2))
    return StepwiseResult(best[-1], tuple(trace), tuple(p[-1] for p in paths), tuple(best))
