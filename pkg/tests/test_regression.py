import numpy as np
import pytest
from scipy import stats

from readtrace.stats.regression import (
    Design,
    RankDeficientError,
    build_matrix,
    candidate_terms,
    cross,
    factor_levels,
    ols_fit,
    omnibus_block_test,
    partial_f,
    partial_f_r2,
    predict_with_intervals,
    stepwise_select,
)

from .oracles import ols_normal_equations


def test_perfect_line():
    x = np.arange(10.0)
    fit = ols_fit(Design("y", ("x",)), {"x": x, "y": 2 * x + 1})
    assert fit.beta == pytest.approx([1.0, 2.0], abs=1e-12)
    assert fit.r2 == 1.0
    assert fit.f_model > 1e20 and fit.p_model < 1e-15


def test_beta_matches_normal_equations(rng):
    for _ in range(100):
        n, k = int(rng.integers(6, 25)), int(rng.integers(1, 4))
        data = {f"x{j}": rng.normal(size=n) for j in range(k)}
        data["y"] = rng.normal(size=n) + sum(data.values())
        terms = tuple(data)[:-1]
        fit = ols_fit(Design("y", terms), data)
        x = build_matrix(Design("y", terms), data).x
        assert fit.beta == pytest.approx(ols_normal_equations(x, data["y"]), abs=1e-9)
        assert np.abs(x.T @ fit.residuals).max() < 1e-8


def test_inference_matches_textbook(rng):
    n = 40
    data = {"a": rng.normal(size=n), "b": rng.normal(size=n)}
    data["y"] = 1 + 0.5 * data["a"] + rng.normal(size=n)
    fit = ols_fit(Design("y", ("a", "b")), data)
    x = np.column_stack([np.ones(n), data["a"], data["b"]])
    xtx_inv = np.linalg.inv(x.T @ x)
    s2 = fit.sse / (n - 3)
    se = np.sqrt(np.diag(xtx_inv) * s2)
    assert fit.se == pytest.approx(se, rel=1e-10)
    assert fit.p == pytest.approx(2 * stats.t.sf(np.abs(fit.beta / se), n - 3), abs=1e-12)
    f = (fit.sst - fit.sse) / 2 / s2
    assert fit.f_model == pytest.approx(f, rel=1e-10)
    assert fit.p_model == pytest.approx(stats.f.sf(f, 2, n - 3), abs=1e-12)
    tc = stats.t.ppf(0.975, n - 3)
    assert fit.ci95[:, 0] == pytest.approx(fit.beta - tc * se, rel=1e-9)


def test_rank_deficiency_names_columns(rng):
    x = rng.normal(size=20)
    data = {"x": x, "x2": 2 * x, "y": rng.normal(size=20)}
    with pytest.raises(RankDeficientError) as err:
        ols_fit(Design("y", ("x", "x2")), data)
    assert "x2" in err.value.columns


def test_too_few_rows_and_constant_response():
    with pytest.raises(ValueError):
        ols_fit(Design("y", ("x",)), {"x": [1.0, 2.0], "y": [1.0, 3.0]})
    with pytest.raises(ValueError, match="constant"):
        ols_fit(Design("y", ("x",)), {"x": [1.0, 2.0, 3.0], "y": [1.0, 1.0, 1.0]})


def test_interactions_are_uncentered_products(rng):
    n = 30
    data = {"a": rng.normal(size=n) + 3, "b": rng.normal(size=n) + 1, "y": rng.normal(size=n)}
    mm = build_matrix(Design("y", ("a", "b", "a:b")), data)
    assert mm.columns == ("Intercept", "a", "b", "a:b")
    assert np.array_equal(mm.x[:, 3], data["a"] * data["b"])


def test_treatment_coding_and_reference():
    g = np.array([0, 0, 0, 1, 1, 2])
    assert factor_levels(g) == (0, [1, 2])
    assert factor_levels(g, reference=2) == (2, [0, 1])
    assert factor_levels(np.array([1, 1, 0, 0])) == (0, [1])
    data = {"g": g, "x": np.arange(6.0), "y": np.arange(6.0)}
    mm = build_matrix(Design("y", ("C(g)", "C(g):x")), data)
    assert mm.columns == ("Intercept", "C(g)[T.1]", "C(g)[T.2]", "C(g)[T.1]:x", "C(g)[T.2]:x")
    assert mm.term_columns["C(g):x"] == (3, 4)


def test_cross_helper():
    assert cross(["C(k)"], ["DECI", "DECE"]) == ["C(k)", "DECI", "DECE", "C(k):DECI", "C(k):DECE"]


def test_duplicate_terms_rejected():
    with pytest.raises(ValueError):
        Design("y", ("a:b", "b:a"))


@pytest.mark.parametrize(
    "r2_red, r2_full, df1, df2, f, p",
    [
        (0.255, 0.333, 2, 96, 5.61, 0.005),
        (0.333, 0.377, 2, 92, 3.25, 0.043),
    ],
)
def test_partial_f_r2_published_rows(r2_red, r2_full, df1, df2, f, p):
    res = partial_f_r2(r2_red, r2_full, df1, df2)
    assert abs(res.f - f) <= 0.01
    assert abs(res.p - p) <= 0.001


def test_partial_f_r2_equal_models():
    res = partial_f_r2(0.4, 0.4, 2, 50)
    assert (res.f, res.p) == (0.0, 1.0)


def test_partial_f_r2_rejects_non_nested():
    with pytest.raises(ValueError):
        partial_f_r2(0.5, 0.4, 1, 10)


def test_partial_f_from_fits(rng):
    n = 80
    data = {k: rng.normal(size=n) for k in "abc"}
    data["y"] = data["a"] + 0.3 * data["b"] + rng.normal(size=n)
    red = ols_fit(Design("y", ("a",)), data)
    full = ols_fit(Design("y", ("a", "b", "c")), data)
    res = partial_f(red, full)
    assert res.df1 == 2 and res.df2 == n - 4
    assert res.f == pytest.approx(((red.sse - full.sse) / 2) / (full.sse / (n - 4)), rel=1e-12)
    assert res.f == pytest.approx(partial_f_r2(red.r2, full.r2, 2, n - 4).f, rel=1e-9)
    assert res.partial_eta_sq == pytest.approx((red.sse - full.sse) / red.sse, rel=1e-12)
    with pytest.raises(ValueError):
        partial_f(full, red)


def test_omnibus_all_terms_equals_model_f(rng):
    n = 60
    data = {"a": rng.normal(size=n), "b": rng.normal(size=n)}
    data["y"] = data["a"] + rng.normal(size=n)
    design = Design("y", ("a", "b", "a:b"))
    full = ols_fit(design, data)
    res = omnibus_block_test(design, design.terms, data)
    assert res.f == pytest.approx(full.f_model, rel=1e-10)
    assert res.p == pytest.approx(full.p_model, abs=1e-14)


def test_omnibus_shape_for_three_df_block(rng):
    n = 100
    data = {"k": rng.integers(0, 4, size=n), "DECI": rng.normal(size=n)}
    data["y"] = data["DECI"] + rng.normal(size=n)
    design = Design("y", ("C(k)", "DECI", "C(k):DECI"))
    res = omnibus_block_test(design, ["C(k):DECI"], data)
    assert (res.df1, res.df2) == (3, n - 8)
    assert 0 <= res.p <= 1 and 0 <= res.partial_eta_sq <= 1


def test_prediction_intervals(rng):
    n = 50
    data = {"x": rng.normal(size=n)}
    data["y"] = 1 + data["x"] + rng.normal(size=n)
    fit = ols_fit(Design("y", ("x",)), data)
    grid = {"x": np.linspace(-2, 2, 41)}
    pred = predict_with_intervals(fit, grid)
    width = pred.ci_high - pred.ci_low
    assert np.all(pred.pi_high - pred.pi_low > width)
    # narrowest band at the sample mean of x
    at_mean = predict_with_intervals(fit, {"x": np.array([data["x"].mean()])})
    assert (at_mean.ci_high - at_mean.ci_low)[0] <= width.min() + 1e-12
    tc = stats.t.ppf(0.975, n - 2)
    se_mean = np.sqrt(fit.residual_variance / n)
    assert (at_mean.ci_high - at_mean.fit)[0] == pytest.approx(tc * se_mean, rel=1e-9)
    with pytest.raises(ValueError):
        predict_with_intervals(fit, np.ones((1, 3)))


def test_candidate_terms():
    out = candidate_terms(["a"], ["b", "c"])
    assert out == ["b", "c", "a:b", "a:c", "b:c"]
    assert candidate_terms(["a"], ["b"], interactions=False) == ["b"]


def test_stepwise_recovers_planted(rng):
    hits = 0
    for _ in range(50):
        n = 500
        data = {k: rng.normal(size=n) for k in "abc"}
        data["y"] = 2 * data["a"] + rng.normal(size=n)
        res = stepwise_select([], ["a", "b", "c"], data, "y", alpha=0.001, interactions=False)
        hits += res.selected == ("a",)
    assert hits >= 49


def test_stepwise_alpha_zero_adds_nothing(rng):
    data = {k: rng.normal(size=50) for k in "ab"}
    data["y"] = data["a"] * 5 + rng.normal(size=50)
    res = stepwise_select(["b"], ["a"], data, "y", alpha=0.0)
    assert res.selected == ("b",)


def test_stepwise_empty_pool_returns_base(rng):
    data = {"a": rng.normal(size=30), "y": rng.normal(size=30)}
    assert stepwise_select(["a"], [], data, "y").selected == ("a",)


def test_stepwise_equal_size_finishers_prefer_higher_r2(rng):
    n = 200
    data = {k: rng.normal(size=n) for k in ("q", "s", "z")}
    data["y"] = 1.0 * data["q"] + 0.6 * data["s"] + rng.normal(size=n)
    res = stepwise_select([], ["z"], data, "y", starts=[["q"], ["s"]], interactions=False)
    assert len(res.finalists) == 2
    assert res.report.r2 == max(f.r2 for f in res.finalists)
    assert "q" in res.selected
