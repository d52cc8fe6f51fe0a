import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from talent.scaling import (
    FitResult,
    ScalingError,
    ScalingPoint,
    actual_vs_predicted,
    builtin_grid,
    coefficient_ratio,
    fit_log_linear,
    load_points,
    predict,
)


def numpy_oracle(points):
    """Independent least-squares route (SVD-based lstsq, not normal equations)."""
    X = np.column_stack(
        [np.ones(len(points)), np.log([p.s_v for p in points]), np.log([p.s_l for p in points])]
    )
    y = np.array([p.accuracy for p in points])
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    pred = X @ beta
    sse = float(np.sum((y - pred) ** 2))
    sst = float(np.sum((y - y.mean()) ** 2))
    return beta, 1 - sse / sst


def test_builtin_grid_matches_oracle():
    points = builtin_grid()
    assert len(points) == 9
    fit = fit_log_linear(points)
    beta, r2 = numpy_oracle(points)
    assert fit.beta0 == pytest.approx(beta[0], abs=1e-9)
    assert fit.beta_v == pytest.approx(beta[1], abs=1e-9)
    assert fit.beta_l == pytest.approx(beta[2], abs=1e-9)
    assert fit.r_squared == pytest.approx(r2, abs=1e-12)


def test_builtin_grid_published_coefficients():
    fit = fit_log_linear(builtin_grid())
    assert fit.beta0 == pytest.approx(73.01, abs=0.05)
    assert fit.beta_v == pytest.approx(0.84, abs=0.05)
    assert fit.beta_l == pytest.approx(2.66, abs=0.05)
    assert fit.r_squared == pytest.approx(0.825, abs=0.010)
    assert round(fit.r_squared, 2) == 0.83
    assert coefficient_ratio(fit) == pytest.approx(3.2, abs=0.1)


def test_balanced_design_hand_formula():
    # balanced 3x3 grid: each slope equals cov(ln size, accuracy)/var(ln size)
    points = builtin_grid()
    lv = [math.log(p.s_v) for p in points]
    ll = [math.log(p.s_l) for p in points]
    acc = [p.accuracy for p in points]
    n = len(points)
    mv, ml, ma = sum(lv) / n, sum(ll) / n, sum(acc) / n
    bv = sum((x - mv) * (a - ma) for x, a in zip(lv, acc)) / sum((x - mv) ** 2 for x in lv)
    bl = sum((x - ml) * (a - ma) for x, a in zip(ll, acc)) / sum((x - ml) ** 2 for x in ll)
    fit = fit_log_linear(points)
    assert fit.beta_v == pytest.approx(bv, abs=1e-9)
    assert fit.beta_l == pytest.approx(bl, abs=1e-9)
    assert fit.beta0 == pytest.approx(ma - bv * mv - bl * ml, abs=1e-9)


def test_synthetic_exact_recovery():
    points = [
        ScalingPoint(sv, sl, 10 + 2 * math.log(sv) + 3 * math.log(sl))
        for sv in (2, 4, 8)
        for sl in (2, 4, 8)
    ]
    fit = fit_log_linear(points)
    assert fit.beta0 == pytest.approx(10, abs=1e-9)
    assert fit.beta_v == pytest.approx(2, abs=1e-9)
    assert fit.beta_l == pytest.approx(3, abs=1e-9)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-12)


def test_degenerate_constant_accuracy():
    points = [ScalingPoint(sv, sl, 50.0) for sv in (1, 2) for sl in (1, 2)]
    fit = fit_log_linear(points)
    assert (fit.beta0, fit.beta_v, fit.beta_l) == (50.0, 0.0, 0.0)
    assert fit.r_squared == 1.0
    assert fit.residuals == (0.0,) * 4
    with pytest.raises(ScalingError):
        coefficient_ratio(fit)


def test_too_few_points():
    points = [ScalingPoint(1, 1, 10), ScalingPoint(2, 2, 11), ScalingPoint(3, 3, 12)]
    with pytest.raises(ScalingError, match="at least 4"):
        fit_log_linear(points)


def test_rank_deficient_design():
    points = [ScalingPoint(3, sl, 50 + sl) for sl in (1, 2, 4, 8)]
    with pytest.raises(ScalingError, match="rank-deficient"):
        fit_log_linear(points)


def test_point_validation():
    with pytest.raises(ScalingError):
        ScalingPoint(0, 1, 50)
    with pytest.raises(ScalingError):
        ScalingPoint(1, 1, 101)


def test_predict_paper_coefficients():
    paper_fit = FitResult(beta0=73.01, beta_v=0.84, beta_l=2.66, r_squared=0.83, residuals=(), n=9)
    assert predict(paper_fit, 3, 7) == pytest.approx(79.11, abs=0.02)
    assert predict(paper_fit, 1, 1) == 73.01  # ln 1 = 0 exactly


def test_predict_rejects_nonpositive_sizes():
    fit = fit_log_linear(builtin_grid())
    with pytest.raises(ScalingError):
        predict(fit, 0, 7)
    with pytest.raises(ScalingError):
        predict(fit, 3, -1)


def test_residuals_recover_observations():
    points = builtin_grid()
    fit = fit_log_linear(points)
    assert len(fit.residuals) == fit.n == 9
    for point, residual in zip(points, fit.residuals):
        assert predict(fit, point.s_v, point.s_l) + residual == pytest.approx(
            point.accuracy, abs=1e-9
        )
    mean_resid = sum(fit.residuals) / fit.n
    assert abs(mean_resid) < 1e-9 * max(p.accuracy for p in points)


def test_coefficient_ratio_synthetic():
    points = [
        ScalingPoint(sv, sl, 10 + 2 * math.log(sv) + 3 * math.log(sl))
        for sv in (2, 4)
        for sl in (2, 4)
    ]
    assert coefficient_ratio(fit_log_linear(points)) == pytest.approx(1.5, abs=1e-9)


def _sse(points, beta0, beta_v, beta_l):
    return sum(
        (p.accuracy - (beta0 + beta_v * math.log(p.s_v) + beta_l * math.log(p.s_l))) ** 2
        for p in points
    )


def test_fit_is_local_minimum():
    points = builtin_grid()
    fit = fit_log_linear(points)
    best = _sse(points, fit.beta0, fit.beta_v, fit.beta_l)
    for di in (-1e-3, 1e-3):
        assert _sse(points, fit.beta0 + di, fit.beta_v, fit.beta_l) >= best
        assert _sse(points, fit.beta0, fit.beta_v + di, fit.beta_l) >= best
        assert _sse(points, fit.beta0, fit.beta_v, fit.beta_l + di) >= best


@settings(max_examples=30, deadline=None)
@given(scale=st.floats(min_value=0.1, max_value=1.0))
def test_accuracy_scale_covariance(scale):
    base = builtin_grid()
    scaled = [ScalingPoint(p.s_v, p.s_l, p.accuracy * scale) for p in base]
    fit_a = fit_log_linear(base)
    fit_b = fit_log_linear(scaled)
    assert fit_b.beta0 == pytest.approx(fit_a.beta0 * scale, rel=1e-9)
    assert fit_b.beta_v == pytest.approx(fit_a.beta_v * scale, rel=1e-9)
    assert fit_b.beta_l == pytest.approx(fit_a.beta_l * scale, rel=1e-9)
    assert fit_b.r_squared == pytest.approx(fit_a.r_squared, abs=1e-9)
    for ra, rb in zip(fit_a.residuals, fit_b.residuals):
        assert rb == pytest.approx(ra * scale, abs=1e-9)


@settings(max_examples=30, deadline=None)
@given(k=st.floats(min_value=0.5, max_value=10.0))
def test_size_rescaling_moves_only_intercept(k):
    base = builtin_grid()
    moved = [ScalingPoint(p.s_v * k, p.s_l, p.accuracy) for p in base]
    fit_a = fit_log_linear(base)
    fit_b = fit_log_linear(moved)
    assert fit_b.beta_v == pytest.approx(fit_a.beta_v, abs=1e-9)
    assert fit_b.beta_l == pytest.approx(fit_a.beta_l, abs=1e-9)
    assert fit_b.beta0 == pytest.approx(fit_a.beta0 - fit_a.beta_v * math.log(k), abs=1e-9)
    assert fit_b.r_squared == pytest.approx(fit_a.r_squared, abs=1e-9)


def test_actual_vs_predicted_rows():
    points = builtin_grid()
    fit = fit_log_linear(points)
    rows = actual_vs_predicted(fit, points)
    assert len(rows) == 9
    assert rows[0]["actual"] == points[0].accuracy
    assert rows[0]["predicted"] == pytest.approx(predict(fit, points[0].s_v, points[0].s_l), abs=1e-3)


def test_load_points_csv_and_jsonl(tmp_path):
    csv_path = tmp_path / "pts.csv"
    csv_path.write_text("s_v,s_l,accuracy\n3,7,81.13\n7,7,80.67\n")
    points = load_points(csv_path)
    assert points[0] == ScalingPoint(3, 7, 81.13)

    jsonl_path = tmp_path / "pts.jsonl"
    jsonl_path.write_text('{"s_v": 3, "s_l": 7, "accuracy": 81.13}\n')
    assert load_points(jsonl_path) == [ScalingPoint(3, 7, 81.13)]

    bad = tmp_path / "bad.csv"
    bad.write_text("s_v,s_l\n1,2\n")
    with pytest.raises(ScalingError, match="row 2"):
        load_points(bad)
