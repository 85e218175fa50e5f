"""Tests for ARMA fitting, recursive prediction, and expanding-window evaluation."""

import numpy as np
import pytest

from tsfactor.errors import InvalidConfig, InvalidData, PreconditionViolated
from tsfactor.factor import EstimatorConfig, estimate
from tsfactor.forecast import (
    ZERO_BASELINE,
    ArmaFit,
    ForecastReport,
    MethodForecast,
    expanding_window_eval,
    fit_arma,
    forecast_arma,
    forecast_metrics,
    pipeline_forecast,
)
from tsfactor.tsstats import TimePanel


def ar1_series(rng, n, phi=0.8, scale=1.0):
    x = np.zeros(n)
    x[0] = scale * rng.standard_normal() / np.sqrt(1 - phi**2)
    innov = scale * rng.standard_normal(n)
    for t in range(1, n):
        x[t] = phi * x[t - 1] + innov[t]
    return x


# ----------------------------------------------------------------- fit_arma


def test_fit_arma_validates_inputs():
    with pytest.raises(InvalidData):
        fit_arma(np.zeros(10))
    bad = np.ones(50)
    bad[3] = np.nan
    with pytest.raises(InvalidData):
        fit_arma(bad)
    with pytest.raises(InvalidConfig):
        fit_arma(np.random.default_rng(0).standard_normal(100), max_ar=-1)


def test_white_noise_mostly_selects_empty_order():
    hits = 0
    for s in range(100):
        rng = np.random.default_rng(s)
        if fit_arma(rng.standard_normal(2000)).order == (0, 0):
            hits += 1
    assert hits >= 80


def test_ar1_coefficient_matches_yule_walker_oracle():
    for s in range(5):
        rng = np.random.default_rng(100 + s)
        x = ar1_series(rng, 2000, phi=0.8)
        fit = fit_arma(x, max_ar=1, max_ma=0)
        assert fit.order == (1, 0)
        # independent moment estimate of the same coefficient
        xc = x - x.mean()
        yule_walker = float(xc[:-1] @ xc[1:] / (xc @ xc))
        assert fit.ar_coeffs[0] == pytest.approx(yule_walker, abs=0.02)
        assert fit.ar_coeffs[0] == pytest.approx(0.8, abs=0.05)


def test_ar1_full_grid_usually_recovers_the_coefficient():
    # AIC keeps a small overfitting probability by design, so ask for a
    # clear majority rather than unanimity.
    good_order = 0
    good_coef = 0
    for s in range(10):
        rng = np.random.default_rng(1000 + s)
        fit = fit_arma(ar1_series(rng, 2000, phi=0.8))
        good_order += fit.order == (1, 0)
        good_coef += fit.order[0] >= 1 and abs(fit.ar_coeffs[0] - 0.8) <= 0.05
    assert good_order >= 7
    assert good_coef >= 7


def test_ma1_selected_with_accurate_coefficient():
    for s in range(4):
        rng = np.random.default_rng(500 + s)
        eta = rng.standard_normal(2001)
        z = eta[1:] + 0.6 * eta[:-1]
        fit = fit_arma(z)
        assert fit.order == (0, 1)
        assert fit.ma_coeffs[0] == pytest.approx(0.6, abs=0.06)


def test_constant_like_series_recover_the_mean():
    rng = np.random.default_rng(3)
    near = 5.0 + 1e-6 * rng.standard_normal(200)
    fit = fit_arma(near)
    assert fit.intercept == pytest.approx(near.mean(), abs=1e-3)
    assert not fit.fallback_ar0
    flat = fit_arma(np.full(100, 2.5))
    assert flat.fallback_ar0
    assert flat.order == (0, 0)
    assert flat.innovation_variance > 0
    assert forecast_arma(flat, np.full(100, 2.5), 3) == pytest.approx(2.5)


def test_selected_aic_never_worse_than_constant_model():
    for s in range(3):
        rng = np.random.default_rng(50 + s)
        x = ar1_series(rng, 400, phi=0.7)
        assert fit_arma(x).aic <= fit_arma(x, max_ar=0, max_ma=0).aic


def test_arma_fit_rejects_inconsistent_fields():
    with pytest.raises(InvalidConfig):
        ArmaFit((1, 0), (), (), 0.0, 1.0, 0.0, np.zeros(1))
    with pytest.raises(InvalidConfig):
        ArmaFit((1, 0), (1.2,), (), 0.0, 1.0, 0.0, np.zeros(1))
    with pytest.raises(InvalidConfig):
        ArmaFit((0, 0), (), (), 0.0, 0.0, 0.0, np.zeros(1))


# ------------------------------------------------------------ forecast_arma


def make_fit(ar=(), ma=(), intercept=0.0):
    return ArmaFit(
        order=(len(ar), len(ma)),
        ar_coeffs=tuple(ar),
        ma_coeffs=tuple(ma),
        intercept=intercept,
        innovation_variance=1.0,
        aic=0.0,
        residuals=np.zeros(1),
    )


def test_pure_ar1_forecast_is_exact_power_recursion():
    fit = make_fit(ar=(0.7,))
    hist = np.array([1.0, -2.0, 3.0])
    for h in (1, 2, 5):
        assert forecast_arma(fit, hist, h) == pytest.approx(0.7**h * 3.0, abs=1e-14)


def test_ar1_forecast_contracts_toward_the_mean():
    fit = make_fit(ar=(-0.85,), intercept=1.5)
    hist = np.array([0.3, 2.0, 4.0])
    for h in (1, 2, 3, 7):
        got = forecast_arma(fit, hist, h)
        assert abs(got - 1.5) <= 0.85**h * abs(4.0 - 1.5) + 1e-12


def test_constant_model_forecasts_the_intercept_at_all_horizons():
    fit = make_fit(intercept=-2.25)
    hist = np.array([5.0, 1.0, 0.0])
    for h in (1, 4, 10):
        assert forecast_arma(fit, hist, h) == -2.25


def oracle_forecast(ar, ma, intercept, hist, h):
    """Brute-force state recursion with zero presample values."""
    z = [float(v) - intercept for v in hist]
    n = len(z)
    eps = []
    for t in range(n):
        val = z[t]
        for i, c in enumerate(ar, start=1):
            if t - i >= 0:
                val -= c * z[t - i]
        for j, c in enumerate(ma, start=1):
            if t - j >= 0:
                val -= c * eps[t - j]
        eps.append(val)
    for s in range(h):
        t = n + s
        val = 0.0
        for i, c in enumerate(ar, start=1):
            if t - i >= 0:
                val += c * z[t - i]
        for j, c in enumerate(ma, start=1):
            if 0 <= t - j < n:
                val += c * eps[t - j]
        z.append(val)
    return intercept + z[-1]


def test_mixed_model_forecast_matches_state_recursion_oracle():
    rng = np.random.default_rng(8)
    hist = rng.standard_normal(60)
    cases = [
        ((0.6,), (0.4,), 0.7),
        ((0.5, -0.2), (0.3, 0.1), -1.2),
        ((), (0.9, -0.3), 0.0),
    ]
    for ar, ma, mu in cases:
        fit = make_fit(ar=ar, ma=ma, intercept=mu)
        for h in (1, 2, 6):
            got = forecast_arma(fit, hist, h)
            want = oracle_forecast(ar, ma, mu, hist, h)
            assert got == pytest.approx(want, abs=1e-10)


def test_forecast_validates_inputs():
    fit = make_fit(ar=(0.5,))
    with pytest.raises(InvalidConfig):
        forecast_arma(fit, np.ones(5), 0)
    with pytest.raises(InvalidData):
        forecast_arma(fit, np.array([]), 1)
    with pytest.raises(InvalidData):
        forecast_arma(fit, np.array([1.0, np.inf]), 1)


# ---------------------------------------------------------------- metrics


def test_metrics_on_perfect_and_constant_error_hooks():
    truth = np.arange(12.0).reshape(3, 4)
    assert forecast_metrics(truth, truth) == (0.0, 0.0)
    mafe, msfe = forecast_metrics(truth + 0.5, truth)
    assert mafe == pytest.approx(0.5)
    assert msfe == pytest.approx(0.25)
    assert msfe == pytest.approx(mafe**2)  # equal errors only
    with pytest.raises(InvalidData):
        forecast_metrics(np.zeros(3), np.zeros(4))


# ---------------------------------------------------------------- pipeline


def standardized(data):
    return TimePanel((data - data.mean(axis=0)) / data.std(axis=0))


def test_identity_loading_reduces_to_componentwise_arma():
    rng = np.random.default_rng(17)
    raw = np.column_stack([ar1_series(rng, 120, phi=0.6) for _ in range(4)])
    panel = standardized(raw)
    got = pipeline_forecast(
        panel, EstimatorConfig(method="cov"), r_hat=4, h=2, loading_override=np.eye(4)
    )
    want = np.array(
        [forecast_arma(fit_arma(panel.data[:, j]), panel.data[:, j], 2) for j in range(4)]
    )
    assert np.allclose(got, want, atol=1e-12)


def test_pipeline_prediction_lies_in_the_loading_space():
    rng = np.random.default_rng(29)
    x = ar1_series(rng, 150, phi=0.9)
    load = rng.uniform(-1, 1, size=8)
    panel = standardized(np.outer(x, load) + 0.2 * rng.standard_normal((150, 8)))
    cfg = EstimatorConfig(method="cov", r_fixed=1)
    yhat = pipeline_forecast(panel, cfg, r_hat=1, h=1)
    a_hat = estimate(panel, cfg).A_hat
    assert np.linalg.norm(yhat - a_hat @ (a_hat.T @ yhat)) <= 1e-10


def test_pipeline_validates_inputs():
    rng = np.random.default_rng(4)
    raw = TimePanel(5.0 + rng.standard_normal((60, 3)))
    cfg = EstimatorConfig(method="cov")
    with pytest.raises(PreconditionViolated):
        pipeline_forecast(raw, cfg, r_hat=1, h=1)
    panel = standardized(raw.data)
    with pytest.raises(InvalidConfig):
        pipeline_forecast(panel, cfg, r_hat=0, h=1)
    with pytest.raises(InvalidConfig):
        pipeline_forecast(panel, cfg, r_hat=1, h=0)
    with pytest.raises(InvalidConfig):
        pipeline_forecast(panel, cfg, r_hat=2, h=1, loading_override=np.eye(3))
    skewed = np.eye(3)[:, :2] + 0.1
    with pytest.raises(InvalidConfig):
        pipeline_forecast(panel, cfg, r_hat=2, h=1, loading_override=skewed)


# ------------------------------------------------------- expanding window


def test_strong_factor_panel_beats_zero_forecast():
    rng = np.random.default_rng(42)
    n, p = 240, 20
    x = ar1_series(rng, n, phi=0.9)
    load = rng.uniform(-1, 1, size=p)
    y = np.outer(x, load) + 0.3 * rng.standard_normal((n, p))
    rep = expanding_window_eval(
        TimePanel(y), (EstimatorConfig(method="cov"),), r_hat=1, h=1, n1=200
    )
    by = {r.label: r for r in rep.results}
    assert by["cov"].msfe < by[ZERO_BASELINE].msfe
    assert by["cov"].mafe < by[ZERO_BASELINE].mafe


def test_zero_baseline_mafe_matches_gaussian_moment():
    # |N(0,1)| has mean sqrt(2/pi) = 0.7979; the zero forecast on a
    # standardized white-noise panel must land on it.
    rng = np.random.default_rng(0)
    panel = TimePanel(rng.standard_normal((250, 50)))
    rep = expanding_window_eval(panel, (), r_hat=1, h=1, n1=200, standardize="global")
    zero = rep.results[-1]
    assert zero.label == ZERO_BASELINE
    assert zero.mafe == pytest.approx(np.sqrt(2 / np.pi), abs=0.02)


def test_report_shapes_and_determinism():
    rng = np.random.default_rng(11)
    x = ar1_series(rng, 160, phi=0.8)
    y = np.outer(x, rng.uniform(-1, 1, size=6)) + rng.standard_normal((160, 6))
    methods = (EstimatorConfig(method="cov"), EstimatorConfig(method="auto"))
    rep1 = expanding_window_eval(TimePanel(y), methods, r_hat=1, h=2, n1=120)
    rep2 = expanding_window_eval(TimePanel(y), methods, r_hat=1, h=2, n1=120)
    assert rep1.n2 == 40
    assert len(rep1.origins) == rep1.n2 - rep1.h + 1
    assert [r.label for r in rep1.results] == ["cov", "auto", ZERO_BASELINE]
    for a, b in zip(rep1.results, rep2.results):
        assert a.mafe == b.mafe and a.msfe == b.msfe
        assert np.array_equal(a.predictions, b.predictions)
        assert a.predictions.shape == (len(rep1.origins), 6)


def test_failing_method_counts_windows_and_keeps_others():
    rng = np.random.default_rng(23)
    x = ar1_series(rng, 150, phi=0.8)
    y = np.outer(x, rng.uniform(-1, 1, size=5)) + rng.standard_normal((150, 5))
    methods = (
        EstimatorConfig(method="cov"),
        EstimatorConfig(method="wauto", q=50),  # q exceeds p = 5 in every window
    )
    rep = expanding_window_eval(TimePanel(y), methods, r_hat=1, h=1, n1=130)
    by = {r.label: r for r in rep.results}
    n_windows = len(rep.origins)
    assert by["wauto"].n_failed == n_windows
    assert np.isnan(by["wauto"].mafe)
    assert np.isnan(by["wauto"].predictions).all()
    assert by["cov"].n_failed == 0
    assert np.isfinite(by["cov"].mafe)


def test_expanding_window_validates_arguments():
    rng = np.random.default_rng(2)
    panel = TimePanel(rng.standard_normal((100, 4)))
    cfgs = (EstimatorConfig(method="cov"),)
    with pytest.raises(InvalidConfig):
        expanding_window_eval(panel, cfgs, r_hat=1, h=1, n1=10)
    with pytest.raises(InvalidConfig):
        expanding_window_eval(panel, cfgs, r_hat=1, h=40, n1=80)
    with pytest.raises(InvalidConfig):
        expanding_window_eval(panel, cfgs, r_hat=1, h=1, n1=80, standardize="window")
    flat = np.ones((100, 2))
    flat[:, 1] = rng.standard_normal(100)
    with pytest.raises(InvalidData):
        expanding_window_eval(TimePanel(flat), cfgs, r_hat=1, h=1, n1=80)


def test_report_invariants_are_enforced():
    ok = MethodForecast("cov", 0.1, 0.2, 0, np.zeros((3, 2)))
    with pytest.raises(InvalidConfig):
        ForecastReport(h=1, n1=5, n2=4, origins=(5, 6), results=(ok,))
    with pytest.raises(InvalidConfig):
        ForecastReport(
            h=1, n1=5, n2=4, origins=(5, 6, 7, 8),
            results=(MethodForecast("cov", 0.1, 0.2, 0, np.zeros((2, 2))),),
        )
    with pytest.raises(InvalidConfig):
        MethodForecast("cov", -0.1, 0.2, 0, np.zeros((3, 2)))
