"""Factor-based forecasting for high-dimensional panels.

The pipeline has four steps: estimate a loading matrix on the training
window, project the panel onto the estimated factor space, forecast each
factor series with an ARMA model selected by AIC over a bounded order
grid, and map the factor forecasts back to the panel.  An expanding
window driver evaluates competing estimators by mean absolute and mean
squared forecast error against a zero-forecast baseline.

ARMA fitting is conditional: residuals are computed recursively with
zero presample values, orders are initialized by the Hannan-Rissanen
two-stage regression, and coefficients are refined by minimizing the
conditional sum of squares.  Everything here is deterministic; no
random numbers are drawn.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.optimize import least_squares
from scipy.signal import lfilter

from .errors import InvalidConfig, InvalidData, PreconditionViolated, TsfactorError
from .factor import EstimatorConfig, estimate
from .tsstats import TimePanel

__all__ = [
    "ArmaFit",
    "MethodForecast",
    "ForecastReport",
    "fit_arma",
    "forecast_arma",
    "forecast_metrics",
    "pipeline_forecast",
    "expanding_window_eval",
    "ZERO_BASELINE",
]

ZERO_BASELINE = "zero"

_ROOT_TOL = 1e-6
_MIN_SERIES = 30


@dataclass(frozen=True)
class ArmaFit:
    """A fitted ARMA(p, q) model in mean form.

    The model is ``y_t - c = sum(ar * (y_lags - c)) + sum(ma * eps_lags)
    + eps_t`` with intercept ``c``.  ``fallback_ar0`` marks the rescue
    path taken when every candidate on the order grid was degenerate:
    the returned model is then mean-only with a floored innovation
    variance.
    """

    order: tuple[int, int]
    ar_coeffs: tuple[float, ...]
    ma_coeffs: tuple[float, ...]
    intercept: float
    innovation_variance: float
    aic: float
    residuals: np.ndarray = field(repr=False, compare=False)
    fallback_ar0: bool = False

    def __post_init__(self):
        if self.order != (len(self.ar_coeffs), len(self.ma_coeffs)):
            raise InvalidConfig("order must match the coefficient counts")
        if not self.innovation_variance > 0:
            raise InvalidConfig("innovation variance must be positive")
        if not _roots_outside_unit_circle(self.ar_coeffs):
            raise InvalidConfig("AR polynomial must be stationary")


def _roots_outside_unit_circle(coeffs) -> bool:
    """True when 1 - c1 z - ... - ck z^k has all roots outside |z|=1."""
    c = np.asarray(coeffs, dtype=float)
    if c.size == 0:
        return True
    if not np.all(np.isfinite(c)):
        return False
    roots = np.roots(np.r_[-c[::-1], 1.0])
    return bool(np.all(np.abs(roots) > 1.0 - _ROOT_TOL))


def _css_residuals(z: np.ndarray, ar: np.ndarray, ma: np.ndarray) -> np.ndarray:
    """Conditional residuals with zero presample observations and shocks."""
    if ar.size == 0 and ma.size == 0:
        return z.copy()
    eps = lfilter(np.r_[1.0, -ar], np.r_[1.0, ma], z)
    return np.nan_to_num(eps, nan=1e6, posinf=1e6, neginf=-1e6)


def _hannan_rissanen_start(z: np.ndarray, p: int, q: int) -> np.ndarray:
    """Two-stage least-squares initial values for (ar, ma)."""
    n = z.shape[0]
    long_order = min(max(8, p + q, int(round(10 * math.log10(n)))), n // 4)
    lag_cols = [z[long_order - k : n - k] for k in range(1, long_order + 1)]
    design = np.column_stack(lag_cols)
    coef, *_ = np.linalg.lstsq(design, z[long_order:], rcond=None)
    ehat = np.zeros(n)
    ehat[long_order:] = z[long_order:] - design @ coef
    start = max(p, long_order + q)
    cols = [z[start - k : n - k] for k in range(1, p + 1)]
    cols += [ehat[start - k : n - k] for k in range(1, q + 1)]
    x0, *_ = np.linalg.lstsq(np.column_stack(cols), z[start:], rcond=None)
    return np.clip(x0, -0.99, 0.99)


def _has_common_root(ar: np.ndarray, ma: np.ndarray, tol: float = 0.12) -> bool:
    """Near-cancelling AR/MA factors mean the model is overparameterized.

    Roots are compared on the inverse scale, where distance measures how
    similar the corresponding lag-polynomial factors are no matter how
    far outside the unit circle the roots sit.
    """
    if ar.size == 0 or ma.size == 0:
        return False
    inv_ar = 1.0 / np.roots(np.r_[-ar[::-1], 1.0])
    inv_ma = 1.0 / np.roots(np.r_[ma[::-1], 1.0])
    dist = np.abs(inv_ar[:, None] - inv_ma[None, :])
    return bool(np.min(dist) < tol)


def fit_arma(series, max_ar: int = 3, max_ma: int = 3) -> ArmaFit:
    """Select and fit an ARMA model by AIC over a bounded order grid.

    Every order pair up to ``(max_ar, max_ma)`` is initialized by the
    Hannan-Rissanen regressions and refined by conditional least
    squares.  A candidate is discarded when its roots are unstable, an
    AR root nearly cancels an MA root, its highest-lag coefficient is
    within three standard errors (``3/sqrt(n)``) of zero — the nested
    model is always on the grid — or its residual variance is
    degenerate.  The winner minimizes ``n*log(sigma2) + 2*(p + q + 1)``;
    ties keep the earlier (smaller) order.  If no candidate survives (a
    constant series, for example), the mean-only model is returned with
    ``fallback_ar0``.
    """
    y = np.asarray(series, dtype=float).ravel()
    if y.shape[0] < _MIN_SERIES:
        raise InvalidData(f"series must have at least {_MIN_SERIES} points, got {y.shape[0]}")
    if not np.all(np.isfinite(y)):
        raise InvalidData("series contains non-finite values")
    if max_ar < 0 or max_ma < 0:
        raise InvalidConfig("order caps must be >= 0")
    n = y.shape[0]
    mu = float(np.mean(y))
    z = y - mu
    best: Optional[ArmaFit] = None
    for p in range(max_ar + 1):
        for q in range(max_ma + 1):
            if p == 0 and q == 0:
                eps = z.copy()
                ar = np.empty(0)
                ma = np.empty(0)
            else:
                x0 = _hannan_rissanen_start(z, p, q)
                sol = least_squares(
                    lambda v: _css_residuals(z, v[:p], v[p:]),
                    x0,
                    method="lm",
                    max_nfev=300,
                )
                ar, ma = sol.x[:p], sol.x[p:]
                if not (
                    _roots_outside_unit_circle(ar)
                    and _roots_outside_unit_circle(ma)
                ):
                    continue
                lead_tol = 3.0 / math.sqrt(n)
                if (ar.size and abs(ar[-1]) < lead_tol) or (
                    ma.size and abs(ma[-1]) < lead_tol
                ):
                    continue
                if _has_common_root(ar, ma):
                    continue
                eps = _css_residuals(z, ar, ma)
            sigma2 = float(np.mean(eps**2))
            if not np.isfinite(sigma2) or sigma2 < 1e-300:
                continue
            aic = n * math.log(sigma2) + 2.0 * (p + q + 1)
            if best is None or aic < best.aic:
                best = ArmaFit(
                    order=(p, q),
                    ar_coeffs=tuple(float(c) for c in ar),
                    ma_coeffs=tuple(float(c) for c in ma),
                    intercept=mu,
                    innovation_variance=sigma2,
                    aic=aic,
                    residuals=eps,
                )
    if best is None:
        return ArmaFit(
            order=(0, 0),
            ar_coeffs=(),
            ma_coeffs=(),
            intercept=mu,
            innovation_variance=1e-12,
            aic=float("inf"),
            residuals=z,
            fallback_ar0=True,
        )
    return best


def forecast_arma(fit: ArmaFit, history, h: int) -> float:
    """Recursive h-step prediction with future shocks set to zero.

    Residuals over the history are rebuilt with the same conditional
    recursion used in fitting, then the ARMA difference equation is
    iterated forward, substituting predictions for unobserved values and
    zero for unobserved shocks.
    """
    if h < 1:
        raise InvalidConfig(f"horizon must be >= 1, got {h}")
    y = np.asarray(history, dtype=float).ravel()
    if y.shape[0] < 1:
        raise InvalidData("history must not be empty")
    if not np.all(np.isfinite(y)):
        raise InvalidData("history contains non-finite values")
    ar = np.asarray(fit.ar_coeffs, dtype=float)
    ma = np.asarray(fit.ma_coeffs, dtype=float)
    z = y - fit.intercept
    eps = _css_residuals(z, ar, ma)
    n = z.shape[0]
    zext = np.concatenate([z, np.zeros(h)])
    epsext = np.concatenate([eps, np.zeros(h)])
    for s in range(h):
        t = n + s
        val = 0.0
        for i, c in enumerate(ar, start=1):
            if t - i >= 0:
                val += c * zext[t - i]
        for j, c in enumerate(ma, start=1):
            if 0 <= t - j < n:
                val += c * epsext[t - j]
        zext[t] = val
    return float(fit.intercept + zext[n + h - 1])


def forecast_metrics(predictions, truths) -> tuple[float, float]:
    """Mean absolute and mean squared error over all entries."""
    pred = np.asarray(predictions, dtype=float)
    true = np.asarray(truths, dtype=float)
    if pred.shape != true.shape or pred.size == 0:
        raise InvalidData("predictions and truths must share a nonempty shape")
    if not (np.all(np.isfinite(pred)) and np.all(np.isfinite(true))):
        raise InvalidData("metrics need finite inputs")
    err = pred - true
    return float(np.mean(np.abs(err))), float(np.mean(err**2))


def _check_standardized(data: np.ndarray) -> None:
    means = data.mean(axis=0)
    sds = data.std(axis=0)
    if np.max(np.abs(means)) > 1e-6:
        raise PreconditionViolated("panel must be standardized: column means are not 0")
    if np.max(np.abs(sds - 1.0)) > 1e-3:
        raise PreconditionViolated("panel must be standardized: column sds are not 1")


def pipeline_forecast(
    panel: TimePanel,
    cfg: EstimatorConfig,
    r_hat: int,
    h: int,
    loading_override: Optional[np.ndarray] = None,
    max_ar: int = 3,
    max_ma: int = 3,
) -> np.ndarray:
    """Forecast all panel series h steps ahead through the factor space.

    The panel must already be standardized (zero mean, unit variance per
    column).  The loading matrix is estimated with the factor count
    pinned at ``r_hat``; ``loading_override`` substitutes a known
    orthonormal loading and skips estimation (used to reduce the
    pipeline to componentwise ARMA forecasting when the override is the
    identity).  ``max_ar``/``max_ma`` bound the per-factor order search.
    The returned vector lies in the column space of the loading used.
    """
    if h < 1:
        raise InvalidConfig(f"horizon must be >= 1, got {h}")
    if not 1 <= r_hat <= panel.p:
        raise InvalidConfig(f"r_hat must be in [1, p] = [1, {panel.p}], got {r_hat}")
    _check_standardized(panel.data)
    if loading_override is not None:
        a_hat = np.asarray(loading_override, dtype=float)
        if a_hat.shape != (panel.p, r_hat):
            raise InvalidConfig(
                f"loading override must be {panel.p}x{r_hat}, got {a_hat.shape}"
            )
        if not np.allclose(a_hat.T @ a_hat, np.eye(r_hat), atol=1e-6):
            raise InvalidConfig("loading override must have orthonormal columns")
    else:
        a_hat = estimate(panel, replace(cfg, r_fixed=r_hat)).A_hat
    factors = panel.data @ a_hat
    ahead = np.empty(r_hat)
    for j in range(r_hat):
        fit = fit_arma(factors[:, j], max_ar=max_ar, max_ma=max_ma)
        ahead[j] = forecast_arma(fit, factors[:, j], h)
    return a_hat @ ahead


@dataclass(frozen=True)
class MethodForecast:
    """Expanding-window forecasts and error metrics for one method.

    ``predictions`` has one row per window; rows for failed windows are
    NaN and excluded from the metrics.
    """

    label: str
    mafe: float
    msfe: float
    n_failed: int
    predictions: np.ndarray = field(repr=False, compare=False)

    def __post_init__(self):
        ok = self.n_failed < self.predictions.shape[0]
        if ok and not (self.mafe >= 0 and self.msfe >= 0):
            raise InvalidConfig("error metrics must be nonnegative")


@dataclass(frozen=True)
class ForecastReport:
    """Out-of-sample comparison of estimators on one panel.

    Forecast origins run from ``n1`` to ``n - h``; there are
    ``n2 - h + 1`` windows with ``n2 = n - n1``.  ``results`` always
    ends with the zero-forecast baseline.
    """

    h: int
    n1: int
    n2: int
    origins: tuple[int, ...]
    results: tuple[MethodForecast, ...]

    def __post_init__(self):
        expect = self.n2 - self.h + 1
        if len(self.origins) != expect:
            raise InvalidConfig("window count must equal n2 - h + 1")
        for res in self.results:
            if res.predictions.shape[0] != expect:
                raise InvalidConfig("every method needs one prediction row per window")


def _method_labels(methods: tuple[EstimatorConfig, ...]) -> list[str]:
    counts: dict[str, int] = {}
    labels = []
    for cfg in methods:
        k = counts.get(cfg.method, 0)
        counts[cfg.method] = k + 1
        labels.append(cfg.method if k == 0 else f"{cfg.method}#{k + 1}")
    return labels


def expanding_window_eval(
    panel: TimePanel,
    methods: tuple[EstimatorConfig, ...],
    r_hat: int,
    h: int,
    n1: int,
    standardize: str = "train",
    max_ar: int = 3,
    max_ma: int = 3,
) -> ForecastReport:
    """Compare estimators by expanding-window forecast errors.

    For each origin T from ``n1`` to ``n - h`` the panel rows before T
    are the training window; every method forecasts row ``T + h - 1``
    (0-based) and errors accumulate into MAFE and MSFE.

    ``standardize`` controls the error scale.  With ``"train"`` errors
    are in original units; with ``"global"`` the whole panel is
    standardized once first, so all series share one scale — the
    convention used in published comparison tables (the look-ahead
    affects only the units).  In both modes each training window is
    additionally standardized by its own statistics before estimation
    and the prediction is mapped back, so the forecasts themselves never
    peek past the origin.  The zero-forecast baseline predicts the
    training mean, i.e. zero on the window-standardized scale.
    ``methods`` may be empty to evaluate the baseline alone;
    ``max_ar``/``max_ma`` bound the per-factor order search.
    """
    if standardize not in ("train", "global"):
        raise InvalidConfig("standardize must be 'train' or 'global'")
    if h < 1:
        raise InvalidConfig(f"horizon must be >= 1, got {h}")
    if n1 < _MIN_SERIES:
        raise InvalidConfig(f"n1 must be >= {_MIN_SERIES} so factor models can be fit")
    if n1 + h > panel.n:
        raise InvalidConfig(f"need n1 + h <= n, got n1={n1}, h={h}, n={panel.n}")
    y = panel.data
    n, p = panel.n, panel.p
    if standardize == "global":
        mu_g = y.mean(axis=0)
        sd_g = y.std(axis=0)
        if np.any(sd_g < 1e-12):
            raise InvalidData("a panel column is constant; cannot standardize")
        y_eval = (y - mu_g) / sd_g
    else:
        y_eval = y
    labels = _method_labels(tuple(methods)) + [ZERO_BASELINE]
    origins = tuple(range(n1, n - h + 1))
    n_windows = len(origins)
    preds = {lab: np.full((n_windows, p), np.nan) for lab in labels}
    fails = {lab: 0 for lab in labels}
    for w, origin in enumerate(origins):
        train = y_eval[:origin]
        mu_t = train.mean(axis=0)
        sd_t = train.std(axis=0)
        if np.any(sd_t < 1e-12):
            raise InvalidData("a training column is constant; cannot standardize")
        strain = (train - mu_t) / sd_t
        train_panel = TimePanel(strain)
        for cfg, lab in zip(methods, labels):
            try:
                raw = pipeline_forecast(
                    train_panel, cfg, r_hat, h, max_ar=max_ar, max_ma=max_ma
                )
                preds[lab][w] = mu_t + sd_t * raw
            except TsfactorError:
                fails[lab] += 1
        preds[ZERO_BASELINE][w] = mu_t
    truth = np.stack([y_eval[origin + h - 1] for origin in origins])
    results = []
    for lab in labels:
        good = ~np.isnan(preds[lab]).any(axis=1)
        if good.any():
            mafe, msfe = forecast_metrics(preds[lab][good], truth[good])
        else:
            mafe = msfe = float("nan")
        results.append(
            MethodForecast(
                label=lab,
                mafe=mafe,
                msfe=msfe,
                n_failed=fails[lab],
                predictions=preds[lab],
            )
        )
    return ForecastReport(
        h=h, n1=n1, n2=n - n1, origins=origins, results=tuple(results)
    )
