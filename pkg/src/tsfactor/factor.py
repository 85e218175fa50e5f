"""Latent factor estimators for high-dimensional stationary series.

Three estimators of the loading space of ``y_t = A x_t + e_t`` share one
interface:

``cov``
    Eigenanalysis of the sample covariance; the classical PCA route.
``auto``
    Eigenanalysis of the summed products ``sum_k Omega(k) Omega(k)'`` of
    lagged autocovariances, which white-noise idiosyncratics do not
    contaminate.
``wauto``
    Same aggregation, but each lag matrix is sandwiched with a rank-q
    pseudo-inverse of the sample covariance.  This weighting rescales
    the factor eigenvalues so that factors of unequal strength remain
    separated from the noise; q can be fixed or selected by the
    generalized BIC in :mod:`tsfactor.modelselect`.

The number of factors is picked where adjacent (lag-weighted,
offset-corrected) eigenvalue ratios jump; see :func:`select_r`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional, Sequence, Union

if TYPE_CHECKING:  # pragma: no cover
    from .modelselect import BicConfig

import numpy as np

from .errors import (
    DegenerateSpectrum,
    IllConditioned,
    InvalidConfig,
    InvalidData,
)
from .tsstats import (
    EigenPairs,
    LagCovSet,
    TimePanel,
    _fix_signs,
    demean,
    sample_autocov,
    sym_eigen,
)

__all__ = [
    "EstimatorConfig",
    "WeightMatrix",
    "FactorFit",
    "weight_matrix",
    "m_hat",
    "per_lag_spectra",
    "select_r",
    "estimate",
    "rrr_solution",
    "two_step",
]

_METHODS = ("cov", "auto", "wauto")
_COND_FLOOR = 1e-12


@dataclass(frozen=True)
class EstimatorConfig:
    """Settings shared by the three estimators.

    Parameters
    ----------
    method : {"cov", "auto", "wauto"}
    m : int
        Number of lags aggregated (default 2); ignored by ``cov``.
    q : int, "auto", or None
        Projection dimension for ``wauto``.  ``"auto"`` (the default)
        delegates to the generalized BIC; an int pins it.
    vartheta_scale : float
        Scale of the ratio-offset: the offset is ``scale * p/n`` for
        ``wauto`` and ``scale * (p/n)**2`` for ``auto``; ``cov`` uses
        plain adjacent ratios with no offset.
    r_search_max : int, optional
        Upper end of the factor-count search; defaults to 15 for
        ``cov``/``auto`` and ``q - 1`` for ``wauto``.
    r_fixed : int, optional
        Skip factor-count selection and use this rank.
    """

    method: str = "wauto"
    m: int = 2
    q: Union[int, str, None] = "auto"
    vartheta_scale: float = 0.1
    r_search_max: Optional[int] = None
    r_fixed: Optional[int] = None

    def __post_init__(self):
        if self.method not in _METHODS:
            raise InvalidConfig(f"method must be one of {_METHODS}, got {self.method!r}")
        if self.m < 1:
            raise InvalidConfig(f"m must be >= 1, got {self.m}")
        if self.vartheta_scale < 0:
            raise InvalidConfig("vartheta_scale must be >= 0")
        if isinstance(self.q, str) and self.q != "auto":
            raise InvalidConfig(f"q must be an int, 'auto', or None, got {self.q!r}")
        if isinstance(self.q, int) and self.q < 1:
            raise InvalidConfig(f"q must be positive, got {self.q}")
        if self.r_search_max is not None and self.r_search_max < 1:
            raise InvalidConfig("r_search_max must be >= 1")
        if self.r_fixed is not None and self.r_fixed < 1:
            raise InvalidConfig("r_fixed must be >= 1")
        if (
            isinstance(self.q, int)
            and self.r_search_max is not None
            and self.r_search_max >= self.q
        ):
            raise InvalidConfig("r_search_max must be smaller than q")


@dataclass(frozen=True)
class WeightMatrix:
    """Leading covariance eigenpairs packaging W = Q diag(1/theta) Q'."""

    Q: np.ndarray
    theta: np.ndarray
    q: int

    def __post_init__(self):
        if self.Q.shape[1] != self.q or self.theta.shape != (self.q,):
            raise InvalidData("weight matrix fields have inconsistent shapes")
        if self.theta.min() <= 0:
            raise InvalidData("weight matrix eigenvalues must be positive")

    def dense(self) -> np.ndarray:
        """Materialize W as a p-by-p matrix."""
        w = (self.Q / self.theta) @ self.Q.T
        return 0.5 * (w + w.T)


@dataclass(frozen=True)
class FactorFit:
    """Result of one estimator run."""

    method: str
    r_hat: int
    A_hat: np.ndarray
    factors: np.ndarray
    eigenvalues_per_lag: tuple[np.ndarray, ...]
    ratios: np.ndarray
    q_used: Optional[int] = None
    H_hat: Optional[tuple[np.ndarray, ...]] = None

    def __post_init__(self):
        r = self.A_hat.shape[1]
        if r != self.r_hat:
            raise InvalidData("loading column count must equal r_hat")
        if np.abs(self.A_hat.T @ self.A_hat - np.eye(r)).max() > 1e-8:
            raise InvalidData("estimated loadings are not orthonormal")
        for spectrum in self.eigenvalues_per_lag:
            lead = max(float(spectrum[0]), 0.0)
            if spectrum.min() < -1e-10 * lead:
                raise InvalidData("spectrum has a negative eigenvalue beyond round-off")
            if np.any(np.diff(spectrum) > 1e-12 * max(lead, 1.0)):
                raise InvalidData("spectrum is not sorted descending")


def weight_matrix(covs: LagCovSet, q: int) -> WeightMatrix:
    """Rank-q covariance pseudo-inverse ``W = Q (Q' lag0 Q)^{-1} Q'``.

    Q holds the leading q eigenvectors of the lag-0 covariance, so
    ``Q' lag0 Q`` is exactly ``diag(theta_1..theta_q)`` and the two
    textbook forms of W (projected inverse and eigen-sum) coincide.

    Raises
    ------
    IllConditioned
        If ``theta_q <= 1e-12 * theta_1``; ``q_effective`` on the error
        reports the largest q that would still be admissible.
    """
    p = covs.p
    if not 1 <= q <= min(p, covs.n):
        raise InvalidConfig(f"q must be in [1, min(p, n)] = [1, {min(p, covs.n)}], got {q}")
    pairs = sym_eigen(covs.lag0, q)
    theta = pairs.values
    floor = _COND_FLOOR * max(theta[0], 0.0)
    if theta[-1] <= floor:
        q_eff = int(np.sum(theta > floor))
        raise IllConditioned(
            f"lag-0 covariance is rank deficient at q={q} "
            f"(theta_q={theta[-1]:.3e} vs floor {floor:.3e}); largest admissible q is {q_eff}",
            q_effective=q_eff,
        )
    return WeightMatrix(Q=pairs.vectors, theta=theta, q=q)


def m_hat(covs: LagCovSet, W: Optional[WeightMatrix] = None) -> np.ndarray:
    """Aggregate ``sum_k Omega(k) W Omega(k)'`` (W = identity if None)."""
    if covs.m < 1:
        raise InvalidData("m_hat needs at least one lagged autocovariance")
    p = covs.p
    out = np.zeros((p, p))
    for lag in covs.lags:
        if W is None:
            out += lag @ lag.T
        else:
            if W.Q.shape[0] != p:
                raise InvalidData("weight matrix dimension does not match covariances")
            s = lag @ W.Q
            out += (s / W.theta) @ s.T
    return 0.5 * (out + out.T)


def _half_weighted(lag: np.ndarray, W: Optional[WeightMatrix]) -> np.ndarray:
    """B with B B' = Omega(k) W Omega(k)'; B = Omega(k) Q theta^{-1/2}."""
    if W is None:
        return lag
    return lag @ (W.Q / np.sqrt(W.theta))


def per_lag_spectra(covs: LagCovSet, W: Optional[WeightMatrix] = None) -> list[EigenPairs]:
    """Spectrum of ``Omega(k) W Omega(k)'`` for each lag k = 1..m.

    With a weight matrix the spectrum is truncated to its q possibly
    nonzero values; without one it has all p values.  Eigenvalues are
    singular values squared, so negative round-off cannot occur.
    """
    out = []
    for lag in covs.lags:
        b = _half_weighted(lag, W)
        u, s, _ = np.linalg.svd(b, full_matrices=False)
        out.append(EigenPairs(values=np.maximum(s**2, 0.0), vectors=_fix_signs(u)))
    return out


def select_r(
    spectra: Sequence[np.ndarray],
    n: int,
    vartheta: float,
    r_max: int,
) -> tuple[int, np.ndarray]:
    """Factor count from lag-weighted cumulative eigenvalue ratios.

    Computes ``R_j = (sum_k (1 - k/n) lam_kj + vartheta) /
    (sum_k (1 - k/n) lam_k,j+1 + vartheta)`` for j = 1..r_max and
    returns the smallest j attaining the maximum, together with the full
    ratio sequence.

    Parameters
    ----------
    spectra : sequence of 1-d arrays
        One descending spectrum per lag k = 1..m, each of length at
        least ``r_max + 1``.  Negative round-off is clamped to 0.
    n : int
        Sample size behind the ``1 - k/n`` lag weights.
    vartheta : float
        Additive offset shielding the ratio from noise-level
        denominators; 0 disables the correction.
    r_max : int
        Largest candidate factor count.
    """
    if r_max < 1:
        raise InvalidConfig(f"r_max must be >= 1, got {r_max}")
    if vartheta < 0:
        raise InvalidConfig("vartheta must be >= 0")
    stacked = []
    for k, spectrum in enumerate(spectra, start=1):
        spectrum = np.asarray(spectrum, dtype=float)
        if spectrum.shape[0] < r_max + 1:
            raise InvalidConfig(
                f"spectrum for lag {k} has {spectrum.shape[0]} values; need {r_max + 1}"
            )
        stacked.append((1.0 - k / n) * np.maximum(spectrum[: r_max + 1], 0.0))
    cum = np.sum(stacked, axis=0)
    num = cum[:-1] + vartheta
    den = cum[1:] + vartheta
    if np.any(den == 0.0):
        if vartheta == 0.0:
            raise DegenerateSpectrum(
                "zero eigenvalue denominator with no offset; pass vartheta > 0"
            )
        raise DegenerateSpectrum("eigenvalue ratios degenerate even with offset")
    ratios = num / den
    return int(np.argmax(ratios)) + 1, ratios


def _plain_ratio_argmax(values: np.ndarray, r_max: int) -> tuple[int, np.ndarray]:
    """Adjacent-eigenvalue ratio rule with no offset (covariance method)."""
    if r_max < 1:
        raise InvalidConfig(f"r_max must be >= 1, got {r_max}")
    values = np.maximum(values[: r_max + 1], 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = values[:-1] / values[1:]
    safe = np.where(np.isnan(ratios), -np.inf, ratios)  # 0/0 can never win
    if np.all(safe == -np.inf):
        raise DegenerateSpectrum("all adjacent eigenvalue ratios are undefined")
    return int(np.argmax(safe)) + 1, ratios


def _resolve_bounds(cfg: EstimatorConfig, available: int) -> tuple[int, Optional[int]]:
    """Effective search bound and validated fixed rank.

    ``available`` is the last index for which a ratio exists (p - 1 or
    q - 1).  A defaulted search bound stretches to accommodate
    ``r_fixed``; an explicit one that excludes it is an error.
    """
    default = cfg.r_search_max is None
    bound = (15 if cfg.method != "wauto" else available) if default else cfg.r_search_max
    bound = min(bound, available)
    r_fixed = cfg.r_fixed
    if r_fixed is not None:
        if r_fixed > available + 1:
            raise InvalidConfig(
                f"r_fixed={r_fixed} exceeds the available spectrum ({available + 1} values)"
            )
        if not default and r_fixed > bound:
            raise InvalidConfig(f"r_fixed={r_fixed} exceeds r_search_max={bound}")
    elif bound < 1:
        raise InvalidConfig("no admissible factor count to search; fix r explicitly")
    return bound, r_fixed


def estimate(
    panel: TimePanel,
    cfg: EstimatorConfig,
    bic: "Optional[BicConfig]" = None,
) -> FactorFit:
    """Estimate the loading space and factor count of a panel.

    The panel is demeaned if it is not already.  Dispatches on
    ``cfg.method``; see the module docstring for what each branch
    diagonalizes.  For ``wauto`` with ``q="auto"`` the projection
    dimension comes from :func:`tsfactor.modelselect.select_q`, using
    ``bic`` (a :class:`~tsfactor.modelselect.BicConfig`) when given.

    Returns
    -------
    FactorFit
        Loadings, factors ``panel @ A_hat``, the spectra and ratio
        sequence behind the factor-count choice, and (``wauto`` only)
        the per-lag regression coefficients ``H_hat``.
    """
    panel = demean(panel)
    n, p = panel.n, panel.p
    if cfg.m >= n:
        raise InvalidConfig(f"m={cfg.m} must be smaller than the sample size {n}")
    if isinstance(cfg.q, int) and cfg.q > min(p, n):
        raise InvalidConfig(f"q={cfg.q} exceeds min(p, n) = {min(p, n)}")
    covs = sample_autocov(panel, cfg.m)
    y = panel.data

    if cfg.method == "cov":
        pairs = sym_eigen(covs.lag0, p)
        bound, r_fixed = _resolve_bounds(cfg, p - 1)
        if r_fixed is not None and bound < 1:
            r, ratios = r_fixed, np.empty(0)
        else:
            r_sel, ratios = _plain_ratio_argmax(pairs.values, bound)
            r = r_fixed if r_fixed is not None else r_sel
        a = pairs.vectors[:, :r]
        return FactorFit(
            method="cov",
            r_hat=r,
            A_hat=a,
            factors=y @ a,
            eigenvalues_per_lag=(pairs.values.copy(),),
            ratios=ratios,
        )

    if cfg.method == "auto":
        spectra = per_lag_spectra(covs, None)
        values = [s.values for s in spectra]
        bound, r_fixed = _resolve_bounds(cfg, p - 1)
        vartheta = cfg.vartheta_scale * (p / n) ** 2
        if r_fixed is not None and bound < 1:
            r, ratios = r_fixed, np.empty(0)
        else:
            r_sel, ratios = select_r(values, n, vartheta, bound)
            r = r_fixed if r_fixed is not None else r_sel
        a = sym_eigen(m_hat(covs, None), r).vectors
        return FactorFit(
            method="auto",
            r_hat=r,
            A_hat=a,
            factors=y @ a,
            eigenvalues_per_lag=tuple(values),
            ratios=ratios,
        )

    # wauto
    if isinstance(cfg.q, int):
        q = cfg.q
    else:
        from .modelselect import BicConfig, select_q

        bic_cfg = bic if bic is not None else BicConfig(q0=min(15, min(p, n) - 1), m=cfg.m)
        q = select_q(panel, bic_cfg, cfg).q_hat
    w = weight_matrix(covs, q)
    spectra = per_lag_spectra(covs, w)
    values = [s.values for s in spectra]
    bound, r_fixed = _resolve_bounds(cfg, q - 1)
    vartheta = cfg.vartheta_scale * p / n
    if r_fixed is not None and bound < 1:
        r, ratios = r_fixed, np.empty(0)
    else:
        r_sel, ratios = select_r(values, n, vartheta, bound)
        r = r_fixed if r_fixed is not None else r_sel
    a = sym_eigen(m_hat(covs, w), r).vectors
    h_list = []
    for k in range(1, cfg.m + 1):
        ytil = y[: n - k] @ w.Q
        h_list.append(_ridgeless_solve(ytil, y[k:] @ a))
    return FactorFit(
        method="wauto",
        r_hat=r,
        A_hat=a,
        factors=y @ a,
        eigenvalues_per_lag=tuple(values),
        ratios=ratios,
        q_used=q,
        H_hat=tuple(h_list),
    )


def _ridgeless_solve(design: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Least-squares coefficients (design' design)^{-1} design' target."""
    gram = design.T @ design
    vals = np.linalg.eigvalsh(gram)
    if vals[0] <= _COND_FLOOR * max(vals[-1], 0.0):
        raise IllConditioned(
            "projected regressor matrix is numerically singular",
            q_effective=int(np.sum(vals > _COND_FLOOR * max(vals[-1], 0.0))),
        )
    return np.linalg.solve(gram, design.T @ target)


def rrr_solution(
    panel: TimePanel, k: int, q: int, r: int
) -> tuple[np.ndarray, np.ndarray, float]:
    """Closed-form rank-r regression of ``y_t`` on the projected lag ``Q'y_{t-k}``.

    Minimizes ``sum_t || y_t - A H' Q'y_{t-k} ||^2`` over p-by-r
    column-orthonormal ``A`` and q-by-r ``H``.  The minimizing ``A``
    consists of the top-r eigenvectors of
    ``Omega(k) Q (Q' Omega Q)^{-1} Q' Omega(k)'``; ``H`` is then the
    ordinary least-squares coefficient for that ``A``.

    Returns ``(A_hat, H_hat, objective)`` with the objective evaluated
    exactly on the ``n - k`` usable time points.
    """
    panel = demean(panel)
    n, p = panel.n, panel.p
    if k < 1:
        raise InvalidConfig(f"lag k must be >= 1, got {k}")
    if n - k < 2:
        raise InvalidConfig(f"lag k={k} leaves fewer than 2 usable observations")
    if not 1 <= r <= q <= min(p, n - k):
        raise InvalidConfig(
            f"need 1 <= r <= q <= min(p, n-k) = {min(p, n - k)}, got r={r}, q={q}"
        )
    covs = sample_autocov(panel, k)
    w = weight_matrix(covs, q)
    b = _half_weighted(covs.lags[k - 1], w)
    u, _, _ = np.linalg.svd(b, full_matrices=False)
    a = _fix_signs(u[:, :r])
    y = panel.data
    ytil = y[: n - k] @ w.Q
    h = _ridgeless_solve(ytil, y[k:] @ a)
    resid = y[k:] - (ytil @ h) @ a.T
    return a, h, float(np.sum(resid**2))


def two_step(
    panel: TimePanel, cfg: EstimatorConfig
) -> tuple[FactorFit, FactorFit, TimePanel]:
    """Fit strong factors, project them out, refit on the residuals.

    The residual rows are ``y_t - A_hat A_hat' y_t``, so factors missed
    by the first pass — typically weaker ones — dominate the second.
    Returns ``(strong, weak, residual_panel)``.
    """
    panel = demean(panel)
    strong = estimate(panel, cfg)
    resid = panel.data - strong.factors @ strong.A_hat.T
    residual_panel = TimePanel(resid, names=panel.names, demeaned=True)
    weak = estimate(residual_panel, cfg)
    return strong, weak, residual_panel
