"""Generalized BIC selection of the projection dimension q.

For each candidate q the panel is regressed, one lag at a time, on its
own q-dimensional covariance projection under a rank constraint; the
residual mass trades off against a parameter-count penalty

    BIC_k(q) = p*n*log L_k(q) + C * d_k(q) * log(p*n),

where ``L_k(q)`` is the average squared residual of the rank-``r_hat``
fit at lag k and ``d_k(q) = (p+q)*r_hat - r_hat*(r_hat+1)/2`` counts the
free parameters of that fit.  The factor count ``r_hat`` is re-selected
at every candidate q by the eigenvalue-ratio rule, and the winning q
minimizes the total over lags k = 1..m.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidConfig
from .factor import (
    EstimatorConfig,
    _fix_signs,
    _half_weighted,
    _ridgeless_solve,
    rrr_solution,
    select_r,
    weight_matrix,
)
from .tsstats import TimePanel, demean, sample_autocov

__all__ = ["BicConfig", "BicTrace", "bic_k", "select_q"]


@dataclass(frozen=True)
class BicConfig:
    """Penalty constant C, candidate ceiling q0, and lag count m."""

    C: float = 0.2
    q0: int = 15
    m: int = 2

    def __post_init__(self):
        if self.C <= 0:
            raise InvalidConfig(f"penalty constant C must be positive, got {self.C}")
        if self.q0 < 3:
            raise InvalidConfig(f"q0 must be at least 3, got {self.q0}")
        if self.m < 1:
            raise InvalidConfig(f"m must be >= 1, got {self.m}")


@dataclass(frozen=True)
class BicTrace:
    """Everything the q scan computed, for reporting and auditing.

    ``per_lag_bic[k-1][i]`` is BIC_k at ``candidates[i]``; ``per_lag_L``
    and ``per_lag_d`` store the residual means and parameter counts the
    BIC values were assembled from; ``r_hat_per_candidate`` records the
    rank the ratio rule picked at each q.
    """

    candidates: tuple[int, ...]
    per_lag_bic: np.ndarray
    totals: np.ndarray
    q_hat: int
    r_bar: int
    per_lag_L: np.ndarray
    per_lag_d: np.ndarray
    r_hat_per_candidate: tuple[int, ...]

    def __post_init__(self):
        if self.q_hat not in self.candidates:
            raise InvalidConfig("selected q is not among the candidates")
        i = self.candidates.index(self.q_hat)
        if not np.all(self.totals[i] <= self.totals):
            raise InvalidConfig("selected q does not minimize the BIC totals")


def _bic_value(p: int, n: int, L: float, d: int, C: float) -> float:
    """Assemble one BIC value; an exact fit (L = 0) maps to -inf."""
    if L <= 0.0:
        return -math.inf
    return p * n * math.log(L) + C * d * math.log(p * n)


def _param_count(p: int, q: int, r: int) -> int:
    return (p + q) * r - r * (r + 1) // 2


def bic_k(panel: TimePanel, k: int, q: int, r_hat: int, C: float) -> float:
    """BIC of the rank-``r_hat`` lag-k regression at projection size q.

    An exact fit returns ``-inf`` (the scan treats that candidate as
    unbeatable); an ill-conditioned projection propagates
    :class:`~tsfactor.errors.IllConditioned`.
    """
    if r_hat >= q:
        raise InvalidConfig(f"r_hat={r_hat} must be smaller than q={q}")
    if C <= 0:
        raise InvalidConfig("penalty constant C must be positive")
    panel = demean(panel)
    _, _, objective = rrr_solution(panel, k, q, r_hat)
    n, p = panel.n, panel.p
    return _bic_value(p, n, objective / (p * n), _param_count(p, q, r_hat), C)


def select_q(panel: TimePanel, cfg: BicConfig, est_cfg: EstimatorConfig) -> BicTrace:
    """Scan q over ``(r_bar, q0]`` and pick the BIC minimizer.

    ``r_bar`` is the ratio-rule factor count at the ceiling ``q0``; only
    q values that leave room for at least that many factors compete.
    Ties go to the smallest q.  The returned trace carries the full BIC
    surface; determinism is bit-for-bit for identical inputs.
    """
    panel = demean(panel)
    n, p = panel.n, panel.p
    if cfg.q0 > min(p, n) - 1:
        raise InvalidConfig(
            f"q0={cfg.q0} must be at most min(p, n) - 1 = {min(p, n) - 1}"
        )
    covs = sample_autocov(panel, cfg.m)
    w0 = weight_matrix(covs, cfg.q0)
    y = panel.data
    vartheta = est_cfg.vartheta_scale * p / n

    # Per-lag half-products B_k with B_k B_k' = Omega(k) W Omega(k)'.  The
    # candidate-q objects are leading-column slices of the q0 ones because
    # the covariance eigenvectors are nested.
    halves = [_half_weighted(covs.lags[k - 1], w0) for k in range(1, cfg.m + 1)]
    proj = [y[: n - k] @ w0.Q for k in range(1, cfg.m + 1)]
    heads = [y[k:] for k in range(1, cfg.m + 1)]
    head_norms = [float(np.sum(h**2)) for h in heads]

    spectra0 = [np.linalg.svd(b, compute_uv=False) ** 2 for b in halves]
    r_bar, _ = select_r(spectra0, n, vartheta, cfg.q0 - 1)
    if r_bar >= cfg.q0:
        raise InvalidConfig(f"preliminary factor count {r_bar} leaves no candidate q")
    candidates = tuple(range(r_bar + 1, cfg.q0 + 1))

    n_cand = len(candidates)
    per_lag_bic = np.zeros((cfg.m, n_cand))
    per_lag_L = np.zeros((cfg.m, n_cand))
    per_lag_d = np.zeros((cfg.m, n_cand), dtype=int)
    r_hats = []
    for i, q in enumerate(candidates):
        lam = [np.linalg.svd(b[:, :q], compute_uv=False) ** 2 for b in halves]
        r_q, _ = select_r(lam, n, vartheta, q - 1)
        r_hats.append(r_q)
        d = _param_count(p, q, r_q)
        for k in range(1, cfg.m + 1):
            u, _, _ = np.linalg.svd(halves[k - 1][:, :q], full_matrices=False)
            a = _fix_signs(u[:, :r_q])
            target = heads[k - 1] @ a
            h = _ridgeless_solve(proj[k - 1][:, :q], target)
            fitted = proj[k - 1][:, :q] @ h
            objective = head_norms[k - 1] - 2.0 * float(np.sum(target * fitted)) + float(
                np.sum(fitted**2)
            )
            L = max(objective, 0.0) / (p * n)
            per_lag_L[k - 1, i] = L
            per_lag_d[k - 1, i] = d
            per_lag_bic[k - 1, i] = _bic_value(p, n, L, d, cfg.C)
    totals = per_lag_bic.sum(axis=0)
    q_hat = candidates[int(np.argmin(totals))]
    return BicTrace(
        candidates=candidates,
        per_lag_bic=per_lag_bic,
        totals=totals,
        q_hat=q_hat,
        r_bar=r_bar,
        per_lag_L=per_lag_L,
        per_lag_d=per_lag_d,
        r_hat_per_candidate=tuple(r_hats),
    )
