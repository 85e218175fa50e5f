"""Row and column factor estimation for matrix-valued time series.

An observation here is a p1-by-p2 matrix Y_t following
``Y_t = R X_t C' + E_t`` with a row loading R and a column loading C.
The row loading space is recovered from the aggregate

    M1 = sum_k sum_i sum_j  Omega_ij(k) W_j Omega_ij(k)'

where ``Omega_ij(k)`` is the lag-k cross-autocovariance between the
i-th and j-th column slices of the panel and ``W_j`` is the rank-q1
calibration weight built from the j-th slice's lag-0 covariance, exactly
as in the vector estimator.  The column side is the same computation on
the transposed observations.  With p2 = 1 everything reduces to the
vector pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import (
    IllConditioned,
    InvalidConfig,
    InvalidData,
    InvalidLag,
    PreconditionViolated,
)
from .factor import _COND_FLOOR, WeightMatrix
from .tsstats import sym_eigen

__all__ = [
    "MatrixPanel",
    "MatrixFactorFit",
    "demean_matrix",
    "cross_autocov_1",
    "cross_autocov_2",
    "m_hat_rows",
    "m_hat_cols",
    "estimate_matrix",
]

_DEFAULT_Q = 15


@dataclass(frozen=True)
class MatrixPanel:
    """n observations of a p1-by-p2 matrix series, time along axis 0."""

    data: np.ndarray
    demeaned: bool = False

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        object.__setattr__(self, "data", data)
        if data.ndim != 3:
            raise InvalidData(f"matrix panel must be 3-d (n, p1, p2), got shape {data.shape}")
        if data.shape[0] < 2:
            raise InvalidData("matrix panel needs at least 2 observations")
        if data.shape[1] < 1 or data.shape[2] < 1:
            raise InvalidData("matrix observations must be at least 1x1")
        if not np.all(np.isfinite(data)):
            raise InvalidData("matrix panel contains non-finite entries")
        if self.demeaned and np.abs(data.mean(axis=0)).max() > 1e-8:
            raise InvalidData("panel flagged demeaned but the mean matrix is not 0")

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def p1(self) -> int:
        return self.data.shape[1]

    @property
    def p2(self) -> int:
        return self.data.shape[2]


def demean_matrix(panel: MatrixPanel) -> MatrixPanel:
    """Subtract the full-sample mean matrix from every observation."""
    if panel.demeaned:
        return panel
    return MatrixPanel(panel.data - panel.data.mean(axis=0), demeaned=True)


def _transposed(panel: MatrixPanel) -> MatrixPanel:
    return MatrixPanel(panel.data.transpose(0, 2, 1), demeaned=panel.demeaned)


def cross_autocov_1(panel: MatrixPanel, k: int, i: int, j: int) -> np.ndarray:
    """Lag-k cross-covariance of column slices i and j, a p1 x p1 matrix.

    Computes ``(1/(n-k)) * sum_t y[t, :, i] y[t-k, :, j]'`` over the
    demeaned panel.
    """
    if not panel.demeaned:
        raise PreconditionViolated("cross-autocovariances need a demeaned panel")
    n = panel.n
    if not 0 <= k <= n - 2:
        raise InvalidLag(f"lag must be in [0, n-2] = [0, {n - 2}], got {k}")
    if not (0 <= i < panel.p2 and 0 <= j < panel.p2):
        raise InvalidData(f"column indices must be in [0, {panel.p2 - 1}], got {(i, j)}")
    lead = panel.data[k:, :, i]
    lagged = panel.data[: n - k, :, j]
    return lead.T @ lagged / (n - k)


def cross_autocov_2(panel: MatrixPanel, k: int, i: int, j: int) -> np.ndarray:
    """Lag-k cross-covariance of row slices i and j, a p2 x p2 matrix."""
    return cross_autocov_1(_transposed(panel), k, i, j)


def _slice_weight(cov0: np.ndarray, q: int, label: str) -> WeightMatrix:
    """Rank-q calibration weight from one slice's lag-0 covariance."""
    pairs = sym_eigen(cov0, q)
    theta = pairs.values
    floor = _COND_FLOOR * max(theta[0], 0.0)
    if theta[-1] <= floor:
        q_eff = int(np.sum(theta > floor))
        raise IllConditioned(
            f"lag-0 covariance of {label} is rank deficient at q={q} "
            f"(theta_q={theta[-1]:.3e} vs floor {floor:.3e}); largest admissible q is {q_eff}",
            q_effective=q_eff,
        )
    return WeightMatrix(Q=pairs.vectors, theta=theta, q=q)


def m_hat_rows(panel: MatrixPanel, m: int = 2, q1: Optional[int] = None) -> np.ndarray:
    """Weight-calibrated aggregate whose top eigenvectors span the row space.

    Accumulates ``Omega_ij(k) W_j Omega_ij(k)'`` over lags k = 1..m and
    all column-slice pairs (i, j), with each ``W_j`` the rank-q1 weight
    of slice j.  The panel is demeaned internally; the result is
    symmetrized, so its eigenvalues are real and nonnegative up to
    round-off.
    """
    panel = demean_matrix(panel)
    n, p1, p2 = panel.n, panel.p1, panel.p2
    if q1 is None:
        q1 = min(_DEFAULT_Q, p1, n)
    if not 1 <= q1 <= min(p1, n):
        raise InvalidConfig(f"q1 must be in [1, min(p1, n)] = [1, {min(p1, n)}], got {q1}")
    if m < 1:
        raise InvalidConfig(f"m must be >= 1, got {m}")
    if m > n - 2:
        raise InvalidLag(f"m must leave at least 2 usable observations, got m={m}, n={n}")
    halves = []
    for j in range(p2):
        w = _slice_weight(cross_autocov_1(panel, 0, j, j), q1, f"column slice {j}")
        halves.append(w.Q / np.sqrt(w.theta))
    out = np.zeros((p1, p1))
    flat = panel.data.reshape(n, p1 * p2)
    for k in range(1, m + 1):
        # one big product holds every Omega_ij(k): entry block [a,i],[b,j]
        cross = flat[k:].T @ flat[: n - k] / (n - k)
        cross = cross.reshape(p1, p2, p1, p2)
        for j in range(p2):
            stacked = cross[:, :, :, j].transpose(1, 0, 2) @ halves[j]
            out += np.einsum("ipq,irq->pr", stacked, stacked)
    return 0.5 * (out + out.T)


def m_hat_cols(panel: MatrixPanel, m: int = 2, q2: Optional[int] = None) -> np.ndarray:
    """Column-space analogue of :func:`m_hat_rows` (a p2 x p2 matrix)."""
    return m_hat_rows(_transposed(panel), m, q2)


@dataclass(frozen=True)
class MatrixFactorFit:
    """Estimated row/column loading bases with the spectra behind them."""

    R_hat: np.ndarray
    C_hat: np.ndarray
    d1: int
    d2: int
    row_spectrum: np.ndarray
    col_spectrum: np.ndarray
    row_ratios: np.ndarray
    col_ratios: np.ndarray
    q1_used: int
    q2_used: int

    def __post_init__(self):
        for name, basis, d in (("R_hat", self.R_hat, self.d1), ("C_hat", self.C_hat, self.d2)):
            if basis.shape[1] != d:
                raise InvalidData(f"{name} must have {d} columns")
            if np.abs(basis.T @ basis - np.eye(d)).max() > 1e-8:
                raise InvalidData(f"{name} is not orthonormal")
        for spectrum in (self.row_spectrum, self.col_spectrum):
            lead = max(float(spectrum[0]), 0.0)
            if spectrum.min() < -1e-10 * max(lead, 1.0):
                raise InvalidData("spectrum has a negative eigenvalue beyond round-off")
            if np.any(np.diff(spectrum) > 1e-12 * max(lead, 1.0)):
                raise InvalidData("spectrum is not sorted descending")


def _offset_ratio_argmax(values: np.ndarray, r_max: int, vartheta: float) -> tuple[int, np.ndarray]:
    """Smallest maximizer of ``(lam_j + vartheta) / (lam_j+1 + vartheta)``."""
    if r_max < 1:
        raise InvalidConfig(f"rank search needs r_max >= 1, got {r_max}")
    vals = np.maximum(values[: r_max + 1], 0.0)
    num = vals[:-1] + vartheta
    den = vals[1:] + vartheta
    if np.any(den == 0.0):
        raise InvalidConfig("degenerate spectrum: pass a positive vartheta or fix the rank")
    ratios = num / den
    return int(np.argmax(ratios)) + 1, ratios


def estimate_matrix(
    panel: MatrixPanel,
    m: int = 2,
    q1: Optional[int] = None,
    q2: Optional[int] = None,
    d1: Optional[int] = None,
    d2: Optional[int] = None,
    vartheta_scale: float = 0.1,
) -> MatrixFactorFit:
    """Estimate row and column loading spaces of a matrix factor model.

    ``R_hat`` holds the top-d1 eigenvectors of :func:`m_hat_rows` and
    ``C_hat`` the top-d2 eigenvectors of :func:`m_hat_cols`.  Unspecified
    ranks are chosen by the offset eigenvalue-ratio rule with offsets
    ``vartheta_scale * p1 / n`` and ``vartheta_scale * p2 / n``; the
    search runs below the weight rank (d < q), and ties keep the
    smallest rank.
    """
    if vartheta_scale < 0:
        raise InvalidConfig("vartheta_scale must be >= 0")
    panel = demean_matrix(panel)
    n, p1, p2 = panel.n, panel.p1, panel.p2
    q1 = min(_DEFAULT_Q, p1, n) if q1 is None else q1
    q2 = min(_DEFAULT_Q, p2, n) if q2 is None else q2
    for d, q, p, side in ((d1, q1, p1, "d1"), (d2, q2, p2, "d2")):
        if d is not None and not 1 <= d <= min(q, p):
            raise InvalidConfig(f"{side} must be in [1, min(q, p)] = [1, {min(q, p)}], got {d}")
    m1 = m_hat_rows(panel, m=m, q1=q1)
    m2 = m_hat_cols(panel, m=m, q2=q2)
    row_spectrum = sym_eigen(m1, p1).values
    col_spectrum = sym_eigen(m2, p2).values
    picked = []
    for d, q, p, spectrum in (
        (d1, q1, p1, row_spectrum),
        (d2, q2, p2, col_spectrum),
    ):
        vartheta = vartheta_scale * p / n
        r_max = min(q, p) - 1
        if d is None:
            if r_max < 1:
                raise InvalidConfig("rank selection needs q >= 2; fix the rank explicitly")
            d_hat, ratios = _offset_ratio_argmax(spectrum, r_max, vartheta)
        else:
            d_hat = d
            if r_max >= 1:
                _, ratios = _offset_ratio_argmax(spectrum, r_max, vartheta)
            else:
                ratios = np.empty(0)
        picked.append((d_hat, ratios))
    (d1_hat, row_ratios), (d2_hat, col_ratios) = picked
    return MatrixFactorFit(
        R_hat=sym_eigen(m1, d1_hat).vectors,
        C_hat=sym_eigen(m2, d2_hat).vectors,
        d1=d1_hat,
        d2=d2_hat,
        row_spectrum=row_spectrum,
        col_spectrum=col_spectrum,
        row_ratios=row_ratios,
        col_ratios=col_ratios,
        q1_used=q1,
        q2_used=q2,
    )
