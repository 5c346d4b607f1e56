"""Ordinary least squares via pivoted QR."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg

RANK_RTOL = 1e-10


class FitError(ValueError):
    pass


class RankDeficientError(FitError):
    def __init__(self, columns: Sequence[str]):
        super().__init__(f"design matrix is rank deficient; collinear columns: {', '.join(columns)}")
        self.columns = list(columns)


class SampleSizeError(FitError):
    def __init__(self, required: int, got: int, where: str = ""):
        loc = f" for {where}" if where else ""
        super().__init__(f"insufficient rows{loc}: need at least {required}, got {got}")
        self.required = required
        self.got = got


@dataclass(frozen=True)
class OLSResult:
    coef: np.ndarray        # (q, k)
    fitted: np.ndarray      # (n, k)
    hat: np.ndarray         # (n,)


def ols(x: np.ndarray, y: np.ndarray, names: Sequence[str] | None = None) -> OLSResult:
    """Least squares for every column of ``y`` from one QR of ``x``.

    Never forms the normal equations. Rank is judged from the pivoted R
    diagonal; a deficient matrix raises :class:`RankDeficientError` naming
    the columns that pivoting pushed past the numerical rank.
    """
    n, q = x.shape
    if n < q:
        raise SampleSizeError(q, n)
    y2 = y.reshape(n, -1)
    qmat, r, piv = scipy.linalg.qr(x, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    tol = RANK_RTOL * diag[0] * max(n, q) if q else 0.0
    rank = int(np.sum(diag > tol))
    if rank < q:
        labels = list(names) if names is not None else [f"x{i}" for i in range(q)]
        raise RankDeficientError([labels[j] for j in piv[rank:]])
    beta_p = scipy.linalg.solve_triangular(r, qmat.T @ y2)
    coef = np.empty_like(beta_p)
    coef[piv] = beta_p
    hat = np.sum(qmat * qmat, axis=1)
    return OLSResult(coef, x @ coef, hat)


def loo_residuals(y: np.ndarray, fit: OLSResult) -> np.ndarray:
    """Leave-one-out residuals from the hat-matrix identity e_i / (1 - h_ii)."""
    resid = y.reshape(len(y), -1) - fit.fitted
    denom = 1.0 - fit.hat
    with np.errstate(divide="ignore", invalid="ignore"):
        out = resid / denom[:, None]
    leverage_one = denom <= 1e-12
    out[leverage_one] = np.where(np.abs(resid[leverage_one]) <= 1e-12, 0.0, np.inf)
    return out
