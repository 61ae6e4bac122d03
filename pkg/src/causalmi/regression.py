"""Least squares with intercept, shared by scoring, fitting and effect estimation."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats

VARIANCE_FLOOR = 1e-12


class CollinearityWarning(UserWarning):
    pass


@dataclass(frozen=True)
class OlsFit:
    intercept: float
    coef: np.ndarray
    rss: float
    n: int
    rank: int
    xtx_pinv: np.ndarray | None  # (k+1, k+1) for [intercept, coef...]

    @property
    def n_params(self) -> int:
        return self.coef.size + 1

    @property
    def mle_variance(self) -> float:
        return max(self.rss / self.n, VARIANCE_FLOOR)

    def std_errors(self) -> np.ndarray:
        """Homoscedastic standard errors for ``[intercept, coef...]``."""
        if self.xtx_pinv is None:
            raise ValueError("fit was computed without the parameter covariance")
        dof = self.n - self.rank
        if dof <= 0:
            return np.full(self.n_params, np.nan)
        s2 = self.rss / dof
        return np.sqrt(np.maximum(np.diag(self.xtx_pinv), 0.0) * s2)

    def t_test(self, j: int) -> tuple[float, float]:
        """(standard error, two-sided p-value) for coefficient ``j``."""
        se = self.std_errors()[j + 1]
        beta = self.coef[j]
        dof = self.n - self.rank
        if not np.isfinite(se) or dof <= 0:
            return float("nan"), float("nan")
        if se == 0.0:
            return 0.0, 0.0 if beta != 0.0 else 1.0
        t = beta / se
        return float(se), float(2.0 * stats.t.sf(abs(t), dof))


def ols(y: np.ndarray, X: np.ndarray | None = None, warn: bool = True, with_cov: bool = True) -> OlsFit:
    """Regress ``y`` on the columns of ``X`` plus an intercept.

    Solved by SVD; a rank-deficient design yields the minimum-norm solution.
    """
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    if X is None:
        X = np.empty((n, 0))
    X = np.asarray(X, dtype=float).reshape(n, -1)
    k = X.shape[1]
    if n == 0:
        raise ValueError("no observations")
    if k == 0:
        mu = float(y.mean())
        rss = float(np.sum((y - mu) ** 2))
        return OlsFit(mu, np.empty(0), rss, n, 1, np.array([[1.0 / n]]))
    # centre for conditioning; intercept recovered afterwards
    xm = X.mean(axis=0)
    ym = y.mean()
    Xc = X - xm
    U, sv, Vt = np.linalg.svd(Xc, full_matrices=False)
    keep = sv > (sv[0] if sv.size else 0.0) * max(n, k) * np.finfo(float).eps
    U, sv, Vt = U[:, keep], sv[keep], Vt[keep]
    coef = Vt.T @ ((U.T @ (y - ym)) / sv)
    resid = (y - ym) - Xc @ coef
    rss = float(resid @ resid)
    rank = int(keep.sum()) + 1
    if rank < k + 1 and warn:
        warnings.warn(
            f"collinear design (rank {rank} < {k + 1}); using minimum-norm solution",
            CollinearityWarning,
            stacklevel=2,
        )
    intercept = float(ym - xm @ coef)
    cov = None
    if with_cov:
        # unscaled covariance of [intercept, coef] from the centred design
        C = (Vt.T / sv**2) @ Vt
        Cx = C @ xm
        cov = np.empty((k + 1, k + 1))
        cov[0, 0] = 1.0 / n + xm @ Cx
        cov[0, 1:] = cov[1:, 0] = -Cx
        cov[1:, 1:] = C
    return OlsFit(intercept, coef, rss, n, rank, cov)
