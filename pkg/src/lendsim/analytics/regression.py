"""OLS with Newey-West errors and logistic regression with clustered errors."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import special, stats


class RegressionError(ValueError):
    pass


class RankDeficient(RegressionError):
    pass


class ConvergenceFailure(RegressionError):
    pass


class PerfectSeparation(RegressionError):
    pass


@dataclass
class RegressionResult:
    names: list
    params: np.ndarray
    cov: np.ndarray
    se_method: str
    nobs: int
    resid: np.ndarray
    fitted: np.ndarray
    r2: Optional[float] = None
    pseudo_r2: Optional[float] = None
    llf: Optional[float] = None
    n_iter: int = 0
    n_clusters: Optional[int] = None
    extra: dict = field(default_factory=dict)

    @property
    def bse(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.cov), 0.0, None))

    @property
    def tvalues(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.params / self.bse

    @property
    def pvalues(self) -> np.ndarray:
        return 2 * stats.norm.sf(np.abs(self.tvalues))

    def summary_table(self, title: str = "") -> str:
        return format_table(self, title)


def _stars(p: float) -> str:
    if np.isnan(p):
        return ""
    return "***" if p < 0.01 else "**" if p < 0.05 else "*" if p < 0.10 else ""


def format_table(res: RegressionResult, title: str = "") -> str:
    """Coefficient with stars, standard error in parentheses beneath."""
    w = max(12, max(len(n) for n in res.names) + 2)
    lines = [title] if title else []
    lines.append("-" * (w + 18))
    for name, b, se, p in zip(res.names, res.params, res.bse, res.pvalues):
        lines.append(f"{name:<{w}}{b:>14.4f}{_stars(p):<4}")
        lines.append(f"{'':<{w}}{'(' + format(se, '.4f') + ')':>14}")
    lines.append("-" * (w + 18))
    lines.append(f"{'Observations':<{w}}{res.nobs:>14d}")
    if res.r2 is not None:
        lines.append(f"{'R-squared':<{w}}{res.r2:>14.4f}")
    if res.pseudo_r2 is not None:
        lines.append(f"{'Pseudo R2':<{w}}{res.pseudo_r2:>14.4f}")
    lines.append(f"SE: {res.se_method}.  * p<0.10, ** p<0.05, *** p<0.01")
    return "\n".join(lines) + "\n"


def _check(X: np.ndarray, y: np.ndarray, names: Optional[Sequence[str]]):
    X = np.asarray(X, float)
    y = np.asarray(y, float)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise RegressionError("X must be n x k and y length n")
    n, k = X.shape
    if n <= k:
        raise RegressionError(f"need more rows ({n}) than columns ({k})")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise RegressionError("missing or infinite cells")
    if np.linalg.matrix_rank(X) < k:
        raise RankDeficient("regressor matrix is rank deficient")
    names = list(names) if names is not None else [f"x{i}" for i in range(k)]
    if len(names) != k:
        raise RegressionError("names must match columns")
    return X, y, names


def newey_west_meat(scores: np.ndarray, lag: int) -> np.ndarray:
    """Bartlett-weighted sum of score autocovariances (no small-sample scaling)."""
    S = scores.T @ scores
    for j in range(1, lag + 1):
        w = 1 - j / (lag + 1)
        G = scores[j:].T @ scores[:-j]
        S += w * (G + G.T)
    return S


def ols_newey_west(X, y, lag: int = 1, names: Optional[Sequence[str]] = None) -> RegressionResult:
    """OLS coefficients with HAC covariance, Bartlett kernel up to ``lag``.

    With ``lag=0`` the covariance is exactly White's HC0.
    """
    if lag < 0:
        raise RegressionError("lag must be non-negative")
    X, y, names = _check(X, y, names)
    XtX_inv = np.linalg.inv(X.T @ X)
    beta = XtX_inv @ (X.T @ y)
    fitted = X @ beta
    resid = y - fitted
    meat = newey_west_meat(X * resid[:, None], lag)
    cov = XtX_inv @ meat @ XtX_inv
    cov = (cov + cov.T) / 2
    tss = float(((y - y.mean()) ** 2).sum())
    r2 = 1 - float(resid @ resid) / tss if tss > 0 else 1.0
    method = "HC0" if lag == 0 else f"Newey-West (lag {lag})"
    return RegressionResult(names, beta, cov, method, len(y), resid, fitted, r2=r2)


def _loglik(y, p):
    p = np.clip(p, 1e-300, 1 - 1e-16)
    return float(np.sum(y * np.log(p) + (1 - y) * np.log1p(-p)))


def logistic_clustered(X, y, clusters, names: Optional[Sequence[str]] = None,
                       tol: float = 1e-10, max_iter: int = 100) -> RegressionResult:
    """Logit by IRLS with a cluster-robust sandwich covariance.

    Scores are summed within clusters; no finite-cluster correction is
    applied, so one cluster per row gives the HC0-robust logit covariance.
    """
    X, y, names = _check(X, y, names)
    if not np.isin(y, (0.0, 1.0)).all():
        raise RegressionError("labels must be 0 or 1")
    clusters = np.asarray(clusters)
    if clusters.shape != y.shape:
        raise RegressionError("one cluster id per row")
    uniq, inv = np.unique(clusters, return_inverse=True)
    if len(uniq) < 2:
        raise RegressionError("need at least two clusters")
    if y.min() == y.max():
        raise PerfectSeparation("all labels identical")

    beta = np.zeros(X.shape[1])
    ybar = y.mean()
    has_const = np.any(np.all(X == 1.0, axis=0))
    if has_const:
        beta[np.argmax(np.all(X == 1.0, axis=0))] = np.log(ybar / (1 - ybar))
    converged = False
    for it in range(1, max_iter + 1):
        eta = X @ beta
        p = special.expit(eta)
        w = p * (1 - p)
        H = X.T @ (X * w[:, None])
        try:
            step = np.linalg.solve(H, X.T @ (y - p))
        except np.linalg.LinAlgError:
            break
        beta = beta + step
        if np.max(np.abs(step)) < tol:
            converged = True
            break
    eta = X @ beta
    extreme = np.abs(eta) > 25
    if extreme.any() and np.all((eta[extreme] > 0) == (y[extreme] == 1)):
        raise PerfectSeparation("labels are (quasi-)perfectly separated by the regressors")
    if not converged:
        raise ConvergenceFailure(f"IRLS did not converge in {max_iter} iterations")
    p = special.expit(eta)
    H = X.T @ (X * (p * (1 - p))[:, None])
    H_inv = np.linalg.inv(H)
    scores = X * (y - p)[:, None]
    summed = np.zeros((len(uniq), X.shape[1]))
    np.add.at(summed, inv, scores)
    cov = H_inv @ (summed.T @ summed) @ H_inv
    cov = (cov + cov.T) / 2
    llf = _loglik(y, p)
    ll0 = _loglik(y, np.full_like(y, ybar))
    return RegressionResult(names, beta, cov, "clustered by address", len(y), y - p, p,
                            pseudo_r2=1 - llf / ll0, llf=llf, n_iter=it, n_clusters=len(uniq))
