"""Statistical kernels: least squares, distribution tails, Cox regression.

These are deterministic, side-effect-free functions shared by the
screening and scoring layers. Tail probabilities delegate to scipy's
regularized incomplete beta/gamma routines.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special


class NumericError(ValueError):
    """Domain violation or failed numerical procedure."""


class ConvergenceError(NumericError):
    """Iterative fit failed to converge; carries the last iterate."""

    def __init__(self, message: str, last_beta: np.ndarray):
        super().__init__(message)
        self.last_beta = last_beta


class SeparationError(NumericError):
    """Diverging coefficients, typically complete separation in Cox fits."""


@dataclass(frozen=True)
class FitResult:
    """Outcome of a model fit.

    ``rss`` is populated for Gaussian fits only. ``null_log_likelihood``
    is populated by :func:`cox_fit` (partial log-likelihood at beta = 0)
    so callers can form likelihood-ratio statistics.
    """

    coefficients: np.ndarray
    log_likelihood: float
    n_params: int
    rss: float | None = None
    null_log_likelihood: float | None = None
    rank_deficient: bool = False
    iterations: int = 0


def least_squares(y: np.ndarray, X: np.ndarray) -> FitResult:
    """Ordinary least squares of ``y`` on the columns of ``X``.

    The caller supplies the intercept column. The Gaussian log-likelihood
    is evaluated at the MLE variance ``rss / n``; an exact fit (rss = 0)
    yields a +inf sentinel that scoring rejects. Rank-deficient designs
    are solved by pseudo-inverse and flagged rather than rejected.
    """
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise NumericError("design matrix rows must match response length")
    n, k = X.shape
    if k >= n:
        raise NumericError(f"need more rows ({n}) than columns ({k})")
    beta, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ beta
    rss = float(resid @ resid)
    # residue below double precision of the fit is an exact fit
    if rss <= 1e-24 * max(float(y @ y), 1.0):
        rss = 0.0
        ll = math.inf
    else:
        ll = -0.5 * n * (math.log(2.0 * math.pi * rss / n) + 1.0)
    return FitResult(
        coefficients=beta,
        log_likelihood=ll,
        n_params=k + 1,
        rss=rss,
        rank_deficient=rank < k,
    )


def student_t_sf(t: float, df: float) -> float:
    """P(T > t) for Student's t with ``df`` degrees of freedom."""
    if df <= 0:
        raise NumericError(f"degrees of freedom must be positive, got {df}")
    # regularized incomplete beta: P(T > t) = I_{df/(df+t^2)}(df/2, 1/2) / 2 for t >= 0
    x = df / (df + t * t)
    half_tail = 0.5 * float(special.betainc(0.5 * df, 0.5, x))
    return half_tail if t >= 0 else 1.0 - half_tail


def chisq_sf(x: float, df: float) -> float:
    """P(X > x) for chi-squared with ``df`` degrees of freedom."""
    if df <= 0:
        raise NumericError(f"degrees of freedom must be positive, got {df}")
    if x < 0:
        raise NumericError(f"chi-squared statistic must be nonnegative, got {x}")
    return float(special.gammaincc(0.5 * df, 0.5 * x))


def log_mvgamma(a: float, p: int) -> float:
    """Log of the multivariate gamma function Gamma_p(a)."""
    if p < 1:
        raise NumericError(f"dimension must be a positive integer, got {p}")
    if a <= 0.5 * (p - 1):
        raise NumericError(f"log_mvgamma requires a > (p-1)/2, got a={a}, p={p}")
    return float(special.multigammaln(a, p))


def _cox_loglik_derivs(
    beta: np.ndarray,
    time: np.ndarray,
    status: np.ndarray,
    X: np.ndarray,
    want_derivs: bool = True,
) -> tuple[float, np.ndarray | None, np.ndarray | None]:
    """Breslow partial log-likelihood with gradient and Hessian.

    Rows must be sorted by descending time so risk sets accumulate as
    prefixes; tied times share one risk-set term per event.
    """
    n, k = X.shape
    eta = X @ beta
    eta = np.clip(eta, -700, 700)
    w = np.exp(eta)

    ll = 0.0
    grad = np.zeros(k) if want_derivs else None
    hess = np.zeros((k, k)) if want_derivs else None

    s0 = 0.0
    s1 = np.zeros(k)
    s2 = np.zeros((k, k))
    i = 0
    while i < n:
        j = i
        while j < n and time[j] == time[i]:
            j += 1
        # everyone with this time enters the risk set before its events score
        for r in range(i, j):
            s0 += w[r]
            xw = X[r] * w[r]
            s1 += xw
            if want_derivs:
                s2 += np.outer(X[r], xw)
        log_s0 = math.log(s0)
        mean = s1 / s0
        for r in range(i, j):
            if status[r] == 1:
                ll += eta[r] - log_s0
                if want_derivs:
                    grad += X[r] - mean
                    hess -= s2 / s0 - np.outer(mean, mean)
        i = j
    return ll, grad, hess


def cox_fit(
    time: np.ndarray,
    status: np.ndarray,
    X: np.ndarray,
    max_iter: int = 50,
    tol: float = 1e-8,
) -> FitResult:
    """Cox proportional-hazards fit by Newton-Raphson (Breslow ties).

    Returns the partial log-likelihood at the optimum and at beta = 0.
    Steps are halved when the likelihood would decrease; diverging
    coefficients raise :class:`SeparationError` and hitting the iteration
    budget raises :class:`ConvergenceError` with the last iterate.
    """
    time = np.asarray(time, dtype=float)
    status = np.asarray(status, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n = time.shape[0]
    if status.shape[0] != n or X.shape[0] != n:
        raise NumericError("time, status and design rows must agree")
    if np.any(time <= 0):
        raise NumericError("survival times must be positive")
    if not np.any(status == 1):
        raise NumericError("at least one event (status = 1) is required")

    order = np.argsort(-time, kind="stable")
    time, status, X = time[order], status[order], X[order]
    k = X.shape[1]

    ll0, _, _ = _cox_loglik_derivs(np.zeros(k), time, status, X, want_derivs=False)
    if k == 0:
        return FitResult(
            coefficients=np.zeros(0),
            log_likelihood=ll0,
            n_params=0,
            null_log_likelihood=ll0,
        )

    beta = np.zeros(k)
    ll = ll0
    for it in range(1, max_iter + 1):
        _, grad, hess = _cox_loglik_derivs(beta, time, status, X)
        info = -hess
        try:
            step = np.linalg.solve(info, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(info, grad, rcond=None)[0]

        # halve the step until the partial likelihood does not decrease
        scale = 1.0
        for _ in range(30):
            candidate = beta + scale * step
            ll_new, _, _ = _cox_loglik_derivs(candidate, time, status, X, want_derivs=False)
            if ll_new >= ll - 1e-12:
                break
            scale *= 0.5
        else:
            candidate, ll_new = beta, ll

        delta = float(np.max(np.abs(candidate - beta)))
        beta, ll = candidate, ll_new
        if np.any(np.abs(beta) > 50):
            raise SeparationError(
                "coefficients diverged; covariate likely separates the event times"
            )
        if delta < tol:
            return FitResult(
                coefficients=beta,
                log_likelihood=ll,
                n_params=k,
                null_log_likelihood=ll0,
                iterations=it,
            )
    raise ConvergenceError(f"Cox fit did not converge in {max_iter} iterations", beta)
