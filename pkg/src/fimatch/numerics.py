"""Small-dimension regression and optimization kernels.

Everything here operates on dense float64 arrays with a handful of columns.
Normal equations are solved by an explicit Cholesky factorization with a
pivot-based rank check so that singular designs fail deterministically and
name the offending column.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EvaluationError, NonConvergenceError, SingularMatrixError

RANK_TOL = 1e-12
DEFAULT_MAX_ITER = 100
DEFAULT_TOL_SCORE = 1e-10


@dataclass(frozen=True)
class FitResult:
    """Result of a least-squares or maximum-likelihood fit.

    ``xtx_inverse`` is the inverse of the (weighted) normal-equations matrix,
    i.e. the inverse observed information for MLE fits.  For logistic fits
    ``residual_variance`` stores the mean deviance (-2 * mean log-likelihood).
    """

    coefficients: np.ndarray
    residual_variance: float
    xtx_inverse: np.ndarray
    converged: bool = True
    iterations: int = 0


def _as_design(X, y, w):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float).ravel()
    n, p = X.shape
    if y.shape[0] != n:
        raise ValueError(f"design has {n} rows but response has {y.shape[0]}")
    if n < p:
        raise ValueError(f"need at least as many rows ({n}) as columns ({p})")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("design matrix and response must be finite")
    if w is not None:
        w = np.asarray(w, dtype=float).ravel()
        if w.shape[0] != n:
            raise ValueError(f"weights have length {w.shape[0]}, expected {n}")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and nonnegative")
        if w.sum() <= 0:
            raise ValueError("weights must have positive sum")
    return X, y, w


def cholesky_factor(A: np.ndarray, tol: float = RANK_TOL) -> np.ndarray:
    """Lower Cholesky factor of a symmetric PD matrix with a rank check.

    A pivot below ``tol`` times the largest diagonal entry raises
    :class:`SingularMatrixError` carrying the pivot index.
    """
    A = np.asarray(A, dtype=float)
    p = A.shape[0]
    L = np.zeros_like(A)
    threshold = tol * max(np.max(np.diag(A)), tol)
    for j in range(p):
        d = A[j, j] - L[j, :j] @ L[j, :j]
        if d <= threshold:
            raise SingularMatrixError(
                f"matrix is singular at pivot {j} (pivot value {d:.3e})", pivot=j
            )
        L[j, j] = np.sqrt(d)
        if j + 1 < p:
            L[j + 1 :, j] = (A[j + 1 :, j] - L[j + 1 :, :j] @ L[j, :j]) / L[j, j]
    return L


def solve_spd(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve A x = b for symmetric positive-definite A via Cholesky."""
    L = cholesky_factor(A)
    z = np.linalg.solve(L, b)
    return np.linalg.solve(L.T, z)


def spd_inverse(A: np.ndarray) -> np.ndarray:
    """Inverse of a symmetric positive-definite matrix, symmetrized."""
    inv = solve_spd(A, np.eye(A.shape[0]))
    return 0.5 * (inv + inv.T)


def ols_fit(X, y, w=None) -> FitResult:
    """Ordinary or weighted least squares via the normal equations.

    Parameters
    ----------
    X : (n, p) array
        Design matrix including any intercept column.
    y : (n,) array
        Response.
    w : (n,) array, optional
        Nonnegative case weights.  Coefficients are invariant to rescaling
        all weights by a positive constant.

    Returns
    -------
    FitResult
        ``residual_variance`` is weighted SSR / (sum(w) - p); with unit
        weights this is the usual SSR / (n - p).  ``xtx_inverse`` is
        (X' W X)^{-1} on the raw weight scale.
    """
    X, y, w = _as_design(X, y, w)
    n, p = X.shape
    if w is None:
        sw = float(n)
        Xw = X
        xtx = X.T @ X
        xty = X.T @ y
    else:
        sw = float(w.sum())
        # Solve on the normalized weight scale so the coefficient path is
        # bitwise independent of the overall weight scale.
        wn = w / (sw / n)
        Xw = X * wn[:, None]
        xtx = X.T @ Xw
        xty = Xw.T @ y
    beta = solve_spd(xtx, xty)
    resid = y - X @ beta
    if w is None:
        ssr = float(resid @ resid)
        xtx_raw = xtx
    else:
        ssr = float(resid @ (w * resid))
        xtx_raw = X.T @ (X * w[:, None])
    dof = sw - p
    if dof <= 0:
        raise ValueError(f"nonpositive degrees of freedom ({dof:g}) in ols_fit")
    return FitResult(
        coefficients=beta,
        residual_variance=max(ssr / dof, 0.0),
        xtx_inverse=spd_inverse(xtx_raw),
        converged=True,
        iterations=0,
    )


def _logistic_loglik(eta, y, w):
    ll = y * eta - np.logaddexp(0.0, eta)
    return float(ll @ w)


def logistic_fit(
    X,
    y,
    w=None,
    max_iter: int = DEFAULT_MAX_ITER,
    tol_score: float = DEFAULT_TOL_SCORE,
) -> FitResult:
    """Weighted logistic regression by damped Newton-Raphson.

    The fit stops when the largest absolute score component falls below
    ``tol_score``.  Each Newton step is halved up to 30 times whenever the
    log-likelihood would decrease, which guards separation-adjacent data.

    Raises
    ------
    ValueError
        If the response is not binary or only one class is present.
    NonConvergenceError
        When ``max_iter`` is exhausted, typically under perfect separation.
    """
    X, y, w = _as_design(X, y, w)
    n, p = X.shape
    if not np.all((y == 0.0) | (y == 1.0)):
        raise ValueError("logistic response must contain only 0 and 1")
    if w is None:
        w = np.ones(n)
    ybar = (y * w).sum() / w.sum()
    if ybar <= 0.0 or ybar >= 1.0:
        raise ValueError("both response classes must be present in logistic_fit")

    beta = np.zeros(p)
    eta = X @ beta
    ll = _logistic_loglik(eta, y, w)
    iterations = 0
    for iterations in range(1, max_iter + 1):
        prob = 1.0 / (1.0 + np.exp(-eta))
        score = X.T @ (w * (y - prob))
        if np.max(np.abs(score)) < tol_score:
            info = X.T @ (X * (w * prob * (1.0 - prob))[:, None])
            return FitResult(
                coefficients=beta,
                residual_variance=max(-2.0 * ll / w.sum(), 0.0),
                xtx_inverse=spd_inverse(info),
                converged=True,
                iterations=iterations - 1,
            )
        info = X.T @ (X * (w * prob * (1.0 - prob))[:, None])
        step = solve_spd(info, score)
        scale = 1.0
        for _ in range(30):
            eta_new = X @ (beta + scale * step)
            ll_new = _logistic_loglik(eta_new, y, w)
            if ll_new >= ll - 1e-12:
                break
            scale *= 0.5
        beta = beta + scale * step
        eta = X @ beta
        ll = _logistic_loglik(eta, y, w)
    raise NonConvergenceError(
        "logistic_fit did not converge after "
        f"{max_iter} iterations (max |coef| = {np.max(np.abs(beta)):.3g}; "
        "perfect separation is the usual cause)",
        last_iterate=beta,
    )


def fd_gradient(f, at, h: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of a scalar function of a vector.

    Raises :class:`EvaluationError` if any evaluation is non-finite.
    """
    at = np.asarray(at, dtype=float)
    grad = np.empty_like(at)
    for i in range(at.size):
        up = at.copy()
        dn = at.copy()
        up[i] += h
        dn[i] -= h
        fu, fd = f(up), f(dn)
        if not (np.isfinite(fu) and np.isfinite(fd)):
            raise EvaluationError(f"non-finite evaluation in fd_gradient at component {i}")
        grad[i] = (fu - fd) / (2.0 * h)
    return grad


def fd_jacobian(f, at, h: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian of a vector function of a vector."""
    at = np.asarray(at, dtype=float)
    f0 = np.atleast_1d(np.asarray(f(at), dtype=float))
    jac = np.empty((f0.size, at.size))
    for i in range(at.size):
        up = at.copy()
        dn = at.copy()
        up[i] += h
        dn[i] -= h
        fu = np.atleast_1d(np.asarray(f(up), dtype=float))
        fd = np.atleast_1d(np.asarray(f(dn), dtype=float))
        if not (np.all(np.isfinite(fu)) and np.all(np.isfinite(fd))):
            raise EvaluationError(f"non-finite evaluation in fd_jacobian at component {i}")
        jac[:, i] = (fu - fd) / (2.0 * h)
    return jac


def damped_newton_root(equation, x0, jacobian=None, tol: float = 1e-10, max_iter: int = 100):
    """Solve equation(x) = 0 by Newton iteration with step halving.

    ``jacobian`` defaults to a central finite-difference approximation.
    Returns the root; raises :class:`NonConvergenceError` with the last
    iterate attached when the iteration budget is exhausted.
    """
    x = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
    g = np.atleast_1d(np.asarray(equation(x), dtype=float))
    norm = np.max(np.abs(g))
    for _ in range(max_iter):
        if norm < tol:
            return x
        J = jacobian(x) if jacobian is not None else fd_jacobian(equation, x)
        J = np.atleast_2d(np.asarray(J, dtype=float))
        try:
            step = np.linalg.solve(J, -g)
        except np.linalg.LinAlgError as exc:
            raise NonConvergenceError(
                f"singular Jacobian in damped_newton_root: {exc}", last_iterate=x
            ) from exc
        scale = 1.0
        for _ in range(30):
            x_new = x + scale * step
            g_new = np.atleast_1d(np.asarray(equation(x_new), dtype=float))
            norm_new = np.max(np.abs(g_new))
            if np.all(np.isfinite(g_new)) and norm_new < norm:
                break
            scale *= 0.5
        else:
            raise NonConvergenceError(
                "damped_newton_root could not reduce the residual "
                f"(norm {norm:.3e})",
                last_iterate=x,
            )
        x, g, norm = x_new, g_new, norm_new
    if norm < tol:
        return x
    raise NonConvergenceError(
        f"damped_newton_root did not converge (residual norm {norm:.3e})",
        last_iterate=x,
    )
