"""Two-stage least squares for the linear matching model.

Stage 1 regresses y1 on (1, x1, x2) in sample A; stage 2 regresses y2 on
(1, x1, yhat1) in sample B with yhat1 predicted from stage 1.  Used both as
a standalone estimator and as a consistency cross-check for the fractional
imputation engine.
"""

from __future__ import annotations

import numpy as np

from .data import MatchingProblem
from .errors import WeakInstrumentError
from .numerics import FitResult, ols_fit

WEAK_INSTRUMENT_T = 1e-6


def _with_intercept(*blocks) -> np.ndarray:
    n = blocks[0].shape[0]
    return np.column_stack([np.ones(n), *[b for b in blocks if b.shape[1] > 0]])


def first_stage(problem: MatchingProblem) -> FitResult:
    """OLS of y1 on (1, x1, x2) over sample A, with the weak-instrument guard."""
    a = problem.sample_a
    X = _with_intercept(a.x1, a.x2)
    fit = ols_fit(X, a.y, a.weights)
    k1 = a.x1.shape[1]
    inst = slice(1 + k1, X.shape[1])
    se = np.sqrt(np.maximum(np.diag(fit.xtx_inverse)[inst] * fit.residual_variance, 0.0))
    coef = fit.coefficients[inst]
    with np.errstate(divide="ignore", invalid="ignore"):
        tstat = np.where(se > 0, np.abs(coef) / se, np.where(coef != 0, np.inf, 0.0))
    if np.all(tstat < WEAK_INSTRUMENT_T):
        raise WeakInstrumentError(
            "all instrument coefficients are numerically zero "
            f"(max |t| = {np.max(tstat):.3e}); x2 does not move y1"
        )
    return fit


def two_stage_least_squares(problem: MatchingProblem) -> FitResult:
    """2SLS estimate of (beta0, beta_x1, beta_y1); returns the stage-2 fit.

    No small-sample correction is applied: each stage is a plain
    (weighted) least-squares fit.  The weak-instrument check is a guard
    against a numerically void first stage, not an inference procedure.
    """
    stage1 = first_stage(problem)
    b = problem.sample_b
    Xb = _with_intercept(b.x1, b.x2)
    y1_hat = Xb @ stage1.coefficients
    Z = _with_intercept(b.x1, y1_hat[:, None])
    return ols_fit(Z, b.y, b.weights)
