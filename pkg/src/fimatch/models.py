"""Parametric model objects used by every estimator.

Three families cover the toolkit: a (possibly heteroscedastic) normal linear
regression, a logistic regression, and a Gaussian marginal.  Each family
exposes the log-density, its gradient (score) and Hessian in the model
parameters, and random draws.  Variances are parameterized internally as
log sigma^2 so Newton steps stay feasible; reported values are on the
sigma^2 scale.

Parameter order everywhere: coefficients, then log sigma^2, then the
variance power alpha when the model carries a variance covariate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NonConvergenceError
from .numerics import ols_fit, solve_spd

LOG_2PI = float(np.log(2.0 * np.pi))
# |v| is floored inside |v|^(2 alpha): the heteroscedastic model is
# degenerate at v = 0 and the floor keeps densities finite.
VARIANCE_COVARIATE_FLOOR = 1e-8
VARIANCE_FLOOR = 1e-300


@dataclass(frozen=True)
class NormalLinearModel:
    """Normal linear regression y | x ~ N(x'beta, sigma2 * |v|^(2 alpha)).

    ``v`` is the entry of the covariate row at ``variance_covariate_index``;
    with ``variance_power`` 0 (and no index) the model is homoscedastic.
    """

    coefficients: np.ndarray
    sigma2: float
    variance_power: float = 0.0
    variance_covariate_index: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "coefficients", np.asarray(self.coefficients, dtype=float))
        if self.sigma2 <= 0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")
        if self.variance_power != 0.0 and self.variance_covariate_index is None:
            raise ValueError("variance_power requires a variance_covariate_index")

    @property
    def n_params(self) -> int:
        return self.coefficients.size + 1 + (0 if self.variance_covariate_index is None else 1)

    @property
    def params(self) -> np.ndarray:
        """Internal parameter vector (beta, log sigma2[, alpha])."""
        out = [self.coefficients, [np.log(self.sigma2)]]
        if self.variance_covariate_index is not None:
            out.append([self.variance_power])
        return np.concatenate(out)

    def with_params(self, params: np.ndarray) -> "NormalLinearModel":
        p = self.coefficients.size
        alpha = float(params[p + 1]) if self.variance_covariate_index is not None else 0.0
        return NormalLinearModel(
            coefficients=np.asarray(params[:p], dtype=float),
            sigma2=float(np.exp(params[p])),
            variance_power=alpha,
            variance_covariate_index=self.variance_covariate_index,
        )

    def _vterm(self, X: np.ndarray) -> np.ndarray:
        """|v| floored, raised to nothing yet; shape (n,)."""
        if self.variance_covariate_index is None:
            return np.ones(X.shape[0])
        v = np.abs(X[:, self.variance_covariate_index])
        return np.maximum(v, VARIANCE_COVARIATE_FLOOR)

    def conditional_mean(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X, dtype=float) @ self.coefficients

    def conditional_variance(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        t = self._vterm(X)
        var = self.sigma2 * t ** (2.0 * self.variance_power)
        return np.maximum(var, VARIANCE_FLOOR)

    def log_density(self, y, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = np.asarray(y, dtype=float).ravel()
        var = self.conditional_variance(X)
        r = y - self.conditional_mean(X)
        return -0.5 * (LOG_2PI + np.log(var)) - 0.5 * r * r / var

    def score(self, y, X) -> np.ndarray:
        """Per-row score, shape (n, n_params)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = np.asarray(y, dtype=float).ravel()
        var = self.conditional_variance(X)
        r = y - self.conditional_mean(X)
        q = r * r / var
        cols = [X * (r / var)[:, None], (0.5 * (q - 1.0))[:, None]]
        if self.variance_covariate_index is not None:
            u = np.log(self._vterm(X))
            cols.append((u * (q - 1.0))[:, None])
        return np.concatenate(cols, axis=1)

    def score_hessian(self, y, X) -> np.ndarray:
        """Per-row Hessian of the log-density, shape (n, d, d)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = np.asarray(y, dtype=float).ravel()
        n, p = X.shape
        d = self.n_params
        var = self.conditional_variance(X)
        r = y - self.conditional_mean(X)
        q = r * r / var
        H = np.zeros((n, d, d))
        Xs = X / var[:, None]
        H[:, :p, :p] = -np.einsum("ni,nj->nij", Xs, X)
        H[:, :p, p] = H[:, p, :p] = -X * (r / var)[:, None]
        H[:, p, p] = -0.5 * q
        if self.variance_covariate_index is not None:
            u = np.log(self._vterm(X))
            H[:, :p, p + 1] = H[:, p + 1, :p] = -2.0 * (u * r / var)[:, None] * X
            H[:, p, p + 1] = H[:, p + 1, p] = -u * q
            H[:, p + 1, p + 1] = -2.0 * u * u * q
        return H

    def draw(self, X, rng: np.random.Generator) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        sd = np.sqrt(self.conditional_variance(X))
        return self.conditional_mean(X) + sd * rng.standard_normal(X.shape[0])


@dataclass(frozen=True)
class LogisticModel:
    """Bernoulli response with logit(p) = gamma0 + gamma_x' v."""

    gamma0: float
    gamma_x: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "gamma_x", np.atleast_1d(np.asarray(self.gamma_x, dtype=float)))
        if not (np.isfinite(self.gamma0) and np.all(np.isfinite(self.gamma_x))):
            raise ValueError("logistic parameters must be finite")

    @property
    def n_params(self) -> int:
        return 1 + self.gamma_x.size

    @property
    def params(self) -> np.ndarray:
        return np.concatenate([[self.gamma0], self.gamma_x])

    def with_params(self, params: np.ndarray) -> "LogisticModel":
        return LogisticModel(gamma0=float(params[0]), gamma_x=np.asarray(params[1:], dtype=float))

    def linear_predictor(self, V) -> np.ndarray:
        V = np.atleast_2d(np.asarray(V, dtype=float))
        return self.gamma0 + V @ self.gamma_x

    def probability(self, V) -> np.ndarray:
        return 1.0 / (1.0 + np.exp(-self.linear_predictor(V)))

    def log_density(self, y, V) -> np.ndarray:
        y = np.asarray(y, dtype=float).ravel()
        eta = self.linear_predictor(V)
        return y * eta - np.logaddexp(0.0, eta)

    def score(self, y, V) -> np.ndarray:
        V = np.atleast_2d(np.asarray(V, dtype=float))
        y = np.asarray(y, dtype=float).ravel()
        resid = y - self.probability(V)
        Z = np.column_stack([np.ones(V.shape[0]), V])
        return Z * resid[:, None]

    def score_hessian(self, y, V) -> np.ndarray:
        V = np.atleast_2d(np.asarray(V, dtype=float))
        p = self.probability(V)
        Z = np.column_stack([np.ones(V.shape[0]), V])
        return -np.einsum("n,ni,nj->nij", p * (1.0 - p), Z, Z)

    def draw(self, V, rng: np.random.Generator) -> np.ndarray:
        p = self.probability(V)
        return (rng.random(p.shape) < p).astype(float)


@dataclass(frozen=True)
class GaussianMarginal:
    """Unconditional normal N(mu, sigma2)."""

    mu: float
    sigma2: float

    def __post_init__(self):
        if self.sigma2 <= 0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")

    n_params: int = field(default=2, init=False, repr=False)

    @property
    def params(self) -> np.ndarray:
        return np.array([self.mu, np.log(self.sigma2)])

    def with_params(self, params: np.ndarray) -> "GaussianMarginal":
        return GaussianMarginal(mu=float(params[0]), sigma2=float(np.exp(params[1])))

    def log_density(self, x, _covariates=None) -> np.ndarray:
        r = np.asarray(x, dtype=float).ravel() - self.mu
        return -0.5 * (LOG_2PI + np.log(self.sigma2)) - 0.5 * r * r / self.sigma2

    def score(self, x, _covariates=None) -> np.ndarray:
        r = np.asarray(x, dtype=float).ravel() - self.mu
        q = r * r / self.sigma2
        return np.column_stack([r / self.sigma2, 0.5 * (q - 1.0)])

    def score_hessian(self, x, _covariates=None) -> np.ndarray:
        r = np.asarray(x, dtype=float).ravel() - self.mu
        q = r * r / self.sigma2
        n = r.size
        H = np.zeros((n, 2, 2))
        H[:, 0, 0] = -1.0 / self.sigma2
        H[:, 0, 1] = H[:, 1, 0] = -r / self.sigma2
        H[:, 1, 1] = -0.5 * q
        return H

    def draw(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.mu + np.sqrt(self.sigma2) * rng.standard_normal(n)


@dataclass(frozen=True)
class ThetaParams:
    """Pair of fitted model components.

    ``theta1`` is the outcome-given-covariate model estimated on sample A
    (or the calibration fit in the measurement-error setting); ``theta2`` is
    the cross-sample conditional model.
    """

    theta1: object
    theta2: object


def log_density(model, response, covariates=None):
    """Log density of ``model`` at a point; scalar in, scalar out."""
    out = model.log_density(response, covariates)
    return float(out[0]) if np.ndim(response) == 0 else out


def score(model, response, covariates=None):
    """Gradient of the log-density in the model parameters."""
    out = model.score(response, covariates)
    return out[0] if np.ndim(response) == 0 else out


def score_hessian(model, response, covariates=None):
    """Hessian of the log-density in the model parameters."""
    out = model.score_hessian(response, covariates)
    return out[0] if np.ndim(response) == 0 else out


def draw(model, covariates, rng: np.random.Generator):
    """One pseudo-random variate from the conditional distribution."""
    if isinstance(model, GaussianMarginal):
        return float(model.draw(1, rng)[0])
    X = np.atleast_2d(np.asarray(covariates, dtype=float))
    return float(model.draw(X, rng)[0])


def fit_gaussian_marginal(x, weights=None) -> GaussianMarginal:
    """Weighted MLE of a Gaussian marginal."""
    x = np.asarray(x, dtype=float).ravel()
    w = np.ones_like(x) if weights is None else np.asarray(weights, dtype=float).ravel()
    sw = w.sum()
    mu = float((w * x).sum() / sw)
    sigma2 = float((w * (x - mu) ** 2).sum() / sw)
    if sigma2 <= 0:
        raise ValueError("degenerate sample: zero variance in fit_gaussian_marginal")
    return GaussianMarginal(mu=mu, sigma2=sigma2)


def fit_normal_mle(
    X,
    y,
    weights=None,
    variance_covariate_index: int | None = None,
    tol: float = 1e-8,
    max_iter: int = 100,
) -> NormalLinearModel:
    """Weighted Gaussian MLE, homoscedastic or with power-of-|v| variance.

    The homoscedastic fit is closed form.  The heteroscedastic fit runs a
    damped Newton iteration on (beta, log sigma2, alpha), initialized from
    OLS coefficients plus a regression of log squared residuals on
    log(v^2); convergence is declared when the score norm drops below
    ``tol``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    n = X.shape[0]
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float).ravel()

    base = ols_fit(X, y, w)
    resid = y - X @ base.coefficients
    sigma2 = float((w * resid**2).sum() / w.sum())
    if variance_covariate_index is None:
        if sigma2 <= 0:
            raise ValueError("degenerate fit: zero residual variance")
        return NormalLinearModel(coefficients=base.coefficients, sigma2=sigma2)

    v = np.maximum(np.abs(X[:, variance_covariate_index]), VARIANCE_COVARIATE_FLOOR)
    logv2 = 2.0 * np.log(v)
    logr2 = np.log(np.maximum(resid**2, 1e-300))
    aux = ols_fit(np.column_stack([np.ones(n), logv2]), logr2, w)
    alpha0 = float(aux.coefficients[1])
    # E log chi^2_1 = psi(1/2) + log 2 = -1.27036...; undo it in the intercept.
    log_sigma2_0 = float(aux.coefficients[0]) + 1.2703628454614782

    model = NormalLinearModel(
        coefficients=base.coefficients,
        sigma2=float(np.exp(log_sigma2_0)),
        variance_power=alpha0,
        variance_covariate_index=variance_covariate_index,
    )
    psi = model.params
    ll = float(w @ model.log_density(y, X))
    for iteration in range(1, max_iter + 1):
        g = w @ model.score(y, X)
        if np.max(np.abs(g)) < tol:
            return model
        H = np.einsum("n,nij->ij", w, model.score_hessian(y, X))
        try:
            step = np.linalg.solve(-H, g)
        except np.linalg.LinAlgError:
            step = g / max(np.max(np.abs(np.diag(H))), 1.0)
        scale = 1.0
        for _ in range(30):
            cand = model.with_params(psi + scale * step)
            ll_new = float(w @ cand.log_density(y, X))
            if np.isfinite(ll_new) and ll_new >= ll - 1e-12:
                break
            scale *= 0.5
        psi = psi + scale * step
        model = model.with_params(psi)
        ll = float(w @ model.log_density(y, X))
    raise NonConvergenceError(
        f"heteroscedastic MLE did not converge in {max_iter} iterations "
        f"(score norm {np.max(np.abs(w @ model.score(y, X))):.3e})",
        last_iterate=psi,
    )


def fit_logistic_model(V, y, weights=None, **kwargs) -> LogisticModel:
    """Weighted logistic MLE; ``V`` excludes the intercept column."""
    from .numerics import logistic_fit

    V = np.atleast_2d(np.asarray(V, dtype=float))
    Z = np.column_stack([np.ones(V.shape[0]), V])
    fit = logistic_fit(Z, y, weights, **kwargs)
    return LogisticModel(gamma0=float(fit.coefficients[0]), gamma_x=fit.coefficients[1:])
