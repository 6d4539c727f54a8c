"""Exact Gaussian-process regression with an isotropic RBF kernel.

Inputs are mapped to the unit cube through the search bounds and outputs are
standardized, so the prior mean is zero and a single lengthscale is
meaningful across axes. Hyperparameters are fitted by maximizing the log
marginal likelihood with multi-start bounded Nelder-Mead.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular
from scipy.optimize import minimize

from .errors import InvalidArgument, NumericalError

NOISE_FLOOR = 1e-6
# log-space bounds for (signal variance, lengthscale, noise variance)
LOG_BOUNDS = (
    (np.log(1e-4), np.log(1e2)),
    (np.log(0.05), np.log(2.0)),
    (np.log(NOISE_FLOOR), np.log(1e-1)),
)
JITTERS = tuple(10.0**k for k in range(-8, -3))
DUPLICATE_TOL = 1e-9
# Posterior variances below this fraction of the prior are cancellation noise.
VARIANCE_RESOLUTION = 1e-12


@dataclass(frozen=True)
class KernelHyper:
    signal_variance: float
    lengthscale: float
    noise_variance: float

    def __post_init__(self):
        if not self.signal_variance > 0 or not self.lengthscale > 0:
            raise InvalidArgument("signal_variance and lengthscale must be positive")
        if not self.noise_variance >= 0:
            raise InvalidArgument("noise_variance must be nonnegative")

    @classmethod
    def from_log(cls, theta):
        return cls(*(float(v) for v in np.exp(theta)))

    def as_log(self):
        return np.log([self.signal_variance, self.lengthscale, self.noise_variance])

    def to_dict(self):
        return {
            "signal_variance": self.signal_variance,
            "lengthscale": self.lengthscale,
            "noise_variance": self.noise_variance,
        }


def rbf(x, x2, hyper):
    """k(x, x') = s2 * exp(-|x - x'|^2 / (2 l^2)) for a single pair."""
    diff = np.asarray(x, dtype=float) - np.asarray(x2, dtype=float)
    return float(hyper.signal_variance * np.exp(-np.dot(diff, diff) / (2 * hyper.lengthscale**2)))


def sq_dists(a, b):
    d = np.sum(a**2, 1)[:, None] + np.sum(b**2, 1)[None, :] - 2.0 * a @ b.T
    return np.maximum(d, 0.0)


def kernel_matrix(a, b, hyper):
    return hyper.signal_variance * np.exp(-sq_dists(a, b) / (2 * hyper.lengthscale**2))


def cholesky_with_jitter(matrix, jitters=JITTERS):
    """Lower Cholesky factor, escalating diagonal jitter on failure."""
    try:
        return np.linalg.cholesky(matrix), 0.0
    except np.linalg.LinAlgError:
        pass
    eye = np.eye(matrix.shape[0])
    for jitter in jitters:
        try:
            return np.linalg.cholesky(matrix + jitter * eye), jitter
        except np.linalg.LinAlgError:
            continue
    raise NumericalError(f"Cholesky factorization failed with jitter up to {jitters[-1]:g}")


@dataclass(frozen=True)
class GPConfig:
    """Fitting options.

    ``bounds`` is ``(lower, upper)`` for the input normalization; the data
    range is used when omitted. ``hyper`` skips ML-II and uses fixed values.
    """

    bounds: tuple | None = None
    n_starts: int = 8
    seed: int = 0
    hyper: KernelHyper | None = None
    maxfev: int = 300


class GPModel:
    """Fitted, immutable single-objective GP."""

    def __init__(self, X, y, hyper, lower, upper, y_mean, y_std,
                 chol, weights, jitter, log_likelihood, fit_seconds):
        self.X = X
        self.y = y
        self.hyper = hyper
        self.lower = lower
        self.upper = upper
        self.y_mean = y_mean
        self.y_std = y_std
        self.chol = chol
        self.weights = weights
        self.jitter = jitter
        self.log_likelihood = log_likelihood
        self.fit_seconds = fit_seconds

    @property
    def dim(self):
        return self.X.shape[1]

    @property
    def prior_variance(self):
        return self.hyper.signal_variance * self.y_std**2

    def normalize(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.dim:
            raise InvalidArgument(f"expected inputs of dimension {self.dim}, got {X.shape[1]}")
        return (X - self.lower) / (self.upper - self.lower)

    def _cross(self, X):
        Z = self.normalize(X)
        return Z, kernel_matrix(Z, self.X, self.hyper)

    def posterior(self, X):
        """Posterior mean and variance of the latent function at rows of ``X``."""
        _, ks = self._cross(X)
        mean = ks @ self.weights
        v = solve_triangular(self.chol, ks.T, lower=True, check_finite=False)
        var = self.hyper.signal_variance - np.sum(v**2, axis=0)
        var[var <= VARIANCE_RESOLUTION * self.hyper.signal_variance] = 0.0
        return mean * self.y_std + self.y_mean, var * self.y_std**2

    def posterior_cov(self, X):
        Z, ks = self._cross(X)
        mean = ks @ self.weights
        v = solve_triangular(self.chol, ks.T, lower=True, check_finite=False)
        cov = kernel_matrix(Z, Z, self.hyper) - v.T @ v
        return mean * self.y_std + self.y_mean, cov * self.y_std**2


def _merge_duplicates(Z, y):
    keep_Z, keep_y = [], []
    used = np.zeros(len(Z), dtype=bool)
    for i in range(len(Z)):
        if used[i]:
            continue
        close = np.max(np.abs(Z - Z[i]), axis=1) < DUPLICATE_TOL
        close &= ~used
        used |= close
        keep_Z.append(Z[i])
        keep_y.append(y[close].mean())
    return np.array(keep_Z), np.array(keep_y)


def _neg_log_likelihood(theta, D, y):
    s2, l, n2 = np.exp(theta)
    K = s2 * np.exp(-D / (2 * l * l))
    K[np.diag_indices_from(K)] += n2
    try:
        L = np.linalg.cholesky(K)
    except np.linalg.LinAlgError:
        return 1e25
    alpha = solve_triangular(L, y, lower=True, check_finite=False)
    return 0.5 * alpha @ alpha + np.log(np.diag(L)).sum() + 0.5 * len(y) * np.log(2 * np.pi)


def fit(X, y, config=None):
    """Fit a GP to ``X`` (n x d) and ``y`` (n,)."""
    config = config or GPConfig()
    start = time.perf_counter()
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] != y.size:
        raise InvalidArgument("X and y have different numbers of rows")
    if y.size < 2:
        raise InvalidArgument("at least two observations are required")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise InvalidArgument("training data must be finite")

    if config.bounds is None:
        lower, upper = X.min(axis=0), X.max(axis=0)
    else:
        lower = np.asarray(config.bounds[0], dtype=float)
        upper = np.asarray(config.bounds[1], dtype=float)
    span = np.where(upper > lower, upper - lower, 1.0)
    upper = lower + span

    Z, y = _merge_duplicates((X - lower) / span, y)
    y_mean = float(y.mean())
    y_std = float(y.std())
    if not y_std > 1e-12 * max(1.0, abs(y_mean)):
        y_std = 1.0
    ys = (y - y_mean) / y_std
    D = sq_dists(Z, Z)

    if config.hyper is not None:
        hyper = config.hyper
    elif len(ys) < 2:
        hyper = KernelHyper(1.0, 0.3, NOISE_FLOOR)
    else:
        hyper = _ml2(D, ys, config)

    K = kernel_matrix(Z, Z, hyper)
    K[np.diag_indices_from(K)] += hyper.noise_variance
    L, jitter = cholesky_with_jitter(K)
    alpha = solve_triangular(L, ys, lower=True, check_finite=False)
    weights = solve_triangular(L.T, alpha, lower=False, check_finite=False)
    loglik = -(0.5 * alpha @ alpha + np.log(np.diag(L)).sum() + 0.5 * len(ys) * np.log(2 * np.pi))
    return GPModel(Z, ys, hyper, lower, upper, y_mean, y_std, L, weights,
                   jitter, float(loglik), time.perf_counter() - start)


def _ml2(D, ys, config):
    bounds = np.array(LOG_BOUNDS)
    rng = np.random.default_rng(config.seed)
    starts = [np.array([0.0, np.log(0.3), np.log(1e-3)])]
    starts += list(rng.uniform(bounds[:, 0], bounds[:, 1], size=(config.n_starts - 1, 3)))
    best_theta, best_val = None, np.inf
    for theta0 in starts:
        res = minimize(
            _neg_log_likelihood, theta0, args=(D, ys), method="Nelder-Mead",
            bounds=bounds,
            options={"maxfev": config.maxfev, "xatol": 1e-4, "fatol": 1e-7},
        )
        if res.fun < best_val:
            best_theta, best_val = res.x, res.fun
    if best_theta is None or not np.isfinite(best_val) or best_val >= 1e25:
        raise NumericalError("marginal likelihood could not be evaluated at any start")
    best_theta = np.clip(best_theta, bounds[:, 0], bounds[:, 1])
    return KernelHyper.from_log(best_theta)


def posterior(model, X):
    return model.posterior(X)


def sample_joint(models, X, n_samples, seed):
    """Posterior draws at the rows of ``X``: shape (n_samples, n_points, n_models)."""
    dims = {m.dim for m in models}
    if len(dims) != 1:
        raise InvalidArgument("all models must share the input dimension")
    rng = np.random.default_rng(seed)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    out = np.empty((n_samples, X.shape[0], len(models)))
    for j, model in enumerate(models):
        mean, cov = model.posterior_cov(X)
        cov = 0.5 * (cov + cov.T)
        scale = model.prior_variance
        L, _ = cholesky_with_jitter(cov, tuple(scale * 10.0**k for k in range(-12, -3)))
        z = rng.standard_normal((n_samples, X.shape[0]))
        out[:, :, j] = mean + z @ L.T
    return out
