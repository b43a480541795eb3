"""Exact Gaussian-process regression with an isotropic squared-exponential
kernel plus observation noise.

The model is zero-mean: k(x, x') = amplitude^2 * exp(-||x-x'||^2 / (2 l^2)),
with noise^2 added on the training diagonal. Hyperparameters are set by
maximising the log marginal likelihood in log-parameter space (L-BFGS-B,
one default start plus randomized restarts). Posterior queries return the
latent function's mean and pointwise standard deviation, i.e. uncertainty
about the regression function itself with the observation-noise term
removed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky, solve_triangular
from scipy.optimize import minimize
from scipy.spatial.distance import cdist, pdist

JITTER_REL = 1e-8        # added to the training diagonal, relative to amplitude^2
JITTER_REL_MAX = 1e-2    # escalation cap (x10 steps) before giving up
CONSTANT_Y_TOL = 1e-12   # sd(y) below this triggers the degenerate constant model
DEGENERATE_FLOOR = 1e-6  # amplitude/noise used by the degenerate model


class GpConditioningError(RuntimeError):
    """Cholesky factorisation failed even at the maximum jitter level."""


@dataclass(frozen=True)
class GpHyperparams:
    """Kernel hyperparameters: output-scale sd, isotropic length scale,
    observation-noise sd. All strictly positive and finite."""

    amplitude: float
    length_scale: float
    noise: float

    def __post_init__(self):
        for name in ("amplitude", "length_scale", "noise"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0.0):
                raise ValueError(f"{name} must be positive and finite, got {v!r}")

    def to_log(self) -> np.ndarray:
        return np.log([self.amplitude, self.length_scale, self.noise])

    @staticmethod
    def from_log(theta) -> "GpHyperparams":
        a, l, n = np.exp(np.asarray(theta, dtype=float))
        return GpHyperparams(float(a), float(l), float(n))


@dataclass(frozen=True)
class OptimizerConfig:
    """Settings for the marginal-likelihood maximisation."""

    n_restarts: int = 2          # randomized starts in addition to the default one
    max_iter: int = 200
    grad_tol: float = 1e-5       # infinity-norm convergence threshold
    bound_span: float = 1e3      # box bounds: init/span .. init*span, per parameter


@dataclass(frozen=True)
class GpModel:
    """A fitted GP: hyperparameters, training data, and the Cholesky
    factor / weight vector needed for posterior queries. Immutable, so
    instances can be shared freely across worker threads or processes."""

    hyperparams: GpHyperparams
    train_x: np.ndarray
    train_y: np.ndarray
    chol: np.ndarray          # lower-triangular factor of K + jitter*I
    alpha: np.ndarray         # (K + jitter*I)^{-1} y
    log_marginal: float
    jitter: float             # absolute value added to the diagonal
    converged: bool = True
    constant_value: float | None = None  # set only by the degenerate constant model


@dataclass(frozen=True)
class LatentPosterior:
    """Pointwise posterior over the latent function: mean and sd per query
    point, observation noise excluded."""

    mean: np.ndarray
    sd: np.ndarray


def _as_matrix(X, name="X"):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise ValueError(f"{name} must be a 2-d array, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains non-finite values")
    return X


def kernel_matrix(X, X2, hp: GpHyperparams, include_noise: bool = False):
    """Squared-exponential covariance between the rows of X and X2.

    Entry (i, j) is amplitude^2 * exp(-||x_i - x'_j||^2 / (2 l^2)).
    With ``include_noise`` the observation-noise variance is added on the
    diagonal; that only makes sense for the self-covariance of one point
    set, so X2 must be None (meaning X2 = X) in that case. Noise is tied
    to the observation index, not the covariate value, which keeps the
    matrix non-singular when training points are duplicated.
    """
    X = _as_matrix(X)
    if X2 is None:
        d2 = cdist(X, X, metric="sqeuclidean")
    else:
        if include_noise:
            raise ValueError("include_noise requires X2=None (self-covariance)")
        X2 = _as_matrix(X2, "X2")
        if X2.shape[1] != X.shape[1]:
            raise ValueError(
                f"column mismatch: X has {X.shape[1]} columns, X2 has {X2.shape[1]}"
            )
        d2 = cdist(X, X2, metric="sqeuclidean")
    K = hp.amplitude**2 * np.exp(-0.5 * d2 / hp.length_scale**2)
    if include_noise:
        K[np.diag_indices_from(K)] += hp.noise**2
    return K


def _chol_with_jitter(K, amplitude):
    """Lower Cholesky factor of K + jitter*I, escalating jitter on failure."""
    rel = JITTER_REL
    while True:
        jitter = rel * amplitude**2
        try:
            L = cholesky(K + jitter * np.eye(K.shape[0]), lower=True)
            return L, jitter
        except LinAlgError:
            rel *= 10.0
            if rel > JITTER_REL_MAX * 1.0001:
                raise GpConditioningError(
                    "kernel matrix is not positive definite even with jitter "
                    f"{JITTER_REL_MAX:g}*amplitude^2; the training inputs are "
                    "pathologically ill-conditioned"
                ) from None


def log_marginal_likelihood(X, y, hp: GpHyperparams):
    """Log evidence of the data under the GP, plus its gradient.

    Returns ``(value, grad)`` where ``value`` is
    -0.5 y^T K^{-1} y - 0.5 log det K - n/2 log 2pi with
    K = amplitude^2 R + (noise^2 + jitter) I, and ``grad`` is taken with
    respect to (log amplitude, log length_scale, log noise). The jitter
    term tracks amplitude^2, so its derivative is folded into the
    amplitude component.
    """
    X = _as_matrix(X)
    y = np.asarray(y, dtype=float).ravel()
    n = y.shape[0]
    if X.shape[0] != n:
        raise ValueError(f"X has {X.shape[0]} rows but y has {n} entries")
    d2 = cdist(X, X, metric="sqeuclidean")
    R = np.exp(-0.5 * d2 / hp.length_scale**2)
    K = hp.amplitude**2 * R
    K[np.diag_indices_from(K)] += hp.noise**2
    L, jitter = _chol_with_jitter(K, hp.amplitude)
    alpha = cho_solve((L, True), y)
    value = (
        -0.5 * float(y @ alpha)
        - float(np.sum(np.log(np.diag(L))))
        - 0.5 * n * math.log(2.0 * math.pi)
    )
    # d value / d theta = 0.5 tr((alpha alpha^T - K^{-1}) dK/dtheta)
    Kinv = cho_solve((L, True), np.eye(n))
    A = np.outer(alpha, alpha) - Kinv
    dK_amp = 2.0 * hp.amplitude**2 * R
    dK_amp[np.diag_indices_from(dK_amp)] += 2.0 * jitter
    dK_len = hp.amplitude**2 * R * (d2 / hp.length_scale**2)
    grad = np.array(
        [
            0.5 * float(np.sum(A * dK_amp)),
            0.5 * float(np.sum(A * dK_len)),
            float(np.trace(A)) * hp.noise**2,  # 0.5 * tr(A * 2 noise^2 I)
        ]
    )
    return value, grad


def _median_pairwise_distance(X):
    if X.shape[0] > 500:  # subsample to keep the O(n^2) median cheap
        X = X[:: max(1, X.shape[0] // 500)]
    d = pdist(X)
    d = d[d > 0]
    return float(np.median(d)) if d.size else 1.0


def fit_gp(X, y, opt: OptimizerConfig | None = None, rng=None) -> GpModel:
    """Fit hyperparameters by maximising the log marginal likelihood.

    Optimisation runs in log-parameter space from the scale-based default
    initialisation (length scale = median pairwise distance, amplitude =
    sd(y), noise = 0.5 sd(y)) plus ``opt.n_restarts`` randomized starts;
    the best local optimum wins, and it is never worse than the default
    initialisation itself. Starting the noise much lower (e.g. 0.1 sd)
    reliably drives the optimiser into the all-noise stationary point on
    smooth long-length-scale surfaces, so the default splits the variance
    evenly. Constant targets yield a degenerate model that predicts the
    constant with amplitude and noise at a small floor.
    """
    X = _as_matrix(X)
    y = np.asarray(y, dtype=float).ravel()
    n = y.shape[0]
    if X.shape[0] != n:
        raise ValueError(f"X has {X.shape[0]} rows but y has {n} entries")
    if n < 2:
        raise ValueError("need at least 2 observations to fit hyperparameters")
    opt = opt or OptimizerConfig()
    rng = np.random.default_rng(0) if rng is None else rng

    sd_y = float(np.std(y))
    ell0 = _median_pairwise_distance(X)
    if sd_y < CONSTANT_Y_TOL:
        hp = GpHyperparams(DEGENERATE_FLOOR, ell0, DEGENERATE_FLOOR)
        return GpModel(
            hyperparams=hp,
            train_x=X,
            train_y=y,
            chol=np.eye(n) * math.sqrt(2.0) * DEGENERATE_FLOOR,
            alpha=np.zeros(n),
            log_marginal=float("nan"),
            jitter=JITTER_REL * DEGENERATE_FLOOR**2,
            converged=True,
            constant_value=float(y[0]),
        )

    init = np.log([sd_y, ell0, 0.5 * sd_y])
    span = math.log(opt.bound_span)
    bounds = [(t - span, t + span) for t in init]
    starts = [init]
    for _ in range(opt.n_restarts):
        starts.append(init + rng.uniform(-1.0, 1.0, size=3))

    def objective(theta):
        val, grad = log_marginal_likelihood(X, y, GpHyperparams.from_log(theta))
        return -val, -grad

    # the default initialisation is itself a candidate, so the fitted
    # log-marginal can never fall below the value there
    best_val, _ = log_marginal_likelihood(X, y, GpHyperparams.from_log(init))
    best_theta, best_ok = init, True
    for x0 in starts:
        res = minimize(
            objective,
            x0,
            jac=True,
            method="L-BFGS-B",
            bounds=bounds,
            options={"maxiter": opt.max_iter, "gtol": opt.grad_tol, "ftol": 1e-14},
        )
        if -res.fun > best_val:
            best_val, best_theta, best_ok = -res.fun, res.x, bool(res.success)

    hp = GpHyperparams.from_log(best_theta)
    K = kernel_matrix(X, None, hp, include_noise=True)
    L, jitter = _chol_with_jitter(K, hp.amplitude)
    alpha = cho_solve((L, True), y)
    return GpModel(
        hyperparams=hp,
        train_x=X,
        train_y=y,
        chol=L,
        alpha=alpha,
        log_marginal=best_val,
        jitter=jitter,
        converged=best_ok,
    )


def latent_posterior(model: GpModel, Xq) -> LatentPosterior:
    """Posterior mean and sd of the latent function at the query points.

    The observation-noise variance is excluded from both the prior
    variance k(x, x) and the cross covariances, so ``sd`` quantifies
    uncertainty about the function value, not about a future noisy
    observation. Negative variances from round-off are clipped to zero.
    """
    Xq = _as_matrix(Xq, "Xq")
    if Xq.shape[1] != model.train_x.shape[1]:
        raise ValueError(
            f"query has {Xq.shape[1]} columns, training data has "
            f"{model.train_x.shape[1]}"
        )
    if model.constant_value is not None:
        m = Xq.shape[0]
        return LatentPosterior(np.full(m, model.constant_value), np.zeros(m))
    Ks = kernel_matrix(model.train_x, Xq, model.hyperparams)
    mean = Ks.T @ model.alpha
    V = solve_triangular(model.chol, Ks, lower=True)
    var = model.hyperparams.amplitude**2 - np.sum(V * V, axis=0)
    np.clip(var, 0.0, None, out=var)
    return LatentPosterior(mean, np.sqrt(var))
