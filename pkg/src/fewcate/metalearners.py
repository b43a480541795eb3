"""Pseudo-outcome CATE estimators built on cross-fitted nuisances.

Covers the cross-arm pseudo-outcome pipeline with either a boosted or a
conjugate-Bayesian second stage, the doubly-robust score with unweighted
and inverse-variance-weighted regressions, and single-/two-model
baselines. The Bayesian second stage is a Gaussian linear regression in a
fixed basis: prior N(0, prior_scale^2 I) on the coefficients, plug-in
residual noise variance, closed-form posterior.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.stats import norm

from fewcate.boosting import GbrtConfig, MeanRegressor, TooFewSamplesError, fit_gbrt
from fewcate.dataset import Dataset
from fewcate.nuisance import NuisanceModels

NOISE_VAR_FLOOR = 1e-12
DEFAULT_PRIOR_SCALE = 10.0


@dataclass(frozen=True)
class PseudoOutcomes:
    """Cross-arm imputation targets: d1 on treated rows (outcome minus
    imputed control mean), d0 on control rows (imputed treated mean minus
    outcome)."""

    d1: np.ndarray
    d0: np.ndarray
    treated_idx: np.ndarray
    control_idx: np.ndarray


def x_pseudo_outcomes(data: Dataset, nuis: NuisanceModels) -> PseudoOutcomes:
    if nuis.mu0_hat.shape[0] != data.n:
        raise ValueError("nuisance predictions are not aligned with the dataset")
    t, c = data.treated_idx, data.control_idx
    return PseudoOutcomes(
        d1=data.y[t] - nuis.mu0_hat[t],
        d0=nuis.mu1_hat[c] - data.y[c],
        treated_idx=t,
        control_idx=c,
    )


@dataclass(frozen=True)
class LinearPosterior:
    """Gaussian posterior over basis coefficients; the induced effect
    posterior at x is N(phi(x)' beta_mean, phi(x)' beta_cov phi(x))."""

    beta_mean: np.ndarray
    beta_cov: np.ndarray
    noise_var: float
    rank_deficient: bool = False
    diagnostics: dict = field(default_factory=dict)

    @property
    def p(self) -> int:
        return self.beta_mean.shape[0]

    def mean(self, phi):
        return np.asarray(phi) @ self.beta_mean

    def sd(self, phi):
        phi = np.asarray(phi)
        var = np.einsum("ij,jk,ik->i", phi, self.beta_cov, phi)
        return np.sqrt(np.clip(var, 0.0, None))

    def interval(self, phi, level: float = 0.95):
        z = norm.ppf(0.5 + level / 2.0)
        m, s = self.mean(phi), self.sd(phi)
        return m - z * s, m + z * s


def _conjugate_posterior(phi, d, row_var, prior_scale):
    """Closed-form Gaussian posterior with per-row noise variances."""
    p = phi.shape[1]
    wphi = phi / row_var[:, None]
    A = phi.T @ wphi + np.eye(p) / prior_scale**2
    b = wphi.T @ d
    cf = cho_factor(A, lower=True)
    beta_cov = cho_solve(cf, np.eye(p))
    beta_cov = 0.5 * (beta_cov + beta_cov.T)
    return beta_cov @ b, beta_cov


def bayes_second_stage(
    phi_x, d, prior_scale: float = DEFAULT_PRIOR_SCALE
) -> LinearPosterior:
    """Conjugate Bayesian regression of a pseudo-outcome on a basis.

    The noise variance is the plug-in residual variance of the ordinary
    least-squares fit. A rank-deficient basis does not raise: the prior
    keeps the posterior well defined, and the deficiency is flagged.
    """
    phi_x = np.asarray(phi_x, dtype=float)
    d = np.asarray(d, dtype=float).ravel()
    m, p = phi_x.shape
    if m <= p:
        raise ValueError(f"need more rows ({m}) than basis columns ({p})")
    beta_ols, _, rank, _ = np.linalg.lstsq(phi_x, d, rcond=None)
    resid = d - phi_x @ beta_ols
    dof = max(1, m - rank)
    noise_var = max(float(resid @ resid) / dof, NOISE_VAR_FLOOR)
    beta_mean, beta_cov = _conjugate_posterior(
        phi_x, d, np.full(m, noise_var), prior_scale
    )
    return LinearPosterior(
        beta_mean=beta_mean,
        beta_cov=beta_cov,
        noise_var=noise_var,
        rank_deficient=rank < p,
    )


class BasisCate:
    """Point CATE function tau(x) = phi(x)' beta."""

    def __init__(self, basis, beta):
        self.basis = basis
        self.beta = np.asarray(beta, dtype=float)

    def __call__(self, X):
        return self.basis(np.asarray(X, dtype=float)) @ self.beta


class XLearnerCate:
    """Propensity-weighted combination of the two second-stage fits."""

    def __init__(self, tau0_model, tau1_model, nuis, degenerate_arms):
        self.tau0_model = tau0_model
        self.tau1_model = tau1_model
        self.nuis = nuis
        self.degenerate_arms = degenerate_arms

    def __call__(self, X):
        X = np.asarray(X, dtype=float)
        pi = self.nuis.propensity(X)
        return pi * self.tau0_model.predict(X) + (1.0 - pi) * self.tau1_model.predict(X)


def x_learner_point(
    data: Dataset, nuis: NuisanceModels, cfg: GbrtConfig | None = None
) -> XLearnerCate:
    """Point X-Learner: boosted second-stage regressions of d1 on the
    treated covariates and d0 on the control covariates, combined by the
    propensity. An arm too small for a boosted fit falls back to a
    constant second stage and is flagged on the returned estimator."""
    if data.n0 == 0 or data.n1 == 0:
        raise ValueError("both arms must be nonempty")
    cfg = cfg or GbrtConfig()
    po = x_pseudo_outcomes(data, nuis)
    degenerate = []

    def second_stage(X_arm, d_arm, arm):
        try:
            return fit_gbrt(X_arm, d_arm, cfg)
        except TooFewSamplesError:
            degenerate.append(arm)
            return MeanRegressor().fit(X_arm, d_arm)

    tau1_model = second_stage(data.x[po.treated_idx], po.d1, 1)
    tau0_model = second_stage(data.x[po.control_idx], po.d0, 0)
    return XLearnerCate(tau0_model, tau1_model, nuis, tuple(degenerate))


class ImputationAwarePosterior:
    """Effect posterior of the Bayesian cross-arm learner.

    The pseudo-outcome d1 estimates the effect only up to the error of the
    imputed control surface, and the sampling part of that error is shared
    by every row (one model per fold), so neither the regression residuals
    nor the coefficient posterior can see it. This wrapper adds it back:
    the effect variance at x is the coefficient-posterior variance plus
    the committee variance of the per-fold control models at x (how much
    the imputed surface moves across the K cross-fit refits). The
    systematic (bias) part of the imputation error remains unmodelled,
    which is exactly why these intervals still under-cover when the
    control arm is small.
    """

    def __init__(self, linear: LinearPosterior, basis, nuis: NuisanceModels):
        self.linear = linear
        self.basis = basis
        self.nuis = nuis

    def imputation_var(self, X):
        preds = np.stack([fm.mu0.predict(X) for fm in self.nuis.fold_models])
        if preds.shape[0] < 2:
            return np.zeros(np.asarray(X).shape[0])
        return np.var(preds, axis=0)

    def mean(self, X):
        return self.linear.mean(self.basis(X))

    def sd(self, X):
        base = self.linear.sd(self.basis(X))
        return np.sqrt(base**2 + self.imputation_var(X))

    def interval(self, X, level: float = 0.95):
        z = norm.ppf(0.5 + level / 2.0)
        m, s = self.mean(X), self.sd(X)
        return m - z * s, m + z * s


def x_learner_bayes(
    data: Dataset,
    nuis: NuisanceModels,
    basis,
    prior_scale: float = DEFAULT_PRIOR_SCALE,
) -> ImputationAwarePosterior:
    """Bayesian second stage on the treated-arm pseudo-outcome alone.

    This is the interval-producing variant: the posterior over the basis
    coefficients is read off the regression of d1 on phi(X) over treated
    rows, and the effect posterior carries the imputation variance of the
    cross-fitted control model on top of it. The propensity-weighted
    combination is used only for point estimates (``x_learner_point``)."""
    po = x_pseudo_outcomes(data, nuis)
    linear = bayes_second_stage(basis(data.x[po.treated_idx]), po.d1, prior_scale)
    return ImputationAwarePosterior(linear, basis, nuis)


@dataclass(frozen=True)
class DrScores:
    """Per-unit doubly-robust scores, the propensities used to form them,
    and the per-arm residual variances of the outcome nuisances (the
    inputs to inverse-variance weights)."""

    scores: np.ndarray
    propensity_used: np.ndarray
    known_propensity: bool
    arm_resid_var: tuple  # (control, treated)


def dr_score(
    data: Dataset, nuis: NuisanceModels, known_pi=None
) -> DrScores:
    """Doubly-robust score: imputed effect plus inverse-propensity-weighted
    residual corrections. If ``known_pi`` is supplied it replaces the
    cross-fitted propensity exactly (no clipping) and the flag is set."""
    if known_pi is not None:
        pi = np.broadcast_to(np.asarray(known_pi, dtype=float), (data.n,)).copy()
    else:
        pi = nuis.pi_hat
    if np.any(pi <= 0.0) or np.any(pi >= 1.0):
        raise ValueError("propensities must lie strictly inside (0, 1)")
    w = data.w
    resid1 = data.y - nuis.mu1_hat
    resid0 = data.y - nuis.mu0_hat
    scores = (
        nuis.mu1_hat
        - nuis.mu0_hat
        + w * resid1 / pi
        - (1 - w) * resid0 / (1.0 - pi)
    )
    c, t = data.control_idx, data.treated_idx
    s0 = float(np.var(resid0[c])) if c.size > 1 else NOISE_VAR_FLOOR
    s1 = float(np.var(resid1[t])) if t.size > 1 else NOISE_VAR_FLOOR
    return DrScores(
        scores=scores,
        propensity_used=pi,
        known_propensity=known_pi is not None,
        arm_resid_var=(max(s0, NOISE_VAR_FLOOR), max(s1, NOISE_VAR_FLOOR)),
    )


def ivw_row_variances(scores: DrScores, data: Dataset) -> np.ndarray:
    """Leading-order conditional variance of the score per row:
    sigma^2_arm * (w / pi^2 + (1-w) / (1-pi)^2). Control rows inherit the
    squared inverse-propensity inflation."""
    pi = scores.propensity_used
    s0, s1 = scores.arm_resid_var
    w = data.w
    return np.where(w == 1, s1 / pi**2, s0 / (1.0 - pi) ** 2)


def dr_learner(
    scores: DrScores,
    data: Dataset,
    mode: str,
    basis,
    prior_scale: float = DEFAULT_PRIOR_SCALE,
    row_var=None,
):
    """Second-stage regression of the doubly-robust score on a basis.

    ``unweighted`` regresses by ordinary least squares, which preserves the
    cross-arm cancellation the score relies on; ``ivw`` solves weighted
    least squares with weights 1/row_var. Returns the point estimator and
    a Gaussian posterior; for ivw the posterior records the effective
    control weight share, since down-weighting the control rows to nothing
    collapses the fit onto the treated rows only.
    """
    phi = basis(data.x)
    d = scores.scores
    m, p = phi.shape
    if mode == "unweighted":
        beta, _, rank, _ = np.linalg.lstsq(phi, d, rcond=None)
        resid = d - phi @ beta
        noise_var = max(float(resid @ resid) / max(1, m - rank), NOISE_VAR_FLOOR)
        v = np.full(m, noise_var)
        diagnostics = {}
    elif mode == "ivw":
        v = np.asarray(row_var, dtype=float) if row_var is not None else ivw_row_variances(scores, data)
        if np.any(v <= 0.0):
            raise ValueError("row variances must be positive")
        sw = 1.0 / np.sqrt(v)
        beta, _, rank, _ = np.linalg.lstsq(phi * sw[:, None], d * sw, rcond=None)
        inv_v = 1.0 / v
        control_share = float(
            np.sum(inv_v[data.control_idx]) / np.sum(inv_v)
        )
        diagnostics = {"control_weight_share": control_share}
        noise_var = float(np.mean(v))
    else:
        raise ValueError(f"unknown mode {mode!r}; use 'unweighted' or 'ivw'")
    beta_mean, beta_cov = _conjugate_posterior(phi, d, v, prior_scale)
    posterior = LinearPosterior(
        beta_mean=beta_mean,
        beta_cov=beta_cov,
        noise_var=noise_var,
        rank_deficient=rank < p,
        diagnostics=diagnostics,
    )
    return BasisCate(basis, beta), posterior


class SLearnerCate:
    """Single boosted fit on [x, w]; effect is f(x, 1) - f(x, 0)."""

    def __init__(self, model, treatment_col: int):
        self.model = model
        self.treatment_col = treatment_col

    def treatment_splits(self) -> int:
        """Number of tree nodes that split on the treatment column; zero
        means the effect estimate is identically zero."""
        return int(
            sum(np.sum(t.feature_ == self.treatment_col) for t in self.model.trees_)
        )

    def __call__(self, X):
        X = np.asarray(X, dtype=float)
        ones = np.ones((X.shape[0], 1))
        return self.model.predict(np.hstack([X, ones])) - self.model.predict(
            np.hstack([X, 0.0 * ones])
        )


class TLearnerCate:
    """Per-arm boosted fits; effect is their difference."""

    def __init__(self, model0, model1):
        self.model0 = model0
        self.model1 = model1

    def __call__(self, X):
        X = np.asarray(X, dtype=float)
        return self.model1.predict(X) - self.model0.predict(X)


def baseline_st_learners(data: Dataset, cfg: GbrtConfig | None = None):
    """The single-model and two-model baselines, sharing the boosted
    configuration of the nuisance fits."""
    if data.n0 == 0 or data.n1 == 0:
        raise ValueError("both arms must be nonempty")
    cfg = cfg or GbrtConfig()
    xw = np.hstack([data.x, data.w[:, None].astype(float)])
    s_model = fit_gbrt(xw, data.y, cfg)

    def fit_arm(idx):
        try:
            return fit_gbrt(data.x[idx], data.y[idx], cfg)
        except TooFewSamplesError:
            return MeanRegressor().fit(data.x[idx], data.y[idx])

    t0 = fit_arm(data.control_idx)
    t1 = fit_arm(data.treated_idx)
    return SLearnerCate(s_model, data.x.shape[1]), TLearnerCate(t0, t1)


def basis_for_design(kind: str):
    """Second-stage basis per design family. The basis spans the true
    effect surface of each synthetic design, so mis-specification does not
    contaminate bias measurements."""
    if kind in ("linear", "known_propensity"):

        def phi(X):
            X = np.asarray(X, dtype=float)
            return np.hstack([np.ones((X.shape[0], 1)), X])

    elif kind == "nonlinear":

        def phi(X):
            X = np.asarray(X, dtype=float)
            return np.hstack(
                [
                    np.ones((X.shape[0], 1)),
                    X,
                    np.sin(1.4 * X[:, [0]]),
                    X[:, [2]] ** 2,
                ]
            )

    elif kind == "ihdp":

        def phi(X):
            X = np.asarray(X, dtype=float)
            return np.hstack([np.ones((X.shape[0], 1)), X])

    else:
        raise ValueError(f"no basis registered for design kind {kind!r}")
    return phi
