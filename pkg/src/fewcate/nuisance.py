"""Cross-fitted nuisance models: per-arm outcome regressions and a clipped
propensity model, trained with K-fold cross-fitting stratified by arm.

Every unit's nuisance values come from models trained on the other K-1
folds, so a unit's own outcome never leaks into its pseudo-outcome. Folds
are stratified within each arm; with a 30-unit control arm and K=5 an
unstratified split could easily leave a fold without controls.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fewcate.boosting import (
    GbrtConfig,
    MeanRegressor,
    SingleClassError,
    TooFewSamplesError,
    fit_gbrt,
    fit_propensity,
)
from fewcate.dataset import Dataset

CLIP_DEFAULT = 0.01


class _ConstantRate:
    """Propensity fallback when a training split is single-class."""

    def __init__(self, rate, clip):
        self.rate = float(np.clip(rate, clip, 1.0 - clip))

    def predict_proba(self, X):
        return np.full(np.asarray(X).shape[0], self.rate)


@dataclass(frozen=True)
class FoldModels:
    """Models trained with one fold held out, plus the rows they saw."""

    mu0: object
    mu1: object
    propensity: object
    train_idx: np.ndarray


@dataclass(frozen=True)
class NuisanceModels:
    fold_of: np.ndarray      # fold assignment per unit, values 0..k-1
    mu0_hat: np.ndarray      # cross-fitted control-outcome prediction per unit
    mu1_hat: np.ndarray
    pi_hat: np.ndarray       # cross-fitted propensity per unit, clipped
    fold_models: tuple       # FoldModels per fold, for out-of-sample queries
    clip: float
    k: int
    k_effective: dict        # per arm: number of distinct held-out outcome fits

    def mu0(self, X):
        return np.mean([fm.mu0.predict(X) for fm in self.fold_models], axis=0)

    def mu1(self, X):
        return np.mean([fm.mu1.predict(X) for fm in self.fold_models], axis=0)

    def propensity(self, X):
        p = np.mean([fm.propensity.predict_proba(X) for fm in self.fold_models], axis=0)
        return np.clip(p, self.clip, 1.0 - self.clip)


def _fit_outcome(X, y, cfg):
    if y.shape[0] == 0:
        raise ValueError("cannot fit an outcome model on an empty arm")
    try:
        return fit_gbrt(X, y, cfg)
    except TooFewSamplesError:
        return MeanRegressor().fit(X, y)


def cross_fit(
    data: Dataset,
    k: int = 5,
    cfg: GbrtConfig | None = None,
    rng=None,
    clip: float = CLIP_DEFAULT,
) -> NuisanceModels:
    """K-fold cross-fitting of (mu0, mu1, propensity), stratified by arm.

    Per fold, the outcome model of each arm trains only on that arm's
    units in the other folds, and the propensity model on all of them.
    An arm with fewer units than K contributes one unit to each of its
    first n_arm folds; the remaining folds then see the whole arm, which
    is the largest feasible cross-fit for that arm and is recorded in
    ``k_effective``.
    """
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    cfg = cfg or GbrtConfig()
    rng = np.random.default_rng(0) if rng is None else rng

    fold_of = np.empty(data.n, dtype=np.int64)
    for arm_idx in (data.control_idx, data.treated_idx):
        perm = rng.permutation(arm_idx)
        fold_of[perm] = np.arange(perm.shape[0]) % k

    mu0_hat = np.empty(data.n)
    mu1_hat = np.empty(data.n)
    pi_hat = np.empty(data.n)
    fold_models = []
    for fold in range(k):
        train = fold_of != fold
        test_idx = np.nonzero(~train)[0]
        c_train = train & (data.w == 0)
        t_train = train & (data.w == 1)
        if not c_train.any():
            c_train = data.w == 0
        if not t_train.any():
            t_train = data.w == 1
        mu0_model = _fit_outcome(data.x[c_train], data.y[c_train], cfg)
        mu1_model = _fit_outcome(data.x[t_train], data.y[t_train], cfg)
        try:
            pi_model = fit_propensity(data.x[train], data.w[train], cfg, clip)
        except SingleClassError:
            pi_model = _ConstantRate(np.mean(data.w[train]), clip)
        mu0_hat[test_idx] = mu0_model.predict(data.x[test_idx])
        mu1_hat[test_idx] = mu1_model.predict(data.x[test_idx])
        pi_hat[test_idx] = pi_model.predict_proba(data.x[test_idx])
        fold_models.append(
            FoldModels(mu0_model, mu1_model, pi_model, np.nonzero(train)[0])
        )

    return NuisanceModels(
        fold_of=fold_of,
        mu0_hat=mu0_hat,
        mu1_hat=mu1_hat,
        pi_hat=np.clip(pi_hat, clip, 1.0 - clip),
        fold_models=tuple(fold_models),
        clip=clip,
        k=k,
        k_effective={0: min(k, data.n0), 1: min(k, data.n1)},
    )
