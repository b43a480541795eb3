"""Gradient-boosted regression trees and the clipped propensity model.

Least-squares stagewise boosting: the fit starts from the target mean and
each stage adds a shrunken depth-limited tree fitted to the current
residuals, so predictions are mean(y) + learning_rate * sum of trees.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fewcate.tree import RegressionTree, presort


class TooFewSamplesError(ValueError):
    """Raised when a fit is requested on fewer than 2*min_leaf rows; fall
    back to a mean predictor (``MeanRegressor``) for such samples."""


class SingleClassError(ValueError):
    """Raised when a propensity fit sees only one treatment class."""


@dataclass(frozen=True)
class GbrtConfig:
    depth: int = 3
    n_estimators: int = 200
    learning_rate: float = 0.1
    min_leaf: int = 5

    def __post_init__(self):
        if self.depth < 1 or self.n_estimators < 1 or self.min_leaf < 1:
            raise ValueError("depth, n_estimators and min_leaf must be >= 1")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValueError("learning_rate must be in (0, 1]")


class MeanRegressor:
    """Constant predictor; the documented fallback for tiny samples."""

    def fit(self, X, y):
        self.mean_ = float(np.mean(y))
        return self

    def predict(self, X):
        return np.full(np.asarray(X).shape[0], self.mean_)


class GradientBoostedRegressor:
    def __init__(self, cfg: GbrtConfig | None = None):
        self.cfg = cfg or GbrtConfig()

    def fit(self, X, y):
        cfg = self.cfg
        X = np.ascontiguousarray(X, dtype=float)
        y = np.asarray(y, dtype=float).ravel()
        if X.shape[0] != y.shape[0]:
            raise ValueError("X and y disagree on the number of rows")
        if y.shape[0] < 2 * cfg.min_leaf:
            raise TooFewSamplesError(
                f"{y.shape[0]} rows is fewer than 2*min_leaf={2 * cfg.min_leaf}; "
                "fit a MeanRegressor instead"
            )
        ps = presort(X)
        # an exactly constant target must reproduce exactly: float summation
        # of identical values can drift off the constant, so pin the base
        self.base_ = float(y[0]) if np.all(y == y[0]) else float(np.mean(y))
        F = np.full(y.shape[0], self.base_)
        self.trees_ = []
        self.train_mse_ = []
        for _ in range(cfg.n_estimators):
            tree = RegressionTree(cfg.depth, cfg.min_leaf).fit(X, y - F, presorted=ps)
            F += cfg.learning_rate * tree.train_prediction_
            self.trees_.append(tree)
            self.train_mse_.append(float(np.mean((y - F) ** 2)))
        return self

    def predict(self, X):
        X = np.asarray(X, dtype=float)
        out = np.full(X.shape[0], self.base_)
        for tree in self.trees_:
            out += self.cfg.learning_rate * tree.predict(X)
        return out


class PropensityModel:
    """Treatment-probability model: boosted trees on the binary label under
    squared loss, predictions clipped into [clip, 1 - clip]."""

    def __init__(self, cfg: GbrtConfig | None = None, clip: float = 0.01):
        if not 0.0 < clip < 0.5:
            raise ValueError(f"clip must be in (0, 0.5), got {clip}")
        self.cfg = cfg or GbrtConfig()
        self.clip = clip

    def fit(self, X, w):
        w = np.asarray(w, dtype=float).ravel()
        if np.all(w == w[0]):
            raise SingleClassError("both treatment classes must be present")
        self._gbrt = GradientBoostedRegressor(self.cfg).fit(X, w)
        return self

    def predict_proba(self, X):
        return np.clip(self._gbrt.predict(X), self.clip, 1.0 - self.clip)


def fit_gbrt(X, y, cfg: GbrtConfig | None = None) -> GradientBoostedRegressor:
    return GradientBoostedRegressor(cfg).fit(X, y)


def fit_propensity(
    X, w, cfg: GbrtConfig | None = None, clip: float = 0.01
) -> PropensityModel:
    return PropensityModel(cfg, clip).fit(X, w)
