"""Observational-data container shared by every estimator."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Dataset:
    """Covariates, binary treatment, outcome. The few-placebo regime is a
    property of the arm counts: n0 much smaller than n1."""

    x: np.ndarray
    w: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        w = np.asarray(self.w)
        y = np.asarray(self.y, dtype=float).ravel()
        if not (x.shape[0] == w.shape[0] == y.shape[0]):
            raise ValueError(
                f"length mismatch: x has {x.shape[0]} rows, w {w.shape[0]}, "
                f"y {y.shape[0]}"
            )
        if not np.all((w == 0) | (w == 1)):
            raise ValueError("treatment indicator must be 0/1")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "w", w.astype(np.int64))
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def n0(self) -> int:
        return int(np.sum(self.w == 0))

    @property
    def n1(self) -> int:
        return int(np.sum(self.w == 1))

    @property
    def control_idx(self) -> np.ndarray:
        return np.nonzero(self.w == 0)[0]

    @property
    def treated_idx(self) -> np.ndarray:
        return np.nonzero(self.w == 1)[0]
