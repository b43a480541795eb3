"""Benchmark data: synthetic designs with known effect surfaces, stratified
few-placebo sampling, and the semi-synthetic infant-program benchmark.

The synthetic generators draw a large pool, assign treatment by the
design's propensity, then sub-sample each arm without replacement to the
requested counts. Sub-sampling within arms preserves the arm-conditional
covariate distributions; note that it tilts the propensity of the kept
sample away from the pool propensity unless the propensity is constant,
which is exactly why the known-propensity design assigns treatment by a
fixed coin.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from fewcate.dataset import Dataset

POOL_FACTOR = 20      # pool draws per requested unit before sub-sampling
N_TEST_DEFAULT = 1500


def _logistic(z):
    return 1.0 / (1.0 + np.exp(-z))


@dataclass(frozen=True)
class DesignTruth:
    """Ground-truth surfaces of a synthetic design."""

    kind: str
    dim: int
    noise_sd: float
    mu0: object   # callable (n,d) -> (n,)
    tau: object
    pi: object

    def mu1(self, X):
        return self.mu0(X) + self.tau(X)


def design_truth(kind: str, fixed_p: float | None = None) -> DesignTruth:
    """Registry of synthetic designs.

    linear: X ~ N(0, I4), treatment odds rise in x0, additive baseline,
    effect 1 + 0.3 x0 - 0.2 x2. nonlinear: two-covariate propensity, an
    interaction-plus-sine baseline, effect 1 + sin(1.4 x0) - 0.3 x2^2.
    known_propensity: the linear design's surfaces with treatment assigned
    by a fixed coin p, so the propensity is exactly p everywhere and
    survives arm sub-sampling unchanged.
    """
    if kind == "linear":
        return DesignTruth(
            kind="linear",
            dim=4,
            noise_sd=0.5,
            mu0=lambda X: 0.5 * X[:, 0] + 0.3 * X[:, 1],
            tau=lambda X: 1.0 + 0.3 * X[:, 0] - 0.2 * X[:, 2],
            pi=lambda X: _logistic(0.4 * X[:, 0]),
        )
    if kind == "nonlinear":
        return DesignTruth(
            kind="nonlinear",
            dim=4,
            noise_sd=0.5,
            mu0=lambda X: 0.5 * X[:, 0]
            + 0.4 * X[:, 1] * X[:, 2]
            + 0.3 * np.sin(2.0 * X[:, 1]),
            tau=lambda X: 1.0 + np.sin(1.4 * X[:, 0]) - 0.3 * X[:, 2] ** 2,
            pi=lambda X: _logistic(0.4 * X[:, 0] - 0.3 * X[:, 1]),
        )
    if kind == "known_propensity":
        if fixed_p is None:
            raise ValueError("known_propensity requires fixed_p")
        if not 0.0 < fixed_p < 1.0:
            raise ValueError(f"fixed_p must be in (0, 1), got {fixed_p}")
        p = float(fixed_p)
        return DesignTruth(
            kind="known_propensity",
            dim=4,
            noise_sd=0.5,
            mu0=lambda X: 0.5 * X[:, 0] + 0.3 * X[:, 1],
            tau=lambda X: 1.0 + 0.3 * X[:, 0] - 0.2 * X[:, 2],
            pi=lambda X: np.full(X.shape[0], p),
        )
    raise ValueError(f"unknown synthetic design kind {kind!r}")


@dataclass(frozen=True)
class DesignSpec:
    kind: str
    n0: int
    n1: int
    seed: int
    fixed_p: float | None = None       # known_propensity only; default n1/(n0+n1)
    ihdp_path: str | None = None
    replication: int = 0
    n_test: int = N_TEST_DEFAULT

    def __post_init__(self):
        if self.n0 < 1 or self.n1 < 1:
            raise ValueError("arm sizes must be >= 1")


@dataclass(frozen=True)
class LabeledSample:
    """A dataset with its ground truth: per-unit effect, per-unit
    propensity where defined, the effect function for synthetic kinds, and
    a disjoint evaluation set."""

    data: Dataset
    tau_true: np.ndarray
    pi_true: np.ndarray | None
    tau_fn: object | None
    test_x: np.ndarray
    test_tau: np.ndarray


def stratified_few_placebo(pool: LabeledSample, n0: int, n1: int, rng) -> LabeledSample:
    """Uniform without-replacement draws within each arm, to exact counts."""
    c, t = pool.data.control_idx, pool.data.treated_idx
    if c.shape[0] < n0 or t.shape[0] < n1:
        raise ValueError(
            f"pool has {c.shape[0]} controls / {t.shape[0]} treated; "
            f"requested ({n0}, {n1})"
        )
    keep = np.sort(
        np.concatenate(
            [rng.choice(c, size=n0, replace=False), rng.choice(t, size=n1, replace=False)]
        )
    )
    return LabeledSample(
        data=Dataset(pool.data.x[keep], pool.data.w[keep], pool.data.y[keep]),
        tau_true=pool.tau_true[keep],
        pi_true=None if pool.pi_true is None else pool.pi_true[keep],
        tau_fn=pool.tau_fn,
        test_x=pool.test_x,
        test_tau=pool.test_tau,
    )


def gen_synthetic(spec: DesignSpec) -> LabeledSample:
    """Generate a few-placebo sample from a synthetic design.

    Draws a pool of POOL_FACTOR * (n0 + n1) units (enlarged automatically
    if an arm comes up short), sub-samples to the exact arm counts, and
    attaches a fresh evaluation grid from the covariate marginal.
    Bit-reproducible for a fixed spec.
    """
    fixed_p = spec.fixed_p
    if spec.kind == "known_propensity" and fixed_p is None:
        fixed_p = spec.n1 / (spec.n0 + spec.n1)
    truth = design_truth(spec.kind, fixed_p)
    rng = np.random.default_rng(spec.seed)

    pool_n = POOL_FACTOR * (spec.n0 + spec.n1)
    while True:
        X = rng.standard_normal((pool_n, truth.dim))
        pi = truth.pi(X)
        w = (rng.random(pool_n) < pi).astype(np.int64)
        n0_pool = int(np.sum(w == 0))
        if n0_pool >= spec.n0 and pool_n - n0_pool >= spec.n1:
            break
        pool_n *= 2
    tau = truth.tau(X)
    y = truth.mu0(X) + truth.noise_sd * rng.standard_normal(pool_n) + w * tau

    pool = LabeledSample(
        data=Dataset(X, w, y),
        tau_true=tau,
        pi_true=pi,
        tau_fn=truth.tau,
        test_x=np.empty((0, truth.dim)),
        test_tau=np.empty(0),
    )
    sub = stratified_few_placebo(pool, spec.n0, spec.n1, rng)
    test_x = rng.standard_normal((spec.n_test, truth.dim))
    return LabeledSample(
        data=sub.data,
        tau_true=sub.tau_true,
        pi_true=sub.pi_true,
        tau_fn=truth.tau,
        test_x=test_x,
        test_tau=truth.tau(test_x),
    )


# ---------------------------------------------------------------------------
# Semi-synthetic benchmark: 25 real covariates, simulated response surfaces.
#
# Expected layout: one CSV per replication with header
#   treatment,y_factual,y_cfactual,mu0,mu1,x1,...,x25
# ``convert_ihdp_npz`` turns the widely-circulated npz distribution
# (keys x, t, yf, ycf, mu0, mu1, replications stacked on the last axis)
# into this layout.
# ---------------------------------------------------------------------------

IHDP_N_COVARIATES = 25
IHDP_HEADER = ["treatment", "y_factual", "y_cfactual", "mu0", "mu1"] + [
    f"x{i}" for i in range(1, IHDP_N_COVARIATES + 1)
]


@dataclass(frozen=True)
class IhdpReplication:
    x: np.ndarray       # (n, 25)
    w: np.ndarray
    y: np.ndarray
    mu0: np.ndarray     # noiseless potential-outcome means
    mu1: np.ndarray

    @property
    def tau(self) -> np.ndarray:
        return self.mu1 - self.mu0


def _parse_ihdp_csv(path: Path) -> IhdpReplication:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        if [h.strip() for h in header] != IHDP_HEADER:
            raise ValueError(
                f"{path}: expected header {','.join(IHDP_HEADER[:6])},...  "
                f"got {','.join(header[:6])},..."
            )
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(IHDP_HEADER):
                raise ValueError(
                    f"{path}: row {lineno} has {len(row)} fields, "
                    f"expected {len(IHDP_HEADER)}"
                )
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise ValueError(f"{path}: row {lineno}: {exc}") from None
    if not rows:
        raise ValueError(f"{path}: no data rows")
    arr = np.asarray(rows, dtype=float)
    w = arr[:, 0]
    if not np.all((w == 0) | (w == 1)):
        bad = int(np.nonzero((w != 0) & (w != 1))[0][0]) + 2
        raise ValueError(f"{path}: row {bad}, column treatment: not 0/1")
    return IhdpReplication(
        x=arr[:, 5:], w=w.astype(np.int64), y=arr[:, 1], mu0=arr[:, 3], mu1=arr[:, 4]
    )


def ihdp_load(path) -> list[IhdpReplication]:
    """Load replication CSVs from a file or a directory of files (sorted)."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file or directory: {path}")
    files = sorted(path.glob("*.csv")) if path.is_dir() else [path]
    if not files:
        raise ValueError(f"{path}: no .csv replication files found")
    return [_parse_ihdp_csv(f) for f in files]


def ihdp_few_placebo(rep: IhdpReplication, n0: int, rng) -> LabeledSample:
    """Keep all treated units, sub-sample the control arm to n0 units.

    Evaluation covers every covariate point of the replication against the
    known per-unit effect."""
    controls = np.nonzero(rep.w == 0)[0]
    if n0 > controls.shape[0]:
        raise ValueError(
            f"requested {n0} controls but the replication has {controls.shape[0]}"
        )
    keep = np.sort(
        np.concatenate(
            [rng.choice(controls, size=n0, replace=False), np.nonzero(rep.w == 1)[0]]
        )
    )
    return LabeledSample(
        data=Dataset(rep.x[keep], rep.w[keep], rep.y[keep]),
        tau_true=rep.tau[keep],
        pi_true=None,
        tau_fn=None,
        test_x=rep.x,
        test_tau=rep.tau,
    )


def convert_ihdp_npz(train_path, test_path, out_dir) -> list[Path]:
    """Write one replication CSV per response-surface draw from the npz
    pair (train/test splits are concatenated; the benchmark is evaluated
    on all units)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    train = np.load(train_path)
    test = np.load(test_path)
    n_rep = train["x"].shape[2]
    paths = []
    for r in range(n_rep):
        cols = [
            np.concatenate([train["t"][:, r], test["t"][:, r]]),
            np.concatenate([train["yf"][:, r], test["yf"][:, r]]),
            np.concatenate([train["ycf"][:, r], test["ycf"][:, r]]),
            np.concatenate([train["mu0"][:, r], test["mu0"][:, r]]),
            np.concatenate([train["mu1"][:, r], test["mu1"][:, r]]),
        ]
        x = np.concatenate([train["x"][:, :, r], test["x"][:, :, r]], axis=0)
        arr = np.column_stack(cols + [x])
        out = out_dir / f"ihdp_rep{r + 1:03d}.csv"
        with open(out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(IHDP_HEADER)
            writer.writerows(arr.tolist())
        paths.append(out)
    return paths
