"""Seeded experiment runner: sweeps designs x control-arm sizes x methods
x seeds, evaluates every method on the same per-seed data, and emits
per-seed rows plus aggregate tables.

Seed discipline: every random stream is derived by hashing
(master_seed, design, n0, seed index, purpose). The method name is
deliberately excluded from the data and nuisance streams, so all methods
of a cell see identical data and adding a method to the config never
changes another method's numbers. Each method draws its own independent
stream for any internal randomness.
"""

from __future__ import annotations

import csv
import hashlib
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from fewcate import metalearners as ml
from fewcate.designs import (
    DesignSpec,
    LabeledSample,
    design_truth,
    gen_synthetic,
    ihdp_few_placebo,
    ihdp_load,
)
from fewcate.gpcate import cate_posterior, gpcate_fit, posterior_diagnostics
from fewcate.metrics import BiasSpreadReport, IntervalSet, bias_spread_decomposition, interval_metrics, rpehe
from fewcate.nuisance import cross_fit

SYNTHETIC_KINDS = ("linear", "nonlinear", "known_propensity")
METHOD_NAMES = (
    "gpcate",
    "xlearner_bayes",
    "xlearner",
    "dr_unweighted",
    "dr_ivw",
    "dr_unweighted_known",
    "dr_ivw_known",
    "s_learner",
    "t_learner",
)
IHDP_SUBSAMPLES_PER_REP = 4
CSV_COLUMNS = ("design", "n0", "method", "seed", "rpehe", "coverage", "mean_width", "status")


def derive_seed(*parts) -> int:
    """Stable 64-bit stream id from a tuple of labels and integers."""
    text = "|".join(str(p) for p in parts)
    digest = hashlib.blake2b(text.encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


@dataclass(frozen=True)
class SweepConfig:
    designs: tuple = ("linear",)
    n0_list: tuple = (30, 100, 500)
    n1: int = 500
    methods: tuple = ("gpcate",)
    seeds: int = 20
    master_seed: int = 0
    level: float = 0.95
    treated_cap: int | None = None
    ihdp_path: str | None = None
    out_dir: str = "out"
    k_folds: int = 5
    n_test: int = 1500
    n_grid: int = 3000
    workers: int = 1

    def __post_init__(self):
        if self.seeds < 1:
            raise ValueError("seeds must be >= 1")
        for m in self.methods:
            if m not in METHOD_NAMES:
                raise ValueError(f"unknown method {m!r}; known: {METHOD_NAMES}")
        for d in self.designs:
            if d not in SYNTHETIC_KINDS + ("ihdp",):
                raise ValueError(f"unknown design {d!r}")
        if "ihdp" in self.designs and not self.ihdp_path:
            raise ValueError("design 'ihdp' requires ihdp_path")


def parse_config(path) -> SweepConfig:
    """Read a flat key = value config file (comma-separated lists,
    # comments). Unset keys keep the benchmark defaults: 5 folds, 20
    seeds, 1500 test points, level 0.95."""
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        values[key.strip()] = val.strip()

    def ints(s):
        return tuple(int(v) for v in s.split(",") if v.strip())

    def strs(s):
        return tuple(v.strip() for v in s.split(",") if v.strip())

    kwargs = {}
    parsers = {
        "design": ("designs", strs),
        "designs": ("designs", strs),
        "n0_list": ("n0_list", ints),
        "n1": ("n1", int),
        "methods": ("methods", strs),
        "seeds": ("seeds", int),
        "master_seed": ("master_seed", int),
        "level": ("level", float),
        "treated_cap": ("treated_cap", int),
        "ihdp_path": ("ihdp_path", str),
        "out_dir": ("out_dir", str),
        "k_folds": ("k_folds", int),
        "n_test": ("n_test", int),
        "n_grid": ("n_grid", int),
        "workers": ("workers", int),
    }
    for key, val in values.items():
        if key not in parsers:
            raise ValueError(f"{path}: unknown config key {key!r}")
        name, fn = parsers[key]
        kwargs[name] = fn(val)
    return SweepConfig(**kwargs)


@dataclass(frozen=True)
class Row:
    design: str
    n0: int
    method: str
    seed: int
    rpehe: float       # nan when unavailable
    coverage: float
    mean_width: float
    status: str


@dataclass
class SweepReport:
    config: SweepConfig
    rows: list
    grid_tau: dict = field(default_factory=dict)    # design -> (G,) truth
    grid_pred: dict = field(default_factory=dict)   # (design, n0, method) -> (S, G)
    grid_sd: dict = field(default_factory=dict)
    grid_lo: dict = field(default_factory=dict)
    grid_hi: dict = field(default_factory=dict)

    def aggregate(self):
        """Mean and standard error per (design, n0, method, metric) over
        rows with status ok; metrics reported only where defined."""
        cells = {}
        for row in self.rows:
            cells.setdefault((row.design, row.n0, row.method), []).append(row)
        out = {}
        for key, rows in cells.items():
            metrics = {}
            for metric in ("rpehe", "coverage", "mean_width"):
                vals = np.array(
                    [
                        getattr(r, metric)
                        for r in rows
                        if r.status == "ok" and not math.isnan(getattr(r, metric))
                    ]
                )
                if vals.size:
                    se = float(np.std(vals, ddof=1) / np.sqrt(vals.size)) if vals.size > 1 else 0.0
                    metrics[metric] = (float(np.mean(vals)), se, int(vals.size))
            out[key] = metrics
        return out

    def bias_report(self, design: str, n0: int, method: str) -> BiasSpreadReport:
        key = (design, n0, method)
        if key not in self.grid_pred:
            raise KeyError(f"no grid predictions recorded for {key}")
        intervals = [
            IntervalSet(lo, hi, self.config.level)
            for lo, hi in zip(self.grid_lo[key], self.grid_hi[key])
        ]
        return bias_spread_decomposition(
            self.grid_pred[key], self.grid_sd[key], intervals, self.grid_tau[design]
        )


# ---------------------------------------------------------------------------
# method runners
# ---------------------------------------------------------------------------


@dataclass
class _CellContext:
    """Per (design, n0, seed) state shared by the methods of one cell."""

    config: SweepConfig
    design: str
    n0: int
    seed: int
    sample: LabeledSample
    grid_x: np.ndarray | None
    _nuis: object = None

    def rng(self, purpose: str):
        return np.random.default_rng(
            derive_seed(self.config.master_seed, self.design, self.n0, self.seed, purpose)
        )

    @property
    def nuisances(self):
        # shared by every meta-learner of the cell; stream independent of
        # the method list
        if self._nuis is None:
            self._nuis = cross_fit(
                self.sample.data, k=self.config.k_folds, rng=self.rng("nuisance")
            )
        return self._nuis

    @property
    def basis(self):
        return ml.basis_for_design(self.design)


def _eval_points(ctx: _CellContext):
    pts = [ctx.sample.test_x]
    if ctx.grid_x is not None:
        pts.append(ctx.grid_x)
    return pts


def _posterior_outputs(ctx, mean_fn, sd_fn, level):
    """Evaluate a Gaussian posterior on the test set and the bias grid."""
    from scipy.stats import norm

    z = norm.ppf(0.5 + level / 2.0)
    out = {}
    m, s = mean_fn(ctx.sample.test_x), sd_fn(ctx.sample.test_x)
    out["tau_test"] = m
    out["lo_test"], out["hi_test"] = m - z * s, m + z * s
    if ctx.grid_x is not None:
        gm, gs = mean_fn(ctx.grid_x), sd_fn(ctx.grid_x)
        out["grid"] = (gm, gs, gm - z * gs, gm + z * gs)
    return out


def _run_gpcate(ctx: _CellContext):
    model = gpcate_fit(
        ctx.sample.data, treated_cap=ctx.config.treated_cap, rng=ctx.rng("method:gpcate")
    )
    post = cate_posterior(model, ctx.sample.test_x, ctx.config.level)
    out = {
        "tau_test": post.mean,
        "lo_test": post.lo,
        "hi_test": post.hi,
        "diag": posterior_diagnostics(model, ctx.sample.test_x)._asdict(),
    }
    if ctx.grid_x is not None:
        gpost = cate_posterior(model, ctx.grid_x, ctx.config.level)
        out["grid"] = (gpost.mean, gpost.sd, gpost.lo, gpost.hi)
    return out


def _run_xlearner_bayes(ctx: _CellContext):
    post = ml.x_learner_bayes(ctx.sample.data, ctx.nuisances, ctx.basis)
    return _posterior_outputs(ctx, post.mean, post.sd, ctx.config.level)


def _run_xlearner(ctx: _CellContext):
    fn = ml.x_learner_point(ctx.sample.data, ctx.nuisances)
    return {"tau_test": fn(ctx.sample.test_x)}


def _run_dr(ctx: _CellContext, mode: str, known: bool):
    known_pi = None
    if known:
        if ctx.sample.pi_true is None:
            raise ValueError("known-propensity variant needs pi_true on the sample")
        known_pi = ctx.sample.pi_true
    scores = ml.dr_score(ctx.sample.data, ctx.nuisances, known_pi=known_pi)
    fn, post = ml.dr_learner(scores, ctx.sample.data, mode, ctx.basis)
    phi = ctx.basis
    out = _posterior_outputs(
        ctx, lambda X: post.mean(phi(X)), lambda X: post.sd(phi(X)), ctx.config.level
    )
    out["tau_test"] = fn(ctx.sample.test_x)
    if ctx.grid_x is not None:
        gm, gs, glo, ghi = out["grid"]
        out["grid"] = (fn(ctx.grid_x), gs, glo, ghi)
    if post.diagnostics:
        out["diag"] = dict(post.diagnostics)
    return out


def _run_s_learner(ctx: _CellContext):
    fn, _ = ml.baseline_st_learners(ctx.sample.data)
    return {"tau_test": fn(ctx.sample.test_x)}


def _run_t_learner(ctx: _CellContext):
    _, fn = ml.baseline_st_learners(ctx.sample.data)
    return {"tau_test": fn(ctx.sample.test_x)}


_RUNNERS = {
    "gpcate": _run_gpcate,
    "xlearner_bayes": _run_xlearner_bayes,
    "xlearner": _run_xlearner,
    "dr_unweighted": lambda ctx: _run_dr(ctx, "unweighted", known=False),
    "dr_ivw": lambda ctx: _run_dr(ctx, "ivw", known=False),
    "dr_unweighted_known": lambda ctx: _run_dr(ctx, "unweighted", known=True),
    "dr_ivw_known": lambda ctx: _run_dr(ctx, "ivw", known=True),
    "s_learner": _run_s_learner,
    "t_learner": _run_t_learner,
}


_IHDP_CACHE: dict = {}


def _ihdp_replications(path):
    if path not in _IHDP_CACHE:
        _IHDP_CACHE[path] = ihdp_load(path)
    return _IHDP_CACHE[path]


def _make_sample(config: SweepConfig, design: str, n0: int, seed: int) -> LabeledSample:
    data_seed = derive_seed(config.master_seed, design, n0, seed, "data")
    if design == "ihdp":
        reps = _ihdp_replications(config.ihdp_path)
        rep = reps[(seed // IHDP_SUBSAMPLES_PER_REP) % len(reps)]
        return ihdp_few_placebo(rep, n0, np.random.default_rng(data_seed))
    spec = DesignSpec(kind=design, n0=n0, n1=config.n1, seed=data_seed, n_test=config.n_test)
    return gen_synthetic(spec)


def _make_grid(config: SweepConfig, design: str):
    """Fixed evaluation grid for the seed-averaged bias measurement: one
    draw from the covariate marginal per design, shared by every cell."""
    if design == "ihdp":
        return None, None
    truth = design_truth(design, fixed_p=0.5 if design == "known_propensity" else None)
    rng = np.random.default_rng(derive_seed(config.master_seed, design, "bias-grid"))
    grid_x = rng.standard_normal((config.n_grid, truth.dim))
    return grid_x, truth.tau(grid_x)


def _run_cell(config: SweepConfig, design: str, n0: int, seed: int):
    """All methods on one (design, n0, seed) cell; never raises for a
    method failure, which becomes an error row instead."""
    sample = _make_sample(config, design, n0, seed)
    grid_x, _ = _make_grid(config, design)
    ctx = _CellContext(config, design, n0, seed, sample, grid_x)
    rows, grids = [], {}
    for method in config.methods:
        try:
            out = _RUNNERS[method](ctx)
            cov, width = math.nan, math.nan
            if "lo_test" in out:
                cov, width = interval_metrics(
                    IntervalSet(out["lo_test"], out["hi_test"], config.level),
                    sample.test_tau,
                )
            rows.append(
                Row(
                    design=design,
                    n0=n0,
                    method=method,
                    seed=seed,
                    rpehe=rpehe(out["tau_test"], sample.test_tau),
                    coverage=cov,
                    mean_width=width,
                    status="ok",
                )
            )
            if "grid" in out:
                grids[method] = out["grid"]
        except Exception as exc:  # a failed cell must not abort the sweep
            rows.append(
                Row(
                    design=design,
                    n0=n0,
                    method=method,
                    seed=seed,
                    rpehe=math.nan,
                    coverage=math.nan,
                    mean_width=math.nan,
                    status=f"error: {type(exc).__name__}: {exc}",
                )
            )
    return rows, grids


def run_sweep(config: SweepConfig) -> SweepReport:
    """Run the full sweep; deterministic given the config (the worker
    count only changes scheduling, never results)."""
    cells = [
        (design, n0, seed)
        for design in config.designs
        for n0 in config.n0_list
        for seed in range(config.seeds)
    ]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(
                pool.map(_run_cell, *zip(*[(config, d, n, s) for d, n, s in cells]))
            )
    else:
        results = [_run_cell(config, d, n, s) for d, n, s in cells]

    report = SweepReport(config=config, rows=[])
    staged = {}
    for (design, n0, seed), (rows, grids) in zip(cells, results):
        report.rows.extend(rows)
        for method, (gm, gs, glo, ghi) in grids.items():
            staged.setdefault((design, n0, method), []).append((gm, gs, glo, ghi))
    for design in config.designs:
        _, grid_tau = _make_grid(config, design)
        if grid_tau is not None:
            report.grid_tau[design] = grid_tau
    for key, per_seed in staged.items():
        report.grid_pred[key] = np.stack([p[0] for p in per_seed])
        report.grid_sd[key] = np.stack([p[1] for p in per_seed])
        report.grid_lo[key] = np.stack([p[2] for p in per_seed])
        report.grid_hi[key] = np.stack([p[3] for p in per_seed])
    return report


# ---------------------------------------------------------------------------
# emission
# ---------------------------------------------------------------------------


def _fmt(value: float) -> str:
    return "" if math.isnan(value) else repr(value)


def write_rows_csv(rows, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in rows:
            writer.writerow(
                [r.design, r.n0, r.method, r.seed, _fmt(r.rpehe), _fmt(r.coverage), _fmt(r.mean_width), r.status]
            )


def read_rows_csv(path) -> list:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != list(CSV_COLUMNS):
            raise ValueError(f"{path}: unexpected columns {reader.fieldnames}")
        for rec in reader:
            rows.append(
                Row(
                    design=rec["design"],
                    n0=int(rec["n0"]),
                    method=rec["method"],
                    seed=int(rec["seed"]),
                    rpehe=float(rec["rpehe"]) if rec["rpehe"] else math.nan,
                    coverage=float(rec["coverage"]) if rec["coverage"] else math.nan,
                    mean_width=float(rec["mean_width"]) if rec["mean_width"] else math.nan,
                    status=rec["status"],
                )
            )
    return rows


def _aggregate_markdown(report: SweepReport) -> str:
    """One table per (design, metric): method rows, one column per
    control-arm size, mean +/- standard error; gaps marked, never zeroed."""
    agg = report.aggregate()
    designs = list(dict.fromkeys(k[0] for k in agg))
    errored = {
        (r.design, r.method) for r in report.rows if r.status != "ok"
    }
    lines = []
    for design in designs:
        n0s = sorted({k[1] for k in agg if k[0] == design})
        methods = [m for m in report.config.methods if any(k[0] == design and k[2] == m for k in agg)]
        for metric in ("rpehe", "coverage", "mean_width"):
            rows_txt = []
            for method in methods:
                cells_txt = []
                for n0 in n0s:
                    entry = agg.get((design, n0, method), {}).get(metric)
                    cells_txt.append(
                        "—" if entry is None else f"{entry[0]:.3f} ± {entry[1]:.3f}"
                    )
                # a method that never yields this metric is omitted, but an
                # errored one stays visible as a marked gap
                if any(c != "—" for c in cells_txt) or (design, method) in errored:
                    rows_txt.append(f"| {method} | " + " | ".join(cells_txt) + " |")
            if not rows_txt:
                continue
            lines.append(f"### {design}: {metric}")
            lines.append("")
            lines.append("| method | " + " | ".join(f"n0={n}" for n in n0s) + " |")
            lines.append("|---" * (len(n0s) + 1) + "|")
            lines.extend(rows_txt)
            lines.append("")
    return "\n".join(lines) + "\n"


def _aggregate_csv(report: SweepReport) -> str:
    agg = report.aggregate()
    out = ["design,n0,method,metric,mean,se,n"]
    for (design, n0, method) in sorted(agg):
        for metric in ("rpehe", "coverage", "mean_width"):
            entry = agg[(design, n0, method)].get(metric)
            if entry is not None:
                out.append(
                    f"{design},{n0},{method},{metric},{entry[0]!r},{entry[1]!r},{entry[2]}"
                )
    return "\n".join(out) + "\n"


def emit_report(report: SweepReport, out_dir=None, format: str = "markdown") -> list:
    """Write per-seed rows (CSV) and aggregate tables (markdown or CSV).
    Returns the written paths."""
    if format not in ("markdown", "md", "csv"):
        raise ValueError(f"unknown format {format!r}")
    if not report.rows:
        raise ValueError("refusing to emit an empty report")
    out_dir = Path(out_dir if out_dir is not None else report.config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = [out_dir / "rows.csv"]
    write_rows_csv(report.rows, paths[0])
    if format == "csv":
        agg_path = out_dir / "aggregates.csv"
        agg_path.write_text(_aggregate_csv(report))
    else:
        agg_path = out_dir / "aggregates.md"
        agg_path.write_text(_aggregate_markdown(report))
    paths.append(agg_path)
    return paths
