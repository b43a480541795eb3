"""Timing comparison of the split-scan backends.

The compiled extension and the NumPy fallback grow identical trees (the
test suite checks bit-equality); this script measures what the extension
buys on a nuisance-sized boosted fit. The fallback timing runs in a
subprocess with FEWCATE_PURE_PYTHON=1, because the backend is chosen at
import time.

    python3 benchmarks/bench_boosting.py [--n 500] [--d 4] [--repeats 5]
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np

SNIPPET = """
import json, os, time
import numpy as np
from fewcate._split import COMPILED
from fewcate.boosting import GbrtConfig, fit_gbrt

params = json.loads(os.environ["BENCH_PARAMS"])
rng = np.random.default_rng(0)
X = rng.standard_normal((params["n"], params["d"]))
y = X[:, 0] - 2.0 * X[:, 1] + 0.5 * rng.standard_normal(params["n"])
fit_gbrt(X[:64], y[:64])  # warm-up
times = []
for _ in range(params["repeats"]):
    t0 = time.perf_counter()
    model = fit_gbrt(X, y)
    times.append(time.perf_counter() - t0)
pt0 = time.perf_counter()
model.predict(X)
predict_time = time.perf_counter() - pt0
print(json.dumps({"compiled": COMPILED, "fit_seconds": min(times),
                  "predict_seconds": predict_time}))
"""


def run_variant(pure_python: bool, params) -> dict:
    env = dict(os.environ, BENCH_PARAMS=json.dumps(params))
    if pure_python:
        env["FEWCATE_PURE_PYTHON"] = "1"
    else:
        env.pop("FEWCATE_PURE_PYTHON", None)
    out = subprocess.run(
        [sys.executable, "-c", SNIPPET], env=env, check=True, capture_output=True, text=True
    )
    return json.loads(out.stdout)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=500, help="training rows")
    ap.add_argument("--d", type=int, default=4, help="features")
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()
    params = {"n": args.n, "d": args.d, "repeats": args.repeats}

    fast = run_variant(False, params)
    slow = run_variant(True, params)
    if not fast["compiled"]:
        print("note: compiled extension unavailable; comparing fallback to itself")
    print(f"boosted fit, n={args.n}, d={args.d}, 200 trees of depth 3 (best of {args.repeats}):")
    print(f"  compiled backend: {fast['fit_seconds']*1e3:8.1f} ms")
    print(f"  numpy fallback:   {slow['fit_seconds']*1e3:8.1f} ms")
    print(f"  speedup:          {slow['fit_seconds']/fast['fit_seconds']:8.2f}x")
    print(f"ensemble predict on the training set: "
          f"{fast['predict_seconds']*1e3:.1f} ms (backend-independent)")


if __name__ == "__main__":
    main()
