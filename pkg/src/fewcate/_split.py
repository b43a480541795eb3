"""Best-split search for regression-tree nodes, with backend selection.

The scan over candidate thresholds is the hot inner loop of boosted-tree
fitting. When the compiled extension is importable it is used; otherwise a
vectorised NumPy implementation takes over. Both walk the presorted
feature column left to right with the same accumulation order and the same
first-maximum tie break, so fitted trees do not depend on the backend.
Set ``FEWCATE_PURE_PYTHON=1`` to force the fallback (used by the
benchmark and the backend-equivalence tests).
"""

from __future__ import annotations

import os

import numpy as np


def scan_split_numpy(x_sorted, y, order, in_node, n_node, min_leaf):
    """NumPy twin of the compiled scan; see ``_splitfast.scan_split``."""
    if n_node < 2 * min_leaf:
        return -np.inf, -1, 0.0, 0.0
    sel = in_node[order].view(bool)
    xs = x_sorted[sel]
    ys = y[order[sel]]
    csum = np.cumsum(ys)
    total = csum[-1]
    nl = np.arange(min_leaf, n_node - min_leaf + 1)
    sl = csum[nl - 1]
    sr = total - sl
    score = sl * sl / nl + sr * sr / (n_node - nl)
    score[xs[nl] == xs[nl - 1]] = -np.inf
    j = int(np.argmax(score))
    if score[j] == -np.inf:
        return -np.inf, -1, 0.0, 0.0
    pos = int(nl[j])
    return float(score[j]), pos, float(xs[pos - 1]), float(xs[pos])


if os.environ.get("FEWCATE_PURE_PYTHON"):
    COMPILED = False
    scan_split = scan_split_numpy
else:
    try:
        from fewcate._splitfast import scan_split as _scan_split_compiled

        COMPILED = True
        scan_split = _scan_split_compiled
    except ImportError:
        COMPILED = False
        scan_split = scan_split_numpy
