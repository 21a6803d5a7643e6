"""Hot numeric kernels with a numba backend and a pure-numpy fallback.

The backend is chosen once at import time from the INSTMINE_BACKEND
environment variable: "numba" (default when importable) or "numpy".
Both backends implement the same two entry points with identical
semantics and deterministic tie-breaking:

  topk_select(sims, p)  -> (ids, top_sims)    candidate-pool selection
  mine_pool(...)        -> (mask, order, n)   iterative query-set mining

benchmarks/bench_kernels.py compares the two implementations directly.
"""

import os

import numpy as np

from . import numpy_impl

try:
    from . import numba_impl

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    numba_impl = None
    _HAVE_NUMBA = False

_BACKENDS = {"numpy": numpy_impl}
if _HAVE_NUMBA:
    _BACKENDS["numba"] = numba_impl


def resolve_backend(name=None):
    """Return the implementation module for `name` (env-driven when None)."""
    if name is None:
        name = os.environ.get("INSTMINE_BACKEND", "").strip().lower()
        if not name:
            name = "numba" if _HAVE_NUMBA else "numpy"
    if name not in _BACKENDS:
        known = ", ".join(sorted(_BACKENDS))
        raise ValueError(f"unknown kernel backend {name!r} (expected one of: {known})")
    return _BACKENDS[name]


_active = resolve_backend()


def backend_name():
    return "numba" if _active is numba_impl else "numpy"


def topk_select(sims, p):
    return _active.topk_select(sims, p)


def mine_pool(query0, cand_feats, cand_ids, iterations, aggregation, selection,
              k, t_m, sparsify_threshold, anchor_only):
    query0 = np.atleast_2d(np.ascontiguousarray(query0, dtype=np.float64))
    cand_feats = np.ascontiguousarray(cand_feats, dtype=np.float64)
    cand_ids = np.ascontiguousarray(cand_ids, dtype=np.int64)
    # Shared matmuls keep both backends on identical similarity bits.
    sims_q0 = cand_feats @ query0.T
    gram = cand_feats @ cand_feats.T
    return _active.mine_pool(
        sims_q0, gram, cand_ids, int(iterations), int(aggregation),
        int(selection), int(k), float(t_m), float(sparsify_threshold),
        bool(anchor_only))


# Aggregation / selection mode codes shared by both backends.
AGG_AVG = 0
AGG_MAX = 1
SEL_TOPK = 0
SEL_THRESHOLD = 1
