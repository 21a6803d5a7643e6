"""Numba-compiled implementations of the hot kernels.

Same contract as numpy_impl; see its docstrings. Kernels are sequential
(no prange) so results are deterministic, and every float op mirrors the
numpy path exactly: averages accumulate column by column, selection is a
repeated max scan with ties broken by ascending candidate id.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _topk_select(sims, p):
    n, m = sims.shape
    ids = np.empty((n, p), dtype=np.int64)
    top = np.empty((n, p), dtype=np.float64)
    taken = np.zeros(m, dtype=np.bool_)
    for i in range(n):
        taken[:] = False
        for slot in range(p):
            best = -1
            for j in range(m):
                if taken[j]:
                    continue
                # First untaken seeds; strict > keeps the lowest index on ties.
                if best == -1 or sims[i, j] > sims[i, best]:
                    best = j
            taken[best] = True
            ids[i, slot] = best
            top[i, slot] = sims[i, best]
    return ids, top


@njit(cache=True)
def _mine_pool(sims_q0, gram, cand_ids, iterations, aggregation, selection,
               k, t_m, sparsify_threshold, anchor_only):
    m, q0 = sims_q0.shape
    selected = np.zeros(m, dtype=np.bool_)
    order = np.zeros(m, dtype=np.int64)
    n_sel = 0
    if m == 0 or iterations == 0:
        return selected, order, 0

    use_phi = not np.isnan(sparsify_threshold)
    sims = np.empty((m, q0 + m), dtype=np.float64)
    sims[:, :q0] = sims_q0
    n_query = 1 if anchor_only else q0
    scores = np.empty(m, dtype=np.float64)

    for _ in range(iterations):
        for i in range(m):
            if selected[i]:
                scores[i] = -np.inf
                continue
            if aggregation == 1:
                acc = -np.inf
                for j in range(n_query):
                    s = sims[i, j]
                    if use_phi and s <= sparsify_threshold:
                        s = 0.0
                    if s > acc:
                        acc = s
                scores[i] = acc
            else:
                acc = 0.0
                for j in range(n_query):
                    s = sims[i, j]
                    if use_phi and s <= sparsify_threshold:
                        s = 0.0
                    acc += s
                scores[i] = acc / n_query

        if selection == 1:
            n_take = 0
            for i in range(m):
                if scores[i] > t_m:
                    n_take += 1
        else:
            n_take = k if k < m - n_sel else m - n_sel

        for _ in range(n_take):
            best = -1
            for i in range(m):
                if selected[i]:
                    continue
                if best == -1:
                    best = i
                elif scores[i] > scores[best]:
                    best = i
                elif scores[i] == scores[best] and cand_ids[i] < cand_ids[best]:
                    best = i
            selected[best] = True
            order[n_sel] = best
            n_sel += 1
            if not anchor_only:
                for r in range(m):
                    sims[r, n_query] = gram[r, best]
                n_query += 1
    return selected, order, n_sel


def topk_select(sims, p):
    sims = np.ascontiguousarray(sims, dtype=np.float64)
    return _topk_select(sims, int(p))


def mine_pool(sims_q0, gram, cand_ids, iterations, aggregation, selection,
              k, t_m, sparsify_threshold, anchor_only):
    return _mine_pool(
        np.ascontiguousarray(sims_q0, dtype=np.float64),
        np.ascontiguousarray(gram, dtype=np.float64),
        np.ascontiguousarray(cand_ids, dtype=np.int64),
        int(iterations), int(aggregation), int(selection), int(k),
        float(t_m), float(sparsify_threshold), bool(anchor_only))
