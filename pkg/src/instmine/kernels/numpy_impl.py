"""Pure-numpy reference implementations of the hot kernels.

Similarity matrices are computed by the dispatching layer and passed in,
so this module and the numba twin perform the exact same float ops in the
exact same order (sequential column accumulation for averages).
"""

import numpy as np


def topk_select(sims, p):
    """Select the top-p entries of each row of a similarity matrix.

    Rows are ranked by descending similarity with ties broken by ascending
    column index. Entries set to -inf (e.g. the self column) sort last.

    Returns (ids, top_sims) of shape (n_rows, p).
    """
    sims = np.asarray(sims, dtype=np.float64)
    # Stable sort on the negated row keeps ascending column order on ties.
    order = np.argsort(-sims, axis=1, kind="stable")[:, :p]
    top = np.take_along_axis(sims, order, axis=1)
    return order.astype(np.int64), top


def mine_pool(sims_q0, gram, cand_ids, iterations, aggregation, selection,
              k, t_m, sparsify_threshold, anchor_only):
    """Iteratively mine pool candidates against a growing query set.

    sims_q0: (m, q0) similarities of each candidate to the initial query
        features, anchor in column 0.
    gram: (m, m) candidate-candidate similarities; column c is appended to
        the scoring set when candidate c is mined (full mode only).
    cand_ids: (m,) global image ids, used only for tie-breaking.
    aggregation: 0 = average over the scoring query, 1 = maximum.
    selection: 0 = top-k per iteration, 1 = all scores strictly above t_m.
    sparsify_threshold: NaN disables discarding; otherwise per-pair
        similarities <= threshold count as 0 inside the aggregation.
    anchor_only: score against column 0 only; selections still accumulate
        but never join the scoring query.

    Returns (selected_mask (m,), order (m,), n_selected). order[:n] holds
    candidate indices in mining order (per iteration, descending score,
    ties by ascending id).
    """
    sims_q0 = np.asarray(sims_q0, dtype=np.float64)
    gram = np.asarray(gram, dtype=np.float64)
    cand_ids = np.asarray(cand_ids, dtype=np.int64)
    m, q0 = sims_q0.shape
    selected = np.zeros(m, dtype=bool)
    order = np.zeros(m, dtype=np.int64)
    n_sel = 0
    if m == 0 or iterations == 0:
        return selected, order, 0

    use_phi = not np.isnan(sparsify_threshold)
    sims = np.empty((m, q0 + m), dtype=np.float64)
    sims[:, :q0] = sims_q0
    n_query = 1 if anchor_only else q0

    for _ in range(iterations):
        entries = sims[:, :n_query]
        if use_phi:
            entries = np.where(entries > sparsify_threshold, entries, 0.0)
        if aggregation == 1:
            scores = entries.max(axis=1)
        else:
            # Column-by-column accumulation matches the numba loop bit for bit.
            acc = np.zeros(m, dtype=np.float64)
            for j in range(n_query):
                acc += entries[:, j]
            scores = acc / n_query
        scores[selected] = -np.inf

        if selection == 1:
            n_take = int((scores > t_m).sum())
        else:
            n_take = min(k, m - n_sel)
        if n_take == 0:
            continue

        rank = np.lexsort((cand_ids, -scores))
        for c in rank[:n_take]:
            selected[c] = True
            order[n_sel] = c
            n_sel += 1
            if not anchor_only:
                sims[:, n_query] = gram[:, c]
                n_query += 1
    return selected, order, n_sel
