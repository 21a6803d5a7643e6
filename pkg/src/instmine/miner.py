"""Pseudo-positive mining: in-batch selection and iterative memory mining.

In-batch selection compares each tuple neighbor to the anchor under one of
five strategies and thresholds at T_b (strict >). Memory mining scores the
anchor's candidate pool against the growing query set, selecting per
iteration by top-k or threshold; the hot loop lives in kernels.mine_pool.
"""

from dataclasses import dataclass

import numpy as np

from .errors import EmptyQuerySet, InvalidConfig, MissingView
from . import kernels, membank

BATCH_STRATEGIES = ("nn", "augmented", "unaugmented", "relative", "multiscale")
AGGREGATIONS = ("avg", "max")
SELECTIONS = ("topk", "threshold")
QUERY_MODES = ("full", "anchor_only")
QUERY_FEATURES = ("fresh", "bank")


@dataclass(frozen=True)
class BatchMiningConfig:
    strategy: str = "unaugmented"
    t_b: float = 0.50
    n_b: int = 3

    def validate(self):
        problems = []
        if self.strategy not in BATCH_STRATEGIES:
            problems.append(f"strategy must be one of {BATCH_STRATEGIES}, "
                            f"got {self.strategy!r}")
        if self.n_b < 1:
            problems.append(f"n_b must be >= 1, got {self.n_b}")
        return problems


@dataclass(frozen=True)
class MemoryMiningConfig:
    aggregation: str = "avg"
    selection: str = "topk"
    k: int = 3
    t_m: float = 0.6
    sparsify_threshold: float = None   # None disables the discarding step
    iterations: int = 5
    query_set_mode: str = "full"
    # Whether in-batch query members are scored with this step's fresh clean
    # features or their clean-bank entries (identical values under the
    # update-then-mine step order; kept switchable).
    query_features: str = "fresh"

    def validate(self):
        problems = []
        if self.aggregation not in AGGREGATIONS:
            problems.append(f"aggregation must be one of {AGGREGATIONS}, "
                            f"got {self.aggregation!r}")
        if self.selection not in SELECTIONS:
            problems.append(f"selection must be one of {SELECTIONS}, "
                            f"got {self.selection!r}")
        if self.selection == "topk" and self.k < 1:
            problems.append(f"k must be >= 1 for topk, got {self.k}")
        if self.iterations < 0:
            problems.append(f"iterations must be >= 0, got {self.iterations}")
        if self.query_set_mode not in QUERY_MODES:
            problems.append(f"query_set_mode must be one of {QUERY_MODES}, "
                            f"got {self.query_set_mode!r}")
        if self.query_features not in QUERY_FEATURES:
            problems.append(f"query_features must be one of {QUERY_FEATURES}, "
                            f"got {self.query_features!r}")
        return problems


@dataclass
class QuerySet:
    member_ids: list          # anchor first
    member_features: np.ndarray  # (N_p, embed_dim) clean features

    @property
    def size(self):
        return len(self.member_ids)


@dataclass
class MiningResult:
    batch_positive_ids: list
    batch_negative_ids: list
    memory_positive_ids: list
    memory_negative_ids: list


def select_batch_positives(anchor_id, neighbor_ids, clean_feats, aug_feats,
                           aux_feats, cfg):
    """Split tuple neighbors into (selected, rejected) under cfg.strategy.

    Feature arguments are id -> unit-vector mappings; only the view the
    strategy needs has to be present. All comparisons are strict (>).
    """
    neighbor_ids = list(neighbor_ids)
    if cfg.strategy == "nn":
        return neighbor_ids, []

    source = {"augmented": aug_feats, "unaugmented": clean_feats,
              "relative": clean_feats, "multiscale": aux_feats}[cfg.strategy]
    if source is None:
        raise MissingView(f"strategy {cfg.strategy!r} needs its feature view")
    try:
        anchor = source[anchor_id]
        sims = np.array([float(anchor @ source[n]) for n in neighbor_ids])
    except KeyError as e:
        raise MissingView(
            f"strategy {cfg.strategy!r} missing feature for id {e}") from e

    if cfg.strategy == "relative":
        max_tuple = sims.max()
        if max_tuple <= 0:
            # Dividing by a non-positive maximum flips the comparison;
            # nothing in such a tuple is a credible positive.
            keep = np.zeros(len(sims), dtype=bool)
        else:
            keep = (sims / max_tuple) > cfg.t_b
    else:
        keep = sims > cfg.t_b

    selected = [n for n, flag in zip(neighbor_ids, keep) if flag]
    rejected = [n for n, flag in zip(neighbor_ids, keep) if not flag]
    return selected, rejected


def aggregate_set_similarity(candidate_feat, query, aggregation,
                             sparsify_threshold=None):
    """S_set of one candidate against the query set (reference path).

    Discarded entries count as zero inside the average; max of an
    all-discarded row is zero as well.
    """
    if query.size == 0:
        raise EmptyQuerySet("cannot aggregate against an empty query set")
    sims = query.member_features @ np.asarray(candidate_feat, dtype=np.float64)
    if sparsify_threshold is not None:
        sims = np.where(sims > sparsify_threshold, sims, 0.0)
    if aggregation == "max":
        return float(sims.max())
    return float(sims.mean())


def mine_memory_positives(query, pool_ids, clean_bank, cfg, exclude_ids):
    """Iterative mining over the anchor's candidate pool.

    Returns (memory_positive_ids in mining order, memory_negative_ids in
    pool order, final_query with mined members appended). Pool entries
    found in exclude_ids (the current mini-batch) never participate.
    """
    problems = cfg.validate()
    if problems:
        raise InvalidConfig("; ".join(problems))
    if query.size == 0:
        raise EmptyQuerySet("memory mining needs at least the anchor")

    exclude = set(int(i) for i in exclude_ids)
    eligible = []
    seen = set()
    for pid in pool_ids:
        pid = int(pid)
        if pid in exclude or pid in seen:
            continue
        seen.add(pid)
        eligible.append(pid)
    if not eligible or cfg.iterations == 0:
        return [], list(eligible), query

    cand_feats = membank.fetch(clean_bank, eligible)
    phi = float("nan") if cfg.sparsify_threshold is None \
        else float(cfg.sparsify_threshold)
    mask, order, n_sel = kernels.mine_pool(
        query.member_features, cand_feats, np.array(eligible, dtype=np.int64),
        cfg.iterations,
        kernels.AGG_AVG if cfg.aggregation == "avg" else kernels.AGG_MAX,
        kernels.SEL_TOPK if cfg.selection == "topk" else kernels.SEL_THRESHOLD,
        cfg.k, cfg.t_m, phi, cfg.query_set_mode == "anchor_only")

    mined = [eligible[i] for i in order[:n_sel]]
    negatives = [pid for pid, m in zip(eligible, mask) if not m]
    final_query = QuerySet(
        list(query.member_ids) + mined,
        np.vstack([query.member_features, cand_feats[order[:n_sel]]])
        if n_sel else query.member_features.copy())
    return mined, negatives, final_query


def mine_tuple(anchor_id, neighbor_ids, clean_feats, aug_feats, aux_feats,
               pool_ids, clean_bank, batch_cfg, mem_cfg, exclude_ids):
    """Full per-tuple mining: batch selection, then memory mining.

    clean_feats must cover the anchor and all neighbors (fresh per-step
    features unless mem_cfg.query_features says otherwise; the caller
    decides what to pass). Returns (MiningResult, final QuerySet).
    """
    problems = batch_cfg.validate()
    if problems:
        raise InvalidConfig("; ".join(problems))
    if len(neighbor_ids) != batch_cfg.n_b:
        raise InvalidConfig(
            f"tuple has {len(neighbor_ids)} neighbors, n_b={batch_cfg.n_b}")
    selected, rejected = select_batch_positives(
        anchor_id, neighbor_ids, clean_feats, aug_feats, aux_feats, batch_cfg)
    if clean_feats is None:
        raise MissingView("clean features are required to build the query set")
    query = QuerySet(
        [anchor_id] + selected,
        np.stack([clean_feats[i] for i in [anchor_id] + selected]))
    mem_pos, mem_neg, final_query = mine_memory_positives(
        query, pool_ids, clean_bank, mem_cfg, exclude_ids)
    return MiningResult(selected, rejected, mem_pos, mem_neg), final_query
