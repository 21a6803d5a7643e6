"""Retrieval evaluation: multiview descriptors and mean average precision.

Each image is described by the renormalized mean of its per-view unit
embeddings. A seeded per-class split nominates queries; every query ranks
the shared gallery by cosine and is scored by average precision against
its hidden class.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import encoder as encoder_mod
from . import synthdata
from .errors import InvalidConfig, InvalidInput
from .numerics import normalize_rows


@dataclass(frozen=True)
class EvalConfig:
    num_views: int = 3
    query_fraction: float = 0.2
    seed: int = 0

    def validate(self, num_aux_views=None):
        problems = []
        if self.num_views < 1:
            problems.append(f"num_views must be >= 1, got {self.num_views}")
        if num_aux_views is not None and self.num_views > num_aux_views:
            problems.append(f"num_views {self.num_views} exceeds the "
                            f"{num_aux_views} views the dataset carries")
        if not 0.0 < self.query_fraction < 1.0:
            problems.append("query_fraction must lie in (0, 1), "
                            f"got {self.query_fraction}")
        return problems


@dataclass(frozen=True)
class QueryResult:
    query_id: int
    class_id: int
    ap: float
    # (gallery_id, similarity, relevant) rows, kept only on request.
    ranking: tuple | None = None


@dataclass
class EvalReport:
    map: float
    num_queries: int
    per_query: list[QueryResult]
    per_class_ap: dict[int, float]
    config: EvalConfig

    def to_json_dict(self):
        return {
            "map": self.map,
            "num_queries": self.num_queries,
            "per_class_ap": {str(c): ap
                             for c, ap in sorted(self.per_class_ap.items())},
            "config": {"num_views": self.config.num_views,
                       "query_fraction": self.config.query_fraction,
                       "seed": self.config.seed},
        }


def multiview_features(state, dataset, num_views, ids=None):
    """(n, e) fused descriptors: unit view embeddings averaged, renormalized."""
    if num_views < 1:
        raise InvalidConfig(f"num_views must be >= 1, got {num_views}")
    if num_views > dataset.config.num_aux_views:
        raise InvalidConfig(
            f"num_views {num_views} exceeds dataset's "
            f"{dataset.config.num_aux_views}")
    records = dataset.records if ids is None \
        else [dataset.records[i] for i in ids]
    acc = None
    for v in range(num_views):
        views = np.stack([synthdata.aux_view(r, v, dataset.config)
                          for r in records])
        units, _ = encoder_mod.encode_batch(state, views)
        acc = units if acc is None else acc + units
    return normalize_rows(acc / num_views)


def multiview_feature(state, record, num_views, config):
    """Single-record fused descriptor; view 0 alone is the clean encoding."""
    holder = synthdata.Dataset(config, [record])
    return multiview_features(state, holder, num_views)[0]


def average_precision(ranked_relevance, num_relevant):
    """AP = (1/R) * sum over hit ranks k of precision@k."""
    rel = np.asarray(ranked_relevance)
    if rel.ndim != 1:
        raise InvalidInput("relevance must be a flat list")
    if not np.isin(rel, (0, 1)).all():
        raise InvalidInput("relevance entries must be 0 or 1")
    if num_relevant < 1:
        raise InvalidInput(f"num_relevant must be >= 1, got {num_relevant}")
    if rel.sum() > num_relevant:
        raise InvalidInput(f"{int(rel.sum())} hits exceed "
                           f"num_relevant={num_relevant}")
    rel = rel.astype(np.float64)
    hits = np.cumsum(rel)
    ranks = np.arange(1, len(rel) + 1, dtype=np.float64)
    return float((rel * hits / ranks).sum() / num_relevant)


def map_from_features(query_feats, query_ids, query_labels, gallery_feats,
                      gallery_ids, gallery_labels, keep_rankings=False):
    """Per-query APs for explicit feature/label arrays.

    Gallery order never matters: ranking is by descending cosine with ties
    broken by ascending gallery id.
    """
    query_feats = np.atleast_2d(np.asarray(query_feats, dtype=np.float64))
    gallery_feats = np.atleast_2d(np.asarray(gallery_feats, dtype=np.float64))
    gallery_ids = np.asarray(gallery_ids, dtype=np.int64)
    gallery_labels = np.asarray(gallery_labels, dtype=np.int64)
    sims = query_feats @ gallery_feats.T
    results = []
    for qi in range(len(query_feats)):
        label = int(query_labels[qi])
        num_relevant = int((gallery_labels == label).sum())
        if num_relevant == 0:
            raise InvalidInput(
                f"query {query_ids[qi]} has no relevant gallery item")
        order = np.lexsort((gallery_ids, -sims[qi]))
        rel = (gallery_labels[order] == label).astype(np.int64)
        ap = average_precision(rel, num_relevant)
        ranking = None
        if keep_rankings:
            ranking = tuple((int(gallery_ids[j]), float(sims[qi, j]),
                             bool(gallery_labels[j] == label))
                            for j in order)
        results.append(QueryResult(int(query_ids[qi]), label, ap, ranking))
    return results


def split_queries(labels, query_fraction, seed):
    """Seeded per-class query pick; unlabeled images never become queries."""
    labels = np.asarray(labels, dtype=np.int64)
    rng = np.random.default_rng(seed)
    query_ids = []
    for c in np.unique(labels):
        if c < 0:
            continue
        members = np.flatnonzero(labels == c)
        if len(members) < 2:
            raise InvalidConfig(
                f"class {c} has {len(members)} images; a query and a "
                "gallery item are both required")
        n_q = min(max(1, round(query_fraction * len(members))),
                  len(members) - 1)
        picks = rng.choice(members, size=n_q, replace=False)
        query_ids.extend(int(i) for i in np.sort(picks))
    return sorted(query_ids)


def evaluate_map(state, dataset, cfg, keep_rankings=False):
    problems = cfg.validate(num_aux_views=dataset.config.num_aux_views)
    if problems:
        raise InvalidConfig("; ".join(problems))
    labels = dataset.hidden_labels()
    if not (labels >= 0).any():
        raise InvalidConfig("no labeled images to evaluate")
    feats = multiview_features(state, dataset, cfg.num_views)
    query_ids = split_queries(labels, cfg.query_fraction, cfg.seed)
    in_query = np.zeros(len(labels), dtype=bool)
    in_query[query_ids] = True
    gallery_ids = np.flatnonzero(~in_query)
    results = map_from_features(
        feats[query_ids], query_ids, labels[query_ids],
        feats[gallery_ids], gallery_ids, labels[gallery_ids],
        keep_rankings=keep_rankings)
    by_class: dict[int, list[float]] = {}
    for r in results:
        by_class.setdefault(r.class_id, []).append(r.ap)
    per_class = {c: float(np.mean(aps)) for c, aps in by_class.items()}
    mean_ap = float(np.mean([r.ap for r in results]))
    return EvalReport(mean_ap, len(results), results, per_class, cfg)
