"""Gated contrastive objective over a query set and its pair collection.

The loss for one training tuple compares every query member against every
entry of the collection: positives pull (ungated), negatives push only while
their similarity stays above the gate. Gradients are analytic and flow only
into features that came from the current batch's forward pass.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyQuerySet, InconsistentMining, InvalidConfig
from .membank import MemoryBank, fetch
from .miner import MiningResult

NEGATIVE_SOURCES = ("none", "random_memory", "candidate_pool")

DEFAULT_GATE = 0.4
DEFAULT_MEMORY_NEGATIVES = 64


@dataclass(frozen=True)
class ContextMember:
    """One participant in a loss computation.

    `feature` is the unit embedding used for similarities. `raw` is the
    pre-normalization encoder output and must be present when
    `grad_enabled` is set; gradients are reported with respect to it.
    """

    image_id: int
    feature: np.ndarray
    raw: np.ndarray | None
    grad_enabled: bool
    positive: bool = True


@dataclass
class LossContext:
    query: list[ContextMember]
    collection: list[ContextMember]
    gate: float = DEFAULT_GATE

    def validate(self) -> list[str]:
        problems = []
        seen = set()
        for m in self.collection:
            if m.image_id in seen:
                problems.append(f"duplicate collection id {m.image_id}")
            seen.add(m.image_id)
        by_id = {m.image_id: m for m in self.collection}
        for m in self.query:
            twin = by_id.get(m.image_id)
            if twin is None or not twin.positive:
                problems.append(
                    f"query id {m.image_id} missing from positive collection")
            elif not np.array_equal(twin.feature, m.feature):
                problems.append(
                    f"query id {m.image_id} feature differs from collection")
        for m in self.query + self.collection:
            if m.grad_enabled and m.raw is None:
                problems.append(f"id {m.image_id} grad-enabled without raw")
        return problems


PairTerm = tuple[int, int, float, bool, bool]
"""(query_id, other_id, similarity, is_positive, contributed)."""


@dataclass
class LossReport:
    value: float
    grads: dict[int, np.ndarray]
    pairs: list[PairTerm] | None = None


def build_loss_context(result: MiningResult, anchor_id: int,
                       batch_features: dict[int, tuple[np.ndarray, np.ndarray]],
                       aug_bank: MemoryBank, negative_source: str,
                       *, num_memory_negatives: int = DEFAULT_MEMORY_NEGATIVES,
                       rng: np.random.Generator | None = None,
                       gate: float = DEFAULT_GATE) -> LossContext:
    """Assemble the query set and collection for one mined tuple.

    `batch_features` maps every image in the mini-batch (all tuples) to its
    augmented forward pass as a (unit, raw) pair; those entries carry
    gradients. Memory features are augmented-bank snapshots and do not.
    """
    if negative_source not in NEGATIVE_SOURCES:
        raise InvalidConfig(f"unknown negative_source {negative_source!r}")
    if negative_source == "random_memory" and rng is None:
        raise InvalidConfig("random_memory negatives need an rng")

    def batch_member(image_id, positive):
        unit, raw = batch_features[image_id]
        return ContextMember(image_id, unit, raw, True, positive)

    def bank_member(image_id, positive):
        feat = fetch(aug_bank, [image_id])[0]
        return ContextMember(image_id, feat, None, False, positive)

    query = [batch_member(anchor_id, True)]
    query += [batch_member(i, True) for i in result.batch_positive_ids]
    query += [bank_member(i, True) for i in result.memory_positive_ids]

    collection = list(query)
    tuple_ids = ({anchor_id} | set(result.batch_positive_ids)
                 | set(result.batch_negative_ids))
    collection += [batch_member(i, False) for i in result.batch_negative_ids]
    collection += [batch_member(i, False) for i in batch_features
                   if i not in tuple_ids]
    if negative_source == "candidate_pool":
        collection += [bank_member(i, False)
                       for i in result.memory_negative_ids]
    elif negative_source == "random_memory":
        present = {m.image_id for m in collection}
        free = np.array([i for i in range(len(aug_bank.features))
                         if i not in present], dtype=np.int64)
        n = min(num_memory_negatives, len(free))
        picks = rng.choice(free, size=n, replace=False) if n else free[:0]
        collection += [bank_member(int(i), False) for i in np.sort(picks)]

    ctx = LossContext(query, collection, gate)
    problems = ctx.validate()
    if problems:
        raise InconsistentMining("; ".join(problems))
    return ctx


def contrastive_loss(ctx: LossContext, *, audit: bool = False) -> LossReport:
    """Evaluate the gated loss and its raw-feature gradients.

    L = (1/N_p) sum over query members i of
        [ sum over negatives j with S_ij > gate of S_ij
          - sum over positives j, j != i, of S_ij ]
    where N_p is the query-set size. The gate is a hard indicator, so
    gated-out negatives contribute no gradient.
    """
    if not ctx.query:
        raise EmptyQuerySet("loss needs at least the anchor in the query set")
    problems = ctx.validate()
    if problems:
        raise InconsistentMining("; ".join(problems))

    n_p = len(ctx.query)
    q_feats = np.stack([m.feature for m in ctx.query])
    c_feats = np.stack([m.feature for m in ctx.collection])
    q_ids = np.array([m.image_id for m in ctx.query])
    c_ids = np.array([m.image_id for m in ctx.collection])
    pos = np.array([m.positive for m in ctx.collection])

    sims = q_feats @ c_feats.T
    self_pair = q_ids[:, None] == c_ids[None, :]
    pos_mask = pos[None, :] & ~self_pair
    neg_mask = ~pos[None, :] & (sims > ctx.gate)

    coef = neg_mask.astype(np.float64) - pos_mask.astype(np.float64)
    value = float(coef.ravel() @ sims.ravel()) / n_p

    # d/d(unit feature); query and collection roles accumulate separately,
    # then merge by id since query members reappear in the collection.
    grad_q = (coef @ c_feats) / n_p
    grad_c = (coef.T @ q_feats) / n_p
    unit_grads: dict[int, np.ndarray] = {}
    raw_by_id: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    for m, g in [(m, grad_q[i]) for i, m in enumerate(ctx.query)] + \
                [(m, grad_c[j]) for j, m in enumerate(ctx.collection)]:
        if not m.grad_enabled:
            continue
        if m.image_id in unit_grads:
            unit_grads[m.image_id] = unit_grads[m.image_id] + g
        else:
            unit_grads[m.image_id] = g.copy()
            raw_by_id[m.image_id] = (m.feature, m.raw)

    grads = {}
    for image_id, g in unit_grads.items():
        f, raw = raw_by_id[image_id]
        # Chain through normalization: same form as cosine_grad_raw, which
        # is linear in its second argument, so one projection covers the
        # whole accumulated coefficient sum.
        grads[image_id] = (g - (f @ g) * f) / np.linalg.norm(raw)

    pairs = None
    if audit:
        pairs = []
        for i in range(len(ctx.query)):
            for j in range(len(ctx.collection)):
                if self_pair[i, j]:
                    continue
                contributed = bool(pos_mask[i, j] or neg_mask[i, j])
                pairs.append((int(q_ids[i]), int(c_ids[j]),
                              float(sims[i, j]), bool(pos[j]), contributed))
    return LossReport(value, grads, pairs)


def combine_reports(reports: list[LossReport]) -> tuple[float, dict[int, np.ndarray]]:
    """Mean-of-tuples batch reduction for values and gradients.

    An image may appear in several tuples' contexts (its own as a positive,
    others' as a negative); its gradient is the mean of per-tuple
    contributions, counting absent tuples as zero.
    """
    if not reports:
        raise InvalidConfig("no loss reports to combine")
    scale = 1.0 / len(reports)
    value = sum(r.value for r in reports) * scale
    grads: dict[int, np.ndarray] = {}
    for r in reports:
        for image_id, g in r.grads.items():
            if image_id in grads:
                grads[image_id] = grads[image_id] + g * scale
            else:
                grads[image_id] = g * scale
    return value, grads
