"""Training orchestration: tuple assembly, the per-step pipeline, and the
multi-round schedule with candidate pool refreshes between rounds.

Each step encodes clean and augmented views for one mini-batch, pushes both
into the memory banks, mines every tuple (in-batch selection, then memory
mining), evaluates the gated contrastive loss, and applies one Adam update
on the summed weight gradient. Hidden labels are touched only to record
mining precision; they never influence a decision.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace

import numpy as np

from . import analytics, membank, synthdata
from . import candidates as candidates_mod
from . import encoder as encoder_mod
from . import evaluator as evaluator_mod
from .errors import InstmineError, InvalidConfig, PoolExhausted, StepFailure
from .fileio import read_csv, write_csv
from .loss import (DEFAULT_GATE, DEFAULT_MEMORY_NEGATIVES, NEGATIVE_SOURCES,
                   build_loss_context, combine_reports, contrastive_loss)
from .miner import BatchMiningConfig, MemoryMiningConfig, mine_tuple

HISTORY_COLUMNS = ("step", "round", "loss", "lr", "n_batch_pos", "n_mem_pos",
                   "batch_precision", "mem_precision")

# Stream tags for deriving independent generators from one trainer seed.
_STREAM_ANCHORS = 1
_STREAM_AUG = 2
_STREAM_NEGATIVES = 3
_STREAM_BANKS = 4
_STREAM_ENCODER = 5


@dataclass(frozen=True)
class TrainerConfig:
    tuples_per_batch: int = 16
    steps_per_round: int = 250
    rounds: int = 2
    lr_schedule: tuple = ((0, 5e-3), (350, 5e-4), (450, 5e-5))
    seed: int = 0
    batch: BatchMiningConfig = field(default_factory=BatchMiningConfig)
    memory: MemoryMiningConfig = field(default_factory=MemoryMiningConfig)
    negative_source: str = "candidate_pool"
    gate: float = DEFAULT_GATE
    num_memory_negatives: int = DEFAULT_MEMORY_NEGATIVES
    adam: encoder_mod.AdamConfig = field(
        default_factory=encoder_mod.AdamConfig)
    embed_dim: int = 32
    init_scale: float = 0.125
    pool_size: int = 50

    @property
    def n_b(self):
        return self.batch.n_b

    @property
    def batch_size(self):
        return self.tuples_per_batch * (self.batch.n_b + 1)

    def validate(self, n_images=None):
        problems = []
        problems += self.batch.validate()
        problems += self.memory.validate()
        problems += self.adam.validate()
        if self.tuples_per_batch < 1:
            problems.append("tuples_per_batch must be >= 1")
        if self.steps_per_round < 0:
            problems.append("steps_per_round must be >= 0")
        if self.rounds < 1:
            problems.append(f"rounds must be >= 1, got {self.rounds}")
        if self.negative_source not in NEGATIVE_SOURCES:
            problems.append(f"negative_source must be one of "
                            f"{NEGATIVE_SOURCES}, got "
                            f"{self.negative_source!r}")
        if not self.lr_schedule:
            problems.append("lr_schedule must not be empty")
        else:
            steps = [s for s, _ in self.lr_schedule]
            if steps[0] != 0:
                problems.append("lr_schedule must start at step 0")
            if steps != sorted(steps) or len(set(steps)) != len(steps):
                problems.append("lr_schedule steps must strictly increase")
            if any(lr < 0 for _, lr in self.lr_schedule):
                problems.append("learning rates must be >= 0")
        if self.num_memory_negatives < 0:
            problems.append("num_memory_negatives must be >= 0")
        if n_images is not None and self.batch_size > n_images:
            problems.append(f"batch of {self.batch_size} ids cannot be "
                            f"distinct among {n_images} images")
        return problems


@dataclass(frozen=True)
class TrainingTuple:
    anchor_id: int
    neighbor_ids: tuple


@dataclass(frozen=True)
class StepRecord:
    step: int
    round: int
    loss: float
    lr: float
    n_batch_pos: float
    n_mem_pos: float
    batch_precision: float | None
    mem_precision: float | None
    # Run-level tallies for analysis; not part of the CSV schema.
    batch_true_total: int | None = None
    batch_selected_total: int | None = None
    mem_true_total: int | None = None
    mem_selected_total: int | None = None


@dataclass
class TrainingHistory:
    records: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def append(self, record):
        self.records.append(record)

    def save(self, path):
        rows = [{"step": r.step, "round": r.round, "loss": r.loss,
                 "lr": r.lr, "n_batch_pos": r.n_batch_pos,
                 "n_mem_pos": r.n_mem_pos,
                 "batch_precision": r.batch_precision,
                 "mem_precision": r.mem_precision} for r in self.records]
        write_csv(path, HISTORY_COLUMNS, rows)


def load_history(path):
    history = TrainingHistory()
    for row in read_csv(path):
        history.append(StepRecord(
            step=int(row["step"]), round=int(row["round"]),
            loss=float(row["loss"]), lr=float(row["lr"]),
            n_batch_pos=float(row["n_batch_pos"]),
            n_mem_pos=float(row["n_mem_pos"]),
            batch_precision=row["batch_precision"],
            mem_precision=row["mem_precision"]))
    return history


def lr_at(schedule, step):
    """The last schedule entry at or before `step`."""
    lr = None
    for s, value in schedule:
        if s <= step:
            lr = value
        else:
            break
    if lr is None:
        raise InvalidConfig(f"no learning rate defined for step {step}")
    return lr


def _derived_rng(seed, stream):
    return np.random.default_rng([seed, stream])


def _derived_seed(seed, stream):
    return int(_derived_rng(seed, stream).integers(0, 2**31 - 1))


class _AnchorStream:
    """Seeded permutation of all ids, consumed sequentially; reshuffles when
    exhausted. A batch never repeats an anchor: the rare duplicate at a
    reshuffle boundary is skipped (losing that slot for the epoch).
    """

    def __init__(self, n_images, rng):
        self.n = n_images
        self.rng = rng
        self.order = []
        self.cursor = 0

    def next_batch(self, count):
        if count > self.n:
            raise InvalidConfig(
                f"cannot draw {count} distinct anchors from {self.n} images")
        picked = []
        taken = set()
        while len(picked) < count:
            if self.cursor >= len(self.order):
                self.order = self.rng.permutation(self.n)
                self.cursor = 0
            candidate = int(self.order[self.cursor])
            self.cursor += 1
            if candidate in taken:
                continue
            taken.add(candidate)
            picked.append(candidate)
        return picked


def build_batch(anchor_ids, pool, cfg):
    """Assemble tuples: each anchor takes its first n_b pool entries that do
    not collide with any id already placed in this batch. All anchor ids
    are reserved up front.
    """
    if len(set(anchor_ids)) != len(anchor_ids):
        raise InvalidConfig("anchor ids must be distinct within a batch")
    n_b = cfg.batch.n_b
    used = set(int(a) for a in anchor_ids)
    tuples = []
    for anchor in anchor_ids:
        ids_row, _ = pool.neighbors(anchor)
        neighbors = []
        for pid in ids_row:
            pid = int(pid)
            if pid in used:
                continue
            neighbors.append(pid)
            used.add(pid)
            if len(neighbors) == n_b:
                break
        if len(neighbors) < n_b:
            raise PoolExhausted(
                f"anchor {anchor}: only {len(neighbors)} of {n_b} neighbors "
                "available after batch deduplication")
        tuples.append(TrainingTuple(int(anchor), tuple(neighbors)))
    return tuples


def train_step(state, batch, banks, pool, cfg, *, dataset, labels, step,
               round_index, lr, aug_rng, neg_rng):
    """One optimization step; returns (new encoder state, StepRecord)."""
    clean_bank, aug_bank = banks
    ids = [i for t in batch for i in (t.anchor_id, *t.neighbor_ids)]

    xs_clean = np.stack([dataset.records[i].base for i in ids])
    units_clean, _ = encoder_mod.encode_batch(state, xs_clean)
    xs_aug = np.stack([
        synthdata.augmented_view(dataset.records[i], aug_rng, dataset.config)
        for i in ids])
    units_aug, raws_aug = encoder_mod.encode_batch(state, xs_aug)

    membank.update_entries(clean_bank, ids, units_clean, step)
    membank.update_entries(aug_bank, ids, units_aug, step)

    clean_feats = {i: units_clean[k] for k, i in enumerate(ids)}
    aug_feats = {i: units_aug[k] for k, i in enumerate(ids)}
    batch_features = {i: (units_aug[k], raws_aug[k])
                      for k, i in enumerate(ids)}
    aux_feats = None
    if cfg.batch.strategy == "multiscale":
        fused = evaluator_mod.multiview_features(
            state, dataset, dataset.config.num_aux_views, ids=ids)
        aux_feats = {i: fused[k] for k, i in enumerate(ids)}
    if cfg.memory.query_features == "bank":
        query_feats = {i: clean_bank.features[i].copy() for i in ids}
    else:
        query_feats = clean_feats

    exclude = set(ids)
    reports = []
    batch_counts, mem_counts = [], []
    batch_precs, mem_precs = [], []
    tallies = {"batch_true": 0, "batch_sel": 0, "mem_true": 0, "mem_sel": 0}
    for t in batch:
        try:
            result, _ = mine_tuple(
                t.anchor_id, list(t.neighbor_ids), query_feats, aug_feats,
                aux_feats, pool.neighbors(t.anchor_id)[0], clean_bank,
                cfg.batch, cfg.memory, exclude)
            ctx = build_loss_context(
                result, t.anchor_id, batch_features, aug_bank,
                cfg.negative_source,
                num_memory_negatives=cfg.num_memory_negatives,
                rng=neg_rng, gate=cfg.gate)
            reports.append(contrastive_loss(ctx))
        except InstmineError as exc:
            raise StepFailure(
                f"step {step}, tuple anchor={t.anchor_id}: {exc}") from exc
        batch_counts.append(len(result.batch_positive_ids))
        mem_counts.append(len(result.memory_positive_ids))
        anchor_class = int(labels[t.anchor_id])
        if anchor_class >= 0:
            for picked, precs, true_key, sel_key in (
                    (result.batch_positive_ids, batch_precs,
                     "batch_true", "batch_sel"),
                    (result.memory_positive_ids, mem_precs,
                     "mem_true", "mem_sel")):
                p = analytics.mining_precision(picked, anchor_class, labels)
                if p is not None:
                    precs.append(p)
                tallies[sel_key] += len(picked)
                tallies[true_key] += sum(
                    1 for i in picked if labels[i] == anchor_class)

    value, grads = combine_reports(reports)
    zero = np.zeros(state.config.embed_dim)
    grad_matrix = np.stack([grads.get(i, zero) for i in ids])
    grad_w = encoder_mod.encode_backward_batch(state, xs_aug, grad_matrix)
    new_state = encoder_mod.adam_step(state, grad_w,
                                      replace(cfg.adam, lr=lr))

    record = StepRecord(
        step=step, round=round_index, loss=value, lr=lr,
        n_batch_pos=float(np.mean(batch_counts)),
        n_mem_pos=float(np.mean(mem_counts)),
        batch_precision=float(np.mean(batch_precs)) if batch_precs else None,
        mem_precision=float(np.mean(mem_precs)) if mem_precs else None,
        batch_true_total=tallies["batch_true"],
        batch_selected_total=tallies["batch_sel"],
        mem_true_total=tallies["mem_true"],
        mem_selected_total=tallies["mem_sel"])
    return new_state, record


def train(dataset, cfg, *, output_dir=None, initial_state=None,
          initial_pool=None):
    """Full run: `rounds` passes of `steps_per_round` steps, refreshing the
    candidate pool between rounds. Returns (encoder state, history).
    """
    problems = cfg.validate(n_images=len(dataset))
    if problems:
        raise InvalidConfig("; ".join(problems))

    if initial_state is None:
        enc_cfg = encoder_mod.EncoderConfig(
            input_dim=dataset.config.input_dim, embed_dim=cfg.embed_dim,
            init_scale=cfg.init_scale,
            seed=_derived_seed(cfg.seed, _STREAM_ENCODER))
        state = encoder_mod.init_encoder(enc_cfg)
    else:
        state = initial_state

    banks = membank.init_banks(
        state, dataset, seed=_derived_seed(cfg.seed, _STREAM_BANKS))
    if initial_pool is None:
        pool = candidates_mod.build_candidate_pool(
            banks[0].features.copy(),
            candidates_mod.PoolConfig(cfg.pool_size, 0),
            encoder_checksum=encoder_mod.weights_checksum(state))
    else:
        pool = initial_pool

    labels = dataset.hidden_labels()
    anchors = _AnchorStream(len(dataset),
                            _derived_rng(cfg.seed, _STREAM_ANCHORS))
    aug_rng = _derived_rng(cfg.seed, _STREAM_AUG)
    neg_rng = _derived_rng(cfg.seed, _STREAM_NEGATIVES)

    history = TrainingHistory()
    global_step = 0
    for round_index in range(1, cfg.rounds + 1):
        if round_index > 1:
            pool = candidates_mod.refresh_pool(
                state, dataset,
                candidates_mod.PoolConfig(pool.pool_size, pool.round))
        for _ in range(cfg.steps_per_round):
            batch = build_batch(anchors.next_batch(cfg.tuples_per_batch),
                                pool, cfg)
            state, record = train_step(
                state, batch, banks, pool, cfg, dataset=dataset,
                labels=labels, step=global_step, round_index=round_index,
                lr=lr_at(cfg.lr_schedule, global_step),
                aug_rng=aug_rng, neg_rng=neg_rng)
            history.append(record)
            global_step += 1
        if output_dir is not None:
            encoder_mod.save_checkpoint(
                state,
                os.path.join(output_dir, f"encoder_round{round_index}.bin"))
    if output_dir is not None:
        history.save(os.path.join(output_dir, "history.csv"))
    return state, history
