"""Command-line front end: one YAML config, dotted-path overrides, and
reproducible run directories.

Subcommands: gen-data, build-pool, train, eval, ablate. Every run directory
receives a fully-resolved config echo (config.json) so a run can be redone
bit-for-bit from its artifacts alone.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass, replace

import yaml

from . import analytics, synthdata
from . import candidates as candidates_mod
from . import encoder as encoder_mod
from . import evaluator as evaluator_mod
from . import trainer as trainer_mod
from .errors import InstmineError, ParseError, ValidationError
from .fileio import write_csv, write_json
from .miner import BatchMiningConfig, MemoryMiningConfig
from .synthdata import DatasetConfig

# Seed streams hang off one master seed so sections stay independently
# reseedable but reproducible as a group.
_SEED_BASE = 1000
_SEED_DATASET = 11
_SEED_TRAINER = 37
_SEED_EVAL = 51

ABLATION_VARIANTS = ("A", "B", "C", "D-anchor", "D")

_SCHEMA = {
    "seed": None,
    "output_dir": None,
    "analytics": None,
    "dataset": {"num_classes", "instances_per_class", "input_dim",
                "sigma_intra", "sigma_aug", "drop_prob", "num_aux_views",
                "structure", "chain_step", "sigma_aux_view", "seed",
                "path", "external_path"},
    "encoder": {"embed_dim", "init_scale", "checkpoint", "adam"},
    "adam": {"lr", "beta1", "beta2", "eps", "weight_decay"},
    "pool": {"pool_size", "path"},
    "trainer": {"tuples_per_batch", "steps_per_round", "rounds",
                "lr_schedule", "seed", "negative_source", "gate",
                "num_memory_negatives", "batch_mining", "memory_mining"},
    "batch_mining": {"strategy", "t_b", "n_b"},
    "memory_mining": {"aggregation", "selection", "k", "t_m",
                      "sparsify_threshold", "iterations", "query_set_mode",
                      "query_features"},
    "eval": {"num_views", "query_fraction", "seed", "save_rankings"},
}


@dataclass(frozen=True)
class RunConfig:
    seed: int
    output_dir: str
    analytics: bool
    dataset: DatasetConfig
    dataset_path: str | None
    external_path: str | None
    encoder_checkpoint: str | None
    pool_path: str | None
    trainer: trainer_mod.TrainerConfig
    eval: evaluator_mod.EvalConfig
    eval_save_rankings: bool

    def to_dict(self):
        """Fully-resolved echo, written as config.json into run dirs."""
        t = self.trainer
        return {
            "seed": self.seed,
            "output_dir": self.output_dir,
            "analytics": self.analytics,
            "dataset": {
                "num_classes": self.dataset.num_classes,
                "instances_per_class": self.dataset.instances_per_class,
                "input_dim": self.dataset.input_dim,
                "sigma_intra": self.dataset.sigma_intra,
                "sigma_aug": self.dataset.sigma_aug,
                "drop_prob": self.dataset.drop_prob,
                "num_aux_views": self.dataset.num_aux_views,
                "structure": self.dataset.structure,
                "chain_step": self.dataset.chain_step,
                "sigma_aux_view": self.dataset.sigma_aux_view,
                "seed": self.dataset.seed,
                "path": self.dataset_path,
                "external_path": self.external_path,
            },
            "encoder": {
                "embed_dim": t.embed_dim,
                "init_scale": t.init_scale,
                "checkpoint": self.encoder_checkpoint,
                "adam": {"lr": t.adam.lr, "beta1": t.adam.beta1,
                         "beta2": t.adam.beta2, "eps": t.adam.eps,
                         "weight_decay": t.adam.weight_decay},
            },
            "pool": {"pool_size": t.pool_size, "path": self.pool_path},
            "trainer": {
                "tuples_per_batch": t.tuples_per_batch,
                "steps_per_round": t.steps_per_round,
                "rounds": t.rounds,
                "lr_schedule": [list(pair) for pair in t.lr_schedule],
                "seed": t.seed,
                "negative_source": t.negative_source,
                "gate": t.gate,
                "num_memory_negatives": t.num_memory_negatives,
                "batch_mining": {"strategy": t.batch.strategy,
                                 "t_b": t.batch.t_b, "n_b": t.batch.n_b},
                "memory_mining": {
                    "aggregation": t.memory.aggregation,
                    "selection": t.memory.selection,
                    "k": t.memory.k, "t_m": t.memory.t_m,
                    "sparsify_threshold": t.memory.sparsify_threshold,
                    "iterations": t.memory.iterations,
                    "query_set_mode": t.memory.query_set_mode,
                    "query_features": t.memory.query_features},
            },
            "eval": {"num_views": self.eval.num_views,
                     "query_fraction": self.eval.query_fraction,
                     "seed": self.eval.seed,
                     "save_rankings": self.eval_save_rankings},
        }


def _check_keys(section, mapping, allowed, violations):
    if mapping is None:
        return {}
    if not isinstance(mapping, dict):
        violations.append(f"{section}: expected a mapping, got "
                          f"{type(mapping).__name__}")
        return {}
    for key in mapping:
        if key not in allowed:
            violations.append(f"{section}: unknown key {key!r}")
    return mapping


def _section(raw, name, violations):
    return _check_keys(name, raw.get(name), _SCHEMA[name], violations)


def build_run_config(raw):
    """Resolve a raw mapping (parsed YAML plus overrides) into a RunConfig.

    Collects every violation before failing so a config can be fixed in
    one pass.
    """
    violations = []
    raw = _check_keys("config", raw, set(_SCHEMA) - {"adam", "batch_mining",
                                                     "memory_mining"},
                      violations)
    master = raw.get("seed", 0)
    if not isinstance(master, int) or isinstance(master, bool):
        violations.append(f"seed: expected an integer, got {master!r}")
        master = 0
    base = master * _SEED_BASE

    ds_raw = _section(raw, "dataset", violations)
    dataset_path = ds_raw.get("path")
    external_path = ds_raw.get("external_path")
    ds_fields = {k: v for k, v in ds_raw.items()
                 if k not in ("path", "external_path")}
    ds_fields.setdefault("seed", base + _SEED_DATASET)
    try:
        dataset = DatasetConfig(**ds_fields)
        violations += [f"dataset: {p}" for p in dataset.validate()]
    except TypeError as exc:
        violations.append(f"dataset: {exc}")
        dataset = DatasetConfig()

    enc_raw = _section(raw, "encoder", violations)
    adam_raw = _check_keys("encoder.adam", enc_raw.get("adam"),
                           _SCHEMA["adam"], violations)
    try:
        adam = encoder_mod.AdamConfig(**adam_raw)
    except TypeError as exc:
        violations.append(f"encoder.adam: {exc}")
        adam = encoder_mod.AdamConfig()

    pool_raw = _section(raw, "pool", violations)
    tr_raw = _section(raw, "trainer", violations)
    bm_raw = _check_keys("trainer.batch_mining", tr_raw.get("batch_mining"),
                         _SCHEMA["batch_mining"], violations)
    mm_raw = _check_keys("trainer.memory_mining", tr_raw.get("memory_mining"),
                         _SCHEMA["memory_mining"], violations)
    try:
        batch_cfg = BatchMiningConfig(**bm_raw)
    except TypeError as exc:
        violations.append(f"trainer.batch_mining: {exc}")
        batch_cfg = BatchMiningConfig()
    try:
        memory_cfg = MemoryMiningConfig(**mm_raw)
    except TypeError as exc:
        violations.append(f"trainer.memory_mining: {exc}")
        memory_cfg = MemoryMiningConfig()

    default_schedule = [list(pair)
                        for pair in trainer_mod.TrainerConfig().lr_schedule]
    schedule = tr_raw.get("lr_schedule", default_schedule)
    if (not isinstance(schedule, (list, tuple))
            or not all(isinstance(p, (list, tuple)) and len(p) == 2
                       for p in schedule)):
        violations.append("trainer.lr_schedule: expected a list of "
                          "[step, lr] pairs")
        schedule = default_schedule
    trainer_fields = {k: v for k, v in tr_raw.items()
                      if k in ("tuples_per_batch", "steps_per_round",
                               "rounds", "negative_source", "gate",
                               "num_memory_negatives")}
    trainer_cfg = trainer_mod.TrainerConfig(
        lr_schedule=tuple((int(s), float(lr)) for s, lr in schedule),
        seed=tr_raw.get("seed", base + _SEED_TRAINER),
        batch=batch_cfg, memory=memory_cfg, adam=adam,
        embed_dim=enc_raw.get("embed_dim", 32),
        init_scale=enc_raw.get("init_scale", 0.125),
        pool_size=pool_raw.get("pool_size", 50),
        **trainer_fields)
    violations += [f"trainer: {p}" for p in trainer_cfg.validate()]

    ev_raw = _section(raw, "eval", violations)
    eval_cfg = evaluator_mod.EvalConfig(
        num_views=ev_raw.get("num_views", 3),
        query_fraction=ev_raw.get("query_fraction", 0.2),
        seed=ev_raw.get("seed", base + _SEED_EVAL))
    violations += [f"eval: {p}" for p in eval_cfg.validate()]

    for label, path in (("dataset.path", dataset_path),
                        ("dataset.external_path", external_path),
                        ("encoder.checkpoint", enc_raw.get("checkpoint")),
                        ("pool.path", pool_raw.get("path"))):
        if path is not None and not os.path.exists(path):
            violations.append(f"{label}: file not found: {path}")

    if violations:
        raise ValidationError(violations)
    return RunConfig(
        seed=master, output_dir=raw.get("output_dir", "run"),
        analytics=raw.get("analytics", True), dataset=dataset,
        dataset_path=dataset_path, external_path=external_path,
        encoder_checkpoint=enc_raw.get("checkpoint"),
        pool_path=pool_raw.get("path"), trainer=trainer_cfg, eval=eval_cfg,
        eval_save_rankings=bool(ev_raw.get("save_rankings", False)))


def parse_config(path, overrides=()):
    """Read YAML, apply dotted overrides, resolve to a RunConfig."""
    try:
        with open(path) as f:
            raw = yaml.safe_load(f)
    except FileNotFoundError:
        raise ParseError(f"config file not found: {path}")
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{path}:{mark.line + 1}" if mark else path
        raise ParseError(f"{where}: {getattr(exc, 'problem', exc)}")
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ParseError(f"{path}: top level must be a mapping")
    for item in overrides:
        apply_override(raw, item)
    return build_run_config(raw)


def apply_override(raw, item):
    """Apply one `dotted.path=value` override in place; values parse as YAML."""
    if "=" not in item:
        raise ParseError(f"override {item!r} is not of the form key=value")
    dotted, text = item.split("=", 1)
    keys = dotted.strip().split(".")
    if not all(keys):
        raise ParseError(f"override {item!r} has an empty path segment")
    try:
        value = yaml.safe_load(text)
    except yaml.YAMLError:
        value = text
    node = raw
    for key in keys[:-1]:
        child = node.get(key)
        if child is None:
            child = {}
            node[key] = child
        elif not isinstance(child, dict):
            raise ParseError(
                f"override {item!r}: {key} is not a section")
        node = child
    node[keys[-1]] = value


# -- pipeline pieces ----------------------------------------------------------

def _load_dataset(cfg):
    if cfg.external_path is not None:
        return synthdata.load_external_features(
            cfg.external_path, seed=cfg.dataset.seed,
            num_aux_views=cfg.dataset.num_aux_views)
    if cfg.dataset_path is not None:
        return synthdata.load_dataset(cfg.dataset_path)
    return synthdata.generate_dataset(cfg.dataset)


def _initial_encoder(cfg, input_dim):
    """The encoder eval/build-pool see: a checkpoint when configured, else
    the same seeded initialization train() would produce."""
    if cfg.encoder_checkpoint is not None:
        return encoder_mod.load_checkpoint(cfg.encoder_checkpoint)
    enc_cfg = encoder_mod.EncoderConfig(
        input_dim=input_dim, embed_dim=cfg.trainer.embed_dim,
        init_scale=cfg.trainer.init_scale,
        seed=trainer_mod._derived_seed(cfg.trainer.seed,
                                       trainer_mod._STREAM_ENCODER))
    return encoder_mod.init_encoder(enc_cfg)


def _prepare_output(cfg):
    os.makedirs(cfg.output_dir, exist_ok=True)
    write_json(os.path.join(cfg.output_dir, "config.json"), cfg.to_dict())


def variant_trainer_config(base, variant):
    """Table-style ablation grid over one base configuration.

    A: plain neighbor tuples, no memory anywhere. B: adds random memory
    negatives. C: thresholded in-batch selection over random negatives.
    D-anchor: memory mining scored by the anchor alone. D: the full method.
    """
    if variant not in ABLATION_VARIANTS:
        raise ValidationError([f"unknown ablation variant {variant!r}"])
    nn_batch = replace(base.batch, strategy="nn")
    no_memory = replace(base.memory, iterations=0)
    if variant == "A":
        return replace(base, batch=nn_batch, memory=no_memory,
                       negative_source="none")
    if variant == "B":
        return replace(base, batch=nn_batch, memory=no_memory,
                       negative_source="random_memory")
    if variant == "C":
        return replace(base, memory=no_memory,
                       negative_source="random_memory")
    if variant == "D-anchor":
        return replace(base, memory=replace(base.memory,
                                            query_set_mode="anchor_only"))
    return base


def run_memory_precision(history):
    """Run-level mined-positive precision: total true over total selected."""
    true = sum(r.mem_true_total or 0 for r in history.records)
    sel = sum(r.mem_selected_total or 0 for r in history.records)
    return (true / sel) if sel else None


def _write_metrics(cfg, report, path_dir):
    write_json(os.path.join(path_dir, "metrics.json"), report.to_json_dict())


def _write_rankings(report, path):
    rows = []
    for q in report.per_query:
        for rank, (gallery_id, sim, relevant) in enumerate(q.ranking, 1):
            rows.append({"query_id": q.query_id, "rank": rank,
                         "gallery_id": gallery_id, "similarity": sim,
                         "relevant": int(relevant)})
    write_csv(path, ("query_id", "rank", "gallery_id", "similarity",
                     "relevant"), rows)


def cmd_gen_data(cfg):
    _prepare_output(cfg)
    dataset = synthdata.generate_dataset(cfg.dataset)
    path = os.path.join(cfg.output_dir, "dataset.bin")
    synthdata.save_dataset(dataset, path)
    print(f"wrote {path} ({len(dataset)} images, "
          f"{cfg.dataset.num_classes} classes)")
    return 0


def cmd_build_pool(cfg):
    _prepare_output(cfg)
    dataset = _load_dataset(cfg)
    state = _initial_encoder(cfg, dataset.config.input_dim)
    feats, _ = encoder_mod.encode_batch(state, dataset.bases())
    pool = candidates_mod.build_candidate_pool(
        feats, candidates_mod.PoolConfig(cfg.trainer.pool_size, 0),
        encoder_checksum=encoder_mod.weights_checksum(state))
    path = os.path.join(cfg.output_dir, "pool.bin")
    candidates_mod.save_pool(pool, path)
    print(f"wrote {path} (P={pool.pool_size}, {len(pool)} images)")
    return 0


def cmd_train(cfg):
    _prepare_output(cfg)
    dataset = _load_dataset(cfg)
    initial_pool = None
    if cfg.pool_path is not None:
        initial_pool = candidates_mod.load_pool(cfg.pool_path)
    initial_state = None
    if cfg.encoder_checkpoint is not None:
        initial_state = encoder_mod.load_checkpoint(cfg.encoder_checkpoint)
    state, history = trainer_mod.train(
        dataset, cfg.trainer, output_dir=cfg.output_dir,
        initial_state=initial_state, initial_pool=initial_pool)
    if cfg.analytics and len(history):
        analytics.export_curves(
            history, os.path.join(cfg.output_dir, "curves.csv"))
    report = evaluator_mod.evaluate_map(state, dataset, cfg.eval,
                                        keep_rankings=cfg.eval_save_rankings)
    _write_metrics(cfg, report, cfg.output_dir)
    if cfg.eval_save_rankings:
        _write_rankings(report,
                        os.path.join(cfg.output_dir, "rankings.csv"))
    prec = run_memory_precision(history)
    prec_text = "n/a" if prec is None else f"{prec:.3f}"
    print(f"trained {len(history)} steps; mAP={report.map:.4f}; "
          f"memory mining precision={prec_text}")
    return 0


def cmd_eval(cfg):
    _prepare_output(cfg)
    dataset = _load_dataset(cfg)
    state = _initial_encoder(cfg, dataset.config.input_dim)
    report = evaluator_mod.evaluate_map(state, dataset, cfg.eval,
                                        keep_rankings=cfg.eval_save_rankings)
    _write_metrics(cfg, report, cfg.output_dir)
    if cfg.eval_save_rankings:
        _write_rankings(report,
                        os.path.join(cfg.output_dir, "rankings.csv"))
    print(f"mAP={report.map:.4f} over {report.num_queries} queries")
    return 0


def cmd_ablate(cfg):
    _prepare_output(cfg)
    dataset = _load_dataset(cfg)
    rows = []
    for variant in ABLATION_VARIANTS:
        sub = os.path.join(cfg.output_dir,
                           f"variant_{variant.replace('-', '_')}")
        os.makedirs(sub, exist_ok=True)
        tcfg = variant_trainer_config(cfg.trainer, variant)
        state, history = trainer_mod.train(dataset, tcfg, output_dir=sub)
        if cfg.analytics and len(history):
            analytics.export_curves(history,
                                    os.path.join(sub, "curves.csv"))
        report = evaluator_mod.evaluate_map(state, dataset, cfg.eval)
        _write_metrics(cfg, report, sub)
        rows.append({"variant": variant, "map": report.map,
                     "mem_precision": run_memory_precision(history)})
        prec = rows[-1]["mem_precision"]
        prec_text = "n/a" if prec is None else f"{prec:.3f}"
        print(f"{variant:9s} mAP={report.map:.4f} "
              f"memory precision={prec_text}")
    write_csv(os.path.join(cfg.output_dir, "ablation.csv"),
              ("variant", "map", "mem_precision"), rows)
    return 0


_COMMANDS = {
    "gen-data": cmd_gen_data,
    "build-pool": cmd_build_pool,
    "train": cmd_train,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
}


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="instmine",
        description="Contrastive training with pseudo-positive mining on "
                    "synthetic retrieval benchmarks.")
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", help="YAML config file")
    parser.add_argument("--set", dest="overrides", action="append",
                        default=[], metavar="KEY=VALUE",
                        help="dotted-path config override (repeatable)")
    parser.add_argument("--seed", type=int, help="master seed shorthand")
    parser.add_argument("--output-dir", help="run directory shorthand")
    args = parser.parse_args(argv)

    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.output_dir is not None:
        overrides.append(f"output_dir={args.output_dir}")

    try:
        if args.config is not None:
            cfg = parse_config(args.config, overrides)
        else:
            raw = {}
            for item in overrides:
                apply_override(raw, item)
            cfg = build_run_config(raw)
    except (ParseError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        return _COMMANDS[args.command](cfg)
    except InstmineError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
