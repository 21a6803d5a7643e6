"""Synthetic instance-retrieval datasets on the unit hypersphere.

Each class is a cluster (or a chain, see below) of unit vectors around a
prototype. Every image exposes three kinds of views:

  clean     - the base vector itself, fully deterministic
  augmented - base + gaussian noise + coordinate dropout, driven by the
              per-step random stream (the gradient-carrying view)
  aux       - fixed pseudo-scale views, deterministic per (image, index);
              view 0 is the clean view

Class labels are stored for evaluation and analysis only; training code
must never read them.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateVector, IndexOutOfRange, InvalidConfig
from . import fileio
from .numerics import normalize, normalize_rows

STRUCTURES = ("cluster", "chain")


@dataclass(frozen=True)
class DatasetConfig:
    num_classes: int = 50
    instances_per_class: int = 40
    input_dim: int = 64
    sigma_intra: float = 0.16
    sigma_aug: float = 0.29
    drop_prob: float = 0.1
    num_aux_views: int = 3
    seed: int = 0
    # "cluster" draws every instance around the prototype; "chain" walks the
    # instances along a great-circle arc so far ends of a class are only
    # reachable through intermediate members.
    structure: str = "cluster"
    # Arc step in radians between consecutive chain instances;
    # None means pi / (instances_per_class - 1).
    chain_step: float = None
    # Noise scale of aux views; None means sigma_aug / 2.
    sigma_aux_view: float = None

    def validate(self):
        problems = []
        if self.num_classes < 2:
            problems.append(f"num_classes must be >= 2, got {self.num_classes}")
        if self.instances_per_class < 2:
            problems.append(
                f"instances_per_class must be >= 2, got {self.instances_per_class}")
        if self.input_dim < 4:
            problems.append(f"input_dim must be >= 4, got {self.input_dim}")
        if self.sigma_intra < 0:
            problems.append("sigma_intra must be >= 0")
        if self.sigma_aug < 0:
            problems.append("sigma_aug must be >= 0")
        if not 0 <= self.drop_prob < 1:
            problems.append(f"drop_prob must be in [0, 1), got {self.drop_prob}")
        if self.num_aux_views < 1:
            problems.append("num_aux_views must be >= 1")
        if self.structure not in STRUCTURES:
            problems.append(f"structure must be one of {STRUCTURES}, "
                            f"got {self.structure!r}")
        if self.chain_step is not None and self.chain_step <= 0:
            problems.append("chain_step must be positive when set")
        return problems

    @property
    def size(self):
        return self.num_classes * self.instances_per_class

    @property
    def aux_sigma(self):
        if self.sigma_aux_view is not None:
            return self.sigma_aux_view
        return self.sigma_aug / 2.0


@dataclass(frozen=True)
class ImageRecord:
    id: int
    class_id: int
    base: np.ndarray
    aux_seeds: tuple


@dataclass
class Dataset:
    config: DatasetConfig
    records: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def bases(self):
        """(N, D) array of clean base vectors, row i = image id i."""
        return np.stack([r.base for r in self.records])

    def hidden_labels(self):
        """(N,) class ids. Analysis/evaluation only; never feed the trainer."""
        return np.array([r.class_id for r in self.records], dtype=np.int64)


def generate_dataset(config):
    problems = config.validate()
    if problems:
        raise InvalidConfig("; ".join(problems))
    rng = np.random.default_rng(config.seed)
    protos = normalize_rows(
        rng.standard_normal((config.num_classes, config.input_dim)))

    if config.chain_step is not None:
        step = config.chain_step
    else:
        step = np.pi / (config.instances_per_class - 1)

    records = []
    next_id = 0
    for c in range(config.num_classes):
        p = protos[c]
        if config.structure == "chain":
            # Orthonormal partner of the prototype spans the arc plane.
            h = rng.standard_normal(config.input_dim)
            q = normalize(h - (h @ p) * p)
        for j in range(config.instances_per_class):
            noise = config.sigma_intra * rng.standard_normal(config.input_dim)
            if config.structure == "chain":
                center = np.cos(j * step) * p + np.sin(j * step) * q
            else:
                center = p
            base = normalize(center + noise)
            base.setflags(write=False)
            aux_seeds = tuple(
                int(s) for s in rng.integers(0, 2**62, size=config.num_aux_views))
            records.append(ImageRecord(next_id, c, base, aux_seeds))
            next_id += 1
    return Dataset(config, records)


def clean_view(record):
    """The unaugmented view: the base vector itself."""
    return record.base


def augmented_view(record, step_rng, config):
    """Noisy view: gaussian jitter plus coordinate dropout, re-normalized.

    Consumes only step_rng state. If dropout zeroes the whole vector the
    draw is retried once before raising.
    """
    for attempt in range(2):
        x = record.base + config.sigma_aug * step_rng.standard_normal(
            config.input_dim)
        if config.drop_prob > 0:
            keep = step_rng.random(config.input_dim) >= config.drop_prob
            x = np.where(keep, x, 0.0)
        norm = np.linalg.norm(x)
        if norm > 1e-12:
            return x / norm
    raise DegenerateVector(
        f"augmentation of image {record.id} degenerate twice in a row")


def aux_view(record, view_index, config):
    """Deterministic pseudo-scale view; index 0 is the clean view."""
    if not 0 <= view_index < config.num_aux_views:
        raise IndexOutOfRange(
            f"view {view_index} outside [0, {config.num_aux_views})")
    if view_index == 0:
        return record.base
    rng = np.random.default_rng(record.aux_seeds[view_index])
    noise = config.aux_sigma * rng.standard_normal(config.input_dim)
    return normalize(record.base + noise)


# -- serialization ----------------------------------------------------------

def _config_to_meta(config):
    return {
        "num_classes": config.num_classes,
        "instances_per_class": config.instances_per_class,
        "input_dim": config.input_dim,
        "sigma_intra": config.sigma_intra,
        "sigma_aug": config.sigma_aug,
        "drop_prob": config.drop_prob,
        "num_aux_views": config.num_aux_views,
        "seed": config.seed,
        "structure": config.structure,
        "chain_step": config.chain_step,
        "sigma_aux_view": config.sigma_aux_view,
    }


def save_dataset(dataset, path):
    meta = {"kind": "dataset", "config": _config_to_meta(dataset.config)}
    arrays = {
        "bases": dataset.bases(),
        "class_ids": dataset.hidden_labels(),
        "aux_seeds": np.array([r.aux_seeds for r in dataset.records],
                              dtype=np.int64),
    }
    fileio.write_container(path, meta, arrays)


def load_dataset(path):
    meta, arrays = fileio.read_container(path)
    if meta.get("kind") != "dataset":
        raise InvalidConfig(f"{path} is not a dataset file")
    config = DatasetConfig(**meta["config"])
    records = []
    for i in range(arrays["bases"].shape[0]):
        base = arrays["bases"][i]
        base.setflags(write=False)
        records.append(ImageRecord(
            i, int(arrays["class_ids"][i]), base,
            tuple(int(s) for s in arrays["aux_seeds"][i])))
    return Dataset(config, records)


def load_external_features(path, seed=0, num_aux_views=1):
    """Build a dataset from a text file of precomputed descriptors.

    Row format: ``id,class_id,v0,v1,...`` with class_id allowed to be
    empty (unlabeled). Vectors are normalized on load; ids must be dense
    0..N-1 after sorting. Augmentation parameters are zeroed, so such a
    dataset is meant for pool building and evaluation, not training noise
    studies.
    """
    rows = []
    with open(path) as f:
        for line_no, line in enumerate(f, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            cells = line.split(",")
            if len(cells) < 3:
                raise InvalidConfig(f"{path}:{line_no}: need id,class,vector")
            rid = int(cells[0])
            label = int(cells[1]) if cells[1] != "" else -1
            vec = normalize(np.array([float(c) for c in cells[2:]]))
            rows.append((rid, label, vec))
    rows.sort(key=lambda r: r[0])
    if [r[0] for r in rows] != list(range(len(rows))):
        raise InvalidConfig(f"{path}: ids must be dense 0..N-1")
    dim = rows[0][2].size
    if dim < 4:
        raise InvalidConfig(f"{path}: feature dimension must be >= 4, got {dim}")
    if any(r[2].size != dim for r in rows):
        raise InvalidConfig(f"{path}: inconsistent feature dimensions")
    labels = sorted({r[1] for r in rows if r[1] >= 0})
    config = DatasetConfig(
        num_classes=max(len(labels), 2), instances_per_class=2,
        input_dim=dim, sigma_intra=0.0, sigma_aug=0.0, drop_prob=0.0,
        num_aux_views=num_aux_views, seed=seed)
    rng = np.random.default_rng(seed)
    records = []
    for rid, label, vec in rows:
        vec.setflags(write=False)
        aux_seeds = tuple(int(s) for s in rng.integers(0, 2**62,
                                                       size=num_aux_views))
        records.append(ImageRecord(rid, label, vec, aux_seeds))
    return Dataset(config, records)
