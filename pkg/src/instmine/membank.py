"""Per-image feature memories: a clean bank for mining, an augmented bank
for the loss. Entries are overwritten in place as images pass through the
encoder; there is no momentum blending and no queue."""

from dataclasses import dataclass

import numpy as np

from .errors import UnknownId
from . import encoder as encoder_mod
from . import synthdata


@dataclass
class MemoryBank:
    kind: str                      # "clean" or "augmented"
    features: np.ndarray           # (N, embed_dim)
    last_update_step: np.ndarray   # (N,) int64

    def __len__(self):
        return self.features.shape[0]


def init_banks(encoder_state, dataset, seed=None):
    """Full-pass initialization of both banks.

    The clean bank holds encode(clean_view(i)) for every image; the
    augmented bank holds one seeded augmented pass (seed defaults to the
    dataset seed).
    """
    clean_feats, _ = encoder_mod.encode_batch(encoder_state, dataset.bases())
    if seed is None:
        seed = dataset.config.seed
    rng = np.random.default_rng(seed)
    aug_views = np.stack([
        synthdata.augmented_view(rec, rng, dataset.config)
        for rec in dataset.records])
    aug_feats, _ = encoder_mod.encode_batch(encoder_state, aug_views)
    n = len(dataset)
    return (
        MemoryBank("clean", clean_feats, np.zeros(n, dtype=np.int64)),
        MemoryBank("augmented", aug_feats, np.zeros(n, dtype=np.int64)),
    )


def _check_ids(bank, ids):
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= len(bank)):
        bad = ids[(ids < 0) | (ids >= len(bank))][0]
        raise UnknownId(f"id {bad} outside bank of size {len(bank)}")
    return ids


def update_entries(bank, ids, features, step):
    """Overwrite entries; duplicate ids collapse to the last occurrence."""
    ids = _check_ids(bank, ids)
    features = np.asarray(features, dtype=np.float64)
    if ids.size != features.shape[0]:
        raise UnknownId(
            f"{ids.size} ids but {features.shape[0]} feature rows")
    # Reversed-first-seen keeps the last occurrence of each duplicated id.
    seen = set()
    for pos in range(ids.size - 1, -1, -1):
        i = int(ids[pos])
        if i in seen:
            continue
        seen.add(i)
        bank.features[i] = features[pos]
        bank.last_update_step[i] = step


def fetch(bank, ids):
    """Snapshot copies of the requested entries."""
    ids = _check_ids(bank, ids)
    return bank.features[ids].copy()
