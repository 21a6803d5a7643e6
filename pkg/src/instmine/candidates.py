"""Offline candidate pools: exact top-P cosine neighbors per image."""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidConfig
from . import encoder as encoder_mod
from . import fileio, kernels


@dataclass(frozen=True)
class PoolConfig:
    pool_size: int = 50
    round: int = 0

    def validate(self, n_images=None):
        problems = []
        if self.pool_size < 1:
            problems.append(f"pool_size must be >= 1, got {self.pool_size}")
        if n_images is not None and self.pool_size > n_images - 1:
            problems.append(
                f"pool_size {self.pool_size} exceeds N-1 = {n_images - 1}")
        if self.round < 0:
            problems.append("round must be >= 0")
        return problems


@dataclass
class CandidatePool:
    pool_size: int
    round: int
    neighbor_ids: np.ndarray     # (N, P) int64, descending similarity
    similarities: np.ndarray     # (N, P) float64, the offline similarities
    encoder_checksum: str = ""

    def __len__(self):
        return self.neighbor_ids.shape[0]

    def neighbors(self, image_id):
        """The ordered (ids, similarities) row for one anchor."""
        return self.neighbor_ids[image_id], self.similarities[image_id]


def build_candidate_pool(features, config, encoder_checksum=""):
    """Exact brute-force top-P neighbor lists over unit features.

    Sorting is by descending cosine with ties broken by ascending id; the
    self column is masked out before selection.
    """
    features = np.asarray(features, dtype=np.float64)
    n = features.shape[0]
    if n < 2:
        raise InvalidConfig(f"need at least 2 images, got {n}")
    problems = config.validate(n_images=n)
    if problems:
        raise InvalidConfig("; ".join(problems))
    sims = features @ features.T
    np.fill_diagonal(sims, -np.inf)
    ids, top = kernels.topk_select(sims, config.pool_size)
    return CandidatePool(config.pool_size, config.round, ids, top,
                         encoder_checksum)


def refresh_pool(encoder_state, dataset, config):
    """Re-encode all clean views and rebuild; round counter advances."""
    feats, _ = encoder_mod.encode_batch(encoder_state, dataset.bases())
    new_config = PoolConfig(config.pool_size, config.round + 1)
    return build_candidate_pool(
        feats, new_config,
        encoder_checksum=encoder_mod.weights_checksum(encoder_state))


def save_pool(pool, path):
    meta = {
        "kind": "pool",
        "n_images": len(pool),
        "pool_size": pool.pool_size,
        "round": pool.round,
        "encoder_checksum": pool.encoder_checksum,
    }
    fileio.write_container(path, meta, {
        "neighbor_ids": pool.neighbor_ids,
        "similarities": pool.similarities,
    })


def load_pool(path):
    meta, arrays = fileio.read_container(path)
    if meta.get("kind") != "pool":
        raise InvalidConfig(f"{path} is not a pool file")
    return CandidatePool(int(meta["pool_size"]), int(meta["round"]),
                         arrays["neighbor_ids"], arrays["similarities"],
                         meta.get("encoder_checksum", ""))
