"""Instance-level contrastive training with dynamic pseudo-positive mining.

The pipeline: a pluggable linear encoder over synthetic (or ingested)
feature vectors, candidate pools of nearest neighbors, clean and augmented
memory banks, in-batch positive selection plus iterative memory mining, a
gated contrastive loss with analytic gradients, and retrieval evaluation
by mean average precision.
"""

from .candidates import CandidatePool, PoolConfig, build_candidate_pool
from .encoder import (AdamConfig, EncoderConfig, EncoderState, encode,
                      encode_batch, init_encoder)
from .errors import InstmineError
from .evaluator import EvalConfig, average_precision, evaluate_map
from .loss import LossContext, LossReport, build_loss_context, contrastive_loss
from .membank import MemoryBank, init_banks
from .miner import (BatchMiningConfig, MemoryMiningConfig, MiningResult,
                    QuerySet, mine_memory_positives, mine_tuple,
                    select_batch_positives)
from .synthdata import (Dataset, DatasetConfig, generate_dataset,
                        load_dataset, load_external_features, save_dataset)
from .trainer import TrainerConfig, TrainingHistory, train

__version__ = "0.1.0"

__all__ = [
    "AdamConfig", "BatchMiningConfig", "CandidatePool", "Dataset",
    "DatasetConfig", "EncoderConfig", "EncoderState", "EvalConfig",
    "InstmineError", "LossContext", "LossReport", "MemoryBank",
    "MemoryMiningConfig", "MiningResult", "PoolConfig", "QuerySet",
    "TrainerConfig", "TrainingHistory", "average_precision",
    "build_candidate_pool", "build_loss_context", "contrastive_loss",
    "encode", "encode_batch", "evaluate_map", "generate_dataset",
    "init_banks", "init_encoder", "load_dataset", "load_external_features",
    "mine_memory_positives", "mine_tuple", "save_dataset",
    "select_batch_positives", "train", "__version__",
]
