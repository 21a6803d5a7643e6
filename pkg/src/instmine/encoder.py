"""Reference trainable encoder: a linear map followed by L2 normalization.

The pluggable-encoder contract is three functions — encode, encode_backward,
adam_step — over an explicit EncoderState. Gradients are manual: callers
chain loss gradients through the normalization (numerics.cosine_grad_raw)
down to the raw output Wx, and encode_backward turns raw-output gradients
into weight gradients.
"""

import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateVector, DimensionMismatch, InvalidConfig
from . import fileio
from .numerics import NORM_EPS, normalize


@dataclass(frozen=True)
class EncoderConfig:
    input_dim: int
    embed_dim: int
    init_scale: float = 0.125
    seed: int = 0

    def validate(self):
        problems = []
        if self.embed_dim < 2:
            problems.append(f"embed_dim must be >= 2, got {self.embed_dim}")
        if self.embed_dim > self.input_dim:
            problems.append(
                f"embed_dim {self.embed_dim} exceeds input_dim {self.input_dim}")
        if self.init_scale < 0:
            problems.append("init_scale must be >= 0")
        return problems


@dataclass(frozen=True)
class AdamConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-4

    def validate(self):
        problems = []
        if self.lr < 0:
            problems.append("lr must be >= 0")
        if not 0 < self.beta1 < 1:
            problems.append(f"beta1 must be in (0, 1), got {self.beta1}")
        if not 0 < self.beta2 < 1:
            problems.append(f"beta2 must be in (0, 1), got {self.beta2}")
        if self.eps <= 0:
            problems.append("eps must be > 0")
        if self.weight_decay < 0:
            problems.append("weight_decay must be >= 0")
        return problems


@dataclass
class EncoderState:
    config: EncoderConfig
    weights: np.ndarray       # (embed_dim, input_dim)
    adam_m: np.ndarray
    adam_v: np.ndarray
    adam_t: int


def init_encoder(config, warm_start=None):
    """Fresh state with seeded gaussian weights, or a checkpoint reload."""
    problems = config.validate()
    if problems:
        raise InvalidConfig("; ".join(problems))
    if warm_start is not None:
        state = load_checkpoint(warm_start)
        if state.config.input_dim != config.input_dim or \
                state.config.embed_dim != config.embed_dim:
            raise InvalidConfig(
                f"warm start dims {state.config.embed_dim}x"
                f"{state.config.input_dim} do not match config")
        return state
    rng = np.random.default_rng(config.seed)
    weights = config.init_scale * rng.standard_normal(
        (config.embed_dim, config.input_dim))
    zeros = np.zeros_like(weights)
    return EncoderState(config, weights, zeros.copy(), zeros.copy(), 0)


def encode_raw(state, x):
    """The pre-normalization output Wx."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (state.config.input_dim,):
        raise DimensionMismatch(
            f"input shape {x.shape}, expected ({state.config.input_dim},)")
    return state.weights @ x


def encode(state, x):
    return normalize(encode_raw(state, x))


def encode_batch(state, xs):
    """Encode rows of xs; returns (unit_features, raw_outputs).

    Raw outputs are kept because the loss gradient chain needs ||Wx||.
    """
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 2 or xs.shape[1] != state.config.input_dim:
        raise DimensionMismatch(
            f"batch shape {xs.shape}, expected (n, {state.config.input_dim})")
    raw = xs @ state.weights.T
    norms = np.linalg.norm(raw, axis=1)
    if np.any(norms <= NORM_EPS):
        bad = int(np.argmin(norms))
        raise DegenerateVector(f"batch row {bad} encodes to norm {norms[bad]:g}")
    return raw / norms[:, None], raw


def encode_backward(state, x, grad_f_raw):
    """Weight gradient of one item given dL/d(Wx): the outer product."""
    x = np.asarray(x, dtype=np.float64)
    grad_f_raw = np.asarray(grad_f_raw, dtype=np.float64)
    if x.shape != (state.config.input_dim,):
        raise DimensionMismatch(f"input shape {x.shape}")
    if grad_f_raw.shape != (state.config.embed_dim,):
        raise DimensionMismatch(f"gradient shape {grad_f_raw.shape}")
    return np.outer(grad_f_raw, x)


def encode_backward_batch(state, xs, grads_raw):
    """Sum of per-item outer products, as one matmul."""
    xs = np.asarray(xs, dtype=np.float64)
    grads_raw = np.asarray(grads_raw, dtype=np.float64)
    if xs.shape[0] != grads_raw.shape[0]:
        raise DimensionMismatch("batch sizes differ")
    return grads_raw.T @ xs


def adam_step(state, grads, cfg):
    """One Adam update with bias correction and decoupled weight decay."""
    grads = np.asarray(grads, dtype=np.float64)
    if grads.shape != state.weights.shape:
        raise DimensionMismatch(
            f"gradient shape {grads.shape} vs weights {state.weights.shape}")
    t = state.adam_t + 1
    m = cfg.beta1 * state.adam_m + (1 - cfg.beta1) * grads
    v = cfg.beta2 * state.adam_v + (1 - cfg.beta2) * grads * grads
    m_hat = m / (1 - cfg.beta1 ** t)
    v_hat = v / (1 - cfg.beta2 ** t)
    weights = state.weights - cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.eps)
    if cfg.weight_decay > 0:
        weights = weights - cfg.lr * cfg.weight_decay * weights
    return EncoderState(state.config, weights, m, v, t)


def weights_checksum(state):
    """Stable fingerprint of the weights, recorded in pool file headers."""
    return hashlib.sha256(
        np.ascontiguousarray(state.weights).tobytes()).hexdigest()


def save_checkpoint(state, path):
    meta = {
        "kind": "encoder",
        "config": {
            "input_dim": state.config.input_dim,
            "embed_dim": state.config.embed_dim,
            "init_scale": state.config.init_scale,
            "seed": state.config.seed,
        },
        "adam_t": state.adam_t,
    }
    fileio.write_container(path, meta, {
        "weights": state.weights,
        "adam_m": state.adam_m,
        "adam_v": state.adam_v,
    })


def load_checkpoint(path):
    meta, arrays = fileio.read_container(path)
    if meta.get("kind") != "encoder":
        raise InvalidConfig(f"{path} is not an encoder checkpoint")
    config = EncoderConfig(**meta["config"])
    return EncoderState(config, arrays["weights"], arrays["adam_m"],
                        arrays["adam_v"], int(meta["adam_t"]))
