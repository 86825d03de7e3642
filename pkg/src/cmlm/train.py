"""Optimization loop: Adam, linear warmup + polynomial decay, gradient
clipping, greedy document packing to a fixed sequence length.

Bitwise-reproducible given (seed, config, corpus): batches are drawn in a
seed-determined order and all arithmetic is float64 on a single stream.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .model import (ModelConfig, ModelError, forward, init_params,
                    loss_and_grad, param_names, weighted_loss)
from .vocab import Vocab, DEFAULT_VOCAB


class TrainError(ValueError):
    pass


class DivergenceError(TrainError):
    def __init__(self, step: int):
        super().__init__(f"non-finite loss at step {step}")
        self.step = step


@dataclass
class TrainConfig:
    peak_lr: float = 3e-4
    warmup_updates: int = 100
    total_updates: int = 500
    end_lr: float = 0.0
    batch_size: int = 8
    max_seq_len: int = 256
    clip_norm: float = 1.0
    beta1: float = 0.9
    beta2: float = 0.98
    adam_eps: float = 1e-8
    power: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.warmup_updates > self.total_updates:
            raise TrainError("warmup_updates must not exceed total_updates")
        if self.clip_norm <= 0:
            raise TrainError("clip_norm must be positive")


def lr_at(step: int, cfg: TrainConfig) -> float:
    """Linear warmup to peak_lr, then polynomial decay to end_lr."""
    if not 0 <= step <= cfg.total_updates:
        raise TrainError(f"step {step} outside [0, {cfg.total_updates}]")
    if step <= cfg.warmup_updates:
        if cfg.warmup_updates == 0:
            return cfg.peak_lr
        return cfg.peak_lr * step / cfg.warmup_updates
    span = cfg.total_updates - cfg.warmup_updates
    remaining = (cfg.total_updates - step) / span
    return cfg.end_lr + (cfg.peak_lr - cfg.end_lr) * remaining ** cfg.power


def global_norm(grads: dict) -> float:
    total = 0.0
    for g in grads.values():
        total += float((g * g).sum())
    return float(np.sqrt(total))


def clip(grads: dict, clip_norm: float) -> dict:
    """Scale all grads by clip_norm/norm when the global L2 norm exceeds it."""
    norm = global_norm(grads)
    if not np.isfinite(norm):
        raise TrainError("non-finite gradient norm")
    if norm > clip_norm:
        factor = clip_norm / norm
        for g in grads.values():
            g *= factor
    return grads


def pack_sequences(docs, max_seq_len: int, vocab: Vocab = DEFAULT_VOCAB
                   ) -> tuple[np.ndarray, np.ndarray]:
    """Greedy-pack (tokens, weights) documents into fixed-length rows.

    Documents are laid into a row while they fit; a document longer than
    max_seq_len is truncated. Rows are padded with the end-of-document
    token at weight 0.
    """
    if max_seq_len < 2:
        raise TrainError("max_seq_len must be >= 2")
    rows_t, rows_w = [], []
    cur_t: list[int] = []
    cur_w: list[int] = []

    def flush():
        if not cur_t:
            return
        pad = max_seq_len - len(cur_t)
        rows_t.append(cur_t + [vocab.eod_id] * pad)
        rows_w.append(cur_w + [0] * pad)
        cur_t.clear()
        cur_w.clear()

    for tokens, weights in docs:
        if len(tokens) != len(weights):
            raise TrainError("tokens and weights length mismatch")
        tokens = tokens[:max_seq_len]
        weights = weights[:max_seq_len]
        if len(cur_t) + len(tokens) > max_seq_len:
            flush()
        cur_t.extend(tokens)
        cur_w.extend(weights)
    flush()
    if not rows_t:
        raise TrainError("no sequences to train on")
    return (np.asarray(rows_t, dtype=np.int64),
            np.asarray(rows_w, dtype=np.float64))


@dataclass
class TraceEntry:
    step: int
    lr: float
    loss: float


@dataclass
class TrainResult:
    params: dict
    trace: list[TraceEntry] = field(default_factory=list)

    def trace_csv(self) -> str:
        lines = ["step,lr,loss"]
        for e in self.trace:
            lines.append(f"{e.step},{e.lr:.10g},{e.loss:.10g}")
        return "\n".join(lines) + "\n"


class AdamState:
    def __init__(self, params: dict):
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, names, params: dict, grads: dict, lr: float,
             cfg: TrainConfig, t: int):
        for n in names:
            kernels.adam_step(params[n], grads[n], self.m[n], self.v[n],
                              lr, cfg.beta1, cfg.beta2, cfg.adam_eps, t)


def train(model_cfg: ModelConfig, train_cfg: TrainConfig, docs,
          vocab: Vocab = DEFAULT_VOCAB, params: dict | None = None,
          eval_docs=None) -> TrainResult:
    """Run total_updates Adam steps over greedily packed sequences.

    docs is a sequence of (tokens, weights) pairs, already transformed.
    Update t (1-based) uses lr_at(t). Raises DivergenceError on a
    non-finite loss, naming the step.
    """
    rows_t, rows_w = pack_sequences(docs, train_cfg.max_seq_len, vocab)
    if rows_w[:, 1:].sum() == 0:
        raise TrainError("corpus has no supervised positions")
    rng = np.random.default_rng(train_cfg.seed)
    if params is None:
        params = init_params(model_cfg, rng)
    names = param_names(model_cfg)
    adam = AdamState(params)
    result = TrainResult(params=params)
    order = rng.permutation(len(rows_t))
    cursor = 0
    for t in range(1, train_cfg.total_updates + 1):
        idx = []
        for _ in range(min(train_cfg.batch_size, len(rows_t))):
            if cursor == len(order):
                order = rng.permutation(len(rows_t))
                cursor = 0
            idx.append(order[cursor])
            cursor += 1
        batch_t = rows_t[np.asarray(idx)]
        batch_w = rows_w[np.asarray(idx)]
        if batch_w[:, 1:].sum() == 0:
            continue
        try:
            loss, grads = loss_and_grad(model_cfg, params, batch_t, batch_w)
        except ModelError as e:
            if "non-finite" in str(e):
                raise DivergenceError(t) from e
            raise
        clip(grads, train_cfg.clip_norm)
        lr = lr_at(t, train_cfg)
        adam.step(names, params, grads, lr, train_cfg, t)
        result.trace.append(TraceEntry(step=t, lr=lr, loss=loss))
    return result


def evaluate_loss(model_cfg: ModelConfig, params: dict, docs,
                  max_seq_len: int, vocab: Vocab = DEFAULT_VOCAB) -> float:
    """Mean weighted next-token loss over a packed held-out set."""
    rows_t, rows_w = pack_sequences(docs, max_seq_len, vocab)
    total, wsum = 0.0, 0.0
    for b in range(rows_t.shape[0]):
        w = rows_w[b, 1:].sum()
        if w == 0:
            continue
        logits = forward(model_cfg, params, rows_t[b])
        loss = weighted_loss(logits[:-1], rows_t[b, 1:], rows_w[b, 1:])
        total += loss * w
        wsum += w
    if wsum == 0:
        raise TrainError("no supervised positions in evaluation set")
    return total / wsum
