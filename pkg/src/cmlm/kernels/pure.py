"""Pure numpy reference kernels.

Same signatures as the compiled backend; float64 throughout. The compiled
module may replace these at import time, but every function here is the
semantic reference the compiled code is tested against.
"""
from __future__ import annotations

import numpy as np

NAME = "pure"


def softmax_xent_fwbw(logits: np.ndarray, targets: np.ndarray,
                      weights: np.ndarray) -> tuple[float, np.ndarray]:
    """Weighted softmax cross-entropy, fused forward and backward.

    Returns (sum over positions of weight * nll, dlogits) where dlogits is
    weight * (softmax - onehot). Weight-0 rows get exactly zero gradient.
    """
    t = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    z = exp.sum(axis=1)
    logp = shifted[np.arange(t), targets] - np.log(z)
    loss = float(-(weights * logp).sum())
    probs = exp / z[:, None]
    dlogits = probs * weights[:, None]
    dlogits[np.arange(t), targets] -= weights
    return loss, dlogits


def layernorm_fw(x: np.ndarray, gain: np.ndarray, bias: np.ndarray,
                 eps: float = 1e-5) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Row-wise layer norm. Returns (y, mean, rstd) with rstd cached for bw."""
    mean = x.mean(axis=-1)
    var = x.var(axis=-1)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean[..., None]) * rstd[..., None]
    return xhat * gain + bias, mean, rstd


def layernorm_bw(dy: np.ndarray, x: np.ndarray, gain: np.ndarray,
                 mean: np.ndarray, rstd: np.ndarray
                 ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    d = x.shape[-1]
    xhat = (x - mean[..., None]) * rstd[..., None]
    dgain = (dy * xhat).reshape(-1, d).sum(axis=0)
    dbias = dy.reshape(-1, d).sum(axis=0)
    dxhat = dy * gain
    dx = rstd[..., None] * (
        dxhat
        - dxhat.mean(axis=-1, keepdims=True)
        - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
    return dx, dgain, dbias


def gelu_fw(x: np.ndarray) -> np.ndarray:
    """Exact (erf) GELU."""
    from scipy.special import erf
    return 0.5 * x * (1.0 + erf(x / np.sqrt(2.0)))


def gelu_bw(x: np.ndarray, dy: np.ndarray) -> np.ndarray:
    from scipy.special import erf
    cdf = 0.5 * (1.0 + erf(x / np.sqrt(2.0)))
    pdf = np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)
    return dy * (cdf + x * pdf)


def causal_softmax_fw(scores: np.ndarray) -> np.ndarray:
    """Softmax over the last axis with positions j > i masked out.

    scores has shape (..., T, T); row i attends to columns 0..i only.
    """
    t = scores.shape[-1]
    mask = np.tril(np.ones((t, t), dtype=bool))
    masked = np.where(mask, scores, -np.inf)
    shifted = masked - masked.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def causal_softmax_bw(probs: np.ndarray, dprobs: np.ndarray) -> np.ndarray:
    inner = (dprobs * probs).sum(axis=-1, keepdims=True)
    return probs * (dprobs - inner)


def adam_step(param: np.ndarray, grad: np.ndarray, m: np.ndarray, v: np.ndarray,
              lr: float, beta1: float, beta2: float, eps: float, t: int) -> None:
    """In-place Adam update with standard bias correction; t is 1-indexed."""
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    mhat = m / (1.0 - beta1 ** t)
    vhat = v / (1.0 - beta2 ** t)
    param -= lr * mhat / (np.sqrt(vhat) + eps)
