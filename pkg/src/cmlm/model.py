"""Decoder-only causal transformer in plain numpy, float64.

Pre-norm blocks, sinusoidal positions, tied input/output embedding, exact
(erf) GELU. Forward and backward are written out by hand on top of the
kernel primitives; gradients are exact and checked against finite
differences in the tests. Everything is deterministic given a seed.
"""
from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, asdict

import numpy as np

from . import kernels
from .vocab import Vocab, DEFAULT_VOCAB

CHECKPOINT_MAGIC = b"CMLMCKPT"
CHECKPOINT_VERSION = 1


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    embed_dim: int = 64
    ffn_embed_dim: int = 256
    layers: int = 2
    attention_heads: int = 4
    normalize_before: bool = True
    share_input_output_embed: bool = True
    learned_positions: bool = False
    max_positions: int = 512
    vocab_size: int = DEFAULT_VOCAB.total_size

    def __post_init__(self):
        if self.embed_dim % self.attention_heads != 0:
            raise ModelError("embed_dim must be divisible by attention_heads")
        if not self.normalize_before or not self.share_input_output_embed:
            raise ModelError("only pre-norm tied-embedding models are implemented")
        if self.learned_positions:
            raise ModelError("only sinusoidal positions are implemented")

    @property
    def head_dim(self) -> int:
        return self.embed_dim // self.attention_heads


# Desk-scale presets: small enough to train and gradient-check in minutes
# on one core. Production-scale configs are representable with the same
# fields but are not instantiated here.
PRESETS = {
    "tiny": ModelConfig(embed_dim=64, ffn_embed_dim=256, layers=2,
                        attention_heads=4, max_positions=512),
    "small": ModelConfig(embed_dim=128, ffn_embed_dim=512, layers=4,
                         attention_heads=8, max_positions=512),
}


def param_names(config: ModelConfig) -> list[str]:
    """Declared parameter order, used by checkpoints and the optimizer."""
    names = ["embed"]
    for i in range(config.layers):
        p = f"layers.{i}."
        names += [p + "ln1.g", p + "ln1.b",
                  p + "attn.wq", p + "attn.bq", p + "attn.wk", p + "attn.bk",
                  p + "attn.wv", p + "attn.bv", p + "attn.wo", p + "attn.bo",
                  p + "ln2.g", p + "ln2.b",
                  p + "ffn.w1", p + "ffn.b1", p + "ffn.w2", p + "ffn.b2"]
    names += ["lnf.g", "lnf.b"]
    return names


def init_params(config: ModelConfig, rng: np.random.Generator) -> dict:
    d, f, v = config.embed_dim, config.ffn_embed_dim, config.vocab_size

    def normal(*shape):
        return rng.normal(0.0, 0.02, size=shape)

    params = {"embed": normal(v, d)}
    for i in range(config.layers):
        p = f"layers.{i}."
        params[p + "ln1.g"] = np.ones(d)
        params[p + "ln1.b"] = np.zeros(d)
        for w in ("wq", "wk", "wv", "wo"):
            params[p + "attn." + w] = normal(d, d)
        for b in ("bq", "bk", "bv", "bo"):
            params[p + "attn." + b] = np.zeros(d)
        params[p + "ln2.g"] = np.ones(d)
        params[p + "ln2.b"] = np.zeros(d)
        params[p + "ffn.w1"] = normal(d, f)
        params[p + "ffn.b1"] = np.zeros(f)
        params[p + "ffn.w2"] = normal(f, d)
        params[p + "ffn.b2"] = np.zeros(d)
    params["lnf.g"] = np.ones(d)
    params["lnf.b"] = np.zeros(d)
    return {k: np.ascontiguousarray(v, dtype=np.float64) for k, v in params.items()}


_POSITION_CACHE: dict = {}


def sinusoidal_positions(max_positions: int, dim: int) -> np.ndarray:
    """Fixed position table: half sine, half cosine columns."""
    key = (max_positions, dim)
    if key not in _POSITION_CACHE:
        half = dim // 2
        freq = np.exp(np.arange(half) * -(np.log(10000.0) / max(half - 1, 1)))
        args = np.arange(max_positions)[:, None] * freq[None, :]
        table = np.concatenate([np.sin(args), np.cos(args)], axis=1)
        if dim % 2 == 1:
            table = np.concatenate([table, np.zeros((max_positions, 1))], axis=1)
        table.flags.writeable = False
        _POSITION_CACHE[key] = table
    return _POSITION_CACHE[key]


def _split_heads(x: np.ndarray, heads: int) -> np.ndarray:
    t, d = x.shape
    return x.reshape(t, heads, d // heads).transpose(1, 0, 2)


def _merge_heads(x: np.ndarray) -> np.ndarray:
    h, t, dh = x.shape
    return x.transpose(1, 0, 2).reshape(t, h * dh)


def _check_tokens(config: ModelConfig, tokens: np.ndarray):
    if tokens.ndim != 1 or tokens.shape[0] == 0:
        raise ModelError("tokens must be a non-empty 1-d sequence")
    if tokens.shape[0] > config.max_positions:
        raise ModelError(
            f"sequence length {tokens.shape[0]} exceeds "
            f"max_positions {config.max_positions}")
    if tokens.min() < 0 or tokens.max() >= config.vocab_size:
        raise ModelError("token id out of vocab range")


def forward(config: ModelConfig, params: dict, tokens,
            cache: dict | None = None) -> np.ndarray:
    """Per-position logits, shape (len(tokens), vocab_size).

    Strictly causal: logits at position i depend only on tokens[:i+1].
    Pass a dict as cache to retain intermediates for backward().
    """
    tokens = np.asarray(tokens, dtype=np.int64)
    _check_tokens(config, tokens)
    t, d = tokens.shape[0], config.embed_dim
    scale = np.sqrt(float(d))
    h = params["embed"][tokens] * scale + sinusoidal_positions(
        config.max_positions, d)[:t]
    layers = []
    for i in range(config.layers):
        p = f"layers.{i}."
        lay = {"h_in": h}
        a, mean1, rstd1 = kernels.layernorm_fw(h, params[p + "ln1.g"],
                                               params[p + "ln1.b"])
        lay.update(a=a, mean1=mean1, rstd1=rstd1)
        q = _split_heads(a @ params[p + "attn.wq"] + params[p + "attn.bq"],
                         config.attention_heads)
        k = _split_heads(a @ params[p + "attn.wk"] + params[p + "attn.bk"],
                         config.attention_heads)
        v = _split_heads(a @ params[p + "attn.wv"] + params[p + "attn.bv"],
                         config.attention_heads)
        scores = q @ k.transpose(0, 2, 1) / np.sqrt(float(config.head_dim))
        probs = kernels.causal_softmax_fw(scores)
        ctx = _merge_heads(probs @ v)
        lay.update(q=q, k=k, v=v, probs=probs, ctx=ctx)
        h = h + (ctx @ params[p + "attn.wo"] + params[p + "attn.bo"])
        lay["h_mid"] = h
        f, mean2, rstd2 = kernels.layernorm_fw(h, params[p + "ln2.g"],
                                               params[p + "ln2.b"])
        u = f @ params[p + "ffn.w1"] + params[p + "ffn.b1"]
        g = kernels.gelu_fw(u)
        lay.update(f=f, mean2=mean2, rstd2=rstd2, u=u, g=g)
        h = h + (g @ params[p + "ffn.w2"] + params[p + "ffn.b2"])
        layers.append(lay)
    y, meanf, rstdf = kernels.layernorm_fw(h, params["lnf.g"], params["lnf.b"])
    logits = y @ params["embed"].T
    if cache is not None:
        cache.update(tokens=tokens, layers=layers, h_top=h, y=y,
                     meanf=meanf, rstdf=rstdf)
    return logits


def backward(config: ModelConfig, params: dict, cache: dict,
             dlogits: np.ndarray, grads: dict) -> None:
    """Accumulate exact gradients of sum(dlogits * logits) into grads."""
    tokens, y = cache["tokens"], cache["y"]
    d = config.embed_dim
    scale = np.sqrt(float(d))
    grads["embed"] += dlogits.T @ y
    dy = dlogits @ params["embed"]
    dh, dg_f, db_f = kernels.layernorm_bw(dy, cache["h_top"], params["lnf.g"],
                                          cache["meanf"], cache["rstdf"])
    grads["lnf.g"] += dg_f
    grads["lnf.b"] += db_f
    for i in reversed(range(config.layers)):
        p = f"layers.{i}."
        lay = cache["layers"][i]
        # FFN residual branch
        dg = dh @ params[p + "ffn.w2"].T
        grads[p + "ffn.w2"] += lay["g"].T @ dh
        grads[p + "ffn.b2"] += dh.sum(axis=0)
        du = kernels.gelu_bw(lay["u"], dg)
        df = du @ params[p + "ffn.w1"].T
        grads[p + "ffn.w1"] += lay["f"].T @ du
        grads[p + "ffn.b1"] += du.sum(axis=0)
        dx, dg2, db2 = kernels.layernorm_bw(df, lay["h_mid"], params[p + "ln2.g"],
                                            lay["mean2"], lay["rstd2"])
        grads[p + "ln2.g"] += dg2
        grads[p + "ln2.b"] += db2
        dh = dh + dx
        # attention residual branch
        dctx = _split_heads(dh @ params[p + "attn.wo"].T, config.attention_heads)
        grads[p + "attn.wo"] += lay["ctx"].T @ dh
        grads[p + "attn.bo"] += dh.sum(axis=0)
        dprobs = dctx @ lay["v"].transpose(0, 2, 1)
        dv = lay["probs"].transpose(0, 2, 1) @ dctx
        dscores = kernels.causal_softmax_bw(lay["probs"], dprobs)
        dscores /= np.sqrt(float(config.head_dim))
        dq = dscores @ lay["k"]
        dk = dscores.transpose(0, 2, 1) @ lay["q"]
        da = (_merge_heads(dq) @ params[p + "attn.wq"].T
              + _merge_heads(dk) @ params[p + "attn.wk"].T
              + _merge_heads(dv) @ params[p + "attn.wv"].T)
        a = lay["a"]
        grads[p + "attn.wq"] += a.T @ _merge_heads(dq)
        grads[p + "attn.bq"] += _merge_heads(dq).sum(axis=0)
        grads[p + "attn.wk"] += a.T @ _merge_heads(dk)
        grads[p + "attn.bk"] += _merge_heads(dk).sum(axis=0)
        grads[p + "attn.wv"] += a.T @ _merge_heads(dv)
        grads[p + "attn.bv"] += _merge_heads(dv).sum(axis=0)
        dx, dg1, db1 = kernels.layernorm_bw(da, lay["h_in"], params[p + "ln1.g"],
                                            lay["mean1"], lay["rstd1"])
        grads[p + "ln1.g"] += dg1
        grads[p + "ln1.b"] += db1
        dh = dh + dx
    np.add.at(grads["embed"], tokens, dh * scale)


def weighted_loss(logits: np.ndarray, targets, weights) -> float:
    """Mean NLL of targets[i] under logits[i] over positions with weight 1."""
    targets = np.asarray(targets, dtype=np.int64)
    weights = np.asarray(weights, dtype=np.float64)
    if not (logits.shape[0] == targets.shape[0] == weights.shape[0]):
        raise ModelError("logits, targets and weights must have equal length")
    wsum = weights.sum()
    if wsum == 0:
        raise ModelError("all-zero weights: mean loss undefined")
    loss_sum, _ = kernels.softmax_xent_fwbw(
        np.ascontiguousarray(logits, dtype=np.float64), targets, weights)
    return loss_sum / wsum


def zero_grads(params: dict) -> dict:
    return {k: np.zeros_like(v) for k, v in params.items()}


def loss_and_grad(config: ModelConfig, params: dict, batch_tokens,
                  batch_weights) -> tuple[float, dict]:
    """Weighted next-token loss and exact gradients over a batch.

    Position i is scored for predicting token i+1, weighted by the weight
    of the predicted token, and the loss is the mean over all weight-1
    targets in the batch. Weight-0 targets contribute exactly zero gradient.
    """
    batch_tokens = np.asarray(batch_tokens, dtype=np.int64)
    batch_weights = np.asarray(batch_weights, dtype=np.float64)
    if batch_tokens.ndim == 1:
        batch_tokens = batch_tokens[None, :]
        batch_weights = batch_weights[None, :]
    if batch_tokens.shape[1] < 2:
        raise ModelError("need at least 2 tokens for next-token loss")
    wsum = batch_weights[:, 1:].sum()
    if wsum == 0:
        raise ModelError("all-zero weights: mean loss undefined")
    grads = zero_grads(params)
    loss_sum = 0.0
    for b in range(batch_tokens.shape[0]):
        tokens = batch_tokens[b]
        cache: dict = {}
        logits = forward(config, params, tokens, cache=cache)
        loss_b, dlogits = kernels.softmax_xent_fwbw(
            np.ascontiguousarray(logits[:-1]), tokens[1:],
            batch_weights[b, 1:])
        loss_sum += loss_b
        full = np.zeros_like(logits)
        full[:-1] = dlogits / wsum
        backward(config, params, cache, full, grads)
    loss = loss_sum / wsum
    if not np.isfinite(loss):
        raise ModelError("non-finite loss")
    return loss, grads


class TransformerModel:
    """Bundles config and params behind the decoding interface.

    Any object with a logits(tokens) -> (T, V) array method works as a
    model for the decoding module; this is the trained-checkpoint one.
    """

    def __init__(self, config: ModelConfig, params: dict,
                 vocab: Vocab = DEFAULT_VOCAB):
        self.config = config
        self.params = params
        self.vocab = vocab

    def logits(self, tokens) -> np.ndarray:
        return forward(self.config, self.params, tokens)

    @property
    def max_positions(self) -> int:
        return self.config.max_positions


def save_checkpoint(path, config: ModelConfig, params: dict,
                    vocab: Vocab = DEFAULT_VOCAB, extra: dict | None = None):
    """Versioned binary container: header JSON, tensors in declared order,
    sha256 checksum of the payload."""
    names = param_names(config)
    payload = b"".join(
        np.ascontiguousarray(params[n], dtype=np.float64).tobytes() for n in names)
    header = {
        "model": asdict(config),
        "vocab": {"image_vocab_size": vocab.image_vocab_size},
        "params": [{"name": n, "shape": list(params[n].shape)} for n in names],
        "dtype": "float64",
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
    }
    if extra:
        header["extra"] = extra
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fp:
        fp.write(CHECKPOINT_MAGIC)
        fp.write(struct.pack("<II", CHECKPOINT_VERSION, len(header_bytes)))
        fp.write(header_bytes)
        fp.write(payload)


def load_checkpoint(path) -> tuple[ModelConfig, dict, Vocab]:
    with open(path, "rb") as fp:
        magic = fp.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ModelError(f"{path}: not a checkpoint file")
        version, header_len = struct.unpack("<II", fp.read(8))
        if version != CHECKPOINT_VERSION:
            raise ModelError(f"{path}: unsupported checkpoint version {version}")
        header = json.loads(fp.read(header_len).decode("utf-8"))
        payload = fp.read()
    if hashlib.sha256(payload).hexdigest() != header["payload_sha256"]:
        raise ModelError(f"{path}: checkpoint checksum mismatch")
    config = ModelConfig(**header["model"])
    vocab = Vocab(image_vocab_size=header["vocab"]["image_vocab_size"])
    params = {}
    offset = 0
    for entry in header["params"]:
        shape = tuple(entry["shape"])
        size = int(np.prod(shape)) * 8
        arr = np.frombuffer(payload[offset:offset + size], dtype=np.float64)
        # frombuffer views are read-only; training updates params in place
        params[entry["name"]] = arr.reshape(shape).copy()
        offset += size
    if offset != len(payload):
        raise ModelError(f"{path}: trailing bytes in checkpoint payload")
    return config, params, vocab
