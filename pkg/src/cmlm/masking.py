"""Causally-masked transform.

A document of s tokens gets n ~ Clamp(Poisson(1), 1, 16) mask spans.
Each span is replaced in the body by an enumerated sentinel (numbered in
source order); the spans themselves move to the tail, each reintroduced by
its sentinel, and the sequence ends with the end-of-document token. The
transformed length is always s + 2n + 1. Loss weights are 0 exactly at the
2n sentinel positions and 1 everywhere else, end-of-document included.
The transform is invertible.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .vocab import Vocab, DEFAULT_VOCAB, NUM_SENTINELS

MAX_MASKS = NUM_SENTINELS
SPAN_ATTEMPTS = 100


class TransformError(ValueError):
    pass


@dataclass(frozen=True)
class MaskSpan:
    """Half-open token range [start, end)."""

    start: int
    end: int

    def __post_init__(self):
        if not 0 <= self.start < self.end:
            raise TransformError(f"invalid span ({self.start}, {self.end})")

    def intersects(self, other: "MaskSpan") -> bool:
        return self.start < other.end and other.start < self.end


@dataclass(frozen=True)
class MaskPlan:
    """Pairwise-disjoint spans sorted by start; 1 <= n <= 16."""

    spans: tuple

    def __post_init__(self):
        spans = tuple(self.spans)
        object.__setattr__(self, "spans", spans)
        if not 1 <= len(spans) <= MAX_MASKS:
            raise TransformError(f"mask count {len(spans)} outside [1, {MAX_MASKS}]")
        for a, b in zip(spans, spans[1:]):
            if a.start >= b.start:
                raise TransformError("spans not sorted by start")
            if a.intersects(b):
                raise TransformError(f"spans {a} and {b} intersect")

    @property
    def n(self) -> int:
        return len(self.spans)

    def validate_for(self, s: int) -> "MaskPlan":
        if self.spans[-1].end > s:
            raise TransformError(
                f"span {self.spans[-1]} exceeds document length {s}")
        return self

    def to_list(self) -> list[tuple[int, int]]:
        return [(sp.start, sp.end) for sp in self.spans]

    @classmethod
    def from_list(cls, pairs) -> "MaskPlan":
        return cls(spans=tuple(MaskSpan(int(a), int(b)) for a, b in pairs))


@dataclass
class TransformedSequence:
    tokens: list[int]
    loss_weights: list[int]
    plan: MaskPlan
    original_length: int


def sample_mask_count(rng: np.random.Generator) -> int:
    """Clamp(Poisson(1), 1, 16)."""
    return min(max(int(rng.poisson(1.0)), 1), MAX_MASKS)


def sample_spans(s: int, n: int, rng: np.random.Generator) -> MaskPlan:
    """Sequential rejection sampling of up to n disjoint non-empty spans.

    Each span draws two integers uniform on [0, s], sorts them into a
    half-open range, and rejects empty or intersecting results. After 100
    failed attempts sampling stops early with the spans placed so far; the
    first span falls back to the whole document so at least one span exists.
    """
    if s < 1:
        raise TransformError("cannot mask an empty document")
    if n < 1:
        raise TransformError("mask count must be >= 1")
    spans: list[MaskSpan] = []
    for _ in range(n):
        placed = None
        for _ in range(SPAN_ATTEMPTS):
            a = int(rng.integers(0, s + 1))
            b = int(rng.integers(0, s + 1))
            lo, hi = min(a, b), max(a, b)
            if lo == hi:
                continue
            candidate = MaskSpan(lo, hi)
            if any(candidate.intersects(sp) for sp in spans):
                continue
            placed = candidate
            break
        if placed is None:
            break
        spans.append(placed)
    if not spans:
        spans.append(MaskSpan(0, s))
    spans.sort(key=lambda sp: sp.start)
    return MaskPlan(spans=tuple(spans)).validate_for(s)


def transform(tokens, plan: MaskPlan, vocab: Vocab = DEFAULT_VOCAB) -> TransformedSequence:
    """Rewrite tokens per the plan: sentinels in the body, spans in the tail."""
    tokens = [int(t) for t in tokens]
    s = len(tokens)
    plan.validate_for(s)
    for i, t in enumerate(tokens):
        if vocab.is_special(t):
            raise TransformError(
                f"special token {vocab.render_token(t)!r} at position {i} "
                "in transform input")
    body: list[int] = []
    tail: list[int] = []
    cursor = 0
    for k, span in enumerate(plan.spans):
        body.extend(tokens[cursor:span.start])
        body.append(vocab.sentinel_id(k))
        tail.append(vocab.sentinel_id(k))
        tail.extend(tokens[span.start:span.end])
        cursor = span.end
    body.extend(tokens[cursor:])
    out = body + tail + [vocab.eod_id]
    weights = [0 if vocab.is_sentinel(t) else 1 for t in out]
    assert len(out) == s + 2 * plan.n + 1
    return TransformedSequence(tokens=out, loss_weights=weights,
                               plan=plan, original_length=s)


def loss_weights(tokens, vocab: Vocab = DEFAULT_VOCAB) -> list[int]:
    """0 at sentinel positions (body and tail), 1 elsewhere."""
    return [0 if vocab.is_sentinel(int(t)) else 1 for t in tokens]


def invert(tokens, vocab: Vocab = DEFAULT_VOCAB) -> tuple[list[int], MaskPlan]:
    """Splice tail spans back over their body sentinels.

    Exact inverse of transform: returns (original tokens, recovered plan)
    and rejects dangling sentinels or a missing end-of-document token,
    naming the offending mask.
    """
    tokens = [int(t) for t in tokens]
    if not tokens or tokens[-1] != vocab.eod_id:
        raise TransformError("missing end-of-document token")
    seq = tokens[:-1]
    positions: dict[int, list[int]] = {}
    for i, t in enumerate(seq):
        if t == vocab.eod_id:
            raise TransformError(f"end-of-document token at interior position {i}")
        if vocab.is_sentinel(t):
            positions.setdefault(vocab.sentinel_index(t), []).append(i)
    if not positions:
        raise TransformError("no mask sentinels present")
    n = max(positions) + 1
    for k in range(n):
        found = len(positions.get(k, []))
        if found != 2:
            raise TransformError(
                f"mask {k} appears {found} times, expected 2 (body and tail)")
    tail_start = positions[0][1]
    body, tail = seq[:tail_start], seq[tail_start:]

    spans: dict[int, list[int]] = {}
    current = None
    for t in tail:
        if vocab.is_sentinel(t):
            k = vocab.sentinel_index(t)
            if k != (0 if current is None else current + 1):
                raise TransformError(f"mask {k} out of order in tail")
            current = k
            spans[k] = []
        else:
            spans[current].append(t)
    for k in range(n):
        if not spans.get(k):
            raise TransformError(f"mask {k} has an empty tail span")

    out: list[int] = []
    recovered: list[tuple[int, int]] = []
    expected = 0
    for t in body:
        if vocab.is_sentinel(t):
            k = vocab.sentinel_index(t)
            if k != expected:
                raise TransformError(f"mask {k} out of order in body")
            recovered.append((len(out), len(out) + len(spans[k])))
            out.extend(spans[k])
            expected += 1
        else:
            out.append(t)
    if expected != n:
        raise TransformError(f"mask {expected} missing from body")
    return out, MaskPlan.from_list(recovered)


def doc_rng(seed: int, doc_id: str) -> np.random.Generator:
    """Independent per-document stream: seed mixed with the doc id by hashing."""
    digest = hashlib.sha256(f"{seed}:{doc_id}".encode("utf-8")).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


def transform_document(tokens, doc_id: str, seed: int,
                       vocab: Vocab = DEFAULT_VOCAB) -> TransformedSequence:
    rng = doc_rng(seed, doc_id)
    n = sample_mask_count(rng)
    plan = sample_spans(len(tokens), n, rng)
    return transform(tokens, plan, vocab)
