"""Generation and scoring strategies.

A model here is anything with a logits(tokens) -> (T, V) array method.
Strategies: temperature sampling (with a greedy mode), length-normalized
beam search, trie-constrained decoding over a closed candidate set,
implicit size-hint infilling, and exact sequence scoring.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .vocab import Vocab, DEFAULT_VOCAB


class DecodeError(ValueError):
    pass


@dataclass
class DecodeSettings:
    temperature: float = 0.85
    beam_size: int = 5
    max_len: int = 256
    stop_tokens: tuple = ()
    seed: int = 0
    greedy: bool = False

    def __post_init__(self):
        if self.temperature <= 0:
            raise DecodeError("temperature must be > 0 (use greedy=True instead)")
        if self.beam_size < 1:
            raise DecodeError("beam_size must be >= 1")
        if self.max_len < 1:
            raise DecodeError("max_len must be >= 1")

    def stops(self, vocab: Vocab) -> set:
        return set(self.stop_tokens) if self.stop_tokens else {vocab.eod_id}


def _log_softmax(row: np.ndarray) -> np.ndarray:
    shifted = row - row.max()
    return shifted - np.log(np.exp(shifted).sum())


def _next_logprobs(model, tokens) -> np.ndarray:
    return _log_softmax(model.logits(tokens)[-1].astype(np.float64))


def sample(model, prompt, settings: DecodeSettings,
           vocab: Vocab = DEFAULT_VOCAB, forbidden=()) -> list[int]:
    """Sample a continuation token by token; greedy mode takes the argmax.

    Stops after emitting a stop token or when the total sequence length
    reaches settings.max_len (the prompt counts). The returned continuation
    includes the stop token when one was emitted.
    """
    prompt = [int(t) for t in prompt]
    if len(prompt) >= settings.max_len:
        raise DecodeError(f"prompt length {len(prompt)} >= max_len {settings.max_len}")
    rng = np.random.default_rng(settings.seed)
    stops = settings.stops(vocab)
    seq = list(prompt)
    out: list[int] = []
    while len(seq) < settings.max_len:
        row = model.logits(seq)[-1].astype(np.float64)
        for t in forbidden:
            row[t] = -np.inf
        if settings.greedy:
            token = int(row.argmax())
        else:
            logp = _log_softmax(row / settings.temperature)
            token = int(rng.choice(len(row), p=np.exp(logp)))
        seq.append(token)
        out.append(token)
        if token in stops:
            break
    return out


@dataclass(order=True)
class _Hypothesis:
    sort_key: tuple = field(init=False, repr=False)
    logprob: float
    tokens: tuple
    finished: bool = False

    def __post_init__(self):
        self.sort_key = (-self.norm_score, self.tokens)

    @property
    def norm_score(self) -> float:
        return self.logprob / max(len(self.tokens), 1)


def beam(model, prompt, settings: DecodeSettings,
         vocab: Vocab = DEFAULT_VOCAB) -> tuple[list[int], float]:
    """Length-normalized beam search over continuations.

    Returns (continuation tokens, mean per-token log-probability). Ties
    break toward the lexicographically earlier token sequence. beam_size=1
    reduces to greedy decoding.
    """
    prompt = tuple(int(t) for t in prompt)
    if len(prompt) >= settings.max_len:
        raise DecodeError(f"prompt length {len(prompt)} >= max_len {settings.max_len}")
    stops = settings.stops(vocab)
    live = [_Hypothesis(logprob=0.0, tokens=())]
    finished: list[_Hypothesis] = []
    while live:
        expansions: list[_Hypothesis] = []
        for hyp in live:
            logp = _next_logprobs(model, prompt + hyp.tokens)
            for token in range(len(logp)):
                ext = _Hypothesis(logprob=hyp.logprob + float(logp[token]),
                                  tokens=hyp.tokens + (token,))
                full_len = len(prompt) + len(ext.tokens)
                if token in stops or full_len >= settings.max_len:
                    ext.finished = True
                    finished.append(ext)
                else:
                    expansions.append(ext)
        expansions.sort()
        live = expansions[:settings.beam_size]
        if finished:
            finished.sort()
            finished = finished[:settings.beam_size]
    if not finished:
        raise DecodeError("beam search produced no finished hypothesis")
    best = min(finished)
    return list(best.tokens), best.norm_score


class CandidateTrie:
    """Prefix tree over token sequences; every inserted sequence is a
    complete candidate (flagged terminal at its last node)."""

    def __init__(self):
        self.children: dict[int, CandidateTrie] = {}
        self.terminal = False

    def insert(self, tokens) -> "CandidateTrie":
        node = self
        for t in tokens:
            node = node.children.setdefault(int(t), CandidateTrie())
        node.terminal = True
        return self

    @classmethod
    def from_candidates(cls, candidates) -> "CandidateTrie":
        trie = cls()
        for c in candidates:
            trie.insert(c)
        return trie

    def is_empty(self) -> bool:
        return not self.children and not self.terminal

    def walk(self, tokens) -> "CandidateTrie | None":
        node = self
        for t in tokens:
            node = node.children.get(int(t))
            if node is None:
                return None
        return node

    def candidates(self) -> list[tuple[int, ...]]:
        out = []
        if self.terminal:
            out.append(())
        for t in sorted(self.children):
            out.extend((t,) + rest for rest in self.children[t].candidates())
        return out


def constrained(model, prompt, trie: CandidateTrie, settings: DecodeSettings,
                vocab: Vocab = DEFAULT_VOCAB) -> list[int]:
    """Greedy decoding restricted to the trie's candidate set.

    At each step only trie-legal continuations keep probability mass; at a
    terminal node the end-of-document token stands for "stop here", so
    candidates that are prefixes of other candidates stay reachable. The
    result is always a complete candidate.
    """
    if trie.is_empty():
        raise DecodeError("empty candidate trie")
    prompt = [int(t) for t in prompt]
    rng = np.random.default_rng(settings.seed)
    node = trie
    out: list[int] = []
    eod = vocab.eod_id
    while True:
        if node.terminal and not node.children:
            break
        row = model.logits(prompt + out)[-1].astype(np.float64)
        legal = set(node.children)
        if node.terminal:
            legal.add(eod)
        masked = np.full_like(row, -np.inf)
        for t in legal:
            masked[t] = row[t]
        logp = _log_softmax(masked)
        if settings.greedy:
            token = int(np.argmax(logp))
        else:
            token = int(rng.choice(len(logp), p=np.exp(logp)))
        if token == eod and node.terminal and eod not in node.children:
            break
        out.append(token)
        node = node.children[token]
    assert trie.walk(out) is not None and trie.walk(out).terminal
    return out


def score(model, tokens, weights=None) -> tuple[float, np.ndarray]:
    """Exact log-probability of a sequence under the model.

    Position i >= 1 is scored with the model's prediction from prefix
    tokens[:i]; with weights, only positions whose weight is 1 count.
    Returns (total, per-position array over positions 1..len-1).
    """
    tokens = [int(t) for t in tokens]
    if len(tokens) < 2:
        return 0.0, np.zeros(0)
    logits = model.logits(tokens).astype(np.float64)
    per = np.zeros(len(tokens) - 1)
    for i in range(len(tokens) - 1):
        per[i] = _log_softmax(logits[i])[tokens[i + 1]]
    if weights is not None:
        weights = np.asarray(weights, dtype=np.float64)
        if weights.shape[0] != len(tokens):
            raise DecodeError("weights length must match tokens")
        per = per * weights[1:]
    return float(per.sum()), per


def rank_candidates(model, prompt, candidates, vocab: Vocab = DEFAULT_VOCAB,
                    include_eod: bool = True) -> list[tuple[tuple[int, ...], float]]:
    """Score prompt+candidate(+eod) for each candidate; best first.

    Appending the end-of-document token makes totals comparable when one
    candidate is a prefix of another. Ties break lexicographically.
    """
    prompt = list(prompt)
    if not prompt:
        raise DecodeError("rank_candidates needs a non-empty prompt")
    scored = []
    for cand in candidates:
        cand = tuple(int(t) for t in cand)
        seq = list(prompt) + list(cand) + ([vocab.eod_id] if include_eod else [])
        total, per = score(model, seq)
        start = len(prompt) - 1
        scored.append((cand, float(per[start:].sum())))
    scored.sort(key=lambda kv: (-kv[1], kv[0]))
    return scored


def size_hint_decode(model, prompt, size_hint: int, settings: DecodeSettings,
                     vocab: Vocab = DEFAULT_VOCAB) -> list[int]:
    """Implicit length control for a single-mask infill.

    Generates until the sequence holds max_len - size_hint tokens, force
    inserts the tail sentinel <mask:0> exactly there, then decodes the
    infill until end-of-document or max_len. Returns the full sequence.
    Sentinels and the end-of-document token are masked out before the
    forced insertion so the sentinel position is guaranteed.
    """
    prompt = [int(t) for t in prompt]
    if size_hint < 1 or size_hint >= settings.max_len:
        raise DecodeError("size_hint must be in [1, max_len)")
    force_at = settings.max_len - size_hint
    if len(prompt) > force_at:
        raise DecodeError(
            f"prompt length {len(prompt)} exceeds max_len - size_hint {force_at}")
    if vocab.sentinel_id(0) not in prompt:
        raise DecodeError("prompt contains no body <mask:0>")
    seq = list(prompt)
    rng = np.random.default_rng(settings.seed)
    blocked = [vocab.sentinel_id(k) for k in range(16)] + [vocab.eod_id]
    while len(seq) < force_at:
        row = model.logits(seq)[-1].astype(np.float64)
        for t in blocked:
            row[t] = -np.inf
        if settings.greedy:
            token = int(row.argmax())
        else:
            logp = _log_softmax(row / settings.temperature)
            token = int(rng.choice(len(row), p=np.exp(logp)))
        seq.append(token)
    seq.append(vocab.sentinel_id(0))
    assert seq[force_at] == vocab.sentinel_id(0)
    while len(seq) < settings.max_len:
        row = model.logits(seq)[-1].astype(np.float64)
        if settings.greedy:
            token = int(row.argmax())
        else:
            logp = _log_softmax(row / settings.temperature)
            token = int(rng.choice(len(row), p=np.exp(logp)))
        seq.append(token)
        if token == vocab.eod_id:
            break
    return seq
