"""Corpus assembly: deduplicated splits, token statistics, and a synthetic
templated corpus for desk-scale experiments."""
from __future__ import annotations

import hashlib
import re

import numpy as np

from .minify import parse_dom, visible_text
from .records import Record
from .vocab import Vocab, DEFAULT_VOCAB

_WS_RE = re.compile(r"\s+")


class CorpusError(ValueError):
    pass


def content_key(record: Record) -> str:
    """Dedup key: sha256 of the whitespace-normalized visible text."""
    text = visible_text(parse_dom(record.minimal_html))
    normalized = _WS_RE.sub(" ", text).strip()
    return hashlib.sha256(normalized.encode("utf-8")).hexdigest()


def make_split(records, test_size: int, seed: int
               ) -> tuple[list[Record], list[Record]]:
    """Deterministic train/test split with exactly test_size unique documents
    in test.

    Records sharing a content key form one unit and land wholly in one
    split, so no text overlaps the boundary. Unique document counts are
    counts of distinct keys.
    """
    records = list(records)
    keys = [content_key(r) for r in records]
    unique = sorted(set(keys))
    if test_size > len(unique):
        raise CorpusError(
            f"test_size {test_size} exceeds {len(unique)} unique documents")
    rng = np.random.default_rng(seed)
    shuffled = rng.permutation(unique)
    test_keys = set(shuffled[:test_size])
    train = [r for r, k in zip(records, keys) if k not in test_keys]
    test = [r for r, k in zip(records, keys) if k in test_keys]
    return train, test


def token_histogram(records, token_class: str, vocab: Vocab = DEFAULT_VOCAB
                    ) -> tuple[np.ndarray, float]:
    """Per-token counts for one class plus entropy normalized by log2(V).

    token_class is "image" (V = image_vocab_size) or "text" (V = 256).
    """
    if token_class == "image":
        size, offset, member = vocab.image_vocab_size, vocab.image_offset, vocab.is_image
    elif token_class == "text":
        size, offset, member = vocab.text_base_size, 0, vocab.is_text
    else:
        raise CorpusError(f"unknown token class {token_class!r}")
    counts = np.zeros(size, dtype=np.int64)
    for record in records:
        for t in record.token_ids(vocab):
            if member(t):
                counts[t - offset] += 1
    total = counts.sum()
    if total == 0:
        raise CorpusError(f"no {token_class} tokens in the corpus")
    p = counts[counts > 0] / total
    entropy = float(-(p * np.log2(p)).sum())
    return counts, entropy / np.log2(size)


# Words for the synthetic templated corpus. The title word also appears in
# the body so a masked title is recoverable from the surrounding context.
TOPICS = (
    "glaciers", "volcanoes", "meteors", "orchids", "falcons", "dolphins",
    "magnets", "prisms", "canyons", "geysers", "auroras", "comets",
    "ferns", "owls", "tides", "dunes", "fjords", "lichens", "newts",
    "quasars", "reefs", "storms", "turbines", "wetlands",
)
ADJECTIVES = (
    "brief", "careful", "detailed", "early", "field", "full",
    "long", "new", "plain", "short", "technical", "weekly",
)

SYNTH_TEMPLATE = ("<html><head><title>{topic}</title></head>"
                  "<body><p>A {adj} report about {topic}.</p></body></html>")


def synthetic_document(topic: str, adj: str) -> str:
    return SYNTH_TEMPLATE.format(topic=topic, adj=adj)


def synthetic_corpus(n_docs: int, seed: int,
                     vocab: Vocab = DEFAULT_VOCAB) -> list[Record]:
    """n_docs distinct templated documents, sampled without replacement."""
    combos = [(t, a) for t in TOPICS for a in ADJECTIVES]
    if n_docs > len(combos):
        raise CorpusError(
            f"at most {len(combos)} distinct synthetic documents available")
    rng = np.random.default_rng(seed)
    picks = rng.permutation(len(combos))[:n_docs]
    out = []
    for i, pick in enumerate(picks):
        topic, adj = combos[int(pick)]
        html = synthetic_document(topic, adj)
        out.append(Record.from_document(
            doc_id=f"synth-{i:04d}", source="synthetic",
            minimal_html=html, token_ids=vocab.encode(html), vocab=vocab))
    return out


_CONSONANTS = "bcdfghjklmnpqrstvwz"
_VOWELS = "aeiou"

INFILL_TEMPLATE = "<b>{topic}</b><p>{adj}: {topic}.</p>"


def topic_pool(n_topics: int, pool_seed: int = 999) -> list[str]:
    """Fixed pool of pronounceable pseudo-word topics, 6-8 letters each.

    The pool depends only on pool_seed, so experiment seeds that vary the
    train/test split still share one vocabulary of topics.
    """
    rng = np.random.default_rng(pool_seed)
    topics: set[str] = set()
    while len(topics) < n_topics:
        syllables = int(rng.integers(3, 5))
        word = "".join(
            _CONSONANTS[rng.integers(len(_CONSONANTS))]
            + _VOWELS[rng.integers(len(_VOWELS))]
            for _ in range(syllables))
        if 6 <= len(word) <= 8:
            topics.add(word)
    return sorted(topics)


def infill_benchmark(seed: int, n_topics: int = 128, n_train: int = 400,
                     n_test: int = 40, vocab: Vocab = DEFAULT_VOCAB
                     ) -> tuple[list[list[int]], list[tuple[list[int], tuple[int, int]]]]:
    """Templated corpus for measuring exact-match infill accuracy.

    Every document opens with a bold topic heading and restates the topic
    later in the body, so a hidden heading is recoverable from the
    restatement but not from the text to its left.  Returns
    (train_docs, test_cases): train documents as token lists, and test
    cases as (tokens, heading_span) pairs.  Test documents use
    topic/adjective pairings never seen in training, while every test
    topic does appear somewhere in training so recovery is possible.
    """
    topics = topic_pool(n_topics)
    combos = [(t, a) for t in topics for a in ADJECTIVES]
    if n_train >= len(combos):
        raise CorpusError(
            f"n_train must be below {len(combos)}, the number of distinct "
            "topic/adjective pairings")
    order = np.random.default_rng(seed).permutation(len(combos))
    train_combos = [combos[int(i)] for i in order[:n_train]]
    seen = {t for t, _ in train_combos}
    test_combos = []
    for i in order[n_train:]:
        topic, adj = combos[int(i)]
        if topic in seen:
            test_combos.append((topic, adj))
        if len(test_combos) == n_test:
            break
    if len(test_combos) < n_test:
        raise CorpusError("not enough held-out pairings with a seen topic")
    train_docs = [vocab.encode(INFILL_TEMPLATE.format(topic=t, adj=a))
                  for t, a in train_combos]
    lo = len("<b>")
    test_cases = [
        (vocab.encode(INFILL_TEMPLATE.format(topic=t, adj=a)),
         (lo, lo + len(t)))
        for t, a in test_combos]
    return train_docs, test_cases


def title_span(tokens, vocab: Vocab = DEFAULT_VOCAB) -> tuple[int, int]:
    """Half-open token range of the text inside <title>...</title>."""
    raw = vocab.decode(tokens)
    start = raw.find(b"<title>")
    end = raw.find(b"</title>")
    if start < 0 or end < 0 or end <= start:
        raise CorpusError("document has no title element")
    lo = start + len(b"<title>")
    # byte offsets equal token offsets only while every token is one byte
    prefix = vocab.encode(raw[:lo])
    span_tokens = vocab.encode(raw[lo:end])
    return len(prefix), len(prefix) + len(span_tokens)
