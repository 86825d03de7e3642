"""Canonical on-disk record format and in-memory document type.

Records are line-delimited JSON with a fixed key order and no insignificant
whitespace, so deserializing then serializing is byte-identical.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Iterator, TextIO

from .vocab import Vocab, DEFAULT_VOCAB

SOURCES = ("cc_news_like", "wiki_like", "synthetic")

# Region length is pinned by the image tokenizer's 16x16 grid.
IMAGE_REGION_LEN = 256


class RecordError(ValueError):
    pass


@dataclass
class Document:
    """A tokenized document before transformation."""

    doc_id: str
    tokens: list[int]
    image_regions: list[tuple[int, int]] = field(default_factory=list)

    @property
    def s(self) -> int:
        return len(self.tokens)

    def validate(self, vocab: Vocab = DEFAULT_VOCAB) -> "Document":
        for i, t in enumerate(self.tokens):
            if vocab.is_special(t):
                raise RecordError(
                    f"{self.doc_id}: special token {vocab.render_token(t)!r} "
                    f"at position {i} in untransformed document")
            if not (vocab.is_text(t) or vocab.is_image(t)):
                raise RecordError(f"{self.doc_id}: unknown token id {t} at position {i}")
        for start, end in self.image_regions:
            if not (0 <= start < end <= self.s):
                raise RecordError(f"{self.doc_id}: image region ({start}, {end}) out of bounds")
            if end - start != IMAGE_REGION_LEN:
                raise RecordError(
                    f"{self.doc_id}: image region ({start}, {end}) has length "
                    f"{end - start}, expected {IMAGE_REGION_LEN}")
            for i in range(start, end):
                if not vocab.is_image(self.tokens[i]):
                    raise RecordError(
                        f"{self.doc_id}: non-image token at position {i} "
                        f"inside image region ({start}, {end})")
        return self


def find_image_regions(tokens: list[int], vocab: Vocab = DEFAULT_VOCAB) -> list[tuple[int, int]]:
    """Locate aligned 256-token image runs.

    Maximal runs of consecutive image tokens are chunked into 256-token
    regions from the left; a trailing partial chunk is not a region.
    """
    regions = []
    i = 0
    n = len(tokens)
    while i < n:
        if vocab.is_image(tokens[i]):
            j = i
            while j < n and vocab.is_image(tokens[j]):
                j += 1
            while j - i >= IMAGE_REGION_LEN:
                regions.append((i, i + IMAGE_REGION_LEN))
                i += IMAGE_REGION_LEN
            i = j
        else:
            i += 1
    return regions


@dataclass
class Record:
    """One corpus entry as stored on disk."""

    doc_id: str
    source: str
    minimal_html: str
    tokens: list[str]
    plan: list[tuple[int, int]] | None = None
    tokens_transformed: list[str] | None = None
    loss_weights: list[int] | None = None

    def __post_init__(self):
        if self.source not in SOURCES:
            raise RecordError(f"unknown source {self.source!r}")

    def to_json(self) -> str:
        """Canonical single-line JSON (fixed key order, compact separators)."""
        obj = {
            "doc_id": self.doc_id,
            "source": self.source,
            "minimal_html": self.minimal_html,
            "tokens": self.tokens,
        }
        if self.plan is not None:
            obj["plan"] = [list(span) for span in self.plan]
        if self.tokens_transformed is not None:
            obj["tokens_transformed"] = self.tokens_transformed
        if self.loss_weights is not None:
            obj["loss_weights"] = self.loss_weights
        return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> "Record":
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise RecordError(f"invalid record JSON: {e}") from e
        if not isinstance(obj, dict):
            raise RecordError("record line is not a JSON object")
        missing = {"doc_id", "source", "minimal_html", "tokens"} - set(obj)
        if missing:
            raise RecordError(f"record missing fields: {sorted(missing)}")
        return cls(
            doc_id=obj["doc_id"],
            source=obj["source"],
            minimal_html=obj["minimal_html"],
            tokens=list(obj["tokens"]),
            plan=[tuple(span) for span in obj["plan"]] if "plan" in obj else None,
            tokens_transformed=list(obj["tokens_transformed"])
            if "tokens_transformed" in obj else None,
            loss_weights=list(obj["loss_weights"]) if "loss_weights" in obj else None,
        )

    def token_ids(self, vocab: Vocab = DEFAULT_VOCAB) -> list[int]:
        return vocab.parse_tokens(self.tokens)

    def to_document(self, vocab: Vocab = DEFAULT_VOCAB) -> Document:
        ids = self.token_ids(vocab)
        return Document(
            doc_id=self.doc_id,
            tokens=ids,
            image_regions=find_image_regions(ids, vocab),
        ).validate(vocab)

    @classmethod
    def from_document(cls, doc_id: str, source: str, minimal_html: str,
                      token_ids: list[int], vocab: Vocab = DEFAULT_VOCAB) -> "Record":
        return cls(doc_id=doc_id, source=source, minimal_html=minimal_html,
                   tokens=vocab.render_tokens(token_ids))


def write_records(records: Iterable[Record], fp: TextIO) -> int:
    n = 0
    for record in records:
        fp.write(record.to_json())
        fp.write("\n")
        n += 1
    return n


def read_records(fp: TextIO) -> Iterator[Record]:
    for lineno, line in enumerate(fp, start=1):
        line = line.rstrip("\n")
        if not line:
            continue
        try:
            yield Record.from_json(line)
        except RecordError as e:
            raise RecordError(f"line {lineno}: {e}") from e


def load_records(path) -> list[Record]:
    with open(path, encoding="utf-8") as fp:
        return list(read_records(fp))


def save_records(path, records: Iterable[Record]) -> int:
    with open(path, "w", encoding="utf-8") as fp:
        return write_records(records, fp)
