"""Record serialization and image-region bookkeeping."""
import json
from dataclasses import replace

import pytest

from cmlm.records import (Document, Record, find_image_regions, load_records,
                          read_records, save_records, write_records)
from cmlm.vocab import DEFAULT_VOCAB

V = DEFAULT_VOCAB


def make_record(doc_id="doc-1", html="<p>hi</p>"):
    ids = V.encode(html)
    return Record.from_document(doc_id=doc_id, source="synthetic",
                                minimal_html=html, token_ids=ids, vocab=V)


def test_json_round_trip_is_byte_identical():
    rec = make_record()
    line = rec.to_json()
    again = Record.from_json(line)
    assert again == rec
    assert again.to_json() == line


def test_json_key_order_is_canonical():
    rec = make_record()
    keys = list(json.loads(rec.to_json()).keys())
    assert keys == ["doc_id", "source", "minimal_html", "tokens"]


def test_json_is_compact_and_non_ascii_preserved():
    rec = make_record(html="<p>café</p>")
    line = rec.to_json()
    assert ": " not in line and ", " not in line
    assert "café" in line


def test_transformed_fields_round_trip():
    rec = make_record()
    rec = replace(rec,
                  plan=[(0, 2)],
                  tokens_transformed=V.render_tokens(
                      [V.sentinel_id(0), ord("a"), V.eod_id]),
                  loss_weights=[0, 1, 1])
    again = Record.from_json(rec.to_json())
    assert again == rec
    assert again.plan == [(0, 2)]
    assert again.loss_weights == [0, 1, 1]


def test_file_round_trip(tmp_path):
    recs = [make_record(f"doc-{i}") for i in range(5)]
    path = tmp_path / "corpus.jsonl"
    with open(path, "w", encoding="utf-8") as fh:
        write_records(recs, fh)
    with open(path, encoding="utf-8") as fh:
        again = list(read_records(fh))
    assert again == recs
    save_records(path, recs)
    assert load_records(path) == recs


def test_find_image_regions_exact_blocks():
    tokens = [1, 2] + [V.image_id(k) for k in range(256)] + [3]
    regions = find_image_regions(tokens, V)
    assert regions == [(2, 258)]


def test_find_image_regions_chunks_long_runs_from_left():
    tokens = [V.image_id(0)] * 600
    regions = find_image_regions(tokens, V)
    assert regions == [(0, 256), (256, 512)]


def test_find_image_regions_ignores_short_runs():
    tokens = [V.image_id(0)] * 255 + [0] + [V.image_id(1)] * 255
    assert find_image_regions(tokens, V) == []


def test_document_validation():
    doc = Document(doc_id="d", tokens=list(range(10)), image_regions=[])
    doc.validate(V)
    assert doc.s == 10
    bad = Document(doc_id="d", tokens=[V.eod_id], image_regions=[])
    with pytest.raises(ValueError):
        bad.validate(V)
