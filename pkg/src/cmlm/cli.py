"""Command line for the full pipeline.

Subcommands: minify, tokenize-images, transform, split, train, generate,
score, prompt, stats. Every command is seedable (flag or CMLM_SEED) and
produces byte-identical artifacts given identical inputs, flags and seed.
No command touches the network; images resolve against a local directory.
"""
from __future__ import annotations

import argparse
import json
import multiprocessing
import os
import sys
from pathlib import Path
from urllib.parse import urlparse

import numpy as np

from . import corpus, decode, images, masking, minify, prompts, train as train_mod
from .model import PRESETS, TransformerModel, load_checkpoint, save_checkpoint
from .records import Record, load_records, save_records
from .vocab import DEFAULT_VOCAB


def _seed_default() -> int:
    return int(os.environ.get("CMLM_SEED", "0"))


def _fail(module: str, cause: Exception | str) -> int:
    sys.stderr.write(f"cmlm {module}: {cause}\n")
    return 1


def _map_workers(fn, items, workers: int):
    if workers <= 1:
        return [fn(item) for item in items]
    with multiprocessing.Pool(workers) as pool:
        return pool.map(fn, items)


# ---------------------------------------------------------------- minify

def _minify_one(item):
    doc_id, raw, source = item
    minimal, report = minify.minify(raw)
    record = Record.from_document(doc_id=doc_id, source=source,
                                  minimal_html=minimal,
                                  token_ids=DEFAULT_VOCAB.encode(minimal))
    return record, {
        "removed": report.removed,
        "folded_divs": report.folded_divs,
        "stripped_attributes": report.stripped_attributes,
        "elements_in": report.elements_in,
        "elements_out": report.elements_out,
    }


def cmd_minify(args) -> int:
    path = Path(args.input)
    if path.is_dir():
        files = sorted(p for p in path.iterdir() if p.is_file())
    elif path.is_file():
        files = [path]
    else:
        return _fail("minify", f"no such file or directory: {path}")
    items = [(p.stem, p.read_bytes(), args.source) for p in files]
    results = _map_workers(_minify_one, items, args.workers)
    save_records(args.out, (rec for rec, _ in results))
    if args.report:
        total = {"removed": {}, "folded_divs": 0, "stripped_attributes": 0,
                 "elements_in": 0, "elements_out": 0, "documents": len(results)}
        for _, rep in results:
            for reason, count in rep["removed"].items():
                total["removed"][reason] = total["removed"].get(reason, 0) + count
            for k in ("folded_divs", "stripped_attributes",
                      "elements_in", "elements_out"):
                total[k] += rep[k]
        total["removed"] = dict(sorted(total["removed"].items()))
        Path(args.report).write_text(json.dumps(total, indent=2) + "\n",
                                     encoding="utf-8")
    return 0


# ------------------------------------------------------- tokenize-images

def _src_to_path(src: str, image_dir: Path) -> Path:
    name = os.path.basename(urlparse(src).path)
    return image_dir / name


def _tokenize_one(item):
    line, image_dir, mode, seed = item
    record = Record.from_json(line)
    dom = minify.parse_dom(record.minimal_html)
    changed = False
    for node in dom.find_all("img"):
        src = node.attrs.get("src")
        if not src or src.startswith("IMG"):
            continue
        path = _src_to_path(src, Path(image_dir))
        if not path.is_file():
            continue
        rng = masking.doc_rng(seed, f"{record.doc_id}:{src}")
        tokens = images.tokenize_file(path, mode=mode, rng=rng)
        images.embed_in_src(node, tokens)
        changed = True
    if changed:
        record.minimal_html = minify.serialize(dom)
        record.tokens = DEFAULT_VOCAB.render_tokens(
            DEFAULT_VOCAB.encode(record.minimal_html))
    return record


def cmd_tokenize_images(args) -> int:
    with open(args.records, encoding="utf-8") as fp:
        lines = [ln.rstrip("\n") for ln in fp if ln.strip()]
    items = [(ln, args.images, args.mode, args.seed) for ln in lines]
    results = _map_workers(_tokenize_one, items, args.workers)
    save_records(args.out, results)
    return 0


# ------------------------------------------------------------- transform

def _transform_one(item):
    line, seed = item
    record = Record.from_json(line)
    ids = record.token_ids()
    if not ids:
        return None
    t = masking.transform_document(ids, record.doc_id, seed)
    record.plan = t.plan.to_list()
    record.tokens_transformed = DEFAULT_VOCAB.render_tokens(t.tokens)
    record.loss_weights = list(t.loss_weights)
    return record


def cmd_transform(args) -> int:
    with open(args.records, encoding="utf-8") as fp:
        lines = [ln.rstrip("\n") for ln in fp if ln.strip()]
    items = [(ln, args.seed) for ln in lines]
    results = _map_workers(_transform_one, items, args.workers)
    skipped = sum(1 for r in results if r is None)
    save_records(args.out, (r for r in results if r is not None))
    if skipped:
        sys.stderr.write(f"cmlm transform: skipped {skipped} empty documents\n")
    return 0


# ----------------------------------------------------------------- split

def cmd_split(args) -> int:
    records = load_records(args.records)
    train_recs, test_recs = corpus.make_split(records, args.test_size, args.seed)
    base = Path(args.records)
    train_out = args.train_out or str(base.with_suffix(".train.jsonl"))
    test_out = args.test_out or str(base.with_suffix(".test.jsonl"))
    save_records(train_out, train_recs)
    save_records(test_out, test_recs)
    return 0


# ----------------------------------------------------------------- train

def cmd_train(args) -> int:
    records = load_records(args.records)
    docs = []
    for r in records:
        if r.tokens_transformed is None or r.loss_weights is None:
            return _fail("train", f"record {r.doc_id} is not transformed")
        docs.append((DEFAULT_VOCAB.parse_tokens(r.tokens_transformed),
                     list(r.loss_weights)))
    if args.model not in PRESETS:
        return _fail("train", f"unknown model preset {args.model!r}")
    model_cfg = PRESETS[args.model]
    warmup = min(100, args.steps) if args.warmup is None else args.warmup
    train_cfg = train_mod.TrainConfig(
        peak_lr=args.peak_lr, warmup_updates=warmup,
        total_updates=args.steps, batch_size=args.batch_size,
        max_seq_len=args.max_seq_len, seed=args.seed)
    result = train_mod.train(model_cfg, train_cfg, docs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out / "model.ckpt", model_cfg, result.params,
                    extra={"steps": args.steps, "seed": args.seed,
                           "preset": args.model})
    (out / "trace.csv").write_text(result.trace_csv(), encoding="utf-8")
    return 0


# -------------------------------------------------------------- generate

def _load_model(path) -> TransformerModel:
    config, params, vocab = load_checkpoint(path)
    return TransformerModel(config, params, vocab)


def cmd_generate(args) -> int:
    model = _load_model(args.ckpt)
    prompt_bytes = Path(args.prompt_file).read_bytes()
    prompt = model.vocab.encode(prompt_bytes)
    settings = decode.DecodeSettings(
        temperature=args.temp, max_len=args.max_len,
        seed=args.seed, greedy=args.greedy)
    if args.size_hint is not None:
        seq = decode.size_hint_decode(model, prompt, args.size_hint,
                                      settings, model.vocab)
        out = model.vocab.decode(seq)
    else:
        continuation = decode.sample(model, prompt, settings, model.vocab)
        out = model.vocab.decode(continuation)
    if args.out:
        Path(args.out).write_bytes(out)
    else:
        sys.stdout.buffer.write(out)
        sys.stdout.buffer.flush()
    return 0


# ----------------------------------------------------------------- score

def cmd_score(args) -> int:
    model = _load_model(args.ckpt)
    context = model.vocab.encode(Path(args.context).read_bytes())
    if not context:
        return _fail("score", "empty context")
    lines = Path(args.candidates).read_text("utf-8").splitlines()
    candidates = [model.vocab.encode(ln.encode("utf-8")) for ln in lines]
    if not candidates:
        return _fail("score", "no candidates")
    ranked = decode.rank_candidates(model, context,
                                    [tuple(c) for c in candidates], model.vocab)
    by_tokens = {tuple(c): ln for c, ln in zip(candidates, lines)}
    rows = [f"{by_tokens[cand]}\t{logprob:.10g}\t{rank + 1}"
            for rank, (cand, logprob) in enumerate(ranked)]
    text = "\n".join(rows) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------- prompt

def _read_image_tokens(path) -> list[int]:
    entries = Path(path).read_text("utf-8").split()
    tokens = []
    for e in entries:
        tokens.append(int(e[3:]) if e.startswith("IMG") else int(e))
    return tokens


def cmd_prompt(args) -> int:
    holes = {}
    for spec in args.hole:
        if "=" not in spec:
            return _fail("prompt", f"bad --hole {spec!r}, expected name=value")
        name, value = spec.split("=", 1)
        holes[name] = value
    if args.image_file:
        holes["image"] = images.render_src(_read_image_tokens(args.image_file))
    if args.name not in prompts.TEMPLATES:
        known = ", ".join(sorted(prompts.TEMPLATES))
        return _fail("prompt", f"unknown template {args.name!r} (known: {known})")
    rendered = prompts.TEMPLATES[args.name].render(**holes)
    prompts.validate_rendered(rendered)
    if args.out:
        Path(args.out).write_text(rendered, encoding="utf-8")
    else:
        sys.stdout.write(rendered)
    return 0


# ----------------------------------------------------------------- stats

def cmd_stats(args) -> int:
    records = load_records(args.records)
    counts, entropy = corpus.token_histogram(records, args.token_class)
    lines = ["token,count"]
    offset = DEFAULT_VOCAB.image_offset if args.token_class == "image" else 0
    for i, c in enumerate(counts):
        lines.append(f"{DEFAULT_VOCAB.render_token(offset + i)},{int(c)}"
                     if args.token_class == "image" else f"{i},{int(c)}")
    Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    sys.stdout.write(f"normalized_entropy\t{entropy:.6f}\n")
    return 0


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cmlm",
        description="causally-masked language modeling over minimal HTML")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("minify", help="raw HTML to minimal-HTML records")
    p.add_argument("input", help="HTML file or directory of HTML files")
    p.add_argument("--out", required=True)
    p.add_argument("--report", default=None)
    p.add_argument("--source", default="cc_news_like",
                   choices=["cc_news_like", "wiki_like", "synthetic"])
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_minify, module="minify")

    p = sub.add_parser("tokenize-images", help="inline image tokens into src")
    p.add_argument("--records", required=True)
    p.add_argument("--images", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", default="eval", choices=["train", "eval"])
    p.add_argument("--seed", type=int, default=_seed_default())
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_tokenize_images, module="tokenize-images")

    p = sub.add_parser("transform", help="apply the causally-masked transform")
    p.add_argument("--records", required=True)
    p.add_argument("--seed", type=int, default=_seed_default())
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_transform, module="transform")

    p = sub.add_parser("split", help="deduplicated train/test split")
    p.add_argument("--records", required=True)
    p.add_argument("--test-size", type=int, required=True)
    p.add_argument("--seed", type=int, default=_seed_default())
    p.add_argument("--train-out", default=None)
    p.add_argument("--test-out", default=None)
    p.set_defaults(func=cmd_split, module="split")

    p = sub.add_parser("train", help="train a model on transformed records")
    p.add_argument("--records", required=True)
    p.add_argument("--model", default="tiny")
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--seed", type=int, default=_seed_default())
    p.add_argument("--out", required=True)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--max-seq-len", type=int, default=256)
    p.add_argument("--peak-lr", type=float, default=3e-4)
    p.add_argument("--warmup", type=int, default=None,
                   help="warmup updates (default: min(100, steps))")
    p.set_defaults(func=cmd_train, module="train")

    p = sub.add_parser("generate", help="sample a continuation")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--prompt-file", required=True)
    p.add_argument("--temp", type=float, default=0.85)
    p.add_argument("--max-len", type=int, default=256)
    p.add_argument("--seed", type=int, default=_seed_default())
    p.add_argument("--greedy", action="store_true")
    p.add_argument("--size-hint", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_generate, module="generate")

    p = sub.add_parser("score", help="rank candidates by log-probability")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--candidates", required=True)
    p.add_argument("--context", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_score, module="score")

    p = sub.add_parser("prompt", help="render a named prompt template")
    p.add_argument("--name", required=True)
    p.add_argument("--image-file", default=None)
    p.add_argument("--hole", action="append", default=[],
                   metavar="NAME=VALUE")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_prompt, module="prompt")

    p = sub.add_parser("stats", help="token histogram and entropy")
    p.add_argument("--records", required=True)
    p.add_argument("--class", dest="token_class", required=True,
                   choices=["image", "text"])
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_stats, module="stats")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as e:
        return _fail(getattr(args, "module", "cli"), e)


if __name__ == "__main__":
    sys.exit(main())
