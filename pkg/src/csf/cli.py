"""Command line entry point for the full pipeline.

Subcommands: gen-data, train-tokenizer, train, eval, infer, bench, package.
Defaults reproduce the reference configuration (batch 64, lr 2e-4, epochs 15,
warmup 10%, vocab 8000, max-len 64, 100 benchmark runs), so a flagless run of
each stage matches the published setup. The resolved configuration is printed
to stderr; results go to stdout. Exit codes: 0 success, 1 runtime/IO error,
2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from . import corpus as corpus_mod
from .corpus import expand, read_dataset, write_dataset
from .evaluator import (
    benchmark,
    confusion_pairs,
    evaluate,
    format_bench_text,
    format_eval_text,
)
from .gloss import render_gloss
from .model import ModelConfig, predict
from .schema import SLOT_NAMES
from .store import build_package, load_checkpoint, load_package
from .templates import TemplateBank
from .tokenizer import BpeTokenizer
from .trainer import TrainConfig, train


def _print_config(name: str, options: dict) -> None:
    resolved = " ".join(f"{k}={v}" for k, v in options.items())
    print(f"[csf {name}] {resolved}", file=sys.stderr)


def _load_bank(path: str | None) -> TemplateBank:
    return TemplateBank.load(path) if path else TemplateBank.default()


def _read_texts(data_dir: str, include_val: bool = True) -> list[str]:
    split = read_dataset(data_dir)
    texts = [s.text for s in split.train]
    if include_val:
        texts += [s.text for s in split.val]
    return texts


def cmd_gen_data(args) -> int:
    _print_config("gen-data", vars(args))
    bank = _load_bank(args.bank)
    split = expand(
        bank,
        target_train=args.train,
        target_val=args.val,
        none_fraction=args.none_fraction,
        seed=args.seed,
    )
    write_dataset(split, args.out)
    print(f"wrote {len(split.train)} train / {len(split.val)} val records to {args.out}")
    return 0


def cmd_train_tokenizer(args) -> int:
    _print_config("train-tokenizer", vars(args))
    texts = _read_texts(args.data)
    tokenizer = BpeTokenizer(vocab_size=args.vocab_size, max_len=args.max_len).fit(texts)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    tokenizer.save(out)
    size = out.stat().st_size
    print(
        f"vocabulary {tokenizer.achieved_vocab_size_} ({tokenizer.n_merges_} merges), "
        f"{size / 1024:.1f} KB -> {out}"
    )
    return 0


def cmd_train(args) -> int:
    _print_config("train", vars(args))
    dataset = read_dataset(args.data)
    tokenizer = BpeTokenizer.load(args.tokenizer)
    model_cfg = ModelConfig(
        hidden=args.hidden,
        heads=args.heads,
        layers=args.layers,
        ffn=args.ffn,
        vocab=tokenizer.achieved_vocab_size_,
        max_len=args.max_len,
        dropout=args.dropout,
    )
    train_cfg = TrainConfig(
        batch=args.batch,
        max_lr=args.lr,
        epochs=args.epochs,
        weight_decay=args.weight_decay,
        warmup_fraction=args.warmup,
        clip_norm=args.clip,
        seed=args.seed,
    )
    total = train_cfg.total_steps(len(dataset.train))
    print(f"training: {len(dataset.train)} samples, {total} optimizer steps", file=sys.stderr)

    def report(record) -> None:
        print(
            f"epoch {record.epoch:>3}  loss {record.loss:.4f}  lr {record.lr:.2e}  "
            f"val avg {record.average * 100:.2f}%",
            file=sys.stderr,
        )

    result = train(model_cfg, train_cfg, dataset, tokenizer, on_epoch=report)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    from .store import save_checkpoint

    save_checkpoint(result.params, model_cfg, out / "best.ckpt")
    save_checkpoint(result.final_params, model_cfg, out / "final.ckpt")
    result.history.write_jsonl(out / "history.jsonl")
    best = result.history.best_average()
    print(f"{result.steps} steps; best average accuracy {best * 100:.2f}%; artifacts in {out}")
    return 0


def _load_model(args):
    if args.package:
        return load_package(args.package)
    if not (args.checkpoint and args.tokenizer):
        raise SystemExit2("need --package, or --checkpoint with --tokenizer")
    params, config = load_checkpoint(args.checkpoint)
    return params, config, BpeTokenizer.load(args.tokenizer)


class SystemExit2(Exception):
    pass


def cmd_eval(args) -> int:
    _print_config("eval", vars(args))
    params, config, tokenizer = _load_model(args)
    dataset = read_dataset(args.data)
    report = evaluate(params, config, tokenizer, dataset.val)
    if args.format == "records":
        record = {f"acc_{slot}": report.accuracy[slot] for slot in SLOT_NAMES}
        record["average"] = report.average
        record["n_samples"] = report.n_samples
        print(json.dumps(record))
    else:
        print(format_eval_text(report))
        if args.confusion_top > 0:
            for slot in SLOT_NAMES:
                pairs = confusion_pairs(report, slot, args.confusion_top)
                if pairs:
                    rendered = ", ".join(f"{g}->{p} x{c}" for g, p, c in pairs)
                    print(f"confused {slot}: {rendered}")
    return 0


def cmd_infer(args) -> int:
    _print_config("infer", vars(args))
    params, config, tokenizer = _load_model(args)
    text = args.text if args.text is not None else sys.stdin.readline().strip()
    if not text:
        print("no input text", file=sys.stderr)
        return 1
    t0 = time.perf_counter()
    frame = predict(params, config, tokenizer, text)
    latency_ms = (time.perf_counter() - t0) * 1000.0
    gloss = render_gloss(frame)
    if args.format == "records":
        record = {"text": text, "frame": frame.to_dict(), "gloss": gloss, "latency_ms": latency_ms}
        print(json.dumps(record, ensure_ascii=False))
    else:
        for slot in SLOT_NAMES:
            print(f"{slot:>10}: {getattr(frame, slot)}")
        print(f"gloss: {gloss}")
    return 0


def cmd_bench(args) -> int:
    _print_config("bench", vars(args))
    params, config, tokenizer = _load_model(args)
    report = benchmark(
        params,
        config,
        tokenizer,
        args.text,
        runs=args.runs,
        warmup=args.warmup,
        forward_only=args.forward_only,
    )
    if args.format == "records":
        print(
            json.dumps(
                {
                    "runs": report.runs,
                    "mean_ms": report.mean_ms,
                    "p50_ms": report.p50_ms,
                    "p95_ms": report.p95_ms,
                    "std_ms": report.std_ms,
                    "throughput": report.throughput,
                    "forward_only": report.forward_only,
                }
            )
        )
    else:
        print(format_bench_text(report))
    return 0


def cmd_package(args) -> int:
    _print_config("package", vars(args))
    params, config = load_checkpoint(args.checkpoint)
    tokenizer = BpeTokenizer.load(args.tokenizer)
    dtype = "f16" if args.fp16 else "f32"
    manifest = build_package(params, config, tokenizer, args.out, dtype=dtype)
    print(f"package at {args.out}: {manifest['total_bytes'] / (1024 * 1024):.2f} MB")
    if args.fp16:
        print("16-bit payload: weights were rounded; re-run eval to measure the accuracy impact.")
        if args.data:
            dataset = read_dataset(args.data)
            params16, config16, tok16 = load_package(args.out)
            before = evaluate(params, config, tokenizer, dataset.val)
            after = evaluate(params16, config16, tok16, dataset.val)
            print(
                f"average accuracy f32 {before.average * 100:.2f}% -> "
                f"f16 {after.average * 100:.2f}% (delta {(after.average - before.average) * 100:+.3f} points)"
            )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="csf",
        description="Semantic slot extraction to sign-language gloss: data, training, inference.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text, formatter_class=argparse.ArgumentDefaultsHelpFormatter)
        p.set_defaults(func=func)
        return p

    p = add("gen-data", cmd_gen_data, "generate the multilingual template dataset")
    p.add_argument("--bank", default=None, help="template bank YAML (default: built-in bank)")
    p.add_argument("--train", type=int, default=corpus_mod.DEFAULT_TRAIN_SIZE, help="train split size")
    p.add_argument("--val", type=int, default=corpus_mod.DEFAULT_VAL_SIZE, help="val split size")
    p.add_argument("--none-fraction", type=float, default=corpus_mod.DEFAULT_NONE_FRACTION,
                   help="fraction of unconditional (NONE) samples")
    p.add_argument("--seed", type=int, default=42, help="PRNG seed")
    p.add_argument("--out", required=True, help="output dataset directory")

    p = add("train-tokenizer", cmd_train_tokenizer, "train the byte-level BPE tokenizer")
    p.add_argument("--data", required=True, help="dataset directory (train+val text is used)")
    p.add_argument("--vocab-size", type=int, default=8000, help="total vocabulary size")
    p.add_argument("--max-len", type=int, default=64, help="encoded sequence length")
    p.add_argument("--out", required=True, help="output tokenizer.json path")

    p = add("train", cmd_train, "train the slot extractor from scratch")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--tokenizer", required=True, help="tokenizer.json path")
    p.add_argument("--out", required=True, help="output directory for checkpoints and history")
    p.add_argument("--hidden", type=int, default=256, help="hidden dimension")
    p.add_argument("--heads", type=int, default=4, help="attention heads")
    p.add_argument("--layers", type=int, default=4, help="transformer layers")
    p.add_argument("--ffn", type=int, default=1024, help="FFN intermediate size")
    p.add_argument("--max-len", type=int, default=64, help="max sequence length")
    p.add_argument("--dropout", type=float, default=0.1, help="dropout rate (training only)")
    p.add_argument("--batch", type=int, default=64, help="batch size")
    p.add_argument("--lr", type=float, default=2e-4, help="peak learning rate")
    p.add_argument("--epochs", type=int, default=15, help="training epochs")
    p.add_argument("--weight-decay", type=float, default=0.01, help="AdamW weight decay")
    p.add_argument("--warmup", type=float, default=0.10, help="warmup fraction of steps")
    p.add_argument("--clip", type=float, default=1.0, help="gradient clipping norm")
    p.add_argument("--seed", type=int, default=42, help="PRNG seed")

    def add_model_source(p):
        p.add_argument("--package", default=None, help="model package directory")
        p.add_argument("--checkpoint", default=None, help="checkpoint path (with --tokenizer)")
        p.add_argument("--tokenizer", default=None, help="tokenizer.json path (with --checkpoint)")

    p = add("eval", cmd_eval, "evaluate per-slot accuracy on the val split")
    add_model_source(p)
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--format", choices=("text", "records"), default="text", help="output format")
    p.add_argument("--confusion-top", type=int, default=3, help="top confused pairs per slot (text mode)")

    p = add("infer", cmd_infer, "extract a frame + gloss from one utterance")
    add_model_source(p)
    p.add_argument("--text", default=None, help="input text (default: read one line from stdin)")
    p.add_argument("--format", choices=("text", "records"), default="text", help="output format")

    p = add("bench", cmd_bench, "measure single-thread inference latency")
    add_model_source(p)
    p.add_argument("--text", default="I go to school tomorrow.", help="benchmark input text")
    p.add_argument("--runs", type=int, default=100, help="timed runs")
    p.add_argument("--warmup", type=int, default=10, help="untimed warmup runs")
    p.add_argument("--threads", type=int, default=1, help="BLAS threads (benchmark pins to 1)")
    p.add_argument("--forward-only", action="store_true", help="time the model forward pass only")
    p.add_argument("--format", choices=("text", "records"), default="text", help="output format")

    p = add("package", cmd_package, "bundle checkpoint + tokenizer + labels into a package")
    p.add_argument("--checkpoint", required=True, help="checkpoint path")
    p.add_argument("--tokenizer", required=True, help="tokenizer.json path")
    p.add_argument("--out", required=True, help="output package directory")
    p.add_argument("--fp16", action="store_true", help="store a 16-bit weight payload")
    p.add_argument("--data", default=None, help="dataset dir for the fp16 accuracy delta report")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SystemExit2 as e:
        parser.exit(2, f"csf: {e}\n")
    except (OSError, ValueError, RuntimeError) as e:
        print(f"csf: error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
