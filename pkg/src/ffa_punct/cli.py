"""Command-line interface.

Exit codes: 0 success, 2 parse/config error, 3 numeric-check failure.
"""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from .checkpoint import load_checkpoint
from .config import ModelConfig
from .data import (
    LABELS,
    REFERENCE_TRAIN_DISTRIBUTION,
    Batch,
    class_distribution,
    insert_punctuation,
    read_corpus,
    strip_punctuation,
    write_synthetic_corpus,
)
from .exceptions import FFAError
from .model import ForwardTrace, forward, init_model, loss, predict_ids
from .tensor import finite_difference_gradient
from .training import evaluate, format_ablation_table, run_ablation, train

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
GRADCHECK_TOL = 1e-4


def _load_config(path) -> ModelConfig:
    return ModelConfig.from_file(path) if path else ModelConfig()


def cmd_train(args) -> int:
    config = _load_config(args.config)
    _, log, ckpt = train(config, args.train, args.valid, args.out, seed=args.seed)
    sys.stdout.write(log.to_text())
    print(f"# checkpoint: {ckpt}")
    return EXIT_OK


def cmd_eval(args) -> int:
    model = load_checkpoint(args.checkpoint)
    report = evaluate(model, read_corpus(args.test), average=args.overall)
    print(report.format_table())
    return EXIT_OK


def cmd_predict(args) -> int:
    model = load_checkpoint(args.checkpoint)
    stream = open(args.input, encoding="utf-8") if args.input else sys.stdin
    with stream:
        lines = [strip_punctuation(line)[0] for line in stream]
    preds = predict_ids(model, lines)
    for tokens, labels in zip(lines, preds):
        print(insert_punctuation(tokens, labels))
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    config = _load_config(args.config)
    config = config.replace(
        dtype="float64",
        dropout=0.0,
        vocab_size=config.vocab_size or 16,
        max_len=max(config.max_len, args.length),
    )
    model = init_model(config)
    rng = np.random.default_rng(config.seed)
    ids = rng.integers(0, config.vocab_size, size=(args.batch, args.length))
    labels = rng.integers(0, len(LABELS), size=(args.batch, args.length))
    batch = Batch(ids, labels, np.zeros(ids.shape, dtype=bool))
    report = finite_difference_gradient(lambda: loss(model, batch, train=False), model.named_parameters(), args.eps)
    print(report.format_table())
    failed = report.failures(GRADCHECK_TOL)
    if failed:
        print(f"# FAIL: {len(failed)} parameter(s) above {GRADCHECK_TOL:g}: {', '.join(failed)}")
        return EXIT_NUMERIC
    print(f"# PASS: max relative error {report.max_relative_error:.3e} <= {GRADCHECK_TOL:g}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    config = _load_config(args.config)
    rows = run_ablation(config, read_corpus(args.train), read_corpus(args.valid), read_corpus(args.test),
                        average=args.overall)
    print(format_ablation_table(rows))
    return EXIT_OK


def cmd_gen_corpus(args) -> int:
    sequences = write_synthetic_corpus(args.out, args.seed, args.sentences)
    dist = class_distribution(sequences)
    print(f"# wrote {len(sequences)} sequences, {sum(map(len, sequences))} tokens to {args.out}")
    print("label\tcorpus\treference")
    for name in LABELS:
        print(f"{name}\t{100 * dist[name]:.2f}\t{100 * REFERENCE_TRAIN_DISTRIBUTION[name]:.2f}")
    return EXIT_OK


def cmd_inspect(args) -> int:
    model = load_checkpoint(args.checkpoint)
    tokens = args.text.split()
    ids = model.vocab.encode(tokens)[: model.config.max_len]
    trace = ForwardTrace()
    forward(model, ids, trace=trace)
    np.set_printoptions(precision=3, suppress=True, linewidth=120)
    for stream, layers in (("isa", trace.isa), ("msa", trace.msa)):
        for i, layer in enumerate(layers):
            for h, probs in enumerate(layer.probs[0]):
                print(f"# {stream}.{i} head {h} attention")
                print(probs)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ffa-punct", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model and keep the best checkpoint")
    p.add_argument("--config")
    p.add_argument("--train", required=True)
    p.add_argument("--valid", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on a labeled corpus")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--overall", choices=("micro", "macro"), default="micro")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="punctuate raw text, one utterance per line")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("gradcheck", help="finite-difference check of every parameter gradient")
    p.add_argument("--config")
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--length", type=int, default=5)
    p.add_argument("--batch", type=int, default=2)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("ablate", help="train and score the ablation variants")
    p.add_argument("--config")
    p.add_argument("--train", required=True)
    p.add_argument("--valid", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--overall", choices=("micro", "macro"), default="micro")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("gen-corpus", help="write a seeded synthetic corpus")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sentences", type=int, default=200)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_corpus)

    p = sub.add_parser("inspect", help="print attention weights for one utterance")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--text", required=True)
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (FFAError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
