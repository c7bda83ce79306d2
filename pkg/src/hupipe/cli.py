"""Command-line driver: train, evaluate, annotate, benchmark, inspect-trees.

The model directory defaults to ``$HUPIPE_MODEL`` when ``--model`` is omitted.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

MODEL_ENV = "HUPIPE_MODEL"


def _model_arg(p: argparse.ArgumentParser, required: bool = True) -> None:
    default = os.environ.get(MODEL_ENV)
    p.add_argument("--model", default=default, required=required and default is None,
                   help=f"model directory (default: ${MODEL_ENV})")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hupipe", description="Hungarian NLP pipeline")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model from a plan file")
    p.add_argument("--plan", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--scale", choices=["md", "lg"])
    p.add_argument("--epochs", type=int)

    p = sub.add_parser("evaluate", help="score predictions against a gold corpus")
    _model_arg(p, required=False)
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", help="predicted corpus; annotate --gold with --model when omitted")
    p.add_argument("--json", action="store_true")
    p.add_argument("--threads", type=int, default=1)

    p = sub.add_parser("annotate", help="annotate raw text or CoNLL-U")
    _model_arg(p)
    p.add_argument("--input", help="input file (default: stdin)")
    p.add_argument("--format", choices=["conllu", "iob2"], default="conllu")
    p.add_argument("--threads", type=int, default=1)

    p = sub.add_parser("benchmark", help="measure throughput and peak memory")
    _model_arg(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--reps", type=int, default=3)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("inspect-trees", help="show edit trees")
    _model_arg(p, required=False)
    p.add_argument("--form")
    p.add_argument("--lemma")
    return parser


def _require(path: Optional[str], what: str) -> Path:
    if not path:
        raise FileNotFoundError(f"no {what} given")
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"{what} not found: {p}")
    return p


def _train(args) -> int:
    from .train import TrainPlan, train_multitask

    plan = TrainPlan.from_file(_require(args.plan, "plan file"))
    config = plan.config(seed=args.seed, scale=args.scale, epochs=args.epochs)
    _, history = train_multitask(plan, config, args.out)
    for record in history:
        if "score" in record:
            logging.getLogger("hupipe").info("%s epoch %d dev %.4f", record["stage"],
                                             record["epoch"], record["score"])
    print(f"saved model to {args.out}")
    return 0


def _evaluate(args) -> int:
    from .corpus import read_corpus
    from .doc import merge_docs
    from .eval import compute_metrics
    from .pipeline import Pipeline
    from .train import evaluate, group_docs

    gold = read_corpus(_require(args.gold, "gold corpus"))
    if args.pred:
        pred = read_corpus(_require(args.pred, "predicted corpus"))
        # one stream each, so differing sentence splits still align by token
        report = compute_metrics([merge_docs(gold)] if gold else [],
                                 [merge_docs(pred)] if pred else [])
    else:
        nlp = Pipeline.from_disk(_require(args.model, "model directory"))
        report = evaluate(nlp, group_docs(gold, nlp.config.sents_per_doc), args.threads)
    print(report.to_json() if args.json else report.table())
    return 0


def _annotate(args) -> int:
    from .annotate import annotate

    model = _require(args.model, "model directory")
    if args.input:
        text = _require(args.input, "input file").read_text(encoding="utf-8")
    else:
        text = sys.stdin.read()
    sys.stdout.write(annotate(model, text, args.format, args.threads))
    return 0


def _benchmark(args) -> int:
    from .bench import benchmark_throughput

    report = benchmark_throughput(_require(args.model, "model directory"),
                                  _require(args.corpus, "corpus"), args.reps, args.threads)
    print(report.to_json() if args.json else report.table())
    return 0


def _inspect(args) -> int:
    from .edit_tree import TreeTable, apply_edit_tree, build_edit_tree

    if (args.form is None) != (args.lemma is None):
        raise ValueError("--form and --lemma must be given together")
    if args.form is not None:
        tree = build_edit_tree(args.form, args.lemma)
        print(tree)
        if args.model:
            table = TreeTable.from_bytes((_require(args.model, "model directory")
                                          / "trees.bin").read_bytes())
            label = table.get(tree)
            print(f"label {label}" if label is not None else "label none (not in inventory)")
        return 0 if apply_edit_tree(tree, args.form) == args.lemma else 1
    trees = _require(args.model, "model directory") / "trees.bin"
    if not trees.exists():
        raise FileNotFoundError(f"{args.model} has no lemmatizer trees")
    table = TreeTable.from_bytes(trees.read_bytes())
    for label in range(len(table)):
        print(f"{label}\t{table.tree(label)}")
    return 0


COMMANDS = {"train": _train, "evaluate": _evaluate, "annotate": _annotate,
            "benchmark": _benchmark, "inspect-trees": _inspect}


def run_cli(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        stream=sys.stderr, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (OSError, ValueError, KeyError) as exc:
        print(f"hupipe {args.command}: error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
