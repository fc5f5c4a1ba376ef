"""``pausekit`` command line.

Exit codes: 0 ok, 1 usage, 2 data error, 3 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import torch

from . import annotate as annot
from .corpus import (
    AlignmentError, DatasetFormatError, LabelConsistencyError, compute_stats, label_alignment,
    parse_alignment_file, pause_durations, read_dataset, relabel, write_dataset,
)
from .evalkit import category_confusion, f_beta, position_pr, pr_curve, pr_table, sweep_threshold, write_report
from .models import (
    ConfigMismatchError, ModelConfig, PauseModel, UnknownSpeakerError, decide, load_model, model_vocab_size,
    predict, save_model,
)
from .pausecat import DurationCategorizer, fit_categorizer, load_categorizer, save_categorizer
from .synth import RpRule, SyntheticSpeakerStyle, default_styles, synth_corpus, synth_vocabulary, write_corpus
from .textnorm import Vocabulary
from .trainkit import TrainConfig, compute_class_weights, train, write_log

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3
DEFAULT_BETA = {"rp": 0.5, "pip": 2.0}

# toy-scale defaults for `train` when no --config is given
DEFAULT_MODEL = {"arch": "RPI", "encoder": "transformer", "hidden_dim": 64, "transformer_layers": 2,
                 "transformer_heads": 4, "transformer_ff_dim": 256, "decoder_bilstm_hidden": 64}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(f"{path}: invalid JSON: {exc}") from None


def _categorizer(path) -> DurationCategorizer:
    return load_categorizer(path) if path else DurationCategorizer()


def _alignment_files(inputs) -> list[Path]:
    files = []
    for item in inputs:
        p = Path(item)
        if p.is_dir():
            files += sorted(p.glob("*.align"))
        elif p.exists():
            files.append(p)
        else:
            raise FileNotFoundError(f"no such file or directory: {item}")
    if not files:
        raise DatasetFormatError("no alignment files found")
    return files


# subcommands

def cmd_synth_corpus(args) -> int:
    if args.config:
        cfg = _read_json(args.config)
        styles = [SyntheticSpeakerStyle(s["speaker"], RpRule(**{**s["rp_rule"], "classes": tuple(s["rp_rule"].get("classes", ()))}),
                                        s.get("rp_category", 1), s.get("pip_category", 2),
                                        s.get("pip_drop_rate", args.pip_drop_rate))
                  for s in cfg["styles"]]
    else:
        styles = default_styles(args.pip_drop_rate)[:args.speakers]
    utts = synth_corpus(styles, args.n_sentences, seed=args.seed)
    write_corpus(args.out, utts, synth_vocabulary())
    print(f"wrote {len(utts)} utterances for {len(styles)} speakers to {args.out}")
    return EXIT_OK


def cmd_prepare_corpus(args) -> int:
    vocab = Vocabulary.load(args.vocab)
    categorizer = _categorizer(args.categorizer)
    data = []
    for path in _alignment_files(args.inputs):
        alignment = parse_alignment_file(path.read_bytes(), source=str(path))
        data.append(label_alignment(alignment, vocab, categorizer, path.stem))

    outputs = {args.out: data}
    if args.split:
        fractions = [float(x) for x in args.split.split(",")]
        if len(fractions) != 3 or any(f < 0 for f in fractions) or not np.isclose(sum(fractions), 1.0):
            raise UsageError("--split takes three non-negative fractions summing to 1, e.g. 0.8,0.1,0.1")
        n_train = int(round(fractions[0] * len(data)))
        n_val = int(round(fractions[1] * len(data)))
        stem = Path(args.out)
        outputs = {stem.with_suffix(".train.jsonl"): data[:n_train],
                   stem.with_suffix(".val.jsonl"): data[n_train:n_train + n_val],
                   stem.with_suffix(".test.jsonl"): data[n_train + n_val:]}
    for path, subset in outputs.items():
        write_dataset(path, subset)
        print(f"{path}\t{json.dumps(compute_stats(subset).as_dict())}")
    return EXIT_OK


def cmd_fit_categories(args) -> int:
    data = [s for path in args.datasets for s in read_dataset(path)]
    categorizer, gmm, cutoffs = fit_categorizer(pause_durations(data), K=args.components, seed=args.seed)
    save_categorizer(args.out, categorizer, gmm, cutoffs)
    fallback = [c.value for c in cutoffs if c.is_fallback]
    if fallback:
        print(f"warning: no density crossing between components; midpoint used at {fallback}", file=sys.stderr)
    print("thresholds\t" + "\t".join(str(t) for t in categorizer.thresholds))
    return EXIT_OK


def _train_configs(args, train_set) -> tuple[dict, TrainConfig]:
    cfg = _read_json(args.config) if args.config else {}
    unknown = set(cfg) - {"model", "train"}
    if unknown:
        raise ConfigMismatchError(f"{args.config}: unknown sections {sorted(unknown)}")
    model_d = {**DEFAULT_MODEL, **cfg.get("model", {})}
    train_d = dict(cfg.get("train", {}))
    if args.seed is not None:
        train_d["seed"] = args.seed
    if args.max_iters is not None:
        train_d["max_iters"] = args.max_iters
    model_d.setdefault("speakers", sorted({s.speaker for s in train_set}))
    return model_d, TrainConfig.from_dict(train_d)


def cmd_train(args) -> int:
    vocab = Vocabulary.load(args.vocab)
    train_set, val_set = read_dataset(args.train), read_dataset(args.val)
    categorizer = None
    if args.categorizer:
        categorizer = load_categorizer(args.categorizer)
        train_set = [relabel(s, categorizer) for s in train_set]
        val_set = [relabel(s, categorizer) for s in val_set]
    model_d, tconf = _train_configs(args, train_set)
    model_d["vocab_size"] = model_vocab_size(vocab)
    mconf = ModelConfig.from_dict(model_d)
    torch.manual_seed(tconf.seed)
    model = PauseModel(mconf)
    weights = compute_class_weights(compute_stats(train_set)) if mconf.categorized else None

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = train(model, train_set, val_set, vocab, tconf, weights)
    write_log(out / "train_log.jsonl", result.log)
    best = next(r for r in result.log if r["iteration"] == result.best_iteration)["metrics"]
    thresholds = {"rp": best["rp_threshold"]}
    if "pip_threshold" in best:
        thresholds["pip"] = best["pip_threshold"]
    save_model(out, model, vocab, categorizer.thresholds if categorizer else None,
               extra={"thresholds": thresholds, "best_metric": result.best_metric,
                      "best_iteration": result.best_iteration, "train_config": tconf.__dict__})
    print(f"best metric {result.best_metric:.4f} at iteration {result.best_iteration}; saved to {out}")
    return EXIT_OK


def _load(args):
    model, vocab, sidecar = load_model(args.checkpoint)
    if args.vocab and Vocabulary.load(args.vocab) != vocab:
        raise ConfigMismatchError(f"{args.vocab} differs from the vocabulary stored with the checkpoint")
    return model, vocab, sidecar


def _thresholds(args, sidecar) -> dict:
    stored = sidecar.get("thresholds") or {}
    return {"rp": args.rp_threshold if args.rp_threshold is not None else stored.get("rp", 0.5),
            "pip": args.pip_threshold if args.pip_threshold is not None else stored.get("pip", 0.5)}


def _test_set(path, sidecar, categorizer_path):
    data = read_dataset(path)
    thresholds = sidecar.get("categorizer_thresholds")
    if categorizer_path:
        return [relabel(s, load_categorizer(categorizer_path)) for s in data]
    if thresholds:
        return [relabel(s, DurationCategorizer(tuple(thresholds))) for s in data]
    return data


def cmd_evaluate(args) -> int:
    model, vocab, sidecar = _load(args)
    data = _test_set(args.data, sidecar, args.categorizer)
    preds = predict(model, [s.tokens for s in data], [s.speaker for s in data], vocab)
    tokens = [t for s in data for t in s.tokens]
    thresholds = _thresholds(args, sidecar)
    tasks = ["rp", "pip"] if model.config.categorized else ["rp"]
    decisions = [d for s, p in zip(data, preds) for d in decide(p, s.tokens, thresholds["rp"], thresholds["pip"])]

    report = {"checkpoint": str(args.checkpoint), "data": str(args.data), "sentences": len(data),
              "arch": model.config.arch}
    for task in tasks:
        probs = np.concatenate([getattr(p, f"{task}_prob") for p in preds])
        labels = [y for s in data for y in getattr(s, f"p_{task}")]
        beta = args.beta if args.beta is not None else DEFAULT_BETA[task]
        at = position_pr(probs, labels, tokens, thresholds[task], task)
        sweep = sweep_threshold(probs, labels, tokens, beta, task)
        entry = {"beta": beta, "threshold": thresholds[task], "precision": at.precision, "recall": at.recall,
                 "f": f_beta(at.precision, at.recall, beta), "tp": at.tp, "fp": at.fp, "fn": at.fn,
                 "best": {"threshold": sweep.threshold, "f": sweep.f, "precision": sweep.precision,
                          "recall": sweep.recall},
                 "pr_curve": [[p.threshold, p.precision, p.recall] for p in pr_curve(sweep.points)]}
        if model.config.categorized:
            kind_decisions = [d if d is not None and d.kind == task else None for d in decisions]
            cats = [c for s in data for c in getattr(s, f"c_{task}")]
            matrix = category_confusion(kind_decisions, cats, task)
            entry["confusion"] = matrix.counts
            entry["category_accuracy"] = matrix.accuracy()
        report[task] = entry
    write_report(args.out, report)
    for task in tasks:
        e = report[task]
        print(f"{task}\tthreshold={e['threshold']:.4f}\tP={e['precision']:.4f}\tR={e['recall']:.4f}\t"
              f"F{e['beta']:g}={e['f']:.4f}")
    return EXIT_OK


def cmd_sweep_threshold(args) -> int:
    model, vocab, sidecar = _load(args)
    if args.task == "pip" and not model.config.categorized:
        raise UsageError(f"--task pip needs a CPI checkpoint, got {model.config.arch}")
    data = read_dataset(args.data)
    preds = predict(model, [s.tokens for s in data], [s.speaker for s in data], vocab)
    beta = args.beta if args.beta is not None else DEFAULT_BETA[args.task]
    result = sweep_threshold(np.concatenate([getattr(p, f"{args.task}_prob") for p in preds]),
                             [y for s in data for y in getattr(s, f"p_{args.task}")],
                             [t for s in data for t in s.tokens], beta, args.task)
    if args.out:
        Path(args.out).write_text(pr_table(pr_curve(result.points)), encoding="utf-8")
    print(f"threshold={result.threshold:.6f}\tF{beta:g}={result.f:.4f}\t"
          f"P={result.precision:.4f}\tR={result.recall:.4f}")
    return EXIT_OK


def cmd_annotate(args) -> int:
    model, vocab, sidecar = _load(args)
    thresholds = _thresholds(args, sidecar)
    lines = []
    for item in args.inputs or ["-"]:
        text = sys.stdin.read() if item == "-" else Path(item).read_text(encoding="utf-8")
        lines += [ln for ln in text.splitlines() if ln.strip()]
    results = annot.annotate(lines, args.speaker, model, vocab, thresholds["rp"], thresholds["pip"])
    rendered = "".join(r.render() + "\n" for r in results)
    if args.out:
        Path(args.out).write_text(rendered, encoding="utf-8")
    else:
        sys.stdout.write(rendered)
    if args.records:
        with open(args.records, "w", encoding="utf-8") as fh:
            for i, r in enumerate(results):
                annot.write_records(fh, i, r.annotated)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pausekit", description="Pause position and category prediction toolkit.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth-corpus", help="generate a synthetic multi-speaker alignment corpus")
    p.add_argument("--out", required=True, help="output directory for .align files and vocab.txt")
    p.add_argument("--n-sentences", type=int, default=2800)
    p.add_argument("--speakers", type=int, default=8, help="number of built-in styles to use (1-8)")
    p.add_argument("--pip-drop-rate", type=float, default=0.2)
    p.add_argument("--config", help="JSON file with a 'styles' list replacing the built-in styles")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth_corpus)

    p = sub.add_parser("prepare-corpus", help="alignment files -> labeled dataset")
    p.add_argument("inputs", nargs="+", help=".align files or directories containing them")
    p.add_argument("--vocab", required=True)
    p.add_argument("--categorizer", help="categorizer JSON (default thresholds 300,700 ms)")
    p.add_argument("--out", required=True, help="dataset path (.jsonl)")
    p.add_argument("--split", help="train,val,test fractions; writes OUT.train/.val/.test.jsonl")
    p.set_defaults(func=cmd_prepare_corpus)

    p = sub.add_parser("fit-categories", help="fit duration categories with a 1-D GMM")
    p.add_argument("datasets", nargs="+")
    p.add_argument("--components", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="categorizer JSON")
    p.set_defaults(func=cmd_fit_categories)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--train", required=True)
    p.add_argument("--val", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--config", help='JSON with optional "model" and "train" sections')
    p.add_argument("--categorizer", help="relabel categories with this categorizer before training")
    p.add_argument("--seed", type=int)
    p.add_argument("--max-iters", type=int)
    p.add_argument("--out", required=True, help="checkpoint directory")
    p.set_defaults(func=cmd_train)

    for name, func, helptext in (("evaluate", cmd_evaluate, "write a metrics report for a test set"),
                                 ("sweep-threshold", cmd_sweep_threshold, "find the F-beta optimal threshold")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--checkpoint", required=True, help="checkpoint directory or its model.json")
        p.add_argument("--data", required=True, help="labeled dataset")
        p.add_argument("--vocab", help="check the checkpoint's vocabulary against this file")
        p.add_argument("--beta", type=float)
        p.set_defaults(func=func)
        if name == "evaluate":
            p.add_argument("--categorizer")
            p.add_argument("--rp-threshold", type=float)
            p.add_argument("--pip-threshold", type=float)
            p.add_argument("--out", required=True, help="report JSON")
        else:
            p.add_argument("--task", choices=("rp", "pip"), required=True)
            p.add_argument("--out", help="write the PR curve table here")

    p = sub.add_parser("annotate", help="insert pause marks into text, one sentence per line")
    p.add_argument("inputs", nargs="*", help="text files ('-' or none for stdin)")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--vocab")
    p.add_argument("--speaker")
    p.add_argument("--rp-threshold", type=float)
    p.add_argument("--pip-threshold", type=float)
    p.add_argument("--out", help="annotated text (default stdout)")
    p.add_argument("--records", help="per-token JSONL records")
    p.set_defaults(func=cmd_annotate)
    return parser


DATA_ERRORS = (AlignmentError, DatasetFormatError, LabelConsistencyError, ConfigMismatchError,
               UnknownSpeakerError, OSError, ValueError, KeyError)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    prog = f"pausekit {args.command}"
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"{prog}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DATA_ERRORS as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"{prog}: error: {msg}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        print(f"{prog}: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
