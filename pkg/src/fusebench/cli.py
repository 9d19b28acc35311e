"""Command-line entry points: train, predict, eval, sweep, synth."""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import dataio, fusion, metrics
from .config import ConfigError, parse_config
from .harness import parse_grid, run_experiment, sweep

__all__ = ["main"]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fusebench",
        description="Deterministic multimodal multilabel training engine",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run one training experiment")
    p_train.add_argument("--config", required=True)
    p_train.add_argument("--out", required=True)

    p_pred = sub.add_parser("predict", help="predict label sets with a trained model")
    p_pred.add_argument("--model", required=True)
    p_pred.add_argument("--features-img", required=True)
    p_pred.add_argument("--features-txt", required=True)
    p_pred.add_argument("--out", required=True)
    group = p_pred.add_mutually_exclusive_group()
    group.add_argument("--threshold", type=float, default=None)
    group.add_argument("--thresholds", default=None,
                       help="file with one per-class threshold per line")

    p_eval = sub.add_parser("eval", help="score a prediction CSV against a truth CSV")
    p_eval.add_argument("--pred", required=True)
    p_eval.add_argument("--truth", required=True)
    p_eval.add_argument("--averaging", choices=metrics.AVERAGINGS, default=None,
                        help="print one averaging instead of all three")
    p_eval.add_argument("--classes", type=int, default=None,
                        help="class count (default: 1 + largest index present)")

    p_sweep = sub.add_parser("sweep", help="run a hyperparameter grid")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--grid", required=True)
    p_sweep.add_argument("--out", required=True)
    p_sweep.add_argument("--greedy", action="store_true",
                         help="sweep one axis at a time, fixing the best so far")

    p_synth = sub.add_parser("synth", help="generate a synthetic two-modality dataset")
    p_synth.add_argument("--n", type=int, required=True)
    p_synth.add_argument("--dim", type=int, required=True)
    p_synth.add_argument("--classes", type=int, required=True)
    p_synth.add_argument("--noise", type=float, required=True)
    p_synth.add_argument("--seed", type=int, required=True)
    p_synth.add_argument("--out", required=True)

    return parser


def _read_text(path: str) -> str:
    with open(path, "r", encoding="utf-8") as fh:
        return fh.read()


def _cmd_train(args) -> int:
    cfg = parse_config(_read_text(args.config))
    report = run_experiment(cfg, args.out)
    if report.diverged:
        print(f"run diverged ({report.note}); reported F1 is 0.0")
    print(f"final_val_f1={report.final_val_f1!r} wall_time={report.wall_time:.2f}s "
          f"artifacts in {args.out}")
    return 0


def _cmd_predict(args) -> int:
    model = fusion.load_model(args.model)
    img = dataio.read_features(args.features_img)
    txt = dataio.read_features(args.features_txt)
    if img.n != txt.n or not np.array_equal(img.ids, txt.ids):
        raise dataio.AlignmentError("image and text feature files disagree on sample ids")
    if args.thresholds is not None:
        lines = [ln.strip() for ln in _read_text(args.thresholds).splitlines() if ln.strip()]
        threshold = np.array([float(ln) for ln in lines], dtype=np.float64)
        if len(threshold) != model.plan.num_classes:
            raise ValueError(
                f"threshold file holds {len(threshold)} values, model has "
                f"{model.plan.num_classes} classes"
            )
    else:
        threshold = args.threshold if args.threshold is not None else 0.5
    _, sets = fusion.predict(model, img.features, txt.features, threshold)
    dataio.write_labels(img.ids, sets, args.out)
    print(f"wrote predictions for {img.n} samples to {args.out}")
    return 0


def _label_sets_by_id(path: str):
    table = {}
    text = _read_text(path).splitlines()
    if not text or text[0].strip() != "id,labels":
        raise dataio.FormatError(f"{path}: expected header 'id,labels'")
    for line in text[1:]:
        if not line.strip():
            continue
        head, _, tail = line.partition(",")
        table[int(head)] = set(int(tok) for tok in tail.split())
    return table


def _cmd_eval(args) -> int:
    pred = _label_sets_by_id(args.pred)
    truth = _label_sets_by_id(args.truth)
    if set(pred) != set(truth):
        raise ValueError("prediction and truth files cover different sample ids")
    ids = sorted(pred)
    preds = [pred[i] for i in ids]
    truths = [truth[i] for i in ids]
    modes = [args.averaging] if args.averaging else list(metrics.AVERAGINGS)
    for mode in modes:
        score = metrics.mean_f1(preds, truths, mode, args.classes)
        print(f"{mode} {score!r}")
    return 0


def _cmd_sweep(args) -> int:
    cfg = parse_config(_read_text(args.config))
    grid = parse_grid(_read_text(args.grid))
    rows = sweep(cfg, grid, args.out, greedy=args.greedy)
    scored = [r for r in rows if r["final_val_f1"] == r["final_val_f1"]]
    if scored:
        best = max(scored, key=lambda r: r["final_val_f1"])
        print(f"{len(rows)} runs; best {best['run_id']} "
              f"final_val_f1={best['final_val_f1']!r}")
    else:
        print(f"{len(rows)} runs; none produced a score")
    print(f"summary in {os.path.join(args.out, 'summary.csv')}")
    return 0


def _cmd_synth(args) -> int:
    img, txt, labels = dataio.synth_generate(args.n, args.dim, args.classes,
                                             args.noise, args.seed)
    os.makedirs(args.out, exist_ok=True)
    dataio.write_features(img, os.path.join(args.out, "image.feat"))
    dataio.write_features(txt, os.path.join(args.out, "text.feat"))
    dataio.write_labels(labels.ids, labels.to_sets(), os.path.join(args.out, "labels.csv"))
    print(f"wrote n={args.n} d={args.dim} K={args.classes} dataset to {args.out}")
    return 0


_COMMANDS = {
    "train": _cmd_train,
    "predict": _cmd_predict,
    "eval": _cmd_eval,
    "sweep": _cmd_sweep,
    "synth": _cmd_synth,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, dataio.FormatError, dataio.AlignmentError, FileNotFoundError,
            IndexError, ValueError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
