"""Single-run and sweep orchestration: files in, artifacts out.

A run consumes two FEAT feature files plus a label CSV, splits, trains
per its config, and leaves four artifacts in its output directory:

    metrics.csv      epoch,train_loss,val_loss,val_f1 (one row per epoch
                     per training stage)
    model.mmcm       serialized model
    predictions.csv  label-CSV-schema predictions for the validation
                     split (for the train split when validation is empty)
    report.txt       final val F1, wall time, diverged flag

Divergence is an outcome, not an error: the run exits cleanly with the
flag set and a reported F1 of 0.0.
"""

from __future__ import annotations

import itertools
import os
import time
from dataclasses import dataclass

from .config import SCHEMA, Config, ConfigError, serialize_config
from .dataio import SplitSpec, read_features, read_labels, split, write_labels
from .fusion import EpochLog, TrainConfig, make_plan, predict, save_model, train
from .losses import LossSpec

__all__ = ["ExitReport", "SweepGrid", "run_experiment", "parse_grid", "sweep"]


@dataclass
class ExitReport:
    final_val_f1: float
    diverged: bool
    wall_time: float
    out_dir: str
    note: str | None = None


def _fmt_float(x: float) -> str:
    return repr(float(x))


def _write_metrics(log: EpochLog, path: str) -> None:
    lines = ["epoch,train_loss,val_loss,val_f1"]
    for rec in log.records:
        lines.append(
            f"{rec.epoch},{_fmt_float(rec.train_loss)},"
            f"{_fmt_float(rec.val_loss)},{_fmt_float(rec.val_f1)}"
        )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _require(cfg: Config, key: str) -> str:
    value = cfg.get(key)
    if value is None:
        raise ConfigError(f"config key {key} must be set for this command")
    return value


def run_experiment(cfg: Config, out_dir: str, on_stage_end=None) -> ExitReport:
    """Split, train, evaluate, and write the four run artifacts."""
    img_path = _require(cfg, "data.features_img")
    txt_path = _require(cfg, "data.features_txt")
    labels_path = _require(cfg, "data.labels")
    for path in (img_path, txt_path, labels_path):
        if not os.path.isfile(path):
            raise FileNotFoundError(f"data file not found: {path}")

    img = read_features(img_path)
    txt = read_features(txt_path)
    num_classes = cfg["data.num_classes"]
    labels = read_labels(labels_path, num_classes)

    layers = cfg["head.layers"]
    if layers[-1] != num_classes:
        raise ConfigError(
            f"head.layers ends in {layers[-1]} but data.num_classes is {num_classes}"
        )
    # Branch input widths always come from the data; head.layers contributes
    # the hidden profile and the (validated) output width.
    hidden = layers[1:-1]

    train_bundle, val_bundle = split(
        (img, txt), labels, SplitSpec(cfg["data.n_train"], cfg["train.seed"])
    )
    plan = make_plan(
        cfg["fusion.strategy"],
        img.dim,
        txt.dim,
        num_classes,
        hidden,
        kind=cfg["head.kind"],
        activation=cfg["head.activation"],
        dropout=cfg["head.dropout"],
    )
    train_cfg = TrainConfig(
        epochs=cfg["train.epochs"],
        batch_size=cfg["train.batch_size"],
        lr=cfg["optim.lr"],
        loss=cfg.loss_spec(),
        seed=cfg["train.seed"],
        eval_threshold=cfg["eval.threshold"],
        ema_enabled=cfg["optim.ema.enabled"],
        ema_alpha=cfg["optim.ema.alpha"],
    )

    start = time.perf_counter()
    model, log = train(plan, train_bundle, val_bundle, train_cfg, on_stage_end=on_stage_end)
    wall = time.perf_counter() - start

    target = val_bundle if val_bundle.n > 0 else train_bundle
    _, pred_sets = predict(
        model, target.features[0].features, target.features[1].features,
        cfg["eval.threshold"],
    )

    os.makedirs(out_dir, exist_ok=True)
    _write_metrics(log, os.path.join(out_dir, "metrics.csv"))
    save_model(model, os.path.join(out_dir, "model.mmcm"))
    write_labels(target.labels.ids, pred_sets, os.path.join(out_dir, "predictions.csv"))

    final_f1 = log.final_val_f1
    with open(os.path.join(out_dir, "report.txt"), "w", encoding="utf-8") as fh:
        fh.write(f"final_val_f1: {_fmt_float(final_f1)}\n")
        fh.write(f"diverged: {'true' if log.diverged else 'false'}\n")
        fh.write(f"wall_time_seconds: {wall:.3f}\n")
        if log.note:
            fh.write(f"note: {log.note}\n")

    return ExitReport(final_f1, log.diverged, wall, out_dir, log.note)


@dataclass
class SweepGrid:
    """Ordered (key, candidate values) axes parsed from a grid file."""

    axes: list[tuple[str, list]]


def parse_grid(text: str) -> SweepGrid:
    """Grid file: one `key = v1 | v2 | ...` line per axis."""
    axes: list[tuple[str, list]] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        key, sep, values = (part.strip() for part in stripped.partition("="))
        if not sep or not key:
            raise ConfigError(f"line {lineno}: expected 'key = v1 | v2', got {line!r}")
        if key not in SCHEMA:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        if any(key == seen for seen, _ in axes):
            raise ConfigError(f"line {lineno}: duplicate axis {key!r}")
        parser = SCHEMA[key][0]
        candidates = []
        for token in values.split("|"):
            token = token.strip()
            if not token:
                raise ConfigError(f"line {lineno}: empty candidate value")
            try:
                candidates.append(parser(token))
            except ValueError as exc:
                raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from None
        if not candidates:
            raise ConfigError(f"line {lineno}: axis {key!r} has no candidate values")
        axes.append((key, candidates))
    if not axes:
        raise ConfigError("grid file defines no axes")
    return SweepGrid(axes)


def _fmt_cell(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return " ".join(str(v) for v in value)
    return str(value)


def _run_point(base: Config, assignment: dict, run_dir: str):
    try:
        report = run_experiment(base.with_overrides(assignment), run_dir)
        return report.final_val_f1, ("true" if report.diverged else "false")
    except Exception as exc:  # recorded, sweep continues
        os.makedirs(run_dir, exist_ok=True)
        with open(os.path.join(run_dir, "error.txt"), "w", encoding="utf-8") as fh:
            fh.write(f"{type(exc).__name__}: {exc}\n")
        return float("nan"), "error"


def sweep(base: Config, grid: SweepGrid, out_dir: str, greedy: bool = False) -> list[dict]:
    """Run the grid (cross product, or one axis at a time when greedy).

    Greedy mode sweeps axes in file order, fixing each axis at its
    best-scoring candidate before moving on.  Every run gets its own
    subdirectory; a summary.csv row records the axis values, final val
    F1, and the diverged flag of every run.
    """
    os.makedirs(out_dir, exist_ok=True)
    keys = [key for key, _ in grid.axes]
    rows: list[dict] = []

    def execute(assignment: dict) -> dict:
        run_id = f"run_{len(rows):03d}"
        f1, flag = _run_point(base, assignment, os.path.join(out_dir, run_id))
        row = {"run_id": run_id, "final_val_f1": f1, "diverged": flag}
        row.update(assignment)
        rows.append(row)
        return row

    if greedy:
        fixed: dict = {}
        for key, candidates in grid.axes:
            best_value, best_f1 = None, float("-inf")
            for value in candidates:
                # Unswept axes keep the base config's value in the record.
                assignment = {k: base[k] for k in keys}
                assignment.update(fixed)
                assignment[key] = value
                row = execute(assignment)
                score = row["final_val_f1"]
                if score == score and score > best_f1:  # NaN-safe comparison
                    best_value, best_f1 = value, score
            fixed[key] = best_value if best_value is not None else candidates[0]
    else:
        for combo in itertools.product(*(values for _, values in grid.axes)):
            execute(dict(zip(keys, combo)))

    header = ["run_id", *keys, "final_val_f1", "diverged"]
    lines = [",".join(header)]
    for row in rows:
        cells = [row["run_id"]]
        cells += [_fmt_cell(row.get(key, base[key])) for key in keys]
        cells.append(_fmt_float(row["final_val_f1"]))
        cells.append(row["diverged"])
        lines.append(",".join(cells))
    with open(os.path.join(out_dir, "summary.csv"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return rows


def write_config(cfg: Config, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(serialize_config(cfg))
