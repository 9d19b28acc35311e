"""Fusion strategies, staged training, prediction, and the model file.

Five strategies over two feature modalities:

    image_only / text_only   one head on one modality
    concat                   one head on horizontally concatenated features
    sum                      per-modality heads trained independently, then a
                             frozen pass produces summed logits that train a
                             linear K->K meta-classifier
    mixed                    like sum but with a third concat branch feeding
                             the same meta-classifier

Branch logits are fused pre-sigmoid.  Training is deterministic for a
fixed seed: the run seed spawns one random stream per head, and each of
those spawns (init, shuffle, dropout) streams, so results are
bit-reproducible regardless of the thread count.

A non-finite loss, logit, or gradient anywhere marks the run as
diverged: training stops, the partial epoch log is kept, and callers
report an F1 of 0.0 instead of crashing.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .dataio import Bundle
from .heads import (
    ACTIVATIONS,
    HEAD_KINDS,
    HeadParams,
    HeadSpec,
    LinearLayer,
    head_backward,
    head_forward,
    param_init,
)
from .linalg import Rng, ShapeError
from .losses import LossSpec, loss_grad, loss_value, sigmoid
from .metrics import mean_f1, threshold_sets
from .optim import AdamState, EmaState, adam_step, ema_materialize, ema_update

__all__ = [
    "STRATEGIES",
    "FusionPlan",
    "ModelGraph",
    "TrainConfig",
    "EpochRecord",
    "EpochLog",
    "fuse_concat",
    "fuse_sum",
    "make_plan",
    "train",
    "predict",
    "save_model",
    "load_model",
]

STRATEGIES = ("image_only", "text_only", "concat", "sum", "mixed")

MODEL_MAGIC = b"MMCM"
MODEL_VERSION = 1
_STRATEGY_CODES = {name: i for i, name in enumerate(STRATEGIES)}
_KIND_CODES = {name: i for i, name in enumerate(HEAD_KINDS)}
_ACT_CODES = {name: i for i, name in enumerate(ACTIVATIONS)}


def fuse_concat(img: np.ndarray, txt: np.ndarray) -> np.ndarray:
    """Row-wise horizontal concatenation, image columns first."""
    img = np.asarray(img)
    txt = np.asarray(txt)
    if img.ndim != 2 or txt.ndim != 2 or img.shape[0] != txt.shape[0]:
        raise ShapeError(f"cannot concatenate shapes {img.shape} and {txt.shape}")
    return np.hstack([img, txt])


def fuse_sum(logit_list) -> np.ndarray:
    """Elementwise sum of two or more pre-sigmoid logit matrices."""
    mats = [np.asarray(m) for m in logit_list]
    if len(mats) < 2:
        raise ValueError("fuse_sum needs at least two logit matrices")
    shape = mats[0].shape
    for m in mats[1:]:
        if m.shape != shape:
            raise ShapeError(f"logit shapes differ: {shape} vs {m.shape}")
    out = mats[0].copy()
    for m in mats[1:]:
        out += m
    return out


@dataclass(frozen=True)
class FusionPlan:
    """Which heads exist and how their outputs combine."""

    strategy: str
    branch_specs: tuple[HeadSpec, ...]
    meta_spec: HeadSpec | None = None

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown fusion strategy {self.strategy!r}")
        expected = {"image_only": 1, "text_only": 1, "concat": 1, "sum": 2, "mixed": 3}
        if len(self.branch_specs) != expected[self.strategy]:
            raise ValueError(
                f"{self.strategy} fusion needs {expected[self.strategy]} branch specs, "
                f"got {len(self.branch_specs)}"
            )
        needs_meta = self.strategy in ("sum", "mixed")
        if needs_meta != (self.meta_spec is not None):
            raise ValueError(f"{self.strategy} fusion {'requires' if needs_meta else 'forbids'} a meta spec")
        k = self.branch_specs[0].layer_dims[-1]
        for spec in self.branch_specs:
            if spec.layer_dims[-1] != k:
                raise ValueError("all branches must emit the same number of logits")
        if self.meta_spec is not None:
            if self.meta_spec.layer_dims != (k, k):
                raise ValueError(f"meta-classifier must be a single linear {k}->{k} layer")

    @property
    def num_classes(self) -> int:
        return self.branch_specs[0].layer_dims[-1]

    def head_specs(self) -> tuple[HeadSpec, ...]:
        if self.meta_spec is None:
            return self.branch_specs
        return self.branch_specs + (self.meta_spec,)


def make_plan(strategy: str, d_img: int, d_txt: int, num_classes: int,
              hidden_dims, kind: str = "mlp", activation: str = "gelu",
              dropout: float = 0.0) -> FusionPlan:
    """Build a FusionPlan from data dimensions and one hidden-layer profile."""
    hidden = tuple(int(h) for h in hidden_dims)

    def branch(d_in: int) -> HeadSpec:
        return HeadSpec(kind, (d_in, *hidden, num_classes), activation, dropout)

    meta = HeadSpec("mlp", (num_classes, num_classes), activation, 0.0)
    if strategy == "image_only":
        return FusionPlan(strategy, (branch(d_img),))
    if strategy == "text_only":
        return FusionPlan(strategy, (branch(d_txt),))
    if strategy == "concat":
        return FusionPlan(strategy, (branch(d_img + d_txt),))
    if strategy == "sum":
        return FusionPlan(strategy, (branch(d_img), branch(d_txt)), meta)
    if strategy == "mixed":
        return FusionPlan(strategy, (branch(d_img + d_txt), branch(d_img), branch(d_txt)), meta)
    raise ValueError(f"unknown fusion strategy {strategy!r}")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    batch_size: int
    lr: float
    loss: LossSpec
    seed: int
    eval_threshold: float | np.ndarray = 0.5
    ema_enabled: bool = False
    ema_alpha: float = 0.9

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.lr <= 0:
            raise ValueError(f"lr must be > 0, got {self.lr}")


@dataclass
class ModelGraph:
    plan: FusionPlan
    branches: list[HeadParams]
    meta: HeadParams | None = None


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    val_f1: float


@dataclass
class EpochLog:
    records: list[EpochRecord] = field(default_factory=list)
    diverged: bool = False
    note: str | None = None

    @property
    def final_val_f1(self) -> float:
        if self.diverged:
            return 0.0
        if not self.records:
            return float("nan")
        return self.records[-1].val_f1


def _branch_inputs(plan: FusionPlan, img: np.ndarray, txt: np.ndarray) -> list[np.ndarray]:
    if plan.strategy == "image_only":
        return [img]
    if plan.strategy == "text_only":
        return [txt]
    if plan.strategy == "concat":
        return [fuse_concat(img, txt)]
    if plan.strategy == "sum":
        return [img, txt]
    return [fuse_concat(img, txt), img, txt]


def _check_plan_dims(plan: FusionPlan, inputs: list[np.ndarray]) -> None:
    for spec, x in zip(plan.branch_specs, inputs):
        if x.shape[1] != spec.layer_dims[0]:
            raise ShapeError(
                f"branch expects input width {spec.layer_dims[0]}, data provides {x.shape[1]}"
            )


def _eval_logits(spec: HeadSpec, params: HeadParams, x: np.ndarray) -> np.ndarray:
    logits, _ = head_forward(spec, params, x, mode="eval")
    return logits


def _truth_sets(targets: np.ndarray) -> list[set[int]]:
    return [set(np.flatnonzero(row).tolist()) for row in targets]


class _Diverged(Exception):
    """Internal control flow: abort the run and flag it."""


def _identity_params(spec: HeadSpec) -> HeadParams:
    """Identity weights for the K->K meta-classifier.

    Stage two then starts out as the plain logit sum and can only be
    refined: a random mixing matrix over large frozen branch logits
    saturates the sigmoid, where the clamped loss has exactly zero
    gradient, and those outputs would never recover.
    """
    k = spec.layer_dims[0]
    return HeadParams(spec, [LinearLayer(np.eye(k, dtype=np.float32),
                                         np.zeros(k, dtype=np.float32))])


def _train_head(spec: HeadSpec, x: np.ndarray, y: np.ndarray,
                x_val: np.ndarray | None, y_val: np.ndarray | None,
                cfg: TrainConfig, rng: Rng, log: EpochLog, stage: str,
                on_stage_end=None, identity_init: bool = False) -> HeadParams:
    init_rng, shuffle_rng, dropout_rng = rng.spawn(3)
    params = _identity_params(spec) if identity_init else param_init(spec, init_rng)
    names = [name for name, _ in params.named_arrays()]
    state = AdamState.for_params(params.arrays())
    ema = EmaState(alpha=cfg.ema_alpha) if cfg.ema_enabled else None

    n = x.shape[0]
    batch = min(cfg.batch_size, n)
    full_batch = batch >= n
    truth_val = _truth_sets(y_val) if y_val is not None and len(y_val) else None
    num_classes = y.shape[1]

    for _ in range(cfg.epochs):
        order = np.arange(n) if full_batch else shuffle_rng.permutation(n)
        weighted_loss = 0.0
        epoch_no = len(log.records) + 1
        for lo in range(0, n, batch):
            rows = order[lo : lo + batch]
            # Overflow to inf on a diverging run is detected and reported,
            # not warned about.
            with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
                logits, cache = head_forward(spec, params, x[rows], mode="train", rng=dropout_rng)
                if not np.all(np.isfinite(logits)):
                    raise _Diverged(f"{stage}: non-finite logits at epoch {epoch_no}")
                batch_loss = loss_value(logits, y[rows], cfg.loss)
                if not np.isfinite(batch_loss):
                    raise _Diverged(f"{stage}: non-finite loss at epoch {epoch_no}")
                dlogits = loss_grad(logits, y[rows], cfg.loss)
                grads, _ = head_backward(spec, params, cache, dlogits)
                if any(not np.all(np.isfinite(g)) for g in grads):
                    raise _Diverged(f"{stage}: non-finite gradient at epoch {epoch_no}")
                adam_step(state, params.arrays(), grads, cfg.lr, names)
            if ema is not None:
                ema_update(ema, params.arrays())
            weighted_loss += batch_loss * len(rows)
        train_loss = weighted_loss / n

        val_loss = float("nan")
        val_f1 = float("nan")
        if truth_val is not None:
            eval_params = params
            if ema is not None:
                eval_params = params.replace_arrays(ema_materialize(ema))
            with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
                val_logits = _eval_logits(spec, eval_params, x_val)
            if not np.all(np.isfinite(val_logits)):
                raise _Diverged(f"{stage}: non-finite validation logits at epoch {epoch_no}")
            val_loss = loss_value(val_logits, y_val, cfg.loss)
            preds = threshold_sets(sigmoid(val_logits), cfg.eval_threshold)
            val_f1 = mean_f1(preds, truth_val, "samples", num_classes)
        log.records.append(EpochRecord(epoch_no, train_loss, val_loss, val_f1))

    if ema is not None:
        params = params.replace_arrays(ema_materialize(ema))
    if on_stage_end is not None:
        on_stage_end(stage, params, state.t)
    return params


def train(plan: FusionPlan, train_bundle: Bundle, val_bundle: Bundle,
          cfg: TrainConfig, on_stage_end=None) -> tuple[ModelGraph, EpochLog]:
    """Run the full (possibly two-stage) training for a fusion plan.

    Single-branch strategies train one head.  sum/mixed first train each
    branch independently for cfg.epochs, then freeze them, push the
    training data through once, sum the logits, and train the
    meta-classifier on those for another cfg.epochs.  The epoch log grows
    by cfg.epochs rows per stage, with a globally increasing epoch index.
    """
    img_tr, txt_tr = train_bundle.features
    y_tr = train_bundle.labels.targets
    inputs_tr = _branch_inputs(plan, img_tr.features, txt_tr.features)
    _check_plan_dims(plan, inputs_tr)

    has_val = val_bundle.n > 0
    if has_val:
        img_v, txt_v = val_bundle.features
        inputs_val = _branch_inputs(plan, img_v.features, txt_v.features)
        y_val = val_bundle.labels.targets
    else:
        inputs_val = [None] * len(plan.branch_specs)
        y_val = None

    stage_names = {
        "image_only": ["image"],
        "text_only": ["text"],
        "concat": ["concat"],
        "sum": ["image", "text"],
        "mixed": ["concat", "image", "text"],
    }[plan.strategy]

    master = Rng(cfg.seed)
    n_heads = len(plan.branch_specs) + (1 if plan.meta_spec is not None else 0)
    head_rngs = master.spawn(n_heads)

    log = EpochLog()
    branches: list[HeadParams] = []
    try:
        for b, spec in enumerate(plan.branch_specs):
            branches.append(
                _train_head(spec, inputs_tr[b], y_tr, inputs_val[b], y_val,
                            cfg, head_rngs[b], log, stage_names[b], on_stage_end)
            )
        meta = None
        if plan.meta_spec is not None:
            z_tr = fuse_sum([_eval_logits(s, p, x)
                             for s, p, x in zip(plan.branch_specs, branches, inputs_tr)])
            if not np.all(np.isfinite(z_tr)):
                raise _Diverged("meta: non-finite fused logits from frozen branches")
            z_val = None
            if has_val:
                z_val = fuse_sum([_eval_logits(s, p, x)
                                  for s, p, x in zip(plan.branch_specs, branches, inputs_val)])
                if not np.all(np.isfinite(z_val)):
                    raise _Diverged("meta: non-finite fused validation logits")
            meta = _train_head(plan.meta_spec, z_tr, y_tr, z_val, y_val,
                               cfg, head_rngs[-1], log, "meta", on_stage_end,
                               identity_init=True)
    except _Diverged as stop:
        log.diverged = True
        log.note = str(stop)
        # Fill any heads that never finished so the graph stays shape-consistent.
        while len(branches) < len(plan.branch_specs):
            branches.append(_zero_params(plan.branch_specs[len(branches)]))
        meta = _zero_params(plan.meta_spec) if plan.meta_spec is not None else None
        return ModelGraph(plan, branches, meta), log

    return ModelGraph(plan, branches, meta), log


def predict(model: ModelGraph, img: np.ndarray, txt: np.ndarray, threshold=0.5):
    """Evaluate the model; returns (probabilities, list of predicted sets).

    Dropout is off; class k is predicted iff its probability is >= the
    (scalar or per-class) threshold, so empty prediction sets are valid.
    """
    inputs = _branch_inputs(model.plan, np.asarray(img), np.asarray(txt))
    _check_plan_dims(model.plan, inputs)
    branch_logits = [_eval_logits(s, p, x)
                     for s, p, x in zip(model.plan.branch_specs, model.branches, inputs)]
    if model.meta is not None:
        final = _eval_logits(model.plan.meta_spec, model.meta, fuse_sum(branch_logits))
    else:
        final = branch_logits[0]
    probs = sigmoid(final)
    return probs, threshold_sets(probs, threshold)


def save_model(model: ModelGraph, path) -> None:
    """Serialize to the MMCM binary layout (see README)."""
    heads = list(model.branches) + ([model.meta] if model.meta is not None else [])
    blob = bytearray()
    blob += struct.pack("<4sIBI", MODEL_MAGIC, MODEL_VERSION,
                        _STRATEGY_CODES[model.plan.strategy], len(heads))
    for params in heads:
        spec = params.spec
        dims = spec.layer_dims
        blob += struct.pack("<BI", _KIND_CODES[spec.kind], len(dims))
        blob += struct.pack(f"<{len(dims)}I", *dims)
        blob += struct.pack("<Bf", _ACT_CODES[spec.activation], spec.dropout_rate)
        for arr in params.arrays():
            blob += np.ascontiguousarray(arr, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(bytes(blob))


def _read_exact(data: bytes, offset: int, size: int) -> int:
    if offset + size > len(data):
        raise ValueError(f"model file truncated at offset {offset}")
    return offset + size


def load_model(path) -> ModelGraph:
    with open(path, "rb") as fh:
        data = fh.read()
    offset = 0
    _read_exact(data, offset, 13)
    magic, version, strat_code, n_heads = struct.unpack_from("<4sIBI", data, offset)
    offset += 13
    if magic != MODEL_MAGIC:
        raise ValueError(f"bad model magic {magic!r}")
    if version != MODEL_VERSION:
        raise ValueError(f"unsupported model version {version}")
    strategies = {v: k for k, v in _STRATEGY_CODES.items()}
    if strat_code not in strategies:
        raise ValueError(f"unknown strategy code {strat_code}")
    strategy = strategies[strat_code]

    kinds = {v: k for k, v in _KIND_CODES.items()}
    acts = {v: k for k, v in _ACT_CODES.items()}
    heads: list[HeadParams] = []
    for _ in range(n_heads):
        _read_exact(data, offset, 5)
        kind_code, n_dims = struct.unpack_from("<BI", data, offset)
        offset += 5
        _read_exact(data, offset, 4 * n_dims)
        dims = struct.unpack_from(f"<{n_dims}I", data, offset)
        offset += 4 * n_dims
        _read_exact(data, offset, 5)
        act_code, dropout = struct.unpack_from("<Bf", data, offset)
        offset += 5
        if kind_code not in kinds or act_code not in acts:
            raise ValueError(f"unknown head kind/activation code at offset {offset - 5}")
        spec = HeadSpec(kinds[kind_code], dims, acts[act_code], float(dropout))
        template = _zero_params(spec)
        arrays = []
        for ref in template.arrays():
            nbytes = 4 * ref.size
            _read_exact(data, offset, nbytes)
            arr = np.frombuffer(data, dtype="<f4", count=ref.size, offset=offset)
            arrays.append(arr.reshape(ref.shape).copy())
            offset += nbytes
        heads.append(template.replace_arrays(arrays))
    if offset != len(data):
        raise ValueError(f"trailing bytes after offset {offset}")

    expected_branches = {"image_only": 1, "text_only": 1, "concat": 1, "sum": 2, "mixed": 3}[strategy]
    has_meta = strategy in ("sum", "mixed")
    if len(heads) != expected_branches + (1 if has_meta else 0):
        raise ValueError(f"{strategy} model must hold {expected_branches + has_meta} heads, got {len(heads)}")
    branch_params = heads[:expected_branches]
    meta_params = heads[-1] if has_meta else None
    plan = FusionPlan(strategy, tuple(p.spec for p in branch_params),
                      meta_params.spec if meta_params else None)
    return ModelGraph(plan, branch_params, meta_params)


def _zero_params(spec: HeadSpec) -> HeadParams:
    in_dims = spec.linear_in_dims()
    out_dims = list(spec.layer_dims[1:])
    layers, gates = [], []
    for i, (d_in, d_out) in enumerate(zip(in_dims, out_dims)):
        layers.append(LinearLayer(np.zeros((d_out, d_in), np.float32), np.zeros(d_out, np.float32)))
        if spec.kind == "gmlp" and i < spec.num_hidden:
            half = d_out // 2
            gates.append(LinearLayer(np.zeros((half, half), np.float32), np.zeros(half, np.float32)))
    return HeadParams(spec, layers, gates)
