"""Deterministic training engine for multimodal multilabel classification.

The package trains MLP / gated-MLP classification heads over precomputed
image and text embeddings, fuses modalities by feature concatenation or
by summed logits feeding a linear meta-classifier, and evaluates with
multilabel mean-F1.  Every run is bit-reproducible for a fixed seed,
independent of the worker thread count (see README).
"""

from .config import Config, ConfigError, default_config, parse_config, serialize_config
from .dataio import (
    AlignmentError,
    Bundle,
    FeatureTable,
    FormatError,
    LabelMatrix,
    SplitSpec,
    read_features,
    read_labels,
    split,
    synth_generate,
    write_features,
    write_labels,
)
from .fusion import (
    EpochLog,
    EpochRecord,
    FusionPlan,
    ModelGraph,
    TrainConfig,
    fuse_concat,
    fuse_sum,
    load_model,
    make_plan,
    predict,
    save_model,
    train,
)
from .harness import ExitReport, SweepGrid, parse_grid, run_experiment, sweep
from .heads import (
    ForwardCache,
    HeadParams,
    HeadSpec,
    LinearLayer,
    activate,
    dropout_forward,
    head_backward,
    head_forward,
    linear_forward,
    param_init,
)
from .linalg import Rng, ShapeError, elementwise, matmul, reduce_sum, transpose
from .losses import LossSpec, loss_grad, loss_value, sigmoid
from .metrics import ConfusionCounts, confusion_counts, f1_sample, mean_f1, threshold_sets
from .optim import AdamState, EmaState, adam_step, ema_materialize, ema_update

__version__ = "0.1.0"
