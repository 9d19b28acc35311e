"""Drive the experiment harness end to end in a scratch directory.

Generates a dataset, writes a config and a two-axis grid, runs the
cross-product sweep, and prints the summary table, then shows the same
grid swept greedily (one axis at a time, best value frozen).
"""

import os
import tempfile

import fusebench as fb
from fusebench.harness import parse_grid, sweep

workdir = tempfile.mkdtemp(prefix="fusebench_demo_")
data_dir = os.path.join(workdir, "data")
os.makedirs(data_dir)

img, txt, labels = fb.synth_generate(500, 12, 6, noise_std=0.4, seed=21)
fb.write_features(img, os.path.join(data_dir, "image.feat"))
fb.write_features(txt, os.path.join(data_dir, "text.feat"))
fb.write_labels(labels.ids, labels.to_sets(), os.path.join(data_dir, "labels.csv"))

base = fb.default_config().with_overrides({
    "data.features_img": os.path.join(data_dir, "image.feat"),
    "data.features_txt": os.path.join(data_dir, "text.feat"),
    "data.labels": os.path.join(data_dir, "labels.csv"),
    "data.num_classes": 6,
    "data.n_train": 400,
    "head.layers": "12,24,6",
    "head.dropout": 0.2,
    "train.epochs": 40,
    "train.batch_size": 500,
    "fusion.strategy": "image_only",
})

grid = parse_grid("optim.lr = 0.001 | 0.01\nhead.activation = gelu | relu\n")

print("=== full cross product (4 runs) ===")
rows = sweep(base, grid, os.path.join(workdir, "grid"))
for row in rows:
    print(f"{row['run_id']}: lr={row['optim.lr']:<6} act={row['head.activation']:<10} "
          f"f1={row['final_val_f1']:.4f} diverged={row['diverged']}")

print("\n=== greedy, one axis at a time (4 runs) ===")
rows = sweep(base, grid, os.path.join(workdir, "greedy"), greedy=True)
for row in rows:
    print(f"{row['run_id']}: lr={row['optim.lr']:<6} act={row['head.activation']:<10} "
          f"f1={row['final_val_f1']:.4f}")

print(f"\nartifacts under {workdir}")
print("every run directory has metrics.csv, model.mmcm, predictions.csv, report.txt")
