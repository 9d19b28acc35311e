"""Acceptance suite: ten gate criteria, one test each.

Each test prints a `ACCEPTANCE <n> PASS` line (visible with `pytest -s`)
and asserts both the numeric tolerance and the runtime budget of its
criterion.  Run with:

    pytest -s tests/test_acceptance.py
"""

import math
import os
import subprocess
import sys
import time

import numpy as np
import pytest

import fusebench as fb

from _oracles import mean_f1_brute


def _report(number: int, detail: str) -> None:
    print(f"\nACCEPTANCE {number} PASS: {detail}")


def _scalar_loss(z, y, spec):
    return fb.loss_value(np.array([[z]], np.float64), np.array([[y]], np.float64), spec)


def test_acceptance_01_loss_gradcheck():
    """Analytic loss gradients match central differences at 1e-6."""
    start = time.perf_counter()
    rng = np.random.default_rng(101)
    h = 1e-5
    gammas = [0.0, 1.0, 2.0, 3.0, 4.0]
    clips = [0.0, 0.05, 0.2]
    checked = 0
    worst = 0.0
    while checked < 120:
        spec = fb.LossSpec(
            gamma_pos=float(rng.choice(gammas)),
            gamma_neg=float(rng.choice(gammas)),
            clip=float(rng.choice(clips)),
        )
        z = float(rng.uniform(-8, 8))
        y = float(rng.integers(0, 2))
        p = 1.0 / (1.0 + math.exp(-z))
        if abs(p - spec.clip) < 2 * h:
            continue
        analytic = float(fb.loss_grad(np.array([[z]]), np.array([[y]]), spec)[0, 0])
        fd = (_scalar_loss(z + h, y, spec) - _scalar_loss(z - h, y, spec)) / (2 * h)
        if fd == 0.0:
            assert abs(analytic) < 1e-12
        else:
            worst = max(worst, abs(analytic - fd) / abs(fd))
        checked += 1
    elapsed = time.perf_counter() - start
    assert worst <= 1e-6
    assert elapsed < 5.0
    _report(1, f"{checked} configs, worst rel err {worst:.2e}, {elapsed:.2f}s")


def test_acceptance_02_reduction_identities():
    """focal(0) == BCE and ASL(g,g,0) == focal(g), pointwise to 1e-12."""
    start = time.perf_counter()
    rng = np.random.default_rng(102)
    z = rng.uniform(-12.0, 12.0, size=(100, 100))
    y = (rng.random((100, 100)) < 0.4).astype(np.float64)

    # focal(0) vs an independent straight-line BCE evaluation
    p = np.clip(1.0 / (1.0 + np.exp(-z)), 1e-7, 1 - 1e-7)
    bce_direct_rows = np.sum(-y * np.log(p) - (1 - y) * np.log(1 - p), axis=1)
    worst = 0.0
    for i in range(z.shape[0]):
        row_focal = fb.loss_value(z[i : i + 1], y[i : i + 1], fb.LossSpec.focal(0.0))
        row_bce = fb.loss_value(z[i : i + 1], y[i : i + 1], fb.LossSpec.bce())
        worst = max(worst, abs(row_focal - bce_direct_rows[i]), abs(row_bce - bce_direct_rows[i]))

    for gamma in (0.0, 1.0, 2.0, 3.0, 4.0):
        asl = fb.LossSpec(gamma, gamma, 0.0)
        focal = fb.LossSpec.focal(gamma)
        worst = max(worst, abs(fb.loss_value(z, y, asl) - fb.loss_value(z, y, focal)))
        g_asl = fb.loss_grad(z, y, asl)
        g_focal = fb.loss_grad(z, y, focal)
        worst = max(worst, float(np.abs(g_asl - g_focal).max()))

    elapsed = time.perf_counter() - start
    assert worst <= 1e-12
    assert elapsed < 2.0
    _report(2, f"10^4 points, max deviation {worst:.2e}, {elapsed:.2f}s")


def test_acceptance_03_head_gradcheck():
    """Every parameter of MLP and gMLP [6,8,4] passes FD checks at 1e-4."""
    start = time.perf_counter()
    loss_spec = fb.LossSpec.bce()
    rng = np.random.default_rng(103)
    x = rng.standard_normal((5, 6))
    y = (rng.random((5, 4)) < 0.4).astype(np.float64)
    h = 1e-4
    worst = 0.0
    for kind in ("mlp", "gmlp"):
        for act in ("gelu", "relu", "leaky_relu"):
            spec = fb.HeadSpec(kind, (6, 8, 4), activation=act, dropout_rate=0.0)
            params = fb.param_init(spec, fb.Rng(33)).astype(np.float64)
            logits, cache = fb.head_forward(spec, params, x)
            grads, _ = fb.head_backward(spec, params, cache,
                                        fb.loss_grad(logits, y, loss_spec))

            def loss_now():
                out, _ = fb.head_forward(spec, params, x)
                return fb.loss_value(out, y, loss_spec)

            for arr, g in zip(params.arrays(), grads):
                flat, gflat = arr.ravel(), g.ravel()
                for i in range(flat.size):
                    orig = flat[i]
                    flat[i] = orig + h
                    up = loss_now()
                    flat[i] = orig - h
                    down = loss_now()
                    flat[i] = orig
                    fd = (up - down) / (2 * h)
                    denom = max(abs(fd), abs(gflat[i]), 1e-8)
                    worst = max(worst, abs(gflat[i] - fd) / denom)
    elapsed = time.perf_counter() - start
    assert worst <= 1e-4
    assert elapsed < 30.0
    _report(3, f"both head kinds x 3 activations, worst rel err {worst:.2e}, {elapsed:.1f}s")


def test_acceptance_04_ema_closed_form():
    """ema_materialize equals the unrolled geometric average to 1e-12."""
    start = time.perf_counter()
    rng = np.random.default_rng(104)
    worst = 0.0
    for _ in range(50):
        alpha = float(rng.choice([0.0, 0.5, 0.9, 0.99]))
        length = int(rng.integers(1, 21))
        traj = rng.standard_normal((length, 4))
        state = fb.EmaState(alpha=alpha)
        for step in traj:
            fb.ema_update(state, [step.copy()])
        expected = alpha ** (length - 1) * traj[0]
        for i in range(2, length + 1):
            expected = expected + (1 - alpha) * alpha ** (length - i) * traj[i - 1]
        got = fb.ema_materialize(state)[0]
        scale = np.maximum(np.abs(expected), 1e-12)
        worst = max(worst, float((np.abs(got - expected) / scale).max()))
    elapsed = time.perf_counter() - start
    assert worst <= 1e-12
    assert elapsed < 1.0
    _report(4, f"50 trajectories, worst rel err {worst:.2e}, {elapsed:.2f}s")


def _fusion_cfg(epochs=300):
    return fb.TrainConfig(epochs=epochs, batch_size=10**6, lr=0.001,
                          loss=fb.LossSpec.bce(), seed=77)


def test_acceptance_05_fusion_superiority():
    """Sum fusion beats each single modality by >= 0.05 validation F1.

    Best-pipeline profile where the criterion pins it: MLP head, GeLU,
    dropout 0.6, BCE, 300 full-batch epochs, lr 0.001.  The hidden width
    is desk-scale (128) to fit the runtime budget.
    """
    start = time.perf_counter()
    img, txt, labels = fb.synth_generate(4000, 32, 18, 0.5, seed=2024)
    tr, va = fb.split((img, txt), labels, fb.SplitSpec(3200, seed=2024))
    cfg = _fusion_cfg()
    scores = {}
    for strategy in ("sum", "image_only", "text_only"):
        plan = fb.make_plan(strategy, 32, 32, 18, (128,), kind="mlp",
                            activation="gelu", dropout=0.6)
        _, log = fb.train(plan, tr, va, cfg)
        assert not log.diverged
        scores[strategy] = log.final_val_f1
    elapsed = time.perf_counter() - start
    assert scores["sum"] >= scores["image_only"] + 0.05
    assert scores["sum"] >= scores["text_only"] + 0.05
    assert elapsed < 120.0
    _report(5, (f"sum {scores['sum']:.3f} vs image {scores['image_only']:.3f} "
                f"vs text {scores['text_only']:.3f}, {elapsed:.1f}s"))


def test_acceptance_06_overfit_sanity():
    """[d,2048,512,18] memorizes 512 noiseless samples within 300 epochs.

    Full batch, lr 0.001, BCE; training F1 is measured in eval mode and
    the loop stops as soon as the 0.99 bar is cleared.
    """
    start = time.perf_counter()
    img, _, labels = fb.synth_generate(512, 18, 36, 0.0, seed=404)
    x = img.features  # modality A alone carries classes 0..17 of 36
    y = labels.targets[:, :18]
    truths = [set(np.flatnonzero(row).tolist()) for row in y]

    spec = fb.HeadSpec("mlp", (18, 2048, 512, 18), activation="gelu", dropout_rate=0.0)
    params = fb.param_init(spec, fb.Rng(55))
    state = fb.AdamState.for_params(params.arrays())
    loss_spec = fb.LossSpec.bce()
    reached = None
    for epoch in range(1, 301):
        logits, cache = fb.head_forward(spec, params, x, mode="train")
        grads, _ = fb.head_backward(spec, params, cache, fb.loss_grad(logits, y, loss_spec))
        fb.adam_step(state, params.arrays(), grads, lr=0.001)
        if epoch % 10 == 0 or epoch == 300:
            eval_logits, _ = fb.head_forward(spec, params, x, mode="eval")
            preds = fb.threshold_sets(fb.sigmoid(eval_logits), 0.5)
            score = fb.mean_f1(preds, truths, "samples", 18)
            if score >= 0.99:
                reached = (epoch, score)
                break
    elapsed = time.perf_counter() - start
    assert reached is not None, "train F1 never reached 0.99 within 300 epochs"
    assert elapsed < 60.0
    _report(6, f"train F1 {reached[1]:.4f} at epoch {reached[0]}, {elapsed:.1f}s")


def test_acceptance_07_divergence_handling(tmp_path):
    """lr = 0.1 completes without crash; non-finite runs report F1 = 0.0."""
    start = time.perf_counter()
    img, txt, labels = fb.synth_generate(600, 16, 6, 0.5, seed=303)
    data = tmp_path / "data"
    os.makedirs(data)
    fb.write_features(img, data / "image.feat")
    fb.write_features(txt, data / "text.feat")
    fb.write_labels(labels.ids, labels.to_sets(), data / "labels.csv")

    base = {
        "data.features_img": str(data / "image.feat"),
        "data.features_txt": str(data / "text.feat"),
        "data.labels": str(data / "labels.csv"),
        "data.num_classes": 6,
        "data.n_train": 480,
        "head.layers": "16,64,64,6",
        "head.dropout": 0.2,
        "train.epochs": 40,
        "train.batch_size": 96,
        "fusion.strategy": "image_only",
    }

    # the Table-8-style run: large lr, mini-batches; must complete either way
    cfg = fb.default_config().with_overrides(base | {"optim.lr": 0.1})
    report = fb.run_experiment(cfg, str(tmp_path / "lr01"))
    if report.diverged:
        assert report.final_val_f1 == 0.0
    else:
        assert np.isfinite(report.final_val_f1)

    # a run that certainly overflows float32 exercises the full path
    from fusebench.cli import main

    cfg_path = tmp_path / "diverge.cfg"
    lines = base | {"optim.lr": 1e18}
    cfg_path.write_text("".join(f"{k} = {v}\n" for k, v in lines.items()))
    code = main(["train", "--config", str(cfg_path), "--out", str(tmp_path / "boom")])
    assert code == 0  # divergence is reported, not fatal
    report_text = (tmp_path / "boom" / "report.txt").read_text()
    assert "diverged: true" in report_text
    assert "final_val_f1: 0.0" in report_text
    elapsed = time.perf_counter() - start
    assert elapsed < 60.0
    _report(7, f"lr=0.1 completed (diverged={report.diverged}); forced divergence "
               f"reported F1 0.0, {elapsed:.1f}s")


def test_acceptance_08_metric_oracle():
    """mean_f1 matches brute-force counting on 1000 random set pairs."""
    start = time.perf_counter()
    rng = np.random.default_rng(108)

    def random_sets(n):
        out = []
        for _ in range(n):
            size = int(rng.integers(0, 11))
            out.append(set(rng.choice(10, size=size, replace=False).tolist()))
        return out

    preds, truths = random_sets(1000), random_sets(1000)
    preds[0], truths[0] = set(), set()  # force the both-empty convention
    worst = 0.0
    for mode in ("samples", "macro", "micro"):
        got = fb.mean_f1(preds, truths, mode, num_classes=10)
        expected = mean_f1_brute(preds, truths, mode, 10)
        worst = max(worst, abs(got - expected))
    elapsed = time.perf_counter() - start
    assert worst <= 1e-12
    assert elapsed < 1.0
    _report(8, f"three averagings, max deviation {worst:.2e}, {elapsed:.2f}s")


def test_acceptance_09_cli_determinism(tmp_path):
    """`train` is byte-reproducible and thread-count invariant."""
    start = time.perf_counter()
    data = tmp_path / "data"
    out_root = tmp_path / "runs"
    os.makedirs(out_root)
    env_base = dict(os.environ)
    subprocess.run(
        [sys.executable, "-m", "fusebench", "synth", "--n", "600", "--dim", "16",
         "--classes", "6", "--noise", "0.4", "--seed", "12", "--out", str(data)],
        check=True, capture_output=True, env=env_base,
    )
    cfg_path = tmp_path / "run.cfg"
    cfg_path.write_text(
        f"data.features_img = {data / 'image.feat'}\n"
        f"data.features_txt = {data / 'text.feat'}\n"
        f"data.labels = {data / 'labels.csv'}\n"
        "data.num_classes = 6\n"
        "data.n_train = 480\n"
        "head.layers = 16,24,6\n"
        "head.dropout = 0.6\n"
        "train.epochs = 6\n"
        "train.batch_size = 600\n"
        "fusion.strategy = sum\n"
    )
    artifacts = {}
    for tag, threads in (("t1a", "1"), ("t1b", "1"), ("t4a", "4"), ("t4b", "4")):
        env = env_base | {"FUSEBENCH_THREADS": threads}
        out = out_root / tag
        proc = subprocess.run(
            [sys.executable, "-m", "fusebench", "train", "--config", str(cfg_path),
             "--out", str(out)],
            capture_output=True, text=True, env=env,
        )
        assert proc.returncode == 0, proc.stderr
        artifacts[tag] = ((out / "metrics.csv").read_bytes(), (out / "model.mmcm").read_bytes())
    reference = artifacts["t1a"]
    for tag in ("t1b", "t4a", "t4b"):
        assert artifacts[tag] == reference, f"{tag} differs from t1a"
    elapsed = time.perf_counter() - start
    assert elapsed < 120.0
    _report(9, f"4 runs across FUSEBENCH_THREADS 1/4 byte-identical, {elapsed:.1f}s")


def test_acceptance_10_format_round_trips(tmp_path):
    """FEAT and MMCM write -> read -> write are byte-identical."""
    start = time.perf_counter()
    rng = np.random.default_rng(110)
    for trial in range(5):
        n, d = int(rng.integers(1, 40)), int(rng.integers(1, 12))
        table = fb.FeatureTable(
            rng.permutation(500)[:n].astype(np.uint32),
            rng.standard_normal((n, d)).astype(np.float32),
        )
        p1, p2 = tmp_path / f"f{trial}a.feat", tmp_path / f"f{trial}b.feat"
        fb.write_features(table, p1)
        fb.write_features(fb.read_features(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    strategies = ("image_only", "text_only", "concat", "sum", "mixed")
    for trial, strategy in enumerate(strategies):
        hidden = (int(rng.integers(1, 5)) * 2,)
        kind = "gmlp" if trial % 2 else "mlp"
        plan = fb.make_plan(strategy, int(rng.integers(2, 9)), int(rng.integers(2, 9)),
                            int(rng.integers(1, 6)), hidden, kind=kind,
                            dropout=float(rng.random() * 0.9))
        branches = [fb.param_init(s, fb.Rng(trial * 10 + i))
                    for i, s in enumerate(plan.branch_specs)]
        meta = fb.param_init(plan.meta_spec, fb.Rng(trial)) if plan.meta_spec else None
        model = fb.ModelGraph(plan, branches, meta)
        p1, p2 = tmp_path / f"m{trial}a.mmcm", tmp_path / f"m{trial}b.mmcm"
        fb.save_model(model, p1)
        fb.save_model(fb.load_model(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()
    elapsed = time.perf_counter() - start
    assert elapsed < 1.0
    _report(10, f"randomized FEAT and MMCM instances byte-stable, {elapsed:.2f}s")
