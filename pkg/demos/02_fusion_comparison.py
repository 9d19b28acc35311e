"""Compare all five fusion strategies on complementary synthetic data.

The generator hides half the classes in each modality, so any single
branch tops out around sample-F1 0.6 while fused strategies can read
both halves.  This reproduces, at desk scale, the qualitative ordering
fused > concat > single-modality.

Runs in roughly a minute on two cores.
"""

import time

import fusebench as fb

N, D, K = 2000, 24, 12
print(f"synthetic dataset: n={N}, d={D} per modality, K={K}, noise 0.5")
img, txt, labels = fb.synth_generate(N, D, K, noise_std=0.5, seed=7)
train_bundle, val_bundle = fb.split((img, txt), labels, fb.SplitSpec(1600, seed=7))

cfg = fb.TrainConfig(epochs=200, batch_size=N, lr=0.001, loss=fb.LossSpec.bce(), seed=1)
print(f"{'strategy':>12} {'val F1':>8} {'seconds':>8}")
for strategy in ("image_only", "text_only", "concat", "sum", "mixed"):
    plan = fb.make_plan(strategy, D, D, K, hidden_dims=(96,),
                        kind="mlp", activation="gelu", dropout=0.5)
    start = time.perf_counter()
    model, log = fb.train(plan, train_bundle, val_bundle, cfg)
    took = time.perf_counter() - start
    print(f"{strategy:>12} {log.final_val_f1:8.4f} {took:8.1f}")

print("\nEach modality alone misses half the classes; summed-logit fusion")
print("with its linear meta-classifier recovers both halves.")
