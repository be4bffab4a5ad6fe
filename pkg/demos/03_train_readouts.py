#!/usr/bin/env python3
"""Readout training walkthrough: hybrid vs classical on a small subset.

Draws a balanced subset of the bundled MNIST digits, builds both input
representations (reservoir embeddings and patch-averaged PCA features),
trains the same 64/32 readout on each with identical seeds, and prints
the clean test accuracies. A reduced configuration keeps this to about
a minute. Run from the repository root:

    python demos/03_train_readouts.py
"""

import numpy as np

from qrcbench import mlp
from qrcbench.config import ExperimentConfig
from qrcbench.encoding import fit_encoder
from qrcbench.harness import derive_seeds, prepare_dataset, train_readout

cfg = ExperimentConfig(
    per_class=30,                 # 210 train / 90 test: quick demo scale
    n_atoms=6,
    target_size=16, patch_width=16,   # single-patch encoding
    max_epochs=150,
    master_seed=1,
)

train_imgs, train_labels, test_imgs, test_labels = prepare_dataset(cfg)
print(f"subset: {len(train_imgs)} train / {len(test_imgs)} test")

encoder = fit_encoder(train_imgs, cfg.reservoir_config(),
                      target_size=cfg.target_size,
                      patch_width=cfg.patch_width,
                      retained_dim=cfg.retained_dim_for(cfg.n_atoms))
print(f"encoder: delta = {encoder.delta}, "
      f"embedding dimension = {encoder.embedding_dim}")

print("embedding the subset through the reservoir...")
train_emb = encoder.embed_batch(train_imgs)
test_emb = encoder.embed_batch(test_imgs)
train_base = encoder.baseline_batch(train_imgs)
test_base = encoder.baseline_batch(test_imgs)

seeds = derive_seeds(cfg.master_seed)
print(f"training both readouts with identical seed {seeds['model']}...")
hybrid, hist_h = train_readout(train_emb, train_labels, 10, cfg, seeds["model"])
baseline, hist_b = train_readout(train_base, train_labels, 10, cfg, seeds["model"])

acc_h = np.mean(mlp.predict(hybrid, test_emb) == test_labels)
acc_b = np.mean(mlp.predict(baseline, test_base) == test_labels)
print(f"\nfinal train loss: hybrid {hist_h.loss[-1]:.3f}, "
      f"baseline {hist_b.loss[-1]:.3f}")
print(f"clean test accuracy: hybrid {acc_h:.1%} vs baseline {acc_b:.1%}")
print("(both models consume the same 6 features; the reservoir expands "
      "them into 126 nonlinear ones)")
