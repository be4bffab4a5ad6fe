#!/usr/bin/env python3
"""Image encoding walkthrough: pixels -> patches -> PCA -> detunings -> features.

Takes bundled MNIST digits through every stage of the encoding pipeline
at the reference configuration (16 x 16 downsample, 4 x 4 patches,
8 principal components driving 8 atoms) and prints what each stage
produces. Run from the repository root:

    python demos/02_image_encoding.py
"""

import numpy as np
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

from qrcbench import ReservoirConfig, fit_encoder
from qrcbench.data import load_labeled_images

images, labels = load_labeled_images(
    "data/mnist/mnist-images-idx3-ubyte.gz",
    "data/mnist/mnist-labels-idx1-ubyte.gz")
print(f"dataset: {images.shape[0]} images of {images.shape[1]}x{images.shape[2]}")

# Fit the frozen statistics (PCA basis + feature ranges) on a training
# slice. delta defaults to the atom count.
config = ReservoirConfig(n_atoms=8)
train = images[:200]
encoder = fit_encoder(train, config, target_size=16, patch_width=4)
print(f"patches per image: {encoder.n_patches}, "
      f"retained PCA dimensions: {encoder.delta}")
print(f"PCA variance captured: {encoder.pca.retained_fraction():.1%}")

sample = images[1234]
print(f"\nencoding one digit (label {labels[1234]}):")
feats = encoder.patch_features(sample)
print(f"  patch features  : {feats.shape}  (kappa x delta)")
dets = encoder.patch_detunings(sample)
print(f"  patch detunings : {dets.shape}, range "
      f"[{dets.min():.2f}, {dets.max():.2f}] rad/us")
emb = encoder.embed(sample)
print(f"  image embedding : {emb.shape}  "
      f"(= {config.num_snapshots} snapshots x {config.n_observables} observables)")
base = encoder.baseline_features(sample)
print(f"  classical input : {base.shape}  (patch-averaged normalized features)")

# Embeddings of a few digits from different classes, side by side.
fig, axes = plt.subplots(2, 4, figsize=(12, 5))
picks = [int(np.flatnonzero(labels == c)[0]) for c in range(4)]
for col, idx in enumerate(picks):
    axes[0, col].imshow(images[idx], cmap="gray")
    axes[0, col].set_title(f"digit {labels[idx]}")
    axes[0, col].axis("off")
    e = encoder.embed(images[idx]).reshape(config.num_snapshots, -1)
    im = axes[1, col].imshow(e, aspect="auto", cmap="RdBu_r",
                             vmin=-0.5, vmax=0.5)
    axes[1, col].set_xlabel("observable")
    axes[1, col].set_ylabel("snapshot")
fig.colorbar(im, ax=axes[1, :], shrink=0.8, label="expectation value")
fig.suptitle("reservoir embeddings by class")
fig.savefig("demos/image_encoding.png", dpi=120, bbox_inches="tight")
print("\nwrote demos/image_encoding.png")
