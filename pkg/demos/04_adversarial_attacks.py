#!/usr/bin/env python3
"""Attack walkthrough: FGSM, PGD and DeepFool against both models.

Trains quick readouts, then crafts adversarial images against the
classical model (exact gradients) and the hybrid model (gradients
chained through the finite-difference reservoir Jacobian), verifying
budgets and showing what the perturbations look like. Run from the
repository root:

    python demos/04_adversarial_attacks.py
"""

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

from qrcbench.attacks import AttackSpec, GradientPath, attack_hybrid, craft
from qrcbench.attacks import perturbation_norm
from qrcbench.config import ExperimentConfig
from qrcbench.encoding import fit_encoder
from qrcbench.harness import derive_seeds, prepare_dataset, train_readout
from qrcbench.models import HybridPixelModel, MlpPixelModel

cfg = ExperimentConfig(per_class=30, n_atoms=6, target_size=16,
                       patch_width=16, max_epochs=150, master_seed=1)
train_imgs, train_labels, test_imgs, test_labels = prepare_dataset(cfg)
encoder = fit_encoder(train_imgs, cfg.reservoir_config(),
                      target_size=16, patch_width=16, retained_dim=6)
train_emb = encoder.embed_batch(train_imgs)
train_base = encoder.baseline_batch(train_imgs)
seeds = derive_seeds(cfg.master_seed)
hyb_params, _ = train_readout(train_emb, train_labels, 10, cfg, seeds["model"])
base_params, _ = train_readout(train_base, train_labels, 10, cfg, seeds["model"])

baseline = MlpPixelModel(encoder, base_params)
# "exact" recomputes the reservoir Jacobian at every iterate; see
# HybridPixelModel for the cheaper anchored modes used at survey scale.
hybrid = HybridPixelModel(encoder, hyb_params, gradient_mode="exact")
path = GradientPath(mode="chained-hybrid")

image, label = test_imgs[0], int(test_labels[0])
print(f"victim digit: label {label}")
print(f"clean predictions: baseline {baseline.predict(image)}, "
      f"hybrid {hybrid.predict(image)}")

specs = [AttackSpec("fgsm", epsilon=0.08),
         AttackSpec("pgd", epsilon=0.08, steps=40, step_size=5e-3),
         AttackSpec("deepfool", epsilon=3.0, steps=50)]

fig, axes = plt.subplots(2, 4, figsize=(12, 6))
axes[0, 0].imshow(image, cmap="gray", vmin=0, vmax=1)
axes[0, 0].set_title(f"clean ({label})")
axes[1, 0].axis("off")
for col, spec in enumerate(specs, start=1):
    adv_b = craft(baseline, image, label, spec)
    adv_h = attack_hybrid(hybrid, image, label, spec, path)
    norm_b = perturbation_norm(adv_b, image, spec.norm)
    norm_h = perturbation_norm(adv_h, image, spec.norm)
    print(f"\n{spec.family} (eps = {spec.epsilon}, norm = {spec.norm}):")
    print(f"  baseline: |perturbation| = {norm_b:.4f} <= {spec.epsilon}, "
          f"prediction {baseline.predict(adv_b)}")
    print(f"  hybrid  : |perturbation| = {norm_h:.4f} <= {spec.epsilon}, "
          f"prediction {hybrid.predict(adv_h)}")
    axes[0, col].imshow(adv_h, cmap="gray", vmin=0, vmax=1)
    axes[0, col].set_title(f"{spec.family} vs hybrid")
    diff = adv_h - image
    axes[1, col].imshow(diff, cmap="RdBu_r",
                        vmin=-spec.epsilon, vmax=spec.epsilon)
    axes[1, col].set_title("perturbation")
for ax in axes.ravel():
    ax.axis("off")
fig.tight_layout()
fig.savefig("demos/adversarial_attacks.png", dpi=120)
print("\nwrote demos/adversarial_attacks.png")
