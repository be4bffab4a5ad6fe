#!/usr/bin/env python3
"""Mini robustness sweep: accuracy-vs-budget curves for both models.

Runs a scaled-down version of the full experiment (two atom counts, a
short epsilon grid, a reduced evaluation set) through the harness, then
prints the accuracy curves and the mean accuracy-gain summary and
writes report.json / report.csv. Takes a few minutes. Run from the
repository root:

    python demos/05_robustness_sweep.py

The full-scale experiment is the same call with configs/acceptance-mnist.cfg
(see README), or via the CLI:  qrcbench sweep --config <file> --output <dir>
"""

from qrcbench.config import ExperimentConfig
from qrcbench.harness import (
    MODEL_BASELINE,
    MODEL_HYBRID,
    emit_report,
    run_experiment,
)

cfg = ExperimentConfig(
    per_class=30,
    target_size=16, patch_width=16,
    n_sweep="4,6",
    eps_count=4, eps_stop=0.09,
    attack_families="fgsm,pgd",
    attack_steps=40, attack_step_size=5e-3,   # zeta*T covers the grid
    attack_samples=40,
    max_epochs=150,
    hybrid_gradient_mode="linearized",
    master_seed=1,
)

report = run_experiment(cfg, out_dir="demos/sweep-out", progress=print)
emit_report(report, "demos/sweep-out")

print("\naccuracy curves (epsilon grid: "
      + ", ".join(f"{e:.2f}" for e in report.eps_grid) + ")")
for n_atoms in report.n_sweep:
    for family in cfg.families():
        base = report.curve(MODEL_BASELINE, family, n_atoms)
        hyb = report.curve(MODEL_HYBRID, family, n_atoms)
        print(f"  N={n_atoms} {family:4s} baseline: "
              + " ".join(f"{a:.2f}" for a in base))
        print(f"  N={n_atoms} {family:4s} hybrid  : "
              + " ".join(f"{a:.2f}" for a in hyb))
print("\nmean accuracy gain of the hybrid over the grid:")
for entry in report.delta_acc:
    print(f"  {entry['attack']:8s} N={entry['n_atoms']}: "
          f"{entry['value']:+.3f}")
print("\nwrote demos/sweep-out/report.json and report.csv")
