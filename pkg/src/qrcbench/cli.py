"""Command-line entry points.

Subcommands:

    embed   dataset -> embedding cache (and PCA container)
    train   embedding cache -> readout checkpoint
    attack  checkpoints + dataset -> adversarial dumps + accuracy curves
    report  experiment JSON -> report.json / report.csv
    sweep   the full experiment from one config file

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure. The embedding cache location honors the QRC_CACHE_DIR
environment variable.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import containers, data, harness, mlp
from .attacks import AttackSpec, GradientPath, attack_hybrid, craft
from .config import ConfigError, ExperimentConfig, config_hash, load_config
from .encoding import fit_encoder
from .mlp import TrainingDiverged
from .models import HybridPixelModel, MlpPixelModel
from .reservoir import EvolutionError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _load_cfg(args) -> ExperimentConfig:
    overrides = {}
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, val = item.split("=", 1)
        overrides[key.strip()] = val.strip()
    return load_config(args.config, overrides)


def _fit_pipeline(cfg: ExperimentConfig):
    train_imgs, train_labels, test_imgs, test_labels = harness.prepare_dataset(cfg)
    rconf = cfg.reservoir_config()
    encoder = fit_encoder(train_imgs, rconf, target_size=cfg.target_size,
                          patch_width=cfg.patch_width,
                          retained_dim=cfg.retained_dim_for(cfg.n_atoms),
                          variance_threshold=cfg.variance_threshold or None)
    return encoder, (train_imgs, train_labels, test_imgs, test_labels)


def cmd_embed(args) -> int:
    cfg = _load_cfg(args)
    encoder, (train_imgs, train_labels, test_imgs, test_labels) = _fit_pipeline(cfg)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    tr_emb, te_emb, tr_base, te_base = harness.embed_dataset(
        cfg, encoder, train_imgs, test_imgs, cfg.n_atoms,
        cache_dir=harness.resolve_cache_dir(cfg, out), progress=print)
    containers.write_matrix(out / "train_hybrid.qrcemb", tr_emb)
    containers.write_matrix(out / "test_hybrid.qrcemb", te_emb)
    containers.write_matrix(out / "train_base.qrcemb", tr_base)
    containers.write_matrix(out / "test_base.qrcemb", te_base)
    containers.write_matrix(out / "train_labels.qrcemb",
                            train_labels[None, :].astype(float))
    containers.write_matrix(out / "test_labels.qrcemb",
                            test_labels[None, :].astype(float))
    containers.save_pca(out / "pca.qrcpca", encoder.pca)
    (out / "meta.json").write_text(json.dumps(
        {"config": cfg.to_dict(), "config_hash": config_hash(cfg)}, indent=1))
    print(f"embeddings written to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _load_cfg(args)
    cache = Path(args.cache)
    kind = "hybrid" if args.model == "hybrid" else "base"
    feats = containers.read_matrix(cache / f"train_{kind}.qrcemb")
    labels = containers.read_matrix(cache / "train_labels.qrcemb")[0].astype(int)
    seeds = harness.derive_seeds(cfg.master_seed)
    n_classes = int(labels.max()) + 1
    params, history = harness.train_readout(feats, labels, n_classes, cfg,
                                            seeds["model"])
    echo = {"model": args.model, "config_hash": config_hash(cfg),
            "learning_rate": cfg.learning_rate, "batch_size": cfg.batch_size,
            "max_epochs": cfg.max_epochs,
            "final_train_accuracy": history.accuracy[-1]}
    containers.save_checkpoint(args.output, params, echo)
    print(f"{args.model} readout -> {args.output} "
          f"(final train acc {history.accuracy[-1]:.3f})")
    return EXIT_OK


def cmd_attack(args) -> int:
    cfg = _load_cfg(args)
    encoder, (_, _, test_imgs, test_labels) = _fit_pipeline(cfg)
    hyb_params, _ = containers.load_checkpoint(args.hybrid_checkpoint)
    base_params, _ = containers.load_checkpoint(args.baseline_checkpoint)
    n_eval = cfg.attack_samples or len(test_imgs)
    imgs, labels = test_imgs[:n_eval], test_labels[:n_eval]
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    seeds = harness.derive_seeds(cfg.master_seed)
    base_model = MlpPixelModel(encoder, base_params,
                               input_mode=cfg.baseline_input)
    hyb_model = HybridPixelModel(encoder, hyb_params,
                                 gradient_mode=cfg.hybrid_gradient_mode)
    path = GradientPath(mode="chained-hybrid")
    # anchor per-image views once; reused across families and budgets
    print(f"anchoring reservoir Jacobians for {len(imgs)} images...")
    hyb_views = [hyb_model.attack_view(img) for img in imgs]
    curves = {}
    for family in cfg.families():
        for model_name, is_hybrid in ((harness.MODEL_BASELINE, False),
                                      (harness.MODEL_HYBRID, True)):
            accs = []
            for eps in cfg.eps_grid():
                spec = AttackSpec(family=family, epsilon=float(eps),
                                  steps=cfg.attack_steps,
                                  step_size=cfg.attack_step_size,
                                  random_start=cfg.pgd_random_start,
                                  rng_seed=seeds["attack"],
                                  overshoot=cfg.deepfool_overshoot)
                advs, hits = [], 0
                for i, (img, label) in enumerate(zip(imgs, labels)):
                    if is_hybrid:
                        adv = attack_hybrid(hyb_views[i], img, int(label),
                                            spec, path)
                        hits += hyb_model.predict(adv) == label
                    else:
                        adv = craft(base_model, img, int(label), spec)
                        hits += base_model.predict(adv) == label
                    advs.append(adv)
                accs.append(hits / len(imgs))
                stem = f"{family}-{model_name.replace('+', '_')}-eps{eps:.3f}"
                containers.save_adversarial(
                    out / f"{stem}.qrcadv", np.stack(advs),
                    {"attack": family, "epsilon": float(eps),
                     "seed": seeds["attack"], "model": model_name,
                     "model_hash": config_hash(cfg, {"model": model_name})})
                print(f"{family} {model_name} eps={eps:.3f} acc={accs[-1]:.3f}")
            curves[f"{model_name}/{family}"] = accs
    (out / "curves.json").write_text(json.dumps(
        {"eps_grid": cfg.eps_grid(), "curves": curves}, indent=1))
    return EXIT_OK


def cmd_report(args) -> int:
    blob = json.loads(Path(args.input).read_text())
    report = harness.RobustnessReport.from_dict(blob)
    written = harness.emit_report(report, args.output,
                                  formats=tuple(args.formats.split(",")))
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load_cfg(args)
    report = harness.run_experiment(cfg, out_dir=args.output, progress=print)
    harness.emit_report(report, args.output)
    for entry in report.delta_acc:
        print(f"delta-acc {entry['attack']} N={entry['n_atoms']}: "
              f"{entry['value']:+.4f}")
    print(f"report written to {args.output} "
          f"({report.runtime_seconds:.0f}s, hash {report.config_hash[:12]})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qrcbench",
        description="Rydberg reservoir robustness benchmark")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default=None,
                       help="key=value config file (defaults apply if omitted)")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a single config key")

    p = sub.add_parser("embed", help="embed a dataset into the feature cache")
    common(p)
    p.add_argument("--output", required=True, help="output directory")
    p.set_defaults(fn=cmd_embed)

    p = sub.add_parser("train", help="train a readout from cached features")
    common(p)
    p.add_argument("--cache", required=True, help="directory from 'embed'")
    p.add_argument("--model", choices=("hybrid", "baseline"), required=True)
    p.add_argument("--output", required=True, help="checkpoint path")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("attack", help="craft adversarial sets and curves")
    common(p)
    p.add_argument("--hybrid-checkpoint", required=True)
    p.add_argument("--baseline-checkpoint", required=True)
    p.add_argument("--output", required=True, help="output directory")
    p.set_defaults(fn=cmd_attack)

    p = sub.add_parser("report", help="emit JSON/CSV from an experiment dump")
    p.add_argument("--input", required=True, help="report JSON file")
    p.add_argument("--output", required=True, help="output directory")
    p.add_argument("--formats", default="json,csv")
    p.set_defaults(fn=cmd_report)

    p = sub.add_parser("sweep", help="run the full N-sweep experiment")
    common(p)
    p.add_argument("--output", required=True, help="output directory")
    p.set_defaults(fn=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (data.DataError, containers.ContainerError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (EvolutionError, TrainingDiverged, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except harness.StageError as exc:
        kind = EXIT_NUMERIC
        if isinstance(exc.cause, (ConfigError,)):
            kind = EXIT_CONFIG
        elif isinstance(exc.cause, (data.DataError, containers.ContainerError,
                                    FileNotFoundError)):
            kind = EXIT_DATA
        print(f"{exc}", file=sys.stderr)
        return kind


if __name__ == "__main__":
    sys.exit(main())
