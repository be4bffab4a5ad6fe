"""Experiment orchestration: embed, train, attack, sweep, report.

A sweep runs, for every atom count N in the configured list (with the
feature dimension delta tied to N): encoder fitting on the training
split, embedding of both splits (cached on disk keyed by the content
hash of everything upstream), training of the hybrid readout and the
classical baseline with identical seeds, then every attack family over
the epsilon grid against both models. Reported accuracy curves live on
the epsilon grid; the robustness-gain summary per (attack, N) is the
mean over the grid of the hybrid-minus-classical accuracy difference.

Reproducibility: one master seed derives the component seeds through a
counter scheme, seed_k = SeedSequence([master, k]).generate_state(1),
with k = 0 the subset draw, k = 1 the readout initialization/shuffle
seed (shared by both models) and k = 2 the attack seed. All stage loops
run in a fixed order, so a repeated run with the same configuration and
dataset bytes emits byte-identical CSV.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import containers, data, mlp
from .attacks import AttackSpec, GradientPath, attack_hybrid, craft
from .config import ExperimentConfig, config_hash
from .encoding import ImageEncoder, fit_encoder
from .models import HybridPixelModel, MlpPixelModel, ReadoutModel

__all__ = [
    "StageError", "RobustnessReport", "derive_seeds",
    "prepare_dataset", "embed_dataset", "train_readout",
    "run_experiment", "emit_report", "resolve_cache_dir",
]

MODEL_BASELINE = "mlp"
MODEL_HYBRID = "qrc+mlp"
MODEL_HYBRID_EMB = "qrc+mlp@embedding"


class StageError(RuntimeError):
    """Wraps a failure with the pipeline stage it occurred in."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


def derive_seeds(master_seed: int) -> dict[str, int]:
    def pick(k: int) -> int:
        return int(np.random.SeedSequence([master_seed, k]).generate_state(1)[0])
    return {"subset": pick(0), "model": pick(1), "attack": pick(2)}


def resolve_cache_dir(cfg: ExperimentConfig, out_dir) -> Path:
    env = os.environ.get("QRC_CACHE_DIR")
    if env:
        return Path(env)
    if cfg.cache_dir:
        return Path(cfg.cache_dir)
    return Path(out_dir) / "cache"


# ---------------------------------------------------------------------------
# report structure

@dataclass
class RobustnessReport:
    dataset: str
    config_echo: dict
    config_hash: str
    eps_grid: list[float]
    n_sweep: list[int]
    clean_accuracy: list[dict] = field(default_factory=list)
    curves: list[dict] = field(default_factory=list)
    delta_acc: list[dict] = field(default_factory=list)
    runtime_seconds: float = 0.0

    def add_clean(self, model: str, n_atoms: int, acc: float) -> None:
        self.clean_accuracy.append(
            {"model": model, "n_atoms": n_atoms, "accuracy": float(acc)})

    def add_curve(self, model: str, attack: str, n_atoms: int,
                  accuracies: list[float]) -> None:
        if len(accuracies) != len(self.eps_grid):
            raise ValueError("curve length must match the epsilon grid")
        self.curves.append({"model": model, "attack": attack,
                            "n_atoms": n_atoms,
                            "accuracies": [float(a) for a in accuracies]})

    def curve(self, model: str, attack: str, n_atoms: int) -> list[float]:
        for entry in self.curves:
            if (entry["model"], entry["attack"], entry["n_atoms"]) == \
                    (model, attack, n_atoms):
                return entry["accuracies"]
        raise KeyError((model, attack, n_atoms))

    def clean(self, model: str, n_atoms: int) -> float:
        for entry in self.clean_accuracy:
            if (entry["model"], entry["n_atoms"]) == (model, n_atoms):
                return entry["accuracy"]
        raise KeyError((model, n_atoms))

    def summarize_delta_acc(self) -> None:
        """Mean over the epsilon grid of hybrid minus classical accuracy."""
        self.delta_acc = []
        for entry in self.curves:
            if entry["model"] != MODEL_HYBRID:
                continue
            attack, n_atoms = entry["attack"], entry["n_atoms"]
            base = self.curve(MODEL_BASELINE, attack, n_atoms)
            diff = np.asarray(entry["accuracies"]) - np.asarray(base)
            self.delta_acc.append({"attack": attack, "n_atoms": n_atoms,
                                   "value": float(np.mean(diff))})

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "config_echo": self.config_echo,
            "config_hash": self.config_hash,
            "eps_grid": [float(e) for e in self.eps_grid],
            "n_sweep": [int(n) for n in self.n_sweep],
            "clean_accuracy": self.clean_accuracy,
            "curves": self.curves,
            "delta_acc": self.delta_acc,
            "runtime_seconds": self.runtime_seconds,
        }

    @classmethod
    def from_dict(cls, blob: dict) -> "RobustnessReport":
        report = cls(dataset=blob["dataset"], config_echo=blob["config_echo"],
                     config_hash=blob["config_hash"],
                     eps_grid=blob["eps_grid"], n_sweep=blob["n_sweep"])
        report.clean_accuracy = blob["clean_accuracy"]
        report.curves = blob["curves"]
        report.delta_acc = blob["delta_acc"]
        report.runtime_seconds = blob["runtime_seconds"]
        return report


# ---------------------------------------------------------------------------
# stages

def prepare_dataset(cfg: ExperimentConfig):
    """Load, optionally checksum-verify, and draw the balanced subset."""
    if cfg.images_sha256:
        data.verify_checksum(cfg.images_path, cfg.images_sha256)
    if cfg.labels_sha256:
        data.verify_checksum(cfg.labels_path, cfg.labels_sha256)
    images, labels = data.load_labeled_images(cfg.images_path, cfg.labels_path)
    seeds = derive_seeds(cfg.master_seed)
    spec = data.DatasetSpec(name=cfg.dataset_name, per_class=cfg.per_class,
                            train_fraction=cfg.train_fraction,
                            rng_seed=seeds["subset"])
    train_idx, test_idx = data.balanced_subset(images, labels, spec)
    return (images[train_idx], labels[train_idx],
            images[test_idx], labels[test_idx])


def _embedding_cache_key(cfg: ExperimentConfig, n_atoms: int) -> str:
    relevant = {
        "images_sha256": data.sha256_file(cfg.images_path),
        "labels_sha256": data.sha256_file(cfg.labels_path),
        "per_class": cfg.per_class, "train_fraction": cfg.train_fraction,
        "master_seed": cfg.master_seed, "n_atoms": n_atoms,
        "lattice_spacing_um": cfg.lattice_spacing_um,
        "c6_mhz_um6": cfg.c6_mhz_um6, "rabi_mhz": cfg.rabi_mhz,
        "detuning_min_mhz": cfg.detuning_min_mhz,
        "detuning_max_mhz": cfg.detuning_max_mhz,
        "local_modulation": cfg.local_modulation,
        "total_time_us": cfg.total_time_us,
        "num_snapshots": cfg.num_snapshots,
        "target_size": cfg.target_size, "patch_width": cfg.patch_width,
        "retained_dim": cfg.retained_dim,
        "variance_threshold": cfg.variance_threshold,
        "baseline_input": cfg.baseline_input,
    }
    return hashlib.sha256(
        json.dumps(relevant, sort_keys=True).encode()).hexdigest()[:16]


def embed_dataset(cfg: ExperimentConfig, encoder: ImageEncoder,
                  train_imgs, test_imgs, n_atoms: int,
                  cache_dir: Path | None = None, progress=None):
    """Hybrid embeddings and baseline features for both splits, cached.

    The cache key covers the dataset bytes, subset seed and every
    upstream parameter, so stale entries can never be reused.
    """
    if cache_dir is not None:
        slot = Path(cache_dir) / f"{cfg.dataset_name}-{_embedding_cache_key(cfg, n_atoms)}"
        files = {name: slot / f"{name}.qrcemb"
                 for name in ("train_hybrid", "test_hybrid",
                              "train_base", "test_base")}
        if all(p.exists() for p in files.values()):
            if progress:
                progress(f"[N={n_atoms}] embedding cache hit: {slot}")
            return tuple(containers.read_matrix(files[k])
                         for k in ("train_hybrid", "test_hybrid",
                                   "train_base", "test_base"))
    if progress:
        progress(f"[N={n_atoms}] embedding {len(train_imgs)}+{len(test_imgs)} images")
    train_emb = encoder.embed_batch(train_imgs, n_jobs=cfg.n_jobs)
    test_emb = encoder.embed_batch(test_imgs, n_jobs=cfg.n_jobs)
    if cfg.baseline_input == "pixels":
        train_base = np.stack([encoder.pixel_features(i) for i in train_imgs])
        test_base = np.stack([encoder.pixel_features(i) for i in test_imgs])
    elif cfg.baseline_input == "projections":
        train_base = np.stack([encoder.projection_features(i) for i in train_imgs])
        test_base = np.stack([encoder.projection_features(i) for i in test_imgs])
    else:
        train_base = encoder.baseline_batch(train_imgs)
        test_base = encoder.baseline_batch(test_imgs)
    if cache_dir is not None:
        slot.mkdir(parents=True, exist_ok=True)
        containers.write_matrix(files["train_hybrid"], train_emb)
        containers.write_matrix(files["test_hybrid"], test_emb)
        containers.write_matrix(files["train_base"], train_base)
        containers.write_matrix(files["test_base"], test_base)
        containers.save_pca(slot / "pca.qrcpca", encoder.pca)
    return train_emb, test_emb, train_base, test_base


def train_readout(features: np.ndarray, labels: np.ndarray, n_classes: int,
                  cfg: ExperimentConfig, seed: int):
    tconf = mlp.TrainConfig(learning_rate=cfg.learning_rate,
                            batch_size=cfg.batch_size,
                            max_epochs=cfg.max_epochs, rng_seed=seed)
    params = mlp.init_params(features.shape[1], n_classes, seed=seed)
    return mlp.train(params, features, labels, tconf)


def _accuracy(params: mlp.MlpParams, feats: np.ndarray,
              labels: np.ndarray) -> float:
    return float(np.mean(mlp.predict(params, feats) == labels))


def _attack_stage(cfg: ExperimentConfig, encoder: ImageEncoder,
                  base_params, hyb_params, eval_imgs, eval_labels,
                  test_emb, report: RobustnessReport, n_atoms: int,
                  attack_seed: int, progress=None) -> None:
    eps_grid = cfg.eps_grid()
    base_model = MlpPixelModel(encoder, base_params,
                               input_mode=cfg.baseline_input)
    hyb_model = HybridPixelModel(encoder, hyb_params,
                                 gradient_mode=cfg.hybrid_gradient_mode)
    emb_model = ReadoutModel(hyb_params, domain=(-1.0, 1.0))
    hyb_views = None            # anchored per image, shared across eps/families
    path = GradientPath(mode="chained-hybrid")
    for family in cfg.families():
        curves = {MODEL_BASELINE: [], MODEL_HYBRID: []}
        if cfg.include_embedding_attack:
            curves[MODEL_HYBRID_EMB] = []
        for eps in eps_grid:
            spec = AttackSpec(family=family, epsilon=float(eps),
                              steps=cfg.attack_steps,
                              step_size=cfg.attack_step_size,
                              random_start=cfg.pgd_random_start,
                              rng_seed=attack_seed,
                              overshoot=cfg.deepfool_overshoot)
            if eps > 0 and hyb_views is None:
                hyb_views = [hyb_model.attack_view(img) for img in eval_imgs]
            hits = {name: 0 for name in curves}
            for i, (img, label) in enumerate(zip(eval_imgs, eval_labels)):
                adv_b = craft(base_model, img, int(label), spec)
                hits[MODEL_BASELINE] += base_model.predict(adv_b) == label
                view = hyb_model if eps == 0 else hyb_views[i]
                adv_h = attack_hybrid(view, img, int(label), spec, path)
                hits[MODEL_HYBRID] += hyb_model.predict(adv_h) == label
                if cfg.include_embedding_attack:
                    adv_e = craft(emb_model, test_emb[i], int(label), spec)
                    pred = int(np.argmax(mlp.forward(hyb_params, adv_e)))
                    hits[MODEL_HYBRID_EMB] += pred == label
            for name in curves:
                curves[name].append(hits[name] / len(eval_imgs))
            if progress:
                progress(f"[N={n_atoms}] {family} eps={eps:.3f} "
                         + " ".join(f"{k}={curves[k][-1]:.3f}" for k in curves))
        for name, accs in curves.items():
            report.add_curve(name, family, n_atoms, accs)


def run_experiment(cfg: ExperimentConfig, out_dir=None,
                   progress=None) -> RobustnessReport:
    """Full sweep: embeddings, readouts and attack curves for every N.

    Any stage failure is re-raised as :class:`StageError` with stage
    attribution; partial results collected so far are flushed to
    ``partial_report.json`` under ``out_dir`` when one is given.
    """
    cfg.validate()
    started = time.perf_counter()
    seeds = derive_seeds(cfg.master_seed)
    report = RobustnessReport(dataset=cfg.dataset_name,
                              config_echo=cfg.to_dict(),
                              config_hash=config_hash(cfg),
                              eps_grid=cfg.eps_grid(),
                              n_sweep=cfg.sweep())
    cache_dir = resolve_cache_dir(cfg, out_dir) if out_dir or cfg.cache_dir \
        or os.environ.get("QRC_CACHE_DIR") else None

    def run_stage(stage, fn, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except Exception as exc:
            if out_dir is not None:
                report.runtime_seconds = time.perf_counter() - started
                Path(out_dir).mkdir(parents=True, exist_ok=True)
                (Path(out_dir) / "partial_report.json").write_text(
                    json.dumps(report.to_dict(), indent=1))
            raise StageError(stage, exc) from exc

    train_imgs, train_labels, test_imgs, test_labels = run_stage(
        "dataset", prepare_dataset, cfg)
    n_classes = int(np.max(train_labels)) + 1

    for n_atoms in cfg.sweep():
        rconf = cfg.reservoir_config(n_atoms)
        encoder = run_stage(
            f"encoder[N={n_atoms}]", fit_encoder, train_imgs, rconf,
            target_size=cfg.target_size, patch_width=cfg.patch_width,
            retained_dim=cfg.retained_dim_for(n_atoms),
            variance_threshold=cfg.variance_threshold or None)
        train_emb, test_emb, train_base, test_base = run_stage(
            f"embed[N={n_atoms}]", embed_dataset, cfg, encoder,
            train_imgs, test_imgs, n_atoms, cache_dir, progress)
        hyb_params, _ = run_stage(
            f"train-hybrid[N={n_atoms}]", train_readout, train_emb,
            train_labels, n_classes, cfg, seeds["model"])
        base_params, _ = run_stage(
            f"train-baseline[N={n_atoms}]", train_readout, train_base,
            train_labels, n_classes, cfg, seeds["model"])
        report.add_clean(MODEL_HYBRID, n_atoms,
                         _accuracy(hyb_params, test_emb, test_labels))
        report.add_clean(MODEL_BASELINE, n_atoms,
                         _accuracy(base_params, test_base, test_labels))
        if progress:
            progress(f"[N={n_atoms}] clean: "
                     f"hybrid={report.clean(MODEL_HYBRID, n_atoms):.3f} "
                     f"baseline={report.clean(MODEL_BASELINE, n_atoms):.3f}")
        n_eval = cfg.attack_samples or len(test_imgs)
        run_stage(
            f"attacks[N={n_atoms}]", _attack_stage, cfg, encoder,
            base_params, hyb_params, test_imgs[:n_eval], test_labels[:n_eval],
            test_emb[:n_eval], report, n_atoms, seeds["attack"], progress)

    report.summarize_delta_acc()
    report.runtime_seconds = time.perf_counter() - started
    return report


# ---------------------------------------------------------------------------
# emission

def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def emit_report(report: RobustnessReport, out_dir,
                formats: tuple[str, ...] = ("json", "csv")) -> list[Path]:
    """Write report.json (full echo) and/or report.csv (plot-ready rows).

    CSV columns: dataset, model, attack, n_atoms, epsilon, accuracy.
    Row order is fixed (curve insertion order, then the epsilon grid),
    and floats carry 17 significant digits, so identical experiments
    emit byte-identical CSV.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if "json" in formats:
        path = out / "report.json"
        path.write_text(json.dumps(report.to_dict(), indent=1,
                                   sort_keys=True) + "\n")
        written.append(path)
    if "csv" in formats:
        path = out / "report.csv"
        lines = ["dataset,model,attack,n_atoms,epsilon,accuracy"]
        for entry in report.curves:
            for eps, acc in zip(report.eps_grid, entry["accuracies"]):
                lines.append(",".join([
                    report.dataset, entry["model"], entry["attack"],
                    str(entry["n_atoms"]), _fmt(eps), _fmt(acc)]))
        path.write_text("\n".join(lines) + "\n")
        written.append(path)
    return written
