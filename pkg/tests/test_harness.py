"""Harness and CLI tests on a tiny synthetic dataset."""

import json

import numpy as np
import pytest

from qrcbench import cli
from qrcbench.config import ConfigError, ExperimentConfig, config_hash, load_config
from qrcbench.harness import (
    MODEL_BASELINE,
    MODEL_HYBRID,
    RobustnessReport,
    StageError,
    derive_seeds,
    emit_report,
    run_experiment,
)

from conftest import write_idx_fixture


def synthetic_dataset(tmp_path, rng, classes=3, per_class=8, side=8):
    """Class-dependent blobs: learnable but fast."""
    images, labels = [], []
    for cls in range(classes):
        for _ in range(per_class):
            img = rng.random((side, side)) * 0.3
            r0 = (cls * side // classes)
            img[r0:r0 + side // classes, :] += 0.6
            images.append(np.clip(img, 0, 1))
            labels.append(cls)
    order = rng.permutation(len(images))
    pixels = (np.asarray(images)[order] * 255).astype(np.uint8)
    return write_idx_fixture(tmp_path, pixels, np.asarray(labels)[order])


def tiny_config(tmp_path, rng, **overrides) -> ExperimentConfig:
    img_path, lab_path = synthetic_dataset(tmp_path, rng)
    values = dict(
        dataset_name="synthetic",
        images_path=str(img_path), labels_path=str(lab_path),
        per_class=6, train_fraction=0.7,
        n_atoms=2, total_time_us=1.0, num_snapshots=2,
        target_size=4, patch_width=2, retained_dim=2,
        max_epochs=8, batch_size=8,
        attack_families="fgsm,pgd", eps_start=0.0, eps_stop=0.05,
        eps_count=2, attack_steps=4, attack_step_size=5e-3,
        hybrid_gradient_mode="linearized",
        attack_samples=4, include_embedding_attack=True,
        n_sweep="2", master_seed=3,
    )
    values.update(overrides)
    return ExperimentConfig(**values)


# ---------------------------------------------------------------------------
# config machinery

def test_config_file_parsing(tmp_path):
    path = tmp_path / "exp.cfg"
    path.write_text("""
# demo config
n_atoms = 4
rabi_mhz = 2.5        # plain MHz, converted on load
attack_families = fgsm
pgd_random_start = true
""")
    cfg = load_config(path)
    assert cfg.n_atoms == 4
    assert cfg.rabi_mhz == 2.5
    assert cfg.reservoir_config().rabi_frequency == pytest.approx(
        2 * np.pi * 2.5)
    assert cfg.pgd_random_start is True
    assert cfg.families() == ["fgsm"]


def test_config_rejects_unknown_keys(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("not_a_key = 1\n")
    with pytest.raises(ConfigError, match="not_a_key"):
        load_config(path)


def test_config_rejects_bad_values(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("n_atoms = banana\n")
    with pytest.raises(ConfigError):
        load_config(path)


def test_config_validation_errors():
    with pytest.raises(ConfigError):
        load_config(None, {"hybrid_gradient_mode": "telepathy"})
    with pytest.raises(ConfigError):
        load_config(None, {"attack_families": "fgsm,unknown"})
    with pytest.raises(ConfigError):
        load_config(None, {"target_size": "15"})   # not divisible by 4


def test_config_hash_sensitivity():
    a = ExperimentConfig()
    b = ExperimentConfig(master_seed=1)
    assert config_hash(a) == config_hash(ExperimentConfig())
    assert config_hash(a) != config_hash(b)


def test_eps_grid_shape():
    cfg = ExperimentConfig(eps_count=11)
    grid = cfg.eps_grid()
    assert len(grid) == 11
    assert grid[0] == 0.0 and grid[-1] == pytest.approx(0.1)
    single = ExperimentConfig(eps_count=1, eps_stop=0.0)
    assert single.eps_grid() == [0.0]


def test_seed_derivation_stable():
    seeds = derive_seeds(123)
    assert seeds == derive_seeds(123)
    assert set(seeds) == {"subset", "model", "attack"}
    assert seeds != derive_seeds(124)


# ---------------------------------------------------------------------------
# report mechanics

def make_report():
    report = RobustnessReport(dataset="d", config_echo={}, config_hash="h",
                              eps_grid=[0.0, 0.1], n_sweep=[2])
    return report


def test_delta_acc_recomputable_and_exact():
    report = make_report()
    report.add_curve(MODEL_BASELINE, "fgsm", 2, [0.9, 0.5])
    report.add_curve(MODEL_HYBRID, "fgsm", 2, [0.95, 0.65])
    report.summarize_delta_acc()
    entry = report.delta_acc[0]
    expected = np.mean([0.95 - 0.9, 0.65 - 0.5])
    assert abs(entry["value"] - expected) <= 1e-15


def test_identical_models_zero_delta():
    report = make_report()
    curve = [0.8, 0.4]
    report.add_curve(MODEL_BASELINE, "pgd", 2, curve)
    report.add_curve(MODEL_HYBRID, "pgd", 2, curve)
    report.summarize_delta_acc()
    assert report.delta_acc[0]["value"] == 0.0


def test_single_point_grid_delta_is_clean_difference():
    report = RobustnessReport(dataset="d", config_echo={}, config_hash="h",
                              eps_grid=[0.0], n_sweep=[2])
    report.add_curve(MODEL_BASELINE, "fgsm", 2, [0.7])
    report.add_curve(MODEL_HYBRID, "fgsm", 2, [0.8])
    report.summarize_delta_acc()
    assert report.delta_acc[0]["value"] == pytest.approx(0.1, abs=1e-15)


def test_report_json_roundtrip(tmp_path):
    report = make_report()
    report.add_clean(MODEL_HYBRID, 2, 0.9)
    report.add_curve(MODEL_HYBRID, "fgsm", 2, [0.9, 0.6])
    report.add_curve(MODEL_BASELINE, "fgsm", 2, [0.85, 0.5])
    report.summarize_delta_acc()
    emit_report(report, tmp_path)
    blob = json.loads((tmp_path / "report.json").read_text())
    back = RobustnessReport.from_dict(blob)
    assert back.curves == report.curves
    assert back.delta_acc == report.delta_acc


def test_empty_report_emits_header_only_csv(tmp_path):
    report = make_report()
    emit_report(report, tmp_path, formats=("csv",))
    lines = (tmp_path / "report.csv").read_text().splitlines()
    assert lines == ["dataset,model,attack,n_atoms,epsilon,accuracy"]


def test_csv_values_have_full_precision(tmp_path):
    report = make_report()
    report.add_curve(MODEL_HYBRID, "fgsm", 2, [1 / 3, 2 / 3])
    emit_report(report, tmp_path, formats=("csv",))
    text = (tmp_path / "report.csv").read_text()
    assert "0.33333333333333331" in text


# ---------------------------------------------------------------------------
# full runs on the synthetic dataset

@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    rng = np.random.default_rng(0)
    tmp_path = tmp_path_factory.mktemp("tiny")
    cfg = tiny_config(tmp_path, rng)
    report = run_experiment(cfg)
    return cfg, report


def test_curves_cover_model_attack_grid(tiny_run):
    cfg, report = tiny_run
    n_models = 3                      # baseline, hybrid, hybrid@embedding
    assert len(report.curves) == n_models * len(cfg.families())
    for entry in report.curves:
        assert len(entry["accuracies"]) == cfg.eps_count


def test_zero_budget_accuracy_equals_clean(tiny_run):
    cfg, report = tiny_run
    for model in (MODEL_BASELINE, MODEL_HYBRID):
        clean = report.clean(model, 2)
        for family in cfg.families():
            assert report.curve(model, family, 2)[0] == pytest.approx(
                clean, abs=1e-15)


def test_csv_row_count_is_cartesian_product(tiny_run, tmp_path):
    cfg, report = tiny_run
    emit_report(report, tmp_path, formats=("csv",))
    rows = (tmp_path / "report.csv").read_text().splitlines()[1:]
    assert len(rows) == 3 * len(cfg.families()) * cfg.eps_count * 1


def test_repeat_run_byte_identical_csv(tmp_path, rng):
    cfg = tiny_config(tmp_path, rng, attack_families="fgsm")
    r1 = run_experiment(cfg)
    r2 = run_experiment(cfg)
    emit_report(r1, tmp_path / "a", formats=("csv",))
    emit_report(r2, tmp_path / "b", formats=("csv",))
    assert (tmp_path / "a/report.csv").read_bytes() == \
        (tmp_path / "b/report.csv").read_bytes()


def test_embedding_cache_reused(tmp_path, rng):
    cfg = tiny_config(tmp_path, rng, attack_families="fgsm",
                      cache_dir=str(tmp_path / "cache"))
    r1 = run_experiment(cfg)
    cache_files = list((tmp_path / "cache").rglob("*.qrcemb"))
    assert cache_files
    mtimes = {p: p.stat().st_mtime_ns for p in cache_files}
    r2 = run_experiment(cfg)
    assert {p: p.stat().st_mtime_ns for p in cache_files} == mtimes
    assert r1.curves == r2.curves


def test_stage_error_attribution_and_partial_flush(tmp_path, rng):
    cfg = tiny_config(tmp_path, rng, images_path=str(tmp_path / "nope.idx"))
    with pytest.raises(StageError, match="dataset"):
        run_experiment(cfg, out_dir=tmp_path / "out")
    assert (tmp_path / "out" / "partial_report.json").exists()


def test_pixel_baseline_secondary_configuration(tmp_path, rng):
    cfg = tiny_config(tmp_path, rng, attack_families="fgsm",
                      baseline_input="pixels")
    report = run_experiment(cfg)
    # the pixel baseline sees the 4x4 downsample: richer than 2 features
    assert report.clean(MODEL_BASELINE, 2) >= 0.0
    assert report.curve(MODEL_BASELINE, "fgsm", 2)[0] == pytest.approx(
        report.clean(MODEL_BASELINE, 2), abs=1e-15)


# ---------------------------------------------------------------------------
# CLI

def write_config_file(tmp_path, cfg: ExperimentConfig) -> str:
    lines = []
    for key, val in cfg.to_dict().items():
        if isinstance(val, bool):
            val = "true" if val else "false"
        lines.append(f"{key} = {val}")
    path = tmp_path / "exp.cfg"
    path.write_text("\n".join(lines))
    return str(path)


def test_cli_sweep_happy_path(tmp_path, rng):
    cfg = tiny_config(tmp_path, rng, attack_families="fgsm")
    cfg_path = write_config_file(tmp_path, cfg)
    code = cli.main(["sweep", "--config", cfg_path,
                     "--output", str(tmp_path / "out")])
    assert code == 0
    assert (tmp_path / "out" / "report.csv").exists()
    assert (tmp_path / "out" / "report.json").exists()


def test_cli_config_error_exit_code(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("mystery_knob = 7\n")
    code = cli.main(["sweep", "--config", str(bad),
                     "--output", str(tmp_path / "out")])
    assert code == 2


def test_cli_data_error_exit_code(tmp_path, rng):
    cfg = tiny_config(tmp_path, rng, images_path=str(tmp_path / "missing.gz"))
    cfg_path = write_config_file(tmp_path, cfg)
    code = cli.main(["sweep", "--config", cfg_path,
                     "--output", str(tmp_path / "out")])
    assert code == 3


def test_cli_embed_train_attack_report_chain(tmp_path, rng):
    cfg = tiny_config(tmp_path, rng, attack_families="fgsm", eps_count=2)
    cfg_path = write_config_file(tmp_path, cfg)
    cache = tmp_path / "cachecli"
    assert cli.main(["embed", "--config", cfg_path,
                     "--output", str(cache)]) == 0
    assert cli.main(["train", "--config", cfg_path, "--cache", str(cache),
                     "--model", "hybrid",
                     "--output", str(tmp_path / "hyb.qrcmlp")]) == 0
    assert cli.main(["train", "--config", cfg_path, "--cache", str(cache),
                     "--model", "baseline",
                     "--output", str(tmp_path / "base.qrcmlp")]) == 0
    out = tmp_path / "adv"
    assert cli.main(["attack", "--config", cfg_path,
                     "--hybrid-checkpoint", str(tmp_path / "hyb.qrcmlp"),
                     "--baseline-checkpoint", str(tmp_path / "base.qrcmlp"),
                     "--output", str(out)]) == 0
    assert (out / "curves.json").exists()
    advs = list(out.glob("*.qrcadv"))
    assert advs and all(p.with_suffix(p.suffix + ".json").exists()
                        for p in advs)


def test_cli_report_from_sweep_json(tmp_path, rng):
    cfg = tiny_config(tmp_path, rng, attack_families="fgsm")
    report = run_experiment(cfg)
    emit_report(report, tmp_path / "one", formats=("json",))
    code = cli.main(["report", "--input", str(tmp_path / "one/report.json"),
                     "--output", str(tmp_path / "two"),
                     "--formats", "csv"])
    assert code == 0
    assert (tmp_path / "two/report.csv").exists()


def test_cache_dir_env_override(tmp_path, rng, monkeypatch):
    cachedir = tmp_path / "envcache"
    monkeypatch.setenv("QRC_CACHE_DIR", str(cachedir))
    cfg = tiny_config(tmp_path, rng, attack_families="fgsm")
    run_experiment(cfg, out_dir=tmp_path / "out")
    assert list(cachedir.rglob("*.qrcemb"))
