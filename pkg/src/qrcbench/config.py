"""Experiment configuration: defaults, flat key=value files, hashing.

The config file is plain text, one ``key = value`` pair per line, with
``#`` comments. Keys mirror the physical-parameter table of the
simulator (frequencies are written in plain MHz as they appear there;
the loader multiplies by 2*pi to get the angular-frequency convention
used internally) plus harness keys for the dataset, readout training,
attack schedule and sweep. Every key has a default, so an empty file is
a valid full experiment.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .reservoir import TWO_PI, ReservoirConfig

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "config_hash"]


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


@dataclass
class ExperimentConfig:
    # dataset
    dataset_name: str = "mnist"
    images_path: str = "data/mnist/mnist-images-idx3-ubyte.gz"
    labels_path: str = "data/mnist/mnist-labels-idx1-ubyte.gz"
    images_sha256: str = ""            # optional integrity pin
    labels_sha256: str = ""
    per_class: int = 100
    train_fraction: float = 0.7
    # reservoir (plain-MHz numerals; converted to angular units internally)
    n_atoms: int = 8
    lattice_spacing_um: float = 10.0
    c6_mhz_um6: float = 2000.0
    rabi_mhz: float = 5.0
    detuning_min_mhz: float = 0.0
    detuning_max_mhz: float = 10.0
    local_modulation: float = 0.15
    total_time_us: float = 3.0
    num_snapshots: int = 6
    # encoder
    target_size: int = 16
    patch_width: int = 4
    retained_dim: int = 0              # 0 -> delta = n_atoms
    variance_threshold: float = 0.0    # 0 -> select by retained_dim
    # readout training
    learning_rate: float = 1e-3
    batch_size: int = 64
    max_epochs: int = 500
    baseline_input: str = "projections"  # projections | normalized | pixels
    # attacks
    attack_families: str = "fgsm,pgd,deepfool"
    eps_start: float = 0.0
    eps_stop: float = 0.1
    eps_count: int = 11
    attack_steps: int = 100
    attack_step_size: float = 1e-3
    pgd_random_start: bool = False
    deepfool_overshoot: float = 1.02
    hybrid_gradient_mode: str = "linearized"
    attack_samples: int = 0            # 0 -> whole test split
    include_embedding_attack: bool = True
    # sweep and reproducibility
    n_sweep: str = "2,4,6,8"
    master_seed: int = 0
    n_jobs: int = 1
    cache_dir: str = ""                # "" -> <out_dir>/cache; env var wins

    def validate(self) -> None:
        if self.n_atoms < 1:
            raise ConfigError("n_atoms must be >= 1")
        if self.eps_count < 1:
            raise ConfigError("eps_count must be >= 1")
        if self.eps_stop < self.eps_start or self.eps_start < 0:
            raise ConfigError("need 0 <= eps_start <= eps_stop")
        if self.target_size % self.patch_width != 0:
            raise ConfigError("target_size must be divisible by patch_width")
        if self.hybrid_gradient_mode not in ("exact", "frozen", "linearized"):
            raise ConfigError(
                f"unknown hybrid_gradient_mode {self.hybrid_gradient_mode!r}")
        if self.baseline_input not in ("projections", "normalized", "pixels"):
            raise ConfigError(f"unknown baseline_input {self.baseline_input!r}")
        for fam in self.families():
            if fam not in ("fgsm", "pgd", "deepfool"):
                raise ConfigError(f"unknown attack family {fam!r}")
        if not self.sweep():
            raise ConfigError("n_sweep must list at least one atom count")
        if not 0 <= self.variance_threshold < 1:
            raise ConfigError("variance_threshold must lie in [0, 1)")

    # -- derived views -------------------------------------------------------

    def families(self) -> list[str]:
        return [f.strip() for f in self.attack_families.split(",") if f.strip()]

    def sweep(self) -> list[int]:
        try:
            return [int(tok) for tok in self.n_sweep.split(",") if tok.strip()]
        except ValueError as exc:
            raise ConfigError(f"bad n_sweep entry: {exc}") from exc

    def eps_grid(self) -> list[float]:
        if self.eps_count == 1:
            return [self.eps_start]
        return list(np.linspace(self.eps_start, self.eps_stop, self.eps_count))

    def reservoir_config(self, n_atoms: int | None = None) -> ReservoirConfig:
        return ReservoirConfig(
            n_atoms=self.n_atoms if n_atoms is None else n_atoms,
            lattice_spacing=self.lattice_spacing_um,
            c6_coefficient=TWO_PI * self.c6_mhz_um6,
            rabi_frequency=TWO_PI * self.rabi_mhz,
            detuning_min=TWO_PI * self.detuning_min_mhz,
            detuning_max=TWO_PI * self.detuning_max_mhz,
            local_modulation=self.local_modulation,
            total_time=self.total_time_us,
            num_snapshots=self.num_snapshots,
        )

    def retained_dim_for(self, n_atoms: int) -> int | None:
        """Explicit delta, or None when threshold-driven selection is on."""
        if self.variance_threshold > 0:
            return None
        if self.retained_dim > 0:
            return self.retained_dim
        return min(n_atoms, self.patch_width ** 2)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_BOOL_WORDS = {"true": True, "yes": True, "1": True, "on": True,
               "false": False, "no": False, "0": False, "off": False}


def _coerce(name: str, text: str, kind) -> object:
    try:
        if kind is bool:
            return _BOOL_WORDS[text.strip().lower()]
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
        return text
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"bad value for {name}: {text!r}") from exc


def load_config(path=None, overrides: dict | None = None) -> ExperimentConfig:
    """Parse a key=value config file; unknown keys are rejected."""
    values: dict[str, object] = {}
    fields = {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}
    types = {name: type(getattr(ExperimentConfig(), name)) for name in fields}
    if path is not None:
        text = Path(path).read_text()
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, val = (part.strip() for part in line.split("=", 1))
            if key not in fields:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = _coerce(key, val, types[key])
    for key, val in (overrides or {}).items():
        if key not in fields:
            raise ConfigError(f"unknown config key {key!r}")
        values[key] = val if not isinstance(val, str) else _coerce(
            key, val, types[key])
    cfg = ExperimentConfig(**values)
    cfg.validate()
    return cfg


def config_hash(cfg: ExperimentConfig, extra: dict | None = None) -> str:
    """sha256 over the canonical JSON form of the configuration."""
    payload = cfg.to_dict()
    if extra:
        payload = {**payload, **extra}
    blob = json.dumps(payload, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()
