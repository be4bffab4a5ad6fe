"""qrcbench: Rydberg-chain reservoir simulator + adversarial robustness bench.

Layers:

* :mod:`qrcbench.reservoir` - Hamiltonian assembly, state evolution and
  the observable feature map of the atom chain.
* :mod:`qrcbench.encoding` - image -> detuning encoding (downsample,
  patches, PCA, min-max map) and the image-level embedding.
* :mod:`qrcbench.mlp` - the trainable classical readout.
* :mod:`qrcbench.attacks` / :mod:`qrcbench.models` - white-box attacks
  and the pixel-space model adapters they act on.
* :mod:`qrcbench.data` / :mod:`qrcbench.containers` - IDX ingestion and
  binary persistence.
* :mod:`qrcbench.harness` / :mod:`qrcbench.config` / :mod:`qrcbench.cli`
  - experiment orchestration, configuration and the command line.
"""

from .reservoir import (
    ReservoirConfig,
    HamiltonianOperator,
    build_hamiltonian,
    apply_hamiltonian,
    evolve,
    measure_observables,
    reservoir_embed,
    reservoir_jacobian,
)
from .encoding import (
    downsample,
    extract_patches,
    fit_pca,
    project,
    map_to_detunings,
    PcaModel,
    DetuningMap,
    ImageEncoder,
    fit_encoder,
)
from .mlp import MlpParams, TrainConfig, init_params, forward, train
from .attacks import AttackSpec, GradientPath, fgsm, pgd, deepfool, craft, attack_hybrid
from .models import MlpPixelModel, HybridPixelModel, ReadoutModel
from .data import DatasetSpec, balanced_subset, load_labeled_images
from .config import ExperimentConfig, load_config
from .harness import RobustnessReport, run_experiment, emit_report

__version__ = "0.1.0"
