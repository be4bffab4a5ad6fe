"""Shared fixtures and independent oracles for the test suite.

The dense Hamiltonian oracle here is built from explicit Kronecker
products of single-site operators, a completely different construction
from the bit-table path inside the package, so agreement between the
two is a real cross-check. Evolution oracles go through
scipy.linalg.expm (Pade + scaling), independent of both the spectral
and the Lanczos propagators under test.
"""

import gzip
import struct
from pathlib import Path

import numpy as np
import pytest
import scipy.linalg as sla

from qrcbench.reservoir import ReservoirConfig

DATA_DIR = Path(__file__).resolve().parent.parent / "data" / "mnist"
MNIST_IMAGES = DATA_DIR / "mnist-images-idx3-ubyte.gz"
MNIST_LABELS = DATA_DIR / "mnist-labels-idx1-ubyte.gz"

SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]])
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]])
NUMBER_OP = np.array([[0.0, 0.0], [0.0, 1.0]])   # |r><r| with |g> = (1, 0)


def site_operator(op: np.ndarray, atom: int, n_atoms: int) -> np.ndarray:
    """Embed a single-site operator at the given atom (little-endian bits)."""
    left = np.eye(2 ** (n_atoms - 1 - atom))
    right = np.eye(2 ** atom)
    return np.kron(np.kron(left, op), right)


def kron_hamiltonian(config: ReservoirConfig, detunings: np.ndarray) -> np.ndarray:
    """Dense H from first principles (Kronecker products)."""
    n = config.n_atoms
    alphas = config.modulation_vector()
    pos = config.positions()
    ham = np.zeros((2 ** n, 2 ** n))
    for i in range(n):
        ham += (config.rabi_frequency / 2.0) * site_operator(SIGMA_X, i, n)
        ham -= alphas[i] * detunings[i] * site_operator(NUMBER_OP, i, n)
    for i in range(n):
        for j in range(i + 1, n):
            v_ij = config.c6_coefficient / abs(pos[i] - pos[j]) ** 6
            ham += v_ij * (site_operator(NUMBER_OP, i, n)
                           @ site_operator(NUMBER_OP, j, n))
    return ham


def expm_snapshots(ham: np.ndarray, psi0: np.ndarray,
                   times: np.ndarray) -> list[np.ndarray]:
    """exp(-i H t) |psi0> at each time via scipy's dense expm."""
    return [sla.expm(-1j * ham * t) @ psi0 for t in times]


def random_config(rng: np.random.Generator, n_atoms: int) -> ReservoirConfig:
    """A physically plausible random operating point."""
    return ReservoirConfig(
        n_atoms=n_atoms,
        lattice_spacing=rng.uniform(6.0, 14.0),
        c6_coefficient=rng.uniform(0.0, 4000.0) * 2 * np.pi,
        rabi_frequency=rng.uniform(0.0, 8.0) * 2 * np.pi,
        detuning_min=0.0,
        detuning_max=rng.uniform(2.0, 12.0) * 2 * np.pi,
        local_modulation=rng.uniform(0.0, 1.0),
        total_time=rng.uniform(0.5, 3.0),
        num_snapshots=int(rng.integers(1, 7)),
    )


def write_idx_fixture(tmpdir: Path, images: np.ndarray, labels: np.ndarray,
                      gzipped: bool = True) -> tuple[Path, Path]:
    """Write a small IDX pair with struct.pack, independent of the parser."""
    images = np.asarray(images)
    n, rows, cols = images.shape
    img_blob = struct.pack(">IIII", 0x00000803, n, rows, cols)
    img_blob += images.astype(np.uint8).tobytes()
    lab_blob = struct.pack(">II", 0x00000801, n)
    lab_blob += np.asarray(labels).astype(np.uint8).tobytes()
    img_path = tmpdir / ("imgs.idx.gz" if gzipped else "imgs.idx")
    lab_path = tmpdir / ("labs.idx.gz" if gzipped else "labs.idx")
    if gzipped:
        img_path.write_bytes(gzip.compress(img_blob))
        lab_path.write_bytes(gzip.compress(lab_blob))
    else:
        img_path.write_bytes(img_blob)
        lab_path.write_bytes(lab_blob)
    return img_path, lab_path


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def mnist():
    from qrcbench.data import load_labeled_images
    if not MNIST_IMAGES.exists():
        pytest.fail(f"bundled MNIST data missing at {DATA_DIR}")
    return load_labeled_images(MNIST_IMAGES, MNIST_LABELS)
