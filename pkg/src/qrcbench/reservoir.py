"""Rydberg-chain reservoir: Hamiltonian assembly, Schrodinger evolution, observable read-out.

Conventions (used throughout the package):

* All frequencies are stored in angular units, rad/us (i.e. the 2*pi is
  already included: a "2*pi x 5 MHz" Rabi drive is the number 2*pi*5).
  Times are in microseconds, so accumulated phase = rate * time directly.
* Basis states of the N-atom chain are indexed by integers b in
  [0, 2^N); bit i of b (little-endian) is the state of atom i, with the
  ground state |g> = bit 0 and the Rydberg state |r> = bit 1.
* sigma^z = |g><g| - |r><r|, so a basis state has <sigma_i^z> = +1 when
  bit i is 0. The Rydberg occupation is n_i = bit_i(b).

The chain Hamiltonian for one detuning vector Delta is

    H = sum_i (Omega/2) sigma_i^x  -  sum_i alpha_i Delta_i n_i
        + sum_{i<j} V_ij n_i n_j,        V_ij = C6 / |r_i - r_j|^6,

which is real symmetric in this basis: a diagonal (detuning plus
interaction) part plus the bit-flip structure of the transverse drive.
Because detunings are static and the drive amplitude constant, H is
time independent for each sample and the propagator is exp(-i H t).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

TWO_PI = 2.0 * np.pi

__all__ = [
    "ReservoirConfig",
    "HamiltonianOperator",
    "build_hamiltonian",
    "apply_hamiltonian",
    "evolve",
    "measure_observables",
    "reservoir_embed",
    "reservoir_jacobian",
    "observable_pairs",
    "plus_state",
    "EvolutionError",
]


class EvolutionError(RuntimeError):
    """Raised when the propagator cannot reach its accuracy target."""


@dataclass
class ReservoirConfig:
    """Physical parameters of the atom chain and measurement schedule.

    Defaults are the reference operating point of the simulator:
    N = 8 atoms at 10 um spacing, C6 = 2*pi*2000 MHz um^6,
    Omega = 2*pi*5 MHz, detunings in [0, 2*pi*10] MHz, uniform local
    modulation 0.15, evolution time 3 us read out at M = 6 snapshots,
    initial state |+>^N.
    """

    n_atoms: int = 8
    lattice_spacing: float = 10.0                  # um
    c6_coefficient: float = TWO_PI * 2000.0        # rad/us * um^6
    rabi_frequency: float = TWO_PI * 5.0           # rad/us
    detuning_min: float = 0.0                      # rad/us
    detuning_max: float = TWO_PI * 10.0            # rad/us
    local_modulation: float | np.ndarray = 0.15    # alpha_i in [0, 1]
    total_time: float = 3.0                        # us
    num_snapshots: int = 6
    initial_state: np.ndarray | None = None        # default |+>^N

    def __post_init__(self):
        if self.n_atoms < 1:
            raise ValueError(f"n_atoms must be >= 1, got {self.n_atoms}")
        if self.lattice_spacing <= 0:
            raise ValueError("lattice_spacing must be positive")
        if self.detuning_max < self.detuning_min:
            raise ValueError("detuning_max must be >= detuning_min")
        if self.num_snapshots < 1:
            raise ValueError("num_snapshots must be >= 1")
        if self.total_time <= 0:
            raise ValueError("total_time must be positive")
        alphas = self.modulation_vector()
        if alphas.shape != (self.n_atoms,):
            raise ValueError("local_modulation must be scalar or length n_atoms")
        if np.any(alphas < 0) or np.any(alphas > 1):
            raise ValueError("local_modulation values must lie in [0, 1]")

    def modulation_vector(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.local_modulation, float),
                               (self.n_atoms,)).copy()

    def positions(self) -> np.ndarray:
        """1-D chain site positions r_i = i * d (open boundary)."""
        return np.arange(self.n_atoms) * self.lattice_spacing

    def snapshot_times(self) -> np.ndarray:
        """Measurement instants t_m = m * T/M for m = 1..M (t0 = 0 excluded)."""
        dt = self.total_time / self.num_snapshots
        return np.arange(1, self.num_snapshots + 1) * dt

    @property
    def n_observables(self) -> int:
        n = self.n_atoms
        return n + n * (n - 1) // 2

    @property
    def embedding_dim(self) -> int:
        return self.num_snapshots * self.n_observables

    def initial_state_vector(self) -> np.ndarray:
        dim = 2 ** self.n_atoms
        if self.initial_state is None:
            return plus_state(self.n_atoms)
        psi = np.asarray(self.initial_state, complex)
        if psi.shape != (dim,):
            raise ValueError(f"initial_state must have length {dim}")
        if abs(np.linalg.norm(psi) - 1.0) > 1e-9:
            raise ValueError("initial_state must be normalized")
        return psi.copy()


@dataclass
class HamiltonianOperator:
    """Matrix-free representation: real diagonal plus uniform sigma^x drive.

    The drive is applied through the bit-flip structure of the basis and
    is never materialized as a dense matrix by the matvec path.
    """

    diagonal: np.ndarray        # (2^N,) real
    drive_amplitude: float      # Omega / 2
    n_atoms: int

    @property
    def dim(self) -> int:
        return self.diagonal.shape[0]


def plus_state(n_atoms: int) -> np.ndarray:
    """|+>^N: the uniform superposition, eigenstate of every sigma_i^x."""
    dim = 2 ** n_atoms
    return np.full(dim, 1.0 / np.sqrt(dim), complex)


# ---------------------------------------------------------------------------
# per-N lookup tables (pure functions of n_atoms, cached)

_TABLES: dict[int, dict[str, np.ndarray]] = {}


def _tables(n_atoms: int) -> dict[str, np.ndarray]:
    tab = _TABLES.get(n_atoms)
    if tab is None:
        dim = 2 ** n_atoms
        idx = np.arange(dim)
        bits = ((idx[:, None] >> np.arange(n_atoms)[None, :]) & 1).astype(np.float64)
        flips = np.stack([idx ^ (1 << i) for i in range(n_atoms)])
        zvals = 1.0 - 2.0 * bits                      # <b|sigma_i^z|b>
        pairs = observable_pairs(n_atoms)
        if pairs:
            zz = np.stack([zvals[:, i] * zvals[:, j] for i, j in pairs])
            zmat = np.concatenate([zvals.T, zz])
        else:
            zmat = zvals.T.copy()
        tab = {"bits": bits, "flips": flips, "zmat": zmat}
        _TABLES[n_atoms] = tab
    return tab


def observable_pairs(n_atoms: int) -> list[tuple[int, int]]:
    """Lexicographic (i, j) ordering of the two-body sigma^z sigma^z set."""
    return [(i, j) for i in range(n_atoms) for j in range(i + 1, n_atoms)]


# ---------------------------------------------------------------------------
# Hamiltonian assembly and application

def interaction_diagonal(config: ReservoirConfig) -> np.ndarray:
    """sum_{i<j} V_ij n_i n_j evaluated on every basis state."""
    bits = _tables(config.n_atoms)["bits"]
    pos = config.positions()
    diag = np.zeros(bits.shape[0])
    for i, j in observable_pairs(config.n_atoms):
        v_ij = config.c6_coefficient / abs(pos[i] - pos[j]) ** 6
        diag += v_ij * bits[:, i] * bits[:, j]
    return diag


def build_hamiltonian(config: ReservoirConfig, detunings: np.ndarray,
                      clamp: bool = True) -> HamiltonianOperator:
    """Assemble H for one detuning vector.

    Detunings outside [detuning_min, detuning_max] are clamped with a
    warning unless ``clamp`` is False (finite-difference probes disable
    clamping so that the perturbed points are not flattened).
    """
    det = np.asarray(detunings, float)
    if det.shape != (config.n_atoms,):
        raise ValueError(
            f"detunings must have length {config.n_atoms}, got shape {det.shape}")
    if clamp:
        lo, hi = config.detuning_min, config.detuning_max
        if np.any(det < lo) or np.any(det > hi):
            warnings.warn("detunings outside [detuning_min, detuning_max]; clamping",
                          stacklevel=2)
            det = np.clip(det, lo, hi)
    tab = _tables(config.n_atoms)
    alphas = config.modulation_vector()
    diag = -(tab["bits"] @ (alphas * det)) + interaction_diagonal(config)
    return HamiltonianOperator(diagonal=diag,
                               drive_amplitude=config.rabi_frequency / 2.0,
                               n_atoms=config.n_atoms)


def apply_hamiltonian(h: HamiltonianOperator, state: np.ndarray) -> np.ndarray:
    """H|psi> with the sigma^x part done via bit flips; O(N 2^N)."""
    psi = np.asarray(state)
    if psi.shape != (h.dim,):
        raise ValueError(f"state must have length {h.dim}, got shape {psi.shape}")
    out = h.diagonal * psi
    if h.drive_amplitude != 0.0:
        flips = _tables(h.n_atoms)["flips"]
        out = out + h.drive_amplitude * psi[flips].sum(axis=0)
    return out


def _dense_matrix(h: HamiltonianOperator) -> np.ndarray:
    """Materialize H densely (internal, for the spectral propagator)."""
    dim = h.dim
    mat = np.zeros((dim, dim))
    mat[np.arange(dim), np.arange(dim)] = h.diagonal
    if h.drive_amplitude != 0.0:
        flips = _tables(h.n_atoms)["flips"]
        rows = np.arange(dim)
        for i in range(h.n_atoms):
            mat[rows, flips[i]] += h.drive_amplitude
    return mat


# ---------------------------------------------------------------------------
# propagation

def _spectral_snapshots(h: HamiltonianOperator, psi0: np.ndarray,
                        times: np.ndarray) -> list[np.ndarray]:
    """exp(-i H t)|psi0> at each t via one dense eigendecomposition.

    H is real symmetric, so with real psi0 both quadratures stay real;
    the general complex case is handled by splitting psi0.
    """
    mat = _dense_matrix(h)
    try:
        w, v = sla.eigh(mat, driver="evd")
    except sla.LinAlgError as exc:      # pragma: no cover - LAPACK failure
        raise EvolutionError(f"eigendecomposition failed: {exc}") from exc
    c = v.T @ psi0
    out = []
    for t in times:
        phase = np.exp(-1j * w * t)
        out.append(v @ (phase * c))
    return out


def _krylov_step(h: HamiltonianOperator, psi: np.ndarray, dt: float,
                 tol: float, m_max: int) -> np.ndarray:
    """One Lanczos step exp(-i dt H)|psi> with full reorthogonalization.

    Returns the propagated vector, or raises EvolutionError if the
    Krylov space hits m_max without meeting the posterior error bound
    beta_m * |[exp(-i dt T)]_{m,1}|.
    """
    nrm = np.linalg.norm(psi)
    basis = [psi / nrm]
    alphas: list[float] = []
    betas: list[float] = []
    w = apply_hamiltonian(h, basis[0])
    a = float(np.real(np.vdot(basis[0], w)))
    alphas.append(a)
    w = w - a * basis[0]
    weights = None
    for _ in range(1, m_max):
        b = float(np.linalg.norm(w))
        if b < 1e-14:               # invariant subspace: expansion is exact
            weights = _tridiag_expm_col0(alphas, betas, dt)
            break
        vec = w / b
        for u in basis:             # full reorthogonalization
            vec = vec - np.vdot(u, vec) * u
        vec = vec / np.linalg.norm(vec)
        basis.append(vec)
        betas.append(b)
        w = apply_hamiltonian(h, vec) - b * basis[-2]
        a = float(np.real(np.vdot(vec, w)))
        alphas.append(a)
        w = w - a * vec
        col0 = _tridiag_expm_col0(alphas, betas, dt)
        err = abs(np.linalg.norm(w)) * abs(col0[-1]) * abs(dt)
        if err < tol:
            weights = col0
            break
    if weights is None:
        raise EvolutionError(
            f"Krylov propagator did not converge within {m_max} vectors "
            f"for dt={dt:g}")
    out = np.zeros_like(psi)
    for coeff, vec in zip(weights, basis):
        out += coeff * vec
    return out * nrm


def _tridiag_expm_col0(alphas: list[float], betas: list[float],
                       dt: float) -> np.ndarray:
    w, q = sla.eigh_tridiagonal(alphas, betas)
    return q @ (np.exp(-1j * dt * w) * q[0])


def _krylov_snapshots(h: HamiltonianOperator, psi0: np.ndarray,
                      times: np.ndarray, tol: float) -> list[np.ndarray]:
    """Sequential Krylov propagation through the snapshot grid.

    Each interval is subdivided so that ||H|| * dt stays moderate; if a
    step still fails to converge it is halved once more before raising.
    """
    hnorm = float(np.max(np.abs(h.diagonal))
                  + h.n_atoms * abs(h.drive_amplitude)) or 1.0
    psi = psi0.copy()
    out = []
    t_prev = 0.0
    for t in times:
        span = t - t_prev
        n_sub = max(1, int(np.ceil(span * hnorm / 12.0)))
        sub = span / n_sub
        for _ in range(n_sub):
            try:
                psi = _krylov_step(h, psi, sub, tol, m_max=64)
            except EvolutionError:
                psi = _krylov_step(h, psi, sub / 2, tol, m_max=64)
                psi = _krylov_step(h, psi, sub / 2, tol, m_max=64)
        out.append(psi.copy())
        t_prev = t
    return out


def evolve(h: HamiltonianOperator, initial: np.ndarray,
           config: ReservoirConfig, method: str = "spectral",
           krylov_tol: float = 1e-12) -> list[np.ndarray]:
    """Propagate |psi0> to every snapshot time t_m = m * T/M.

    ``spectral`` diagonalizes H once (exact at these dimensions and the
    default); ``krylov`` runs the matrix-free Lanczos propagator on top
    of :func:`apply_hamiltonian`. Both conserve the norm to 1e-9 or
    raise :class:`EvolutionError`.
    """
    psi0 = np.asarray(initial, complex)
    if psi0.shape != (h.dim,):
        raise ValueError(f"initial state must have length {h.dim}")
    if abs(np.linalg.norm(psi0) - 1.0) > 1e-9:
        raise ValueError("initial state must be normalized to 1e-9")
    times = config.snapshot_times()
    if method == "spectral":
        snaps = _spectral_snapshots(h, psi0, times)
    elif method == "krylov":
        snaps = _krylov_snapshots(h, psi0, times, krylov_tol)
    else:
        raise ValueError(f"unknown propagation method {method!r}")
    for k, psi in enumerate(snaps):
        drift = abs(np.linalg.norm(psi) - 1.0)
        if drift > 1e-9:
            raise EvolutionError(
                f"norm drift {drift:.3e} at snapshot {k + 1} exceeds 1e-9")
    return snaps


# ---------------------------------------------------------------------------
# measurement and embedding

def measure_observables(state: np.ndarray, n_atoms: int) -> np.ndarray:
    """<sigma_i^z> for each atom, then <sigma_i^z sigma_j^z> for i < j.

    Ordering matches the embedding layout: atom order first, then
    lexicographic pairs.
    """
    psi = np.asarray(state)
    dim = 2 ** n_atoms
    if psi.shape != (dim,):
        raise ValueError(f"state must have length {dim}")
    prob = np.abs(psi) ** 2
    if abs(prob.sum() - 1.0) > 1e-9:
        raise ValueError("state must be normalized")
    return _tables(n_atoms)["zmat"] @ prob


def reservoir_embed(config: ReservoirConfig, detunings: np.ndarray,
                    method: str = "spectral") -> np.ndarray:
    """Full reservoir feature map for one detuning vector.

    Layout: for each snapshot m = 1..M in time order, the N single-atom
    expectations followed by the N(N-1)/2 pair correlators. Length
    M * (N + N(N-1)/2). Deterministic for fixed inputs.
    """
    h = build_hamiltonian(config, detunings)
    psi0 = config.initial_state_vector()
    snaps = evolve(h, psi0, config, method=method)
    zmat = _tables(config.n_atoms)["zmat"]
    blocks = [zmat @ (np.abs(psi) ** 2) for psi in snaps]
    return np.concatenate(blocks)


def reservoir_jacobian(config: ReservoirConfig, detunings: np.ndarray,
                       step: float | None = None) -> np.ndarray:
    """d(embedding)/d(detunings) by central finite differences, (D x N).

    The probe points are evaluated with clamping disabled so the stencil
    is symmetric even at the range boundary. If a perturbed detuning
    leaves the numerically safe window around the configured range the
    step is shrunk once, then the call fails loudly.
    """
    det = np.asarray(detunings, float)
    if det.shape != (config.n_atoms,):
        raise ValueError(f"detunings must have length {config.n_atoms}")
    if config.rabi_frequency == 0.0:
        # diagonal H conserves every |amplitude|^2, so the observable map
        # is constant in the detunings; skip the 2N evolutions
        return np.zeros((config.embedding_dim, config.n_atoms))
    span = config.detuning_max - config.detuning_min
    if step is None:
        step = 1e-4 * (span if span > 0 else 1.0)
    if step <= 0:
        raise ValueError("step must be positive")

    margin = 10.0 * (span if span > 0 else 1.0)
    lo, hi = config.detuning_min - margin, config.detuning_max + margin
    for attempt in range(2):
        if np.all(det - step >= lo) and np.all(det + step <= hi):
            break
        step /= 2.0
    else:
        raise ValueError(
            "detunings too far outside the configured range for a stable "
            "finite-difference stencil")

    jac = np.empty((config.embedding_dim, config.n_atoms))
    for i in range(config.n_atoms):
        plus = det.copy()
        plus[i] += step
        minus = det.copy()
        minus[i] -= step
        h_p = build_hamiltonian(config, plus, clamp=False)
        h_m = build_hamiltonian(config, minus, clamp=False)
        psi0 = config.initial_state_vector()
        zmat = _tables(config.n_atoms)["zmat"]
        emb_p = np.concatenate(
            [zmat @ (np.abs(p) ** 2) for p in evolve(h_p, psi0, config)])
        emb_m = np.concatenate(
            [zmat @ (np.abs(p) ** 2) for p in evolve(h_m, psi0, config)])
        jac[:, i] = (emb_p - emb_m) / (2.0 * step)
    return jac
