"""Image-to-detuning encoding and the image-level reservoir feature map.

Pipeline: L x L grayscale image -> area-interpolated S x S downsample
-> kappa = (S/P)^2 non-overlapping P x P patches -> per-patch PCA
projection to delta dimensions -> min-max rescale into the detuning
range -> one reservoir evolution per patch -> elementwise mean of the
kappa patch embeddings.

Every stage before the reservoir is affine (up to the min-max clamp),
so the full pixel-space Jacobian is the product of small matrices with
the finite-difference reservoir Jacobian in the middle.

All statistics (PCA basis, per-dimension feature ranges) are fitted
once on the pooled training-split patches and frozen; test-time values
falling outside the training range are clamped so detunings remain
physical under adversarial perturbation.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .reservoir import (
    ReservoirConfig,
    reservoir_embed,
    reservoir_jacobian,
)

__all__ = [
    "downsample",
    "area_resize_matrix",
    "downsample_matrix",
    "extract_patches",
    "assemble_patches",
    "PcaModel",
    "fit_pca",
    "project",
    "DetuningMap",
    "fit_detuning_map",
    "map_to_detunings",
    "ImageEncoder",
    "fit_encoder",
]


# ---------------------------------------------------------------------------
# linear resize

def area_resize_matrix(source: int, target: int) -> np.ndarray:
    """1-D area-interpolation weights, shape (target, source).

    Each target cell averages the source cells it overlaps, weighted by
    overlap length; rows sum to one, so constants are preserved. When
    source is divisible by target this is exact block averaging.
    """
    if target <= 0:
        raise ValueError("target size must be positive")
    if target > source:
        raise ValueError(f"cannot downsample {source} -> {target}")
    ratio = source / target
    mat = np.zeros((target, source))
    for s in range(target):
        lo, hi = s * ratio, (s + 1) * ratio
        for l in range(int(np.floor(lo)), int(np.ceil(hi))):
            mat[s, l] = (min(hi, l + 1) - max(lo, l)) / ratio
    return mat


def downsample(image: np.ndarray, target: int) -> np.ndarray:
    """Area-interpolate a square image down to target x target."""
    img = np.asarray(image, float)
    if img.ndim != 2 or img.shape[0] != img.shape[1]:
        raise ValueError(f"image must be square 2-D, got shape {img.shape}")
    r = area_resize_matrix(img.shape[0], target)
    return r @ img @ r.T


def downsample_matrix(source: int, target: int) -> np.ndarray:
    """The (target^2, source^2) matrix form of :func:`downsample`.

    Acts on row-major flattened images: vec(R I R^T) = (R kron R) vec(I).
    """
    r = area_resize_matrix(source, target)
    return np.kron(r, r)


# ---------------------------------------------------------------------------
# patches

def extract_patches(image: np.ndarray, patch_width: int) -> np.ndarray:
    """Split an S x S image into (S/P)^2 row-major-flattened P x P blocks.

    Patches are ordered row-major over the patch grid; concatenating
    them through :func:`assemble_patches` reconstructs the image exactly.
    """
    img = np.asarray(image, float)
    if img.ndim != 2 or img.shape[0] != img.shape[1]:
        raise ValueError(f"image must be square 2-D, got shape {img.shape}")
    size = img.shape[0]
    if size % patch_width != 0:
        raise ValueError(f"image size {size} not divisible by patch width {patch_width}")
    g = size // patch_width
    return (img.reshape(g, patch_width, g, patch_width)
               .transpose(0, 2, 1, 3)
               .reshape(g * g, patch_width * patch_width))


def assemble_patches(patches: np.ndarray, size: int) -> np.ndarray:
    """Inverse of :func:`extract_patches`."""
    pw = int(np.sqrt(patches.shape[1]))
    g = size // pw
    return (patches.reshape(g, g, pw, pw)
                   .transpose(0, 2, 1, 3)
                   .reshape(size, size))


def _patch_pixel_indices(size: int, patch_width: int) -> np.ndarray:
    """Flat indices into the S x S image selected by each patch, (kappa, P^2)."""
    grid = np.arange(size * size).reshape(size, size)
    return extract_patches(grid.astype(float), patch_width).astype(int)


# ---------------------------------------------------------------------------
# PCA

@dataclass
class PcaModel:
    """Frozen PCA basis over pooled training patches.

    components holds the top retained_dim eigenvectors of the
    (1/n)-normalized patch covariance as columns, orthonormal, each
    signed so its largest-magnitude entry is positive. eigenvalues is
    the full descending spectrum.
    """

    mean: np.ndarray           # (P^2,)
    components: np.ndarray     # (P^2, delta)
    eigenvalues: np.ndarray    # (P^2,) descending
    retained_dim: int
    variance_threshold: float | None = None

    @property
    def input_dim(self) -> int:
        return self.mean.shape[0]

    def retained_fraction(self) -> float:
        total = self.eigenvalues.sum()
        if total <= 0:
            return 1.0
        return float(self.eigenvalues[: self.retained_dim].sum() / total)


def fit_pca(train_patches: np.ndarray, retained_dim: int | None = None,
            variance_threshold: float | None = None) -> PcaModel:
    """Eigendecompose the pooled patch covariance and keep the top modes.

    Exactly one of retained_dim / variance_threshold selects delta; with
    a threshold, delta is the smallest count whose cumulative eigenvalue
    fraction exceeds it. If the covariance rank is below the requested
    delta, delta is reduced with a warning.
    """
    pts = np.asarray(train_patches, float)
    if pts.ndim != 2:
        raise ValueError("train_patches must be 2-D (n_patches, P^2)")
    if (retained_dim is None) == (variance_threshold is None):
        raise ValueError("specify exactly one of retained_dim / variance_threshold")
    n, p2 = pts.shape
    mean = pts.mean(axis=0)
    centered = pts - mean
    cov = centered.T @ centered / n
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals = np.maximum(evals[order], 0.0)
    evecs = evecs[:, order]

    total = evals.sum()
    rank = int(np.sum(evals > 1e-12 * max(total, 1e-300)))
    if variance_threshold is not None:
        if not 0.0 < variance_threshold < 1.0:
            raise ValueError("variance_threshold must lie in (0, 1)")
        frac = np.cumsum(evals) / total
        delta = int(np.searchsorted(frac, variance_threshold) + 1)
    else:
        delta = int(retained_dim)
        if delta < 1 or delta > p2:
            raise ValueError(f"retained_dim must be in [1, {p2}]")
    if n < delta + 1:
        raise ValueError(f"need at least {delta + 1} patches to fit {delta} components")
    if delta > rank:
        warnings.warn(f"covariance rank {rank} < requested {delta} components; "
                      f"reducing to {rank}", stacklevel=2)
        delta = max(rank, 1)

    comp = evecs[:, :delta].copy()
    for k in range(delta):            # deterministic sign convention
        lead = np.argmax(np.abs(comp[:, k]))
        if comp[lead, k] < 0:
            comp[:, k] = -comp[:, k]
    return PcaModel(mean=mean, components=comp, eigenvalues=evals,
                    retained_dim=delta, variance_threshold=variance_threshold)


def project(model: PcaModel, patch: np.ndarray) -> np.ndarray:
    """W^T (p - mu); accepts a single patch or a stack of patches."""
    p = np.asarray(patch, float)
    if p.shape[-1] != model.input_dim:
        raise ValueError(f"patch dimension {p.shape[-1]} != {model.input_dim}")
    return (p - model.mean) @ model.components


# ---------------------------------------------------------------------------
# min-max detuning map

@dataclass
class DetuningMap:
    """Frozen per-dimension min-max rescale of features into detunings.

    feature_min/feature_max are taken over all training-split patches.
    Out-of-range values are clamped to the boundary; dimensions with a
    degenerate training range map to the midpoint detuning, with zero
    gradient.
    """

    feature_min: np.ndarray    # (delta,)
    feature_max: np.ndarray    # (delta,)
    detuning_min: float
    detuning_max: float

    @property
    def dim(self) -> int:
        return self.feature_min.shape[0]

    def normalized(self, features: np.ndarray) -> np.ndarray:
        """Clamped unit-interval coordinates alpha of the min-max map."""
        f = np.asarray(features, float)
        span = self.feature_max - self.feature_min
        out = np.empty_like(f)
        degen = span <= 0
        safe = np.where(degen, 1.0, span)
        out = np.clip((f - self.feature_min) / safe, 0.0, 1.0)
        if np.any(degen):
            out[..., degen] = 0.5
        return out

    def jacobian_diagonal(self, features: np.ndarray) -> np.ndarray:
        """d(detuning)/d(feature) per dimension: the rescale slope inside
        the training range (inclusive), zero where clamped or degenerate."""
        f = np.asarray(features, float)
        span = self.feature_max - self.feature_min
        inside = (f >= self.feature_min) & (f <= self.feature_max) & (span > 0)
        slope = np.zeros_like(f)
        drange = self.detuning_max - self.detuning_min
        np.divide(drange, span, out=slope, where=inside & (span > 0))
        return np.where(inside, slope, 0.0)


def fit_detuning_map(train_features: np.ndarray,
                     config: ReservoirConfig) -> DetuningMap:
    """Record per-dimension training min/max over all patches."""
    feats = np.asarray(train_features, float).reshape(-1,
                                                      np.shape(train_features)[-1])
    return DetuningMap(feature_min=feats.min(axis=0),
                       feature_max=feats.max(axis=0),
                       detuning_min=config.detuning_min,
                       detuning_max=config.detuning_max)


def map_to_detunings(dmap: DetuningMap, features: np.ndarray) -> np.ndarray:
    """Affine rescale of features into [detuning_min, detuning_max]."""
    alpha = dmap.normalized(features)
    return dmap.detuning_min + alpha * (dmap.detuning_max - dmap.detuning_min)


# ---------------------------------------------------------------------------
# fitted end-to-end encoder

def _embed_one(args):
    config, detunings = args
    return reservoir_embed(config, detunings)


class ImageEncoder:
    """Frozen image -> embedding pipeline with exact linear-stage Jacobians.

    Built by :func:`fit_encoder`; holds the PCA basis, the detuning map
    and the reservoir configuration. Atoms beyond the retained PCA
    dimension receive the minimum detuning.
    """

    def __init__(self, pca: PcaModel, dmap: DetuningMap,
                 config: ReservoirConfig, source_size: int,
                 target_size: int, patch_width: int):
        if pca.retained_dim > config.n_atoms:
            raise ValueError(
                f"retained_dim {pca.retained_dim} exceeds n_atoms {config.n_atoms}")
        self.pca = pca
        self.dmap = dmap
        self.config = config
        self.source_size = source_size
        self.target_size = target_size
        self.patch_width = patch_width
        self.resize = area_resize_matrix(source_size, target_size)
        self.n_patches = (target_size // patch_width) ** 2
        # delta x L^2 chain matrix per patch: W^T o patch-select o downsample
        kron = downsample_matrix(source_size, target_size)
        sel = _patch_pixel_indices(target_size, patch_width)
        self._chain = np.stack(
            [self.pca.components.T @ kron[sel[v]] for v in range(self.n_patches)])

    # -- forward stages ----------------------------------------------------

    @property
    def delta(self) -> int:
        return self.pca.retained_dim

    @property
    def embedding_dim(self) -> int:
        return self.config.embedding_dim

    def _check_image(self, image: np.ndarray) -> np.ndarray:
        img = np.asarray(image, float)
        if img.shape != (self.source_size, self.source_size):
            raise ValueError(f"expected {self.source_size} x {self.source_size} "
                             f"image, got {img.shape}")
        return img

    def patch_features(self, image: np.ndarray) -> np.ndarray:
        """Raw PCA projections per patch, (kappa, delta)."""
        img = self._check_image(image)
        small = self.resize @ img @ self.resize.T
        return project(self.pca, extract_patches(small, self.patch_width))

    def patch_detunings(self, image: np.ndarray) -> np.ndarray:
        """Per-patch detuning vectors padded to n_atoms, (kappa, N)."""
        feats = self.patch_features(image)
        dets = map_to_detunings(self.dmap, feats)
        n = self.config.n_atoms
        if self.delta < n:
            pad = np.full((self.n_patches, n - self.delta),
                          self.config.detuning_min)
            dets = np.concatenate([dets, pad], axis=1)
        return dets

    def embed(self, image: np.ndarray) -> np.ndarray:
        """Image-level embedding: mean of the per-patch reservoir features."""
        dets = self.patch_detunings(image)
        embs = np.stack([reservoir_embed(self.config, dv) for dv in dets])
        return embs.mean(axis=0)

    def baseline_features(self, image: np.ndarray) -> np.ndarray:
        """Classical-readout input: patch-averaged normalized PCA features.

        Uses the same frozen min-max normalization (with clamping) that
        feeds the reservoir, so both models share all preprocessing up
        to the reservoir itself.
        """
        feats = self.patch_features(image)
        return self.dmap.normalized(feats).mean(axis=0)

    def projection_features(self, image: np.ndarray) -> np.ndarray:
        """Classical-readout input: patch-averaged raw PCA projections.

        Unlike :meth:`baseline_features` this skips the min-max clamp,
        so the representation stays affine in the pixels everywhere;
        the input-saturation defense the clamp provides is left to the
        reservoir path only.
        """
        return self.patch_features(image).mean(axis=0)

    def pixel_features(self, image: np.ndarray) -> np.ndarray:
        """Secondary baseline input: the raw downsampled pixels, flattened."""
        img = self._check_image(image)
        return (self.resize @ img @ self.resize.T).ravel()

    def projection_jacobian(self) -> np.ndarray:
        """d(projection features)/d(pixels): constant, (delta, L^2)."""
        return self._chain.mean(axis=0)

    def embed_batch(self, images: np.ndarray, n_jobs: int = 1) -> np.ndarray:
        """Embed a stack of images; order-stable under parallel execution."""
        images = np.asarray(images, float)
        if n_jobs <= 1:
            return np.stack([self.embed(img) for img in images])
        jobs = [(self.config, dv) for img in images
                for dv in self.patch_detunings(img)]
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            embs = list(pool.map(_embed_one, jobs, chunksize=8))
        embs = np.stack(embs).reshape(len(images), self.n_patches, -1)
        return embs.mean(axis=1)

    def baseline_batch(self, images: np.ndarray) -> np.ndarray:
        return np.stack([self.baseline_features(img) for img in images])

    # -- gradient chains ----------------------------------------------------

    def pipeline_jacobian(self, image: np.ndarray,
                          step: float | None = None) -> np.ndarray:
        """d(embedding)/d(pixels), (D, L^2), by chaining the analytic
        linear stages with the finite-difference reservoir Jacobian.

        Costs 2 * delta * kappa reservoir evolutions. Columns feeding a
        clamped or degenerate feature dimension are exactly zero.
        """
        img = self._check_image(image)
        feats = self.patch_features(img)
        dets = self.patch_detunings(img)
        total = np.zeros((self.embedding_dim, self.source_size ** 2))
        for v in range(self.n_patches):
            slopes = self.dmap.jacobian_diagonal(feats[v])
            j_res = reservoir_jacobian(self.config, dets[v], step=step)
            total += j_res[:, : self.delta] @ (slopes[:, None] * self._chain[v])
        return total / self.n_patches

    def baseline_jacobian(self, image: np.ndarray) -> np.ndarray:
        """d(baseline features)/d(pixels), (delta, L^2); fully analytic."""
        img = self._check_image(image)
        feats = self.patch_features(img)
        span = self.dmap.feature_max - self.dmap.feature_min
        total = np.zeros((self.delta, self.source_size ** 2))
        for v in range(self.n_patches):
            inside = ((feats[v] >= self.dmap.feature_min)
                      & (feats[v] <= self.dmap.feature_max) & (span > 0))
            slopes = np.where(inside, np.divide(1.0, span,
                                                out=np.zeros_like(span),
                                                where=span > 0), 0.0)
            total += slopes[:, None] * self._chain[v]
        return total / self.n_patches


def fit_encoder(train_images: np.ndarray, config: ReservoirConfig,
                target_size: int = 16, patch_width: int = 4,
                retained_dim: int | None = None,
                variance_threshold: float | None = None) -> ImageEncoder:
    """Fit PCA and the detuning map on the training split and freeze them.

    With neither retained_dim nor variance_threshold given, delta
    defaults to the atom count (capped by the patch dimension). A
    threshold selection exceeding n_atoms is capped with a warning,
    since each feature must drive one atom.
    """
    imgs = np.asarray(train_images, float)
    if imgs.ndim != 3 or imgs.shape[1] != imgs.shape[2]:
        raise ValueError("train_images must be (n, L, L)")
    source = imgs.shape[1]
    if target_size % patch_width != 0:
        raise ValueError("target_size must be divisible by patch_width")
    if retained_dim is None and variance_threshold is None:
        retained_dim = min(config.n_atoms, patch_width ** 2)
    if retained_dim is not None and retained_dim > config.n_atoms:
        raise ValueError(f"retained_dim {retained_dim} exceeds n_atoms "
                         f"{config.n_atoms}; each feature drives one atom")
    resize = area_resize_matrix(source, target_size)
    pooled = np.concatenate(
        [extract_patches(resize @ img @ resize.T, patch_width) for img in imgs])
    pca = fit_pca(pooled, retained_dim=retained_dim,
                  variance_threshold=variance_threshold)
    if pca.retained_dim > config.n_atoms:
        warnings.warn(
            f"variance threshold selected {pca.retained_dim} components; "
            f"capping at n_atoms = {config.n_atoms}", stacklevel=2)
        pca = PcaModel(mean=pca.mean,
                       components=pca.components[:, : config.n_atoms],
                       eigenvalues=pca.eigenvalues,
                       retained_dim=config.n_atoms,
                       variance_threshold=pca.variance_threshold)
    dmap = fit_detuning_map(project(pca, pooled), config)
    return ImageEncoder(pca, dmap, config, source, target_size, patch_width)
