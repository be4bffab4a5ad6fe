"""Attackable model adapters: pixel-space views of the two classifiers.

Both adapters expose the interface the attack loops consume
(predict_logits / loss_gradient / class_gradients / domain) on the
original L x L image, with the perturbation budget therefore defined in
pixel space.

* :class:`MlpPixelModel` is the classical baseline: patch-averaged
  normalized PCA features into the readout. Every stage is (piecewise)
  affine, so its pixel gradients are exact.

* :class:`HybridPixelModel` chains the readout gradient through the
  finite-difference reservoir Jacobian. Because each Jacobian costs
  2 * delta * kappa reservoir evolutions, the adapter offers three
  gradient modes:

      exact      - Jacobian and embedding recomputed at every iterate
                   (faithful, expensive; the default for small runs).
      frozen     - Jacobian anchored at the clean image, embeddings
                   recomputed exactly each iterate.
      linearized - the whole pipeline replaced by its first-order model
                   at the clean image; gradient calls are then free of
                   reservoir evolutions entirely.

  Modes only change attack strength, never measurement: accuracy is
  always evaluated on the exact embedding of the final adversarial
  image. An fgsm attack sees no difference at all, since its single
  gradient is taken at the clean anchor in every mode.

* :class:`ReadoutModel` attacks a feature/embedding vector directly
  with exact MLP gradients (the no-resimulation path); its domain
  defaults to the embedding's natural [-1, 1] bounds.
"""

from __future__ import annotations

import numpy as np

from . import mlp
from .encoding import ImageEncoder, downsample_matrix

__all__ = ["MlpPixelModel", "HybridPixelModel", "ReadoutModel"]

GRADIENT_MODES = ("exact", "frozen", "linearized")


class ReadoutModel:
    """Direct attack surface on the readout's input vector."""

    def __init__(self, params: mlp.MlpParams, domain=(-1.0, 1.0)):
        self.params = params
        self.domain = tuple(domain)
        self.gradient_kind = "exact-mlp"

    def predict_logits(self, x: np.ndarray) -> np.ndarray:
        return mlp.forward(self.params, np.asarray(x, float))

    def loss_gradient(self, x: np.ndarray, label: int) -> np.ndarray:
        return mlp.input_gradient(self.params, np.asarray(x, float), label)

    def class_gradients(self, x: np.ndarray):
        return mlp.class_input_gradients(self.params, np.asarray(x, float))


class MlpPixelModel:
    """Classical baseline seen from pixel space; gradients fully analytic.

    input_mode selects the readout's input representation:

      projections - patch-averaged raw PCA projections (the headline
                    baseline: affine in the pixels everywhere);
      normalized  - the same features after the clamped min-max rescale
                    shared with the reservoir path (the clamp acts as an
                    input-saturation defense, reported for comparison);
      pixels      - the raw downsampled pixels (secondary baseline).
    """

    def __init__(self, encoder: ImageEncoder, params: mlp.MlpParams,
                 input_mode: str = "projections"):
        if input_mode not in ("projections", "normalized", "pixels"):
            raise ValueError(f"unknown baseline input mode {input_mode!r}")
        self.encoder = encoder
        self.params = params
        self.input_mode = input_mode
        self.domain = (0.0, 1.0)
        self.gradient_kind = "exact-mlp"
        if input_mode == "pixels":
            self._fixed_chain = downsample_matrix(encoder.source_size,
                                                  encoder.target_size)
        elif input_mode == "projections":
            self._fixed_chain = encoder.projection_jacobian()
        else:
            self._fixed_chain = None

    def features(self, image: np.ndarray) -> np.ndarray:
        if self.input_mode == "pixels":
            return self.encoder.pixel_features(image)
        if self.input_mode == "projections":
            return self.encoder.projection_features(image)
        return self.encoder.baseline_features(image)

    def predict_logits(self, image: np.ndarray) -> np.ndarray:
        return mlp.forward(self.params, self.features(image))

    def predict(self, image: np.ndarray) -> int:
        return int(np.argmax(self.predict_logits(image)))

    def loss_gradient(self, image: np.ndarray, label: int) -> np.ndarray:
        g_feat = mlp.input_gradient(self.params, self.features(image), label)
        # baseline features use the normalized map, whose pixel Jacobian is
        # the alpha-jacobian = detuning jacobian / detuning span
        jac = self._alpha_jacobian(image)
        side = self.encoder.source_size
        return (jac.T @ g_feat).reshape(side, side)

    def class_gradients(self, image: np.ndarray):
        logits, g_feats = mlp.class_input_gradients(self.params,
                                                    self.features(image))
        jac = self._alpha_jacobian(image)
        side = self.encoder.source_size
        grads = (g_feats @ jac).reshape(len(logits), side, side)
        return logits, grads

    def _alpha_jacobian(self, image: np.ndarray) -> np.ndarray:
        if self._fixed_chain is not None:
            return self._fixed_chain
        return self.encoder.baseline_jacobian(image)


class _HybridView:
    """Per-image attack view with caches anchored at the clean input."""

    def __init__(self, parent: "HybridPixelModel", anchor: np.ndarray):
        self.parent = parent
        self.domain = parent.domain
        self.mode = parent.gradient_mode
        self.gradient_kind = parent.gradient_kind
        self.anchor = np.asarray(anchor, float)
        self.side = parent.encoder.source_size
        if self.mode in ("frozen", "linearized"):
            self._jac = parent.pipeline_jacobian(self.anchor)
            self._phi0 = parent.encoder.embed(self.anchor)
        else:
            self._jac = None
            self._phi0 = None

    def _jacobian_at(self, image: np.ndarray) -> np.ndarray:
        if self.mode == "exact":
            return self.parent.pipeline_jacobian(image)
        return self._jac

    def _embedding_at(self, image: np.ndarray) -> np.ndarray:
        if self.mode == "linearized":
            delta_pix = (np.asarray(image, float) - self.anchor).ravel()
            return self._phi0 + self._jac @ delta_pix
        return self.parent.encoder.embed(image)

    def predict_logits(self, image: np.ndarray) -> np.ndarray:
        return mlp.forward(self.parent.params, self._embedding_at(image))

    def loss_gradient(self, image: np.ndarray, label: int) -> np.ndarray:
        phi = self._embedding_at(image)
        g_phi = mlp.input_gradient(self.parent.params, phi, label)
        jac = self._jacobian_at(image)
        return (jac.T @ g_phi).reshape(self.side, self.side)

    def class_gradients(self, image: np.ndarray):
        phi = self._embedding_at(image)
        logits, g_phis = mlp.class_input_gradients(self.parent.params, phi)
        jac = self._jacobian_at(image)
        grads = (g_phis @ jac).reshape(len(logits), self.side, self.side)
        return logits, grads


class HybridPixelModel:
    """Reservoir + readout seen from pixel space, white-box."""

    def __init__(self, encoder: ImageEncoder, params: mlp.MlpParams,
                 gradient_mode: str = "exact", fd_step: float | None = None):
        if gradient_mode not in GRADIENT_MODES:
            raise ValueError(f"unknown gradient mode {gradient_mode!r}")
        self.encoder = encoder
        self.params = params
        self.gradient_mode = gradient_mode
        self.fd_step = fd_step
        self.domain = (0.0, 1.0)
        self.gradient_kind = "chained-hybrid"

    def with_fd_step(self, fd_step: float) -> "HybridPixelModel":
        return HybridPixelModel(self.encoder, self.params,
                                self.gradient_mode, fd_step)

    def pipeline_jacobian(self, image: np.ndarray) -> np.ndarray:
        return self.encoder.pipeline_jacobian(image, step=self.fd_step)

    def embed(self, image: np.ndarray) -> np.ndarray:
        return self.encoder.embed(image)

    def predict_logits(self, image: np.ndarray) -> np.ndarray:
        """Exact logits (full reservoir evaluation)."""
        return mlp.forward(self.params, self.embed(image))

    def predict(self, image: np.ndarray) -> int:
        return int(np.argmax(self.predict_logits(image)))

    def attack_view(self, image: np.ndarray) -> _HybridView:
        return _HybridView(self, image)

    # direct (non-anchored) gradient calls fall back to exact mode
    def loss_gradient(self, image: np.ndarray, label: int) -> np.ndarray:
        phi = self.embed(image)
        g_phi = mlp.input_gradient(self.params, phi, label)
        jac = self.pipeline_jacobian(image)
        side = self.encoder.source_size
        return (jac.T @ g_phi).reshape(side, side)

    def class_gradients(self, image: np.ndarray):
        phi = self.embed(image)
        logits, g_phis = mlp.class_input_gradients(self.params, phi)
        jac = self.pipeline_jacobian(image)
        side = self.encoder.source_size
        grads = (g_phis @ jac).reshape(len(logits), side, side)
        return logits, grads
