"""White-box adversarial attacks with exact budget semantics.

Three families:

* fgsm  - single step of size epsilon along sign(dL/dx), l-inf budget.
* pgd   - iterated steps of size zeta projected onto the l-inf
          epsilon-ball intersected with the valid domain each iteration.
* deepfool - iterative minimal-l2 push toward the nearest linearized
          decision boundary, overshoot multiplier applied to the total
          perturbation, then rescaled so ||eta||_2 <= epsilon, domain
          clip last.

Attacks are written against a small duck-typed model interface so the
same update rules serve the classical readout, the reservoir-chained
hybrid and direct embedding-space attacks:

    model.predict_logits(x)      -> (C,)
    model.loss_gradient(x, y)    -> dL/dx, same shape as x
    model.class_gradients(x)     -> (logits, (C, *x.shape))
    model.domain                 -> (lo, hi) valid input interval

Every attack returns its input bitwise when epsilon == 0 and asserts
the declared perturbation norm post hoc (<= epsilon + 1e-12). With a
fixed spec (including rng_seed) the output is bitwise deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "AttackSpec",
    "GradientPath",
    "fgsm",
    "pgd",
    "deepfool",
    "craft",
    "attack_hybrid",
    "perturbation_norm",
]

FAMILIES = ("fgsm", "pgd", "deepfool")
BUDGET_SLACK = 1e-12


@dataclass
class AttackSpec:
    """Attack family, budget and iteration schedule.

    ``steps`` and ``step_size`` apply to the iterative families; the
    norm is l-inf for fgsm/pgd and l2 for deepfool. ``overshoot`` is the
    multiplier applied to the deepfool perturbation before budget
    rescaling so the boundary is actually crossed.
    """

    family: str
    epsilon: float
    steps: int = 100
    step_size: float = 1e-3
    random_start: bool = False
    rng_seed: int = 0
    overshoot: float = 1.02

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown attack family {self.family!r}")
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")

    @property
    def norm(self) -> str:
        return "l2" if self.family == "deepfool" else "linf"


@dataclass
class GradientPath:
    """How gradients reach the pixels: exact through the classical chain
    or chained through the finite-difference reservoir Jacobian."""

    mode: str = "chained-hybrid"        # "exact-mlp" | "chained-hybrid"
    fd_step: float | None = None

    def __post_init__(self):
        if self.mode not in ("exact-mlp", "chained-hybrid"):
            raise ValueError(f"unknown gradient path mode {self.mode!r}")


def perturbation_norm(adv: np.ndarray, original: np.ndarray, norm: str) -> float:
    diff = (np.asarray(adv, float) - np.asarray(original, float)).ravel()
    if norm == "linf":
        return float(np.max(np.abs(diff))) if diff.size else 0.0
    if norm == "l2":
        return float(np.linalg.norm(diff))
    raise ValueError(f"unknown norm {norm!r}")


def _check_budget(adv, original, spec: AttackSpec) -> np.ndarray:
    got = perturbation_norm(adv, original, spec.norm)
    if got > spec.epsilon + BUDGET_SLACK:
        raise RuntimeError(
            f"attack produced {spec.norm} perturbation {got:.3e} "
            f"> budget {spec.epsilon:.3e}")
    return adv


def _attack_view(model, image):
    """Let stateful adapters anchor per-image caches at the clean input."""
    if hasattr(model, "attack_view"):
        return model.attack_view(image)
    return model


def fgsm(model, image: np.ndarray, label: int, spec: AttackSpec) -> np.ndarray:
    """x + epsilon * sign(dL/dx), clipped to the model domain."""
    x0 = np.asarray(image, float)
    if spec.epsilon == 0.0:
        return x0.copy()
    m = _attack_view(model, x0)
    lo, hi = m.domain
    grad = m.loss_gradient(x0, label)
    adv = np.clip(x0 + spec.epsilon * np.sign(grad), lo, hi)
    return _check_budget(adv, x0, spec)


def pgd(model, image: np.ndarray, label: int, spec: AttackSpec) -> np.ndarray:
    """Projected gradient ascent on the loss within the l-inf ball.

    Every iterate satisfies ||x_t - x_0||_inf <= epsilon: the projection
    clamps to [x0 - eps, x0 + eps] intersected with the domain.
    """
    x0 = np.asarray(image, float)
    if spec.epsilon == 0.0:
        return x0.copy()
    m = _attack_view(model, x0)
    lo, hi = m.domain
    ball_lo = np.maximum(x0 - spec.epsilon, lo)
    ball_hi = np.minimum(x0 + spec.epsilon, hi)
    if spec.random_start:
        rng = np.random.default_rng(spec.rng_seed)
        x = x0 + rng.uniform(-spec.epsilon, spec.epsilon, x0.shape)
        x = np.clip(x, ball_lo, ball_hi)
    else:
        x = x0.copy()
    for _ in range(spec.steps):
        grad = m.loss_gradient(x, label)
        x = np.clip(x + spec.step_size * np.sign(grad), ball_lo, ball_hi)
    return _check_budget(x, x0, spec)


def deepfool(model, image: np.ndarray, spec: AttackSpec, label: int | None = None,
             return_info: bool = False):
    """Minimal-l2 push across the nearest linearized class boundary.

    At each iterate the pairwise boundary to every other class c is
    linearized; the step moves distance |f_c - f_k| / ||w_c|| along the
    normalized gradient difference of the closest boundary. Iteration
    stops on a label flip or after spec.steps. The accumulated
    perturbation is multiplied by the overshoot factor, rescaled so its
    l2 norm is at most epsilon, and the result is clipped to the domain
    last.

    When the input is already misclassified (label given and the clean
    prediction differs) it is returned unchanged. Classes whose gradient
    difference vanishes are skipped; if all are degenerate the input is
    returned unchanged with info["degenerate"] = True.
    """
    x0 = np.asarray(image, float)
    info = {"degenerate": False, "flipped": False, "iterations": 0}
    if spec.epsilon == 0.0:
        return (x0.copy(), info) if return_info else x0.copy()
    m = _attack_view(model, x0)
    lo, hi = m.domain

    logits0 = m.predict_logits(x0)
    k0 = int(np.argmax(logits0))
    if label is not None and k0 != int(label):
        return (x0.copy(), info) if return_info else x0.copy()

    x = x0.copy()
    for it in range(spec.steps):
        logits, grads = m.class_gradients(x)
        k = int(np.argmax(logits))
        if k != k0:
            info["flipped"] = True
            break
        info["iterations"] = it + 1
        best_dist, best_step = np.inf, None
        for c in range(len(logits)):
            if c == k:
                continue
            w = (grads[c] - grads[k]).ravel()
            w_norm = np.linalg.norm(w)
            if w_norm < 1e-300:
                continue
            gap = abs(float(logits[c] - logits[k]))
            dist = gap / w_norm
            if dist < best_dist:
                best_dist = dist
                best_step = (gap / w_norm ** 2) * (grads[c] - grads[k])
        if best_step is None:
            info["degenerate"] = True
            return (x0.copy(), info) if return_info else x0.copy()
        x = x + best_step
    else:
        info["flipped"] = int(np.argmax(m.predict_logits(x))) != k0

    eta = (x - x0) * spec.overshoot
    norm = np.linalg.norm(eta.ravel())
    if norm > spec.epsilon and norm > 0:
        eta = eta * (spec.epsilon / norm)
    adv = np.clip(x0 + eta, lo, hi)
    adv = _check_budget(adv, x0, spec)
    return (adv, info) if return_info else adv


def craft(model, image: np.ndarray, label: int, spec: AttackSpec) -> np.ndarray:
    """Dispatch one attack family; identical update rules for every model."""
    if spec.family == "fgsm":
        return fgsm(model, image, label, spec)
    if spec.family == "pgd":
        return pgd(model, image, label, spec)
    return deepfool(model, image, spec, label=label)


def attack_hybrid(model, image: np.ndarray, label: int, spec: AttackSpec,
                  path: GradientPath) -> np.ndarray:
    """Attack the reservoir-backed model with chained pixel gradients.

    The update rules are identical to the classical case; the gradient
    reaches the pixels as pipeline_jacobian^T dL/dPhi. The path mode
    must match the model under attack.
    """
    kind = getattr(model, "gradient_kind", None)
    if path.mode != kind:
        raise ValueError(
            f"gradient path mode {path.mode!r} does not match model "
            f"gradient kind {kind!r}")
    if path.fd_step is not None:
        model = model.with_fd_step(path.fd_step)
    return craft(model, image, label, spec)
