"""Classical readout: a 3-layer ReLU perceptron trained with Adam.

Architecture D -> 64 -> 32 -> C with a dropout layer after each hidden
activation (inverted dropout, applied in training mode only; evaluation
is fully deterministic). The loss is softmax cross-entropy averaged
over the batch. All randomness (weight init, shuffle order, dropout
masks) derives from integer seeds, and the per-epoch shuffle and masks
are pure functions of (seed, epoch), so training is bitwise
reproducible.

Backpropagation is written out explicitly; besides parameter gradients
the module exposes exact loss and per-class logit gradients with
respect to the input, which the attack constructions consume.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "TrainConfig",
    "MlpParams",
    "init_params",
    "forward",
    "predict",
    "loss_and_grads",
    "input_gradient",
    "class_input_gradients",
    "train",
    "TrainingDiverged",
]

HIDDEN_SIZES = (64, 32)


class TrainingDiverged(RuntimeError):
    """Raised when the training loss becomes non-finite."""


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 64
    max_epochs: int = 500
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    dropout_rate: float = 1e-3
    rng_seed: int = 0

    def __post_init__(self):
        if min(self.learning_rate, self.batch_size, self.max_epochs) <= 0:
            raise ValueError("learning_rate, batch_size and max_epochs must be positive")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")


@dataclass
class MlpParams:
    """Weight matrices (out x in) and bias vectors for the three layers."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def layer_sizes(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    def copy(self) -> "MlpParams":
        return MlpParams([w.copy() for w in self.weights],
                         [b.copy() for b in self.biases])

    def check_finite(self) -> None:
        for arr in self.weights + self.biases:
            if not np.all(np.isfinite(arr)):
                raise TrainingDiverged("non-finite parameter values")


def init_params(input_dim: int, n_classes: int, seed: int = 0) -> MlpParams:
    """He-style uniform fan-in initialization, seeded; biases start at zero."""
    sizes = [input_dim, *HIDDEN_SIZES, n_classes]
    rng = np.random.default_rng([seed, 1])
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-limit, limit, (fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpParams(weights, biases)


def _forward_pass(params: MlpParams, x: np.ndarray, dropout_rate: float,
                  rng: np.random.Generator | None):
    """Return (logits, cache) for a (n, D) batch; cache feeds backprop."""
    acts, masks, hidden = [], [], []
    h = x
    for w, b in zip(params.weights[:-1], params.biases[:-1]):
        a = h @ w.T + b
        h = np.maximum(a, 0.0)
        if rng is not None and dropout_rate > 0.0:
            mask = (rng.random(h.shape) >= dropout_rate) / (1.0 - dropout_rate)
            h = h * mask
        else:
            mask = None
        acts.append(a)
        masks.append(mask)
        hidden.append(h)
    logits = h @ params.weights[-1].T + params.biases[-1]
    return logits, (acts, masks, hidden)


def forward(params: MlpParams, x: np.ndarray, train_mode: bool = False,
            dropout_rate: float = 0.0,
            rng: np.random.Generator | None = None) -> np.ndarray:
    """Logits for a single input (D,) or a batch (n, D).

    Evaluation mode ignores dropout entirely and is deterministic;
    training mode applies inverted dropout with masks drawn from rng.
    """
    arr = np.asarray(x, float)
    single = arr.ndim == 1
    batch = arr[None, :] if single else arr
    if batch.shape[1] != params.weights[0].shape[1]:
        raise ValueError(f"input dimension {batch.shape[1]} != "
                         f"{params.weights[0].shape[1]}")
    use_rng = rng if (train_mode and dropout_rate > 0.0) else None
    logits, _ = _forward_pass(params, batch, dropout_rate, use_rng)
    return logits[0] if single else logits


def predict(params: MlpParams, x: np.ndarray) -> np.ndarray:
    """argmax class labels in evaluation mode."""
    logits = forward(params, x)
    return np.argmax(logits, axis=-1)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _full_backward(params: MlpParams, x: np.ndarray, grad_logits: np.ndarray,
                   cache, want_input_grad: bool):
    """Backpropagate d(loss)/d(logits) through the cached forward pass."""
    acts, masks, hidden = cache
    layers_in = [x] + hidden[:-1]
    grads_w = [grad_logits.T @ hidden[-1]]
    grads_b = [grad_logits.sum(axis=0)]
    g = grad_logits @ params.weights[-1]
    for k in range(len(acts) - 1, -1, -1):
        if masks[k] is not None:
            g = g * masks[k]
        g = g * (acts[k] > 0)
        grads_w.append(g.T @ layers_in[k])
        grads_b.append(g.sum(axis=0))
        g = g @ params.weights[k]
    grads_w.reverse()
    grads_b.reverse()
    return grads_w, grads_b, (g if want_input_grad else None)


def loss_and_grads(params: MlpParams, inputs: np.ndarray, labels: np.ndarray,
                   dropout_rate: float = 0.0,
                   rng: np.random.Generator | None = None):
    """Mean softmax cross-entropy over the batch and parameter gradients."""
    x = np.atleast_2d(np.asarray(inputs, float))
    y = np.atleast_1d(np.asarray(labels))
    if x.shape[0] == 0:
        raise ValueError("empty batch")
    if x.shape[0] != y.shape[0]:
        raise ValueError("inputs and labels disagree in length")
    logits, cache = _forward_pass(params, x, dropout_rate, rng)
    z = logits - logits.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(z).sum(axis=1))
    loss = float(np.mean(logsumexp - z[np.arange(len(y)), y]))
    g = softmax(logits)
    g[np.arange(len(y)), y] -= 1.0
    g /= len(y)
    grads_w, grads_b, _ = _full_backward(params, x, g, cache, False)
    return loss, (grads_w, grads_b)


def input_gradient(params: MlpParams, x: np.ndarray, label: int) -> np.ndarray:
    """Exact d(cross-entropy)/d(input) for one sample, evaluation mode."""
    xin = np.asarray(x, float)[None, :]
    logits, cache = _forward_pass(params, xin, 0.0, None)
    g = softmax(logits)
    g[0, int(label)] -= 1.0
    _, _, gin = _full_backward(params, xin, g, cache, True)
    return gin[0]


def class_input_gradients(params: MlpParams, x: np.ndarray):
    """Logits and the (C, D) matrix of d(logit_c)/d(input), evaluation mode.

    Used by the boundary-seeking attack, which needs every class's
    linearization at once.
    """
    xin = np.asarray(x, float)[None, :]
    logits, cache = _forward_pass(params, xin, 0.0, None)
    n_classes = logits.shape[1]
    grads = np.empty((n_classes, xin.shape[1]))
    for c in range(n_classes):
        seed_grad = np.zeros_like(logits)
        seed_grad[0, c] = 1.0
        _, _, gin = _full_backward(params, xin, seed_grad, cache, True)
        grads[c] = gin[0]
    return logits[0], grads


@dataclass
class TrainHistory:
    loss: list[float] = field(default_factory=list)
    accuracy: list[float] = field(default_factory=list)


def train(params: MlpParams, inputs: np.ndarray, labels: np.ndarray,
          config: TrainConfig) -> tuple[MlpParams, TrainHistory]:
    """Adam on softmax cross-entropy for exactly max_epochs epochs.

    No early stopping and no schedule. The shuffle permutation and the
    dropout mask stream for epoch e come from fresh generators seeded
    with (rng_seed, 2, e) and (rng_seed, 3, e), making the whole run a
    pure function of (params, data, config).
    """
    x = np.asarray(inputs, float)
    y = np.asarray(labels)
    if x.shape[0] != y.shape[0] or x.shape[0] == 0:
        raise ValueError("inputs and labels must be equal-length and non-empty")
    params = params.copy()
    m_w = [np.zeros_like(w) for w in params.weights]
    v_w = [np.zeros_like(w) for w in params.weights]
    m_b = [np.zeros_like(b) for b in params.biases]
    v_b = [np.zeros_like(b) for b in params.biases]
    step = 0
    history = TrainHistory()
    n = x.shape[0]
    for epoch in range(config.max_epochs):
        shuffle_rng = np.random.default_rng([config.rng_seed, 2, epoch])
        dropout_rng = np.random.default_rng([config.rng_seed, 3, epoch])
        perm = shuffle_rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, config.batch_size):
            idx = perm[start:start + config.batch_size]
            loss, (gw, gb) = loss_and_grads(params, x[idx], y[idx],
                                            dropout_rate=config.dropout_rate,
                                            rng=dropout_rng)
            if not np.isfinite(loss):
                raise TrainingDiverged(
                    f"loss became {loss} at epoch {epoch}, batch offset {start}")
            epoch_loss += loss * len(idx)
            step += 1
            bc1 = 1.0 - config.beta1 ** step
            bc2 = 1.0 - config.beta2 ** step
            for k in range(len(params.weights)):
                m_w[k] = config.beta1 * m_w[k] + (1 - config.beta1) * gw[k]
                v_w[k] = config.beta2 * v_w[k] + (1 - config.beta2) * gw[k] ** 2
                m_b[k] = config.beta1 * m_b[k] + (1 - config.beta1) * gb[k]
                v_b[k] = config.beta2 * v_b[k] + (1 - config.beta2) * gb[k] ** 2
                params.weights[k] -= (config.learning_rate * (m_w[k] / bc1)
                                      / (np.sqrt(v_w[k] / bc2) + config.adam_eps))
                params.biases[k] -= (config.learning_rate * (m_b[k] / bc1)
                                     / (np.sqrt(v_b[k] / bc2) + config.adam_eps))
        params.check_finite()
        history.loss.append(epoch_loss / n)
        history.accuracy.append(float(np.mean(predict(params, x) == y)))
    return params, history
