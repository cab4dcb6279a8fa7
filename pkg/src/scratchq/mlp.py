"""From-scratch fully connected networks with dropout, MAE/BCE losses, Adam.

Two presets mirror the deployed architectures: a 575-1000-1000-1 regressor
(identity output, MAE loss, dropout 0.1, lr 5e-6) and a 475-1200-1200-1200-1
classifier (sigmoid output, BCE loss, dropout 0.2, lr 1e-5), both trained
with batch size 64 for 150 epochs.

Everything is double precision and seed-deterministic: weight init, batch
shuffling, and dropout masks all come from one PCG64 generator, so a fixed
seed reproduces bit-identical weights. Dropout is inverted (activations
scaled by 1/(1-p) at train time); inference never applies it.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import EmptyBatch, EmptyTrainingSet, NonFiniteLoss, ShapeMismatch
from .features import MinMaxScaler, Task

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
BCE_CLIP_EPS = 1e-7

LOSS_MAE = "mae"
LOSS_BCE = "bce"
OUT_IDENTITY = "identity"
OUT_SIGMOID = "sigmoid"


@dataclass
class MlpConfig:
    layer_sizes: list[int]
    output_activation: str = OUT_IDENTITY
    dropout_p: float = 0.1
    learning_rate: float = 5e-6
    batch_size: int = 64
    epochs: int = 150
    loss: str = LOSS_MAE
    seed: int = 0

    def __post_init__(self):
        if len(self.layer_sizes) < 2:
            raise ValueError("need at least input and output layer sizes")
        if any(s <= 0 for s in self.layer_sizes):
            raise ValueError("layer sizes must be positive")
        if self.output_activation not in (OUT_IDENTITY, OUT_SIGMOID):
            raise ValueError(f"unknown output activation {self.output_activation!r}")
        if self.loss not in (LOSS_MAE, LOSS_BCE):
            raise ValueError(f"unknown loss {self.loss!r}")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError("dropout_p must be in [0, 1)")

    def override(self, **kwargs) -> "MlpConfig":
        return replace(self, **kwargs)


def intensity_config(input_dim: int = Task.INTENSITY.dim, seed: int = 0) -> MlpConfig:
    """Regression preset: 2 hidden layers of 1000, MAE loss, lr 5e-6."""
    return MlpConfig(layer_sizes=[input_dim, 1000, 1000, 1],
                     output_activation=OUT_IDENTITY, dropout_p=0.1,
                     learning_rate=5e-6, batch_size=64, epochs=150,
                     loss=LOSS_MAE, seed=seed)


def detection_config(input_dim: int = Task.DETECTION.dim, seed: int = 0) -> MlpConfig:
    """Classification preset: 3 hidden layers of 1200, BCE loss, lr 1e-5."""
    return MlpConfig(layer_sizes=[input_dim, 1200, 1200, 1200, 1],
                     output_activation=OUT_SIGMOID, dropout_p=0.2,
                     learning_rate=1e-5, batch_size=64, epochs=150,
                     loss=LOSS_BCE, seed=seed)


def preset_config(task: Task, input_dim: int | None = None, seed: int = 0) -> MlpConfig:
    if task is Task.INTENSITY:
        return intensity_config(input_dim or Task.INTENSITY.dim, seed)
    return detection_config(input_dim or Task.DETECTION.dim, seed)


class MlpModel:
    """Weights, biases, config, optional input scaler, and training history."""

    def __init__(self, weights: list[np.ndarray], biases: list[np.ndarray],
                 config: MlpConfig, scaler: MinMaxScaler | None = None,
                 history: list[dict] | None = None):
        sizes = config.layer_sizes
        if len(weights) != len(sizes) - 1 or len(biases) != len(sizes) - 1:
            raise ShapeMismatch("one weight matrix and bias per layer transition")
        for i, (w, b) in enumerate(zip(weights, biases)):
            if w.shape != (sizes[i], sizes[i + 1]) or b.shape != (sizes[i + 1],):
                raise ShapeMismatch(
                    f"layer {i}: expected {(sizes[i], sizes[i + 1])}, got {w.shape}")
        self.weights = weights
        self.biases = biases
        self.config = config
        self.scaler = scaler
        self.history = history if history is not None else []

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def _check_input(self, x: np.ndarray) -> tuple[np.ndarray, bool]:
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        x = np.atleast_2d(x)
        if x.shape[1] != self.config.layer_sizes[0]:
            raise ShapeMismatch(
                f"expected {self.config.layer_sizes[0]} inputs, got {x.shape[1]}")
        return x, single

    def forward(self, x: np.ndarray) -> np.ndarray | float:
        """Deterministic inference pass; dropout is never applied."""
        x, single = self._check_input(x)
        out = _forward(self.weights, self.biases, x,
                       self.config.output_activation, masks=None, dropout_p=0.0)[0]
        return float(out[0, 0]) if single else out[:, 0]

    def forward_train(self, x: np.ndarray, rng: np.random.Generator):
        """Training pass with fresh inverted-dropout masks; returns (out, cache)."""
        x, _ = self._check_input(x)
        p = self.config.dropout_p
        masks = None
        if p > 0.0:
            masks = [rng.random((x.shape[0], self.config.layer_sizes[i + 1])) >= p
                     for i in range(self.n_layers - 1)]
        return self.forward_with_masks(x, masks)

    def forward_with_masks(self, x: np.ndarray, masks: list[np.ndarray] | None):
        """Training-mode pass with caller-supplied dropout masks (None = no dropout)."""
        x, _ = self._check_input(x)
        out, cache = _forward(self.weights, self.biases, x,
                              self.config.output_activation, masks,
                              self.config.dropout_p if masks is not None else 0.0)
        return out[:, 0], cache

    def predict(self, features: np.ndarray) -> np.ndarray | float:
        """Inference on raw features: applies the fitted scaler, then forward."""
        x = features
        if self.scaler is not None:
            x = self.scaler.transform(np.asarray(features, dtype=np.float64))
        return self.forward(x)


def _forward(weights, biases, x, output_activation, masks, dropout_p):
    activations = [x]
    relu_masks = []
    h = x
    n_hidden = len(weights) - 1
    for i in range(n_hidden):
        z = h @ weights[i] + biases[i]
        pos = z > 0
        h = np.where(pos, z, 0.0)
        relu_masks.append(pos)
        if masks is not None:
            h = h * masks[i] / (1.0 - dropout_p)
        activations.append(h)
    z_out = h @ weights[-1] + biases[-1]
    if output_activation == OUT_SIGMOID:
        out = 1.0 / (1.0 + np.exp(-z_out))
    else:
        out = z_out
    cache = {"activations": activations, "relu_masks": relu_masks,
             "dropout_masks": masks, "dropout_p": dropout_p, "out": out}
    return out, cache


def init_model(config: MlpConfig, rng: np.random.Generator | None = None) -> MlpModel:
    """Glorot-uniform weights (+-sqrt(6/(fan_in+fan_out))), zero biases."""
    if rng is None:
        rng = np.random.default_rng(config.seed)
    weights, biases = [], []
    sizes = config.layer_sizes
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpModel(weights, biases, config)


def loss_value(pred: np.ndarray, target: np.ndarray, kind: str) -> float:
    """MAE: mean |y - y_hat|. BCE: -mean[y ln p + (1-y) ln(1-p)], p clipped
    to [1e-7, 1 - 1e-7].

    Raises:
        EmptyBatch: zero-length inputs.
    """
    pred = np.asarray(pred, dtype=np.float64).ravel()
    target = np.asarray(target, dtype=np.float64).ravel()
    if pred.size == 0:
        raise EmptyBatch("loss on an empty batch")
    if pred.shape != target.shape:
        raise ShapeMismatch("pred and target lengths differ")
    if kind == LOSS_MAE:
        return float(np.mean(np.abs(target - pred)))
    if kind == LOSS_BCE:
        p = np.clip(pred, BCE_CLIP_EPS, 1.0 - BCE_CLIP_EPS)
        return float(-np.mean(target * np.log(p) + (1.0 - target) * np.log(1.0 - p)))
    raise ValueError(f"unknown loss {kind!r}")


def backward(model: MlpModel, cache: dict, target: np.ndarray):
    """Exact loss gradients for all weights and biases from a cached pass.

    The MAE subgradient at zero residual is 0; BCE output values pushed into
    the clipping range contribute zero gradient (the clipped loss is constant
    there); dropout masks from the cached pass are honored.
    """
    target = np.asarray(target, dtype=np.float64).reshape(-1, 1)
    out = cache["out"]
    n = out.shape[0]
    loss = model.config.loss
    if loss == LOSS_MAE:
        delta = np.sign(out - target) / n
    else:
        inside = (out > BCE_CLIP_EPS) & (out < 1.0 - BCE_CLIP_EPS)
        delta = np.where(inside, out - target, 0.0) / n

    activations = cache["activations"]
    relu_masks = cache["relu_masks"]
    masks = cache["dropout_masks"]
    p = cache["dropout_p"]

    grad_w = [None] * model.n_layers
    grad_b = [None] * model.n_layers
    for layer in range(model.n_layers - 1, -1, -1):
        grad_w[layer] = activations[layer].T @ delta
        grad_b[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = delta @ model.weights[layer].T
            if masks is not None:
                delta = delta * masks[layer - 1] / (1.0 - p)
            delta = delta * relu_masks[layer - 1]
    return grad_w, grad_b


@dataclass
class AdamState:
    """First/second moment accumulators, one pair per parameter tensor."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0

    @classmethod
    def for_params(cls, params: list[np.ndarray]) -> "AdamState":
        return cls([np.zeros_like(p) for p in params],
                   [np.zeros_like(p) for p in params])


def adam_step(state: AdamState, params: list[np.ndarray],
              grads: list[np.ndarray], learning_rate: float,
              beta1: float = ADAM_BETA1, beta2: float = ADAM_BETA2,
              eps: float = ADAM_EPS) -> None:
    """One bias-corrected Adam update, applied to params in place."""
    state.step += 1
    t = state.step
    for i, (param, grad) in enumerate(zip(params, grads)):
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * grad
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * grad * grad
        m_hat = state.m[i] / (1.0 - beta1 ** t)
        v_hat = state.v[i] / (1.0 - beta2 ** t)
        param -= learning_rate * m_hat / (np.sqrt(v_hat) + eps)


def train_model(config: MlpConfig, train_x: np.ndarray, train_y: np.ndarray,
                eval_set: tuple[np.ndarray, np.ndarray] | None = None,
                scaler: MinMaxScaler | None = None) -> MlpModel:
    """Train with seeded shuffled mini-batches for a fixed epoch count.

    Features must already be normalized; ``scaler`` is attached to the
    returned model for inference-time use but is NOT applied here. History
    records the mean train-mode batch loss per epoch, plus the inference-mode
    eval loss when an eval set is given.

    Raises:
        EmptyTrainingSet: no samples.
        NonFiniteLoss: loss became NaN/Inf during training.
    """
    train_x = np.asarray(train_x, dtype=np.float64)
    train_y = np.asarray(train_y, dtype=np.float64).ravel()
    if train_x.ndim != 2 or train_x.shape[0] == 0:
        raise EmptyTrainingSet("training set is empty")
    if train_x.shape[0] != train_y.shape[0]:
        raise ShapeMismatch("features and labels disagree on sample count")

    rng = np.random.default_rng(config.seed)
    model = init_model(config, rng)
    model.scaler = scaler
    params = model.weights + model.biases
    state = AdamState.for_params(params)
    n = train_x.shape[0]

    for epoch in range(config.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, config.batch_size):
            batch = order[start:start + config.batch_size]
            out, cache = model.forward_train(train_x[batch], rng)
            batch_loss = loss_value(out, train_y[batch], config.loss)
            if not np.isfinite(batch_loss):
                raise NonFiniteLoss(f"epoch {epoch}: loss is {batch_loss}")
            epoch_loss += batch_loss * len(batch)
            grad_w, grad_b = backward(model, cache, train_y[batch])
            adam_step(state, params, grad_w + grad_b, config.learning_rate)
        record = {"epoch": epoch, "train_loss": epoch_loss / n}
        if eval_set is not None:
            eval_pred = model.forward(np.asarray(eval_set[0], dtype=np.float64))
            record["eval_loss"] = loss_value(np.atleast_1d(eval_pred),
                                             eval_set[1], config.loss)
        model.history.append(record)
    return model
