"""Small dense/conv network engine with hand-written backpropagation.

Implements exactly what the classifier stack needs: valid 1-D
cross-correlation, average-pool subsampling, batch normalization with
running statistics, dense layers, tanh/sigmoid activations and a softmax
cross-entropy head, all trained by plain mini-batch SGD. Everything is
float64 numpy and fully deterministic given a seed.

Arrays flow through layers as (batch, maps, length) for the conv stack
and (batch, units) after flattening. Inference (``training=False``) never
mutates a layer, so a trained network is safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import (
    BatchTooSmall,
    MalformedModelFile,
    NonFiniteLoss,
    OddLength,
    ShapeMismatch,
    UninitializedStats,
    VersionMismatch,
)

MODEL_MAGIC = "SSNN"
MODEL_VERSION = 1

_F = "%.17g"  # round-trips IEEE doubles exactly


def _glorot_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, fan_out: int):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Conv1dLayer:
    """Valid cross-correlation: out[o,t] = b[o] + sum_{i,k} K[o,i,k] x[i,t+k]."""

    kind = "conv1d"

    def __init__(self, in_maps: int, out_maps: int, kernel_len: int,
                 rng: np.random.Generator | None = None):
        self.in_maps = in_maps
        self.out_maps = out_maps
        self.kernel_len = kernel_len
        shape = (out_maps, in_maps, kernel_len)
        if rng is None:
            self.kernels = np.zeros(shape)
        else:
            fan = in_maps * kernel_len, out_maps * kernel_len
            self.kernels = _glorot_uniform(rng, shape, *fan)
        self.biases = np.zeros(out_maps)
        self.grads: dict[str, np.ndarray] = {}
        self._windows = None

    def params(self):
        return [("kernels", self.kernels, True), ("biases", self.biases, False)]

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        if x.ndim != 3 or x.shape[1] != self.in_maps:
            raise ShapeMismatch(
                f"conv1d expects (batch, {self.in_maps}, length), got {x.shape}"
            )
        if x.shape[2] < self.kernel_len:
            raise ShapeMismatch(
                f"conv1d input length {x.shape[2]} shorter than kernel {self.kernel_len}"
            )
        windows = sliding_window_view(x, self.kernel_len, axis=2)  # (b, in, T, k)
        if training:
            self._windows = windows
        out = np.einsum("bitk,oik->bot", windows, self.kernels)
        out += self.biases[None, :, None]
        return out

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        windows = self._windows
        self.grads["kernels"] = np.einsum("bot,bitk->oik", grad_out, windows)
        self.grads["biases"] = grad_out.sum(axis=(0, 2))
        pad = self.kernel_len - 1
        padded = np.pad(grad_out, ((0, 0), (0, 0), (pad, pad)))
        gwin = sliding_window_view(padded, self.kernel_len, axis=2)  # (b, o, L, k)
        return np.einsum("botk,oik->bit", gwin, self.kernels[:, :, ::-1])


class SubsampleLayer:
    """Average pooling over non-overlapping windows of ``factor`` samples."""

    kind = "subsample"

    def __init__(self, factor: int = 2):
        self.factor = factor
        self.grads: dict[str, np.ndarray] = {}

    def params(self):
        return []

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        if x.shape[-1] % self.factor:
            raise OddLength(
                f"length {x.shape[-1]} not divisible by subsampling factor {self.factor}"
            )
        b, m, length = x.shape
        return x.reshape(b, m, length // self.factor, self.factor).mean(axis=3)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        return np.repeat(grad_out, self.factor, axis=2) / self.factor


class ActivationLayer:
    kind = "activation"

    def __init__(self, name: str = "tanh"):
        if name not in ("tanh", "sigmoid"):
            raise ValueError(f"unknown activation {name!r}")
        self.name = name
        self.grads: dict[str, np.ndarray] = {}
        self._out = None

    def params(self):
        return []

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        if self.name == "tanh":
            out = np.tanh(x)
        else:
            out = 1.0 / (1.0 + np.exp(-x))
        if training:
            self._out = out
        return out

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        y = self._out
        if self.name == "tanh":
            return grad_out * (1.0 - y * y)
        return grad_out * y * (1.0 - y)


class FlattenLayer:
    kind = "flatten"

    def __init__(self):
        self.grads: dict[str, np.ndarray] = {}
        self._shape = None

    def params(self):
        return []

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        if training:
            self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        return grad_out.reshape(self._shape)


class BatchNormLayer:
    """Per-unit batch standardization with learned scale/shift.

    Training mode normalizes by the mini-batch mean/variance and updates
    the running statistics; inference mode uses the running statistics,
    which start at (0, 1) so a freshly built network is usable before any
    training has happened.
    """

    kind = "batchnorm"

    def __init__(self, units: int, eps: float = 1e-5, momentum: float = 0.9):
        if eps < 0:
            raise ValueError("eps must be nonnegative")
        self.units = units
        self.eps = eps
        self.momentum = momentum
        self.gamma = np.ones(units)
        self.beta = np.zeros(units)
        self.running_mean = np.zeros(units)
        self.running_var = np.ones(units)
        self.grads: dict[str, np.ndarray] = {}
        self._xhat = None
        self._inv_std = None

    def params(self):
        return [("gamma", self.gamma, False), ("beta", self.beta, False)]

    def _check_shape(self, x: np.ndarray):
        if x.ndim != 2 or x.shape[1] != self.units:
            raise ShapeMismatch(f"batchnorm expects (batch, {self.units}), got {x.shape}")

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        self._check_shape(x)
        if not training:
            return self.forward_infer(x)
        m = x.shape[0]
        if m < 2:
            raise BatchTooSmall(f"batch normalization needs m >= 2 in training mode, got {m}")
        mu = x.mean(axis=0)
        var = x.var(axis=0)
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mu) * inv_std
        self._xhat = xhat
        self._inv_std = inv_std
        self.running_mean = self.momentum * self.running_mean + (1.0 - self.momentum) * mu
        self.running_var = self.momentum * self.running_var + (1.0 - self.momentum) * var
        return self.gamma * xhat + self.beta

    def forward_infer(self, x: np.ndarray) -> np.ndarray:
        self._check_shape(np.atleast_2d(x))
        if not (np.all(np.isfinite(self.running_mean)) and np.all(np.isfinite(self.running_var))
                and np.all(self.running_var >= 0)):
            raise UninitializedStats("batch-norm running statistics are not usable")
        xhat = (x - self.running_mean) / np.sqrt(self.running_var + self.eps)
        return self.gamma * xhat + self.beta

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        xhat, inv_std = self._xhat, self._inv_std
        m = grad_out.shape[0]
        self.grads["gamma"] = (grad_out * xhat).sum(axis=0)
        self.grads["beta"] = grad_out.sum(axis=0)
        dxhat = grad_out * self.gamma
        return (inv_std / m) * (
            m * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0)
        )


class DenseLayer:
    kind = "dense"

    def __init__(self, in_units: int, out_units: int, rng: np.random.Generator | None = None):
        self.in_units = in_units
        self.out_units = out_units
        if rng is None:
            self.weights = np.zeros((out_units, in_units))
        else:
            self.weights = _glorot_uniform(rng, (out_units, in_units), in_units, out_units)
        self.biases = np.zeros(out_units)
        self.grads: dict[str, np.ndarray] = {}
        self._x = None

    def params(self):
        return [("weights", self.weights, True), ("biases", self.biases, False)]

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        if x.ndim != 2 or x.shape[1] != self.in_units:
            raise ShapeMismatch(f"dense expects (batch, {self.in_units}), got {x.shape}")
        if training:
            self._x = x
        return x @ self.weights.T + self.biases

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        self.grads["weights"] = grad_out.T @ self._x
        self.grads["biases"] = grad_out.sum(axis=0)
        return grad_out @ self.weights


Layer = Conv1dLayer | SubsampleLayer | ActivationLayer | FlattenLayer | BatchNormLayer | DenseLayer


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


class Network:
    """Ordered layer stack with a softmax head over 2 classes.

    When the first layer is convolutional, a flat (batch, features) input
    grows a singleton map axis on the way in.
    """

    def __init__(self, layers: Sequence[Layer], rng_seed: int = 0,
                 activation: str = "tanh", l2: float = 0.0):
        self.layers = list(layers)
        self.rng_seed = rng_seed
        self.activation = activation
        self.l2 = l2

    # -- forward -----------------------------------------------------------

    def _lift(self, x: np.ndarray) -> np.ndarray:
        if isinstance(self.layers[0], Conv1dLayer) and x.ndim == 2:
            return x[:, None, :]
        return x

    def logits_batch(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        a = self._lift(np.asarray(x, dtype=np.float64))
        for layer in self.layers:
            a = layer.forward(a, training=training)
        return a

    def forward_batch(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        return _softmax(self.logits_batch(x, training=training))

    def predict_proba(self, features: Sequence[float]) -> np.ndarray:
        x = np.asarray(features, dtype=np.float64).reshape(1, -1)
        return self.forward_batch(x, training=False)[0]

    def predict(self, features: Sequence[float]) -> int:
        return int(np.argmax(self.predict_proba(features)))

    def shape_trace(self, n_features: int) -> list[tuple[int, ...]]:
        """Per-layer output shapes (without the batch axis) for a flat input."""
        a = self._lift(np.zeros((1, n_features)))
        shapes = []
        for layer in self.layers:
            a = layer.forward(a, training=False)
            shapes.append(a.shape[1:])
        return shapes

    # -- parameters ----------------------------------------------------------

    def param_items(self) -> Iterator[tuple[Layer, str, np.ndarray, bool]]:
        for layer in self.layers:
            for name, arr, reg in layer.params():
                yield layer, name, arr, reg

    def n_params(self) -> int:
        return sum(arr.size for _, _, arr, _ in self.param_items())

    def regularization_loss(self) -> float:
        if self.l2 == 0.0:
            return 0.0
        total = sum(float(np.sum(arr * arr)) for _, _, arr, reg in self.param_items() if reg)
        return 0.5 * self.l2 * total

    # -- training ------------------------------------------------------------

    def loss_batch(self, x: np.ndarray, labels: np.ndarray, training: bool = True) -> float:
        """Objective (mean cross-entropy plus any L2 penalty) without updating."""
        logp = _log_softmax(self.logits_batch(x, training=training))
        ce = -float(np.mean(logp[np.arange(len(labels)), labels]))
        return ce + self.regularization_loss()

    def _backward(self, grad_logits: np.ndarray) -> None:
        g = grad_logits
        for layer in reversed(self.layers):
            g = layer.backward(g)
        if self.l2 != 0.0:
            for layer, name, arr, reg in self.param_items():
                if reg:
                    layer.grads[name] = layer.grads[name] + self.l2 * arr

    def _sgd_step(self, lr: float) -> None:
        for layer, name, arr, _ in self.param_items():
            arr -= lr * layer.grads[name]


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 8
    learning_rate: float = 0.05
    shuffle: bool = True
    early_stop: str = "none"  # "none" | "test_driven"
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.early_stop not in ("none", "test_driven"):
            raise ValueError(f"unknown early_stop mode {self.early_stop!r}")


@dataclass
class TrainHistory:
    epoch_losses: list[float] = field(default_factory=list)
    stop_epoch: int | None = None

    @property
    def epochs_run(self) -> int:
        return len(self.epoch_losses)


def backward_and_update(net: Network, x: np.ndarray, labels: np.ndarray, lr: float) -> float:
    """One SGD step on a mini-batch; returns the pre-update objective."""
    x = np.asarray(x, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if x.shape[0] == 0:
        raise ValueError("empty batch")
    logits = net.logits_batch(x, training=True)
    logp = _log_softmax(logits)
    loss = -float(np.mean(logp[np.arange(len(labels)), labels])) + net.regularization_loss()
    if not np.isfinite(loss):
        raise NonFiniteLoss(f"training diverged: loss = {loss}")
    probs = np.exp(logp)
    onehot = np.zeros_like(probs)
    onehot[np.arange(len(labels)), labels] = 1.0
    net._backward((probs - onehot) / len(labels))
    net._sgd_step(lr)
    return loss


def _has_batchnorm(net: Network) -> bool:
    return any(isinstance(layer, BatchNormLayer) for layer in net.layers)


def _make_batches(order: np.ndarray, batch_size: int, merge_singleton: bool) -> list[np.ndarray]:
    batches = [order[i : i + batch_size] for i in range(0, len(order), batch_size)]
    if merge_singleton and len(batches) > 1 and len(batches[-1]) == 1:
        # batch norm cannot standardize a single example; fold it into the
        # previous batch instead of dropping it
        batches[-2] = np.concatenate([batches[-2], batches[-1]])
        batches.pop()
    return batches


def train(
    net: Network,
    x: np.ndarray,
    labels: np.ndarray,
    config: TrainConfig,
    test_example: tuple[np.ndarray, int] | None = None,
) -> TrainHistory:
    """Mini-batch SGD for up to ``config.epochs`` epochs; mutates ``net``.

    In ``test_driven`` mode the held-out example is classified after
    every epoch and training stops at the first epoch that gets it right.
    That leaks the test label into the stopping decision by design; the
    default mode never looks at it.
    """
    x = np.asarray(x, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if x.shape[0] == 0:
        raise ValueError("training set is empty")
    rng = np.random.default_rng(config.seed)
    merge = _has_batchnorm(net)
    history = TrainHistory()
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(labels)) if config.shuffle else np.arange(len(labels))
        total = 0.0
        for batch in _make_batches(order, config.batch_size, merge):
            total += backward_and_update(net, x[batch], labels[batch], config.learning_rate) * len(batch)
        history.epoch_losses.append(total / len(labels))
        if config.early_stop == "test_driven" and test_example is not None:
            test_x, test_label = test_example
            if net.predict(test_x) == int(test_label):
                history.stop_epoch = epoch
                break
    return history


# --- reference architectures ---------------------------------------------------


def build_reference_cnn(seed: int = 0) -> Network:
    """The 20C-20S-12C-12S stack on 24 inputs, batch-normalized 48-wide neck.

    Shape trace for one example: (20,20) -> (20,10) -> (12,8) -> (12,4)
    -> 48 -> 2; 1046 trainable parameters.
    """
    rng = np.random.default_rng(seed)
    layers = [
        Conv1dLayer(1, 20, 5, rng),
        ActivationLayer("tanh"),
        SubsampleLayer(2),
        Conv1dLayer(20, 12, 3, rng),
        ActivationLayer("tanh"),
        SubsampleLayer(2),
        FlattenLayer(),
        BatchNormLayer(48),
        ActivationLayer("tanh"),
        DenseLayer(48, 2, rng),
    ]
    net = Network(layers, rng_seed=seed, activation="tanh")
    flat = net.shape_trace(24)[-4]
    if flat != (48,):
        raise ShapeMismatch(f"flattened width {flat} != (48,)")
    return net


def build_reference_mlp(seed: int = 0) -> Network:
    """24 -> 200 -> 2 dense net with L2 weight penalty 0.1."""
    rng = np.random.default_rng(seed)
    layers = [
        DenseLayer(24, 200, rng),
        ActivationLayer("tanh"),
        DenseLayer(200, 2, rng),
    ]
    return Network(layers, rng_seed=seed, activation="tanh", l2=0.1)


# --- model files ------------------------------------------------------------------


def _fmt(values: np.ndarray) -> str:
    return " ".join(_F % v for v in values.ravel())


def save_model(net: Network, path: str | Path) -> None:
    lines = [
        f"{MODEL_MAGIC} {MODEL_VERSION}",
        f"activation {net.activation}",
        f"l2 {_F % net.l2}",
        f"seed {net.rng_seed}",
        f"layers {len(net.layers)}",
    ]
    for layer in net.layers:
        if isinstance(layer, Conv1dLayer):
            lines.append(f"conv1d {layer.in_maps} {layer.out_maps} {layer.kernel_len}")
            lines.append("kernels " + _fmt(layer.kernels))
            lines.append("biases " + _fmt(layer.biases))
        elif isinstance(layer, SubsampleLayer):
            lines.append(f"subsample {layer.factor}")
        elif isinstance(layer, ActivationLayer):
            lines.append(f"activation {layer.name}")
        elif isinstance(layer, FlattenLayer):
            lines.append("flatten")
        elif isinstance(layer, BatchNormLayer):
            lines.append(f"batchnorm {layer.units} {_F % layer.eps} {_F % layer.momentum}")
            lines.append("gamma " + _fmt(layer.gamma))
            lines.append("beta " + _fmt(layer.beta))
            lines.append("running_mean " + _fmt(layer.running_mean))
            lines.append("running_var " + _fmt(layer.running_var))
        elif isinstance(layer, DenseLayer):
            lines.append(f"dense {layer.in_units} {layer.out_units}")
            lines.append("weights " + _fmt(layer.weights))
            lines.append("biases " + _fmt(layer.biases))
        else:
            raise ValueError(f"cannot serialize layer kind {type(layer).__name__}")
    lines.append("end")
    Path(path).write_text("\n".join(lines) + "\n")


class _ModelReader:
    def __init__(self, text: str):
        self.lines = text.splitlines()
        self.pos = 0

    def next(self, expect: str | None = None) -> list[str]:
        if self.pos >= len(self.lines):
            raise MalformedModelFile("unexpected end of model file")
        parts = self.lines[self.pos].split()
        self.pos += 1
        if not parts:
            raise MalformedModelFile(f"blank line at {self.pos}")
        if expect is not None and parts[0] != expect:
            raise MalformedModelFile(f"expected {expect!r} at line {self.pos}, got {parts[0]!r}")
        return parts

    def array(self, name: str, shape: tuple[int, ...]) -> np.ndarray:
        parts = self.next(expect=name)
        want = int(np.prod(shape))
        if len(parts) - 1 != want:
            raise MalformedModelFile(
                f"{name}: expected {want} values, got {len(parts) - 1}"
            )
        try:
            return np.array([float(v) for v in parts[1:]]).reshape(shape)
        except ValueError as e:
            raise MalformedModelFile(f"{name}: {e}") from e


def load_model(path: str | Path) -> Network:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise MalformedModelFile(f"cannot read {path}: {e}") from e
    r = _ModelReader(text)
    magic = r.next()
    if magic[0] != MODEL_MAGIC or len(magic) != 2:
        raise MalformedModelFile(f"bad header {' '.join(magic)!r}")
    if int(magic[1]) != MODEL_VERSION:
        raise VersionMismatch(f"model version {magic[1]}, reader supports {MODEL_VERSION}")
    activation = r.next(expect="activation")[1]
    l2 = float(r.next(expect="l2")[1])
    seed = int(r.next(expect="seed")[1])
    n_layers = int(r.next(expect="layers")[1])

    layers: list[Layer] = []
    try:
        for _ in range(n_layers):
            parts = r.next()
            kind = parts[0]
            if kind == "conv1d":
                in_maps, out_maps, klen = map(int, parts[1:4])
                layer = Conv1dLayer(in_maps, out_maps, klen)
                layer.kernels = r.array("kernels", (out_maps, in_maps, klen))
                layer.biases = r.array("biases", (out_maps,))
            elif kind == "subsample":
                layer = SubsampleLayer(int(parts[1]))
            elif kind == "activation":
                layer = ActivationLayer(parts[1])
            elif kind == "flatten":
                layer = FlattenLayer()
            elif kind == "batchnorm":
                units = int(parts[1])
                layer = BatchNormLayer(units, eps=float(parts[2]), momentum=float(parts[3]))
                layer.gamma = r.array("gamma", (units,))
                layer.beta = r.array("beta", (units,))
                layer.running_mean = r.array("running_mean", (units,))
                layer.running_var = r.array("running_var", (units,))
            elif kind == "dense":
                in_units, out_units = map(int, parts[1:3])
                layer = DenseLayer(in_units, out_units)
                layer.weights = r.array("weights", (out_units, in_units))
                layer.biases = r.array("biases", (out_units,))
            else:
                raise MalformedModelFile(f"unknown layer kind {kind!r}")
            layers.append(layer)
        r.next(expect="end")
    except (ValueError, IndexError) as e:
        raise MalformedModelFile(str(e)) from e
    return Network(layers, rng_seed=seed, activation=activation, l2=l2)


def forward(net: Network, features: Sequence[float]) -> np.ndarray:
    """Class probabilities for one feature vector (inference mode)."""
    return net.predict_proba(features)
