"""Minimal dense feed-forward network engine.

Everything here works on float64 numpy arrays. Inputs may be a single
vector of shape ``(d,)`` or a batch of shape ``(m, d)``; weights are stored
as ``(output_dim, input_dim)`` matrices so a layer computes
``z = a @ W.T + b``.

The engine is deliberately small: Xavier-uniform initialisation, ReLU /
sigmoid / identity activations, inverted dropout on hidden layers, binary
cross-entropy, backpropagation, Adadelta and a mini-batch training loop
with early stopping.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

ACTIVATIONS = ("relu", "sigmoid", "identity")
BCE_EPS = 1e-7
FORMAT_VERSION = 1


class ConfigurationError(ValueError):
    """Raised for inconsistent layer specs or training settings."""


class NonFiniteGradientError(FloatingPointError):
    """Raised when an optimizer step receives NaN or inf gradients."""


@dataclass(frozen=True)
class LayerSpec:
    input_dim: int
    output_dim: int
    activation: str = "relu"

    def __post_init__(self):
        if int(self.input_dim) < 1 or int(self.output_dim) < 1:
            raise ConfigurationError(f"layer dims must be >= 1, got {self}")
        if self.activation not in ACTIVATIONS:
            raise ConfigurationError(f"unknown activation {self.activation!r}")


def chain(widths: Sequence[int], hidden: str = "relu", output: str = "sigmoid") -> list[LayerSpec]:
    """Build layer specs from a width list, e.g. ``[6, 256, 64, 16, 64, 256, 6]``."""
    if len(widths) < 2:
        raise ConfigurationError("need at least an input and an output width")
    n = len(widths) - 1
    return [
        LayerSpec(widths[i], widths[i + 1], output if i == n - 1 else hidden)
        for i in range(n)
    ]


def _check_chain(specs: Sequence[LayerSpec]) -> None:
    if not specs:
        raise ConfigurationError("network needs at least one layer")
    for k in range(len(specs) - 1):
        if specs[k].output_dim != specs[k + 1].input_dim:
            raise ConfigurationError(
                f"layer {k} output_dim={specs[k].output_dim} does not match "
                f"layer {k + 1} input_dim={specs[k + 1].input_dim}"
            )


@dataclass(frozen=True)
class DenseNet:
    """Layer specs plus parameters. Treated as immutable; updates return copies."""

    layers: tuple[LayerSpec, ...]
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def __post_init__(self):
        _check_chain(self.layers)
        if len(self.weights) != len(self.layers) or len(self.biases) != len(self.layers):
            raise ConfigurationError("one weight matrix and one bias vector per layer")
        for k, (spec, w, b) in enumerate(zip(self.layers, self.weights, self.biases)):
            if w.shape != (spec.output_dim, spec.input_dim) or b.shape != (spec.output_dim,):
                raise ConfigurationError(f"parameter shape mismatch in layer {k}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ConfigurationError(f"non-finite parameter in layer {k}")

    @property
    def input_dim(self) -> int:
        return self.layers[0].input_dim

    @property
    def output_dim(self) -> int:
        return self.layers[-1].output_dim

    def params(self) -> list[np.ndarray]:
        """Flat parameter list ``[W0, b0, W1, b1, ...]``."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def with_params(self, params: Sequence[np.ndarray]) -> "DenseNet":
        return DenseNet(
            self.layers,
            tuple(np.array(p, dtype=np.float64) for p in params[0::2]),
            tuple(np.array(p, dtype=np.float64) for p in params[1::2]),
        )

    def copy(self) -> "DenseNet":
        return self.with_params(self.params())

    def __call__(self, x) -> np.ndarray:
        return forward(self, x).output

    def __eq__(self, other):
        if not isinstance(other, DenseNet) or self.layers != other.layers:
            return False
        return all(np.array_equal(p, q) for p, q in zip(self.params(), other.params()))

    __hash__ = None


@dataclass
class AdadeltaState:
    rho: float = 0.95
    eps: float = 1e-7
    grad_accum: list = field(default_factory=list)
    update_accum: list = field(default_factory=list)

    @classmethod
    def for_net(cls, net: DenseNet, rho: float = 0.95, eps: float = 1e-7) -> "AdadeltaState":
        if not 0.0 < rho < 1.0 or eps <= 0.0:
            raise ConfigurationError("Adadelta needs 0 < rho < 1 and eps > 0")
        zeros = [np.zeros_like(p) for p in net.params()]
        return cls(rho, eps, zeros, [z.copy() for z in zeros])

    def copy(self) -> "AdadeltaState":
        return AdadeltaState(
            self.rho,
            self.eps,
            [g.copy() for g in self.grad_accum],
            [u.copy() for u in self.update_accum],
        )


@dataclass(frozen=True)
class TrainConfig:
    """Training hyperparameters.

    ``val_fraction=0`` disables the internal validation split and with it
    early stopping; the loop then runs for exactly ``max_epochs``.
    """

    batch_size: int = 100
    dropout_rate: float = 0.1
    max_epochs: int = 1200
    learning_rate: float = 1.0
    early_stop_patience: int = 50
    val_fraction: float = 0.1
    rng_seed: int = 0
    rho: float = 0.95
    eps: float = 1e-7

    def __post_init__(self):
        if self.batch_size < 1 or self.max_epochs < 1 or self.early_stop_patience < 1:
            raise ConfigurationError("batch_size, max_epochs and early_stop_patience must be >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigurationError("dropout_rate must lie in [0, 1)")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ConfigurationError("val_fraction must lie in [0, 1)")
        if self.learning_rate <= 0.0:
            raise ConfigurationError("learning_rate must be positive")


# ---------------------------------------------------------------------------
# initialisation and forward pass


def xavier_bound(fan_in: int, fan_out: int) -> float:
    return math.sqrt(6.0 / (fan_in + fan_out))


def init_network(specs: Sequence[LayerSpec], seed: int) -> DenseNet:
    """Xavier-uniform weights, zero biases. Deterministic in ``seed``."""
    specs = tuple(specs)
    _check_chain(specs)
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for spec in specs:
        limit = xavier_bound(spec.input_dim, spec.output_dim)
        weights.append(rng.uniform(-limit, limit, size=(spec.output_dim, spec.input_dim)))
        biases.append(np.zeros(spec.output_dim))
    return DenseNet(specs, tuple(weights), tuple(biases))


def _activate(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "sigmoid":
        # split form avoids overflow in exp for large |z|
        out = np.empty_like(z)
        pos = z >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
        ez = np.exp(z[~pos])
        out[~pos] = ez / (1.0 + ez)
        return out
    return z.copy()


def _activation_grad(name: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    if name == "relu":
        return (z > 0).astype(np.float64)
    if name == "sigmoid":
        return a * (1.0 - a)
    return np.ones_like(z)


@dataclass
class Trace:
    """Per-layer record of a forward pass, consumed by :func:`backward`.

    ``inputs[k]`` feeds layer ``k``; ``pre[k]`` and ``post[k]`` are its
    pre-activation and activation (before dropout); ``masks[k]`` is the
    scaled dropout mask applied to ``post[k]`` or ``None``.
    """

    inputs: list
    pre: list
    post: list
    masks: list
    squeeze: bool

    @property
    def output(self) -> np.ndarray:
        out = self.post[-1]
        return out[0] if self.squeeze else out


def forward(net: DenseNet, x, dropout_rate: float = 0.0, mode: str = "infer", rng=None) -> Trace:
    """Run the network and keep every intermediate activation.

    In ``train`` mode hidden activations go through inverted dropout: each
    unit is zeroed with probability ``dropout_rate`` and survivors are
    scaled by ``1 / (1 - dropout_rate)``. The output layer never drops.
    """
    if mode not in ("train", "infer"):
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
    a = np.asarray(x, dtype=np.float64)
    squeeze = a.ndim == 1
    if squeeze:
        a = a[None, :]
    if a.ndim != 2 or a.shape[1] != net.input_dim:
        raise ValueError(f"expected input width {net.input_dim}, got shape {np.shape(x)}")
    if not np.all(np.isfinite(a)):
        raise ValueError("non-finite network input")
    use_dropout = mode == "train" and dropout_rate > 0.0
    if use_dropout and rng is None:
        raise ValueError("train-mode dropout needs an rng")
    keep = 1.0 - dropout_rate

    trace = Trace([], [], [], [], squeeze)
    last = len(net.layers) - 1
    for k, (spec, w, b) in enumerate(zip(net.layers, net.weights, net.biases)):
        trace.inputs.append(a)
        z = a @ w.T + b
        h = _activate(spec.activation, z)
        trace.pre.append(z)
        trace.post.append(h)
        mask = None
        if use_dropout and k < last:
            mask = (rng.random(h.shape) < keep) / keep
            h = h * mask
        trace.masks.append(mask)
        a = h
    return trace


# ---------------------------------------------------------------------------
# loss and gradients


def bce_loss(predicted, target) -> float:
    """Mean binary cross-entropy over all components (and rows)."""
    p = np.asarray(predicted, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch: predicted {p.shape} vs target {t.shape}")
    p = np.clip(p, BCE_EPS, 1.0 - BCE_EPS)
    return float(np.mean(-(t * np.log(p) + (1.0 - t) * np.log1p(-p))))


def bce_rows(predicted: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Per-row mean BCE for 2-D inputs."""
    p = np.clip(predicted, BCE_EPS, 1.0 - BCE_EPS)
    return np.mean(-(target * np.log(p) + (1.0 - target) * np.log1p(-p)), axis=-1)


def backward(net: DenseNet, trace: Trace, target) -> list[np.ndarray]:
    """Gradients of ``bce_loss(output, target)`` in ``[dW0, db0, dW1, ...]`` order."""
    t = np.asarray(target, dtype=np.float64)
    if t.ndim == 1:
        t = t[None, :]
    out = trace.post[-1]
    if len(trace.pre) != len(net.layers) or t.shape != out.shape:
        raise ValueError("trace/target does not match this network")

    n = out.size
    inside = (out > BCE_EPS) & (out < 1.0 - BCE_EPS)
    last = net.layers[-1]
    if last.activation == "sigmoid":
        # BCE o sigmoid collapses to (p - t)
        delta = np.where(inside, out - t, 0.0) / n
    else:
        p = np.clip(out, BCE_EPS, 1.0 - BCE_EPS)
        dp = np.where(inside, (p - t) / (p * (1.0 - p)), 0.0) / n
        delta = dp * _activation_grad(last.activation, trace.pre[-1], out)

    grads: list = [None] * (2 * len(net.layers))
    for k in range(len(net.layers) - 1, -1, -1):
        grads[2 * k] = delta.T @ trace.inputs[k]
        grads[2 * k + 1] = delta.sum(axis=0)
        if k == 0:
            break
        da = delta @ net.weights[k]
        if trace.masks[k - 1] is not None:
            da = da * trace.masks[k - 1]
        spec = net.layers[k - 1]
        delta = da * _activation_grad(spec.activation, trace.pre[k - 1], trace.post[k - 1])
    return grads


def adadelta_step(net: DenseNet, state: AdadeltaState, grads: Sequence[np.ndarray], lr: float = 1.0):
    """One Adadelta update. Returns ``(new_net, new_state)``; inputs are untouched."""
    params = net.params()
    if len(grads) != len(params):
        raise ValueError("one gradient per parameter tensor required")
    rho, eps = state.rho, state.eps
    new_params, new_g2, new_d2 = [], [], []
    for p, g, g2, d2 in zip(params, grads, state.grad_accum, state.update_accum):
        g = np.asarray(g, dtype=np.float64)
        if g.shape != p.shape or g2.shape != p.shape:
            raise ValueError("gradient/state shape mismatch")
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(
                f"non-finite gradient in tensor of shape {g.shape}: "
                f"{int(np.sum(~np.isfinite(g)))} bad entries"
            )
        g2 = rho * g2 + (1.0 - rho) * g * g
        step = -np.sqrt(d2 + eps) / np.sqrt(g2 + eps) * g
        d2 = rho * d2 + (1.0 - rho) * step * step
        new_params.append(p + lr * step)
        new_g2.append(g2)
        new_d2.append(d2)
    return net.with_params(new_params), AdadeltaState(rho, eps, new_g2, new_d2)


# ---------------------------------------------------------------------------
# training loop


class EarlyStopping:
    """Track the best validation loss and decide when patience has run out."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best_loss = math.inf
        self.best_epoch = 0
        self.best_net: Optional[DenseNet] = None
        self.bad_epochs = 0

    def update(self, epoch: int, val_loss: float, net: DenseNet) -> bool:
        """Record ``val_loss`` for ``epoch`` (1-based). True means stop now."""
        if val_loss < self.best_loss:
            self.best_loss = val_loss
            self.best_epoch = epoch
            self.best_net = net
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
        return self.bad_epochs >= self.patience


@dataclass
class History:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    best_epoch: int = 0
    stopped_epoch: int = 0
    early_stopped: bool = False


Corruptor = Callable[[np.ndarray, np.random.Generator], np.ndarray]


def _eval_loss(net: DenseNet, inputs: np.ndarray, targets: np.ndarray) -> float:
    return bce_loss(forward(net, inputs).post[-1], targets)


def train(
    net: DenseNet,
    inputs,
    targets,
    config: TrainConfig = TrainConfig(),
    corruptor: Optional[Corruptor] = None,
) -> tuple[DenseNet, History]:
    """Mini-batch Adadelta training with optional input corruption.

    A ``val_fraction`` slice is held out from the data. Training stops once
    the validation loss fails to improve for ``early_stop_patience``
    consecutive epochs, and the best-validation parameters are returned.

    ``corruptor(batch, rng)`` is applied to every training batch afresh;
    targets stay clean. Validation inputs are corrupted once up front so
    that validation losses are comparable across epochs.
    """
    X = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    Y = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    if X.shape[0] == 0:
        raise ValueError("cannot train on an empty dataset")
    if X.shape[0] != Y.shape[0]:
        raise ValueError("inputs and targets must have the same number of rows")

    rng = np.random.default_rng(config.rng_seed)
    n = X.shape[0]
    n_val = int(n * config.val_fraction)
    if config.val_fraction > 0.0 and n_val == 0:
        raise ValueError(
            f"val_fraction={config.val_fraction} leaves no validation sample out of {n}"
        )
    if n_val >= n:
        raise ValueError("validation split leaves no training data")
    order = rng.permutation(n)
    val_idx, tr_idx = order[:n_val], order[n_val:]
    Xtr, Ytr = X[tr_idx], Y[tr_idx]
    Xval, Yval = X[val_idx], Y[val_idx]
    if n_val and corruptor is not None:
        Xval = corruptor(Xval, rng)

    state = AdadeltaState.for_net(net, config.rho, config.eps)
    stopper = EarlyStopping(config.early_stop_patience) if n_val else None
    history = History()
    m = Xtr.shape[0]
    for epoch in range(1, config.max_epochs + 1):
        perm = rng.permutation(m)
        total = 0.0
        for start in range(0, m, config.batch_size):
            idx = perm[start:start + config.batch_size]
            xb = Xtr[idx]
            if corruptor is not None:
                xb = corruptor(xb, rng)
            trace = forward(net, xb, config.dropout_rate, "train", rng)
            total += bce_loss(trace.post[-1], Ytr[idx]) * len(idx)
            grads = backward(net, trace, Ytr[idx])
            net, state = adadelta_step(net, state, grads, config.learning_rate)
        history.train_loss.append(total / m)
        history.stopped_epoch = epoch
        if stopper is not None:
            val = _eval_loss(net, Xval, Yval)
            history.val_loss.append(val)
            if stopper.update(epoch, val, net):
                history.early_stopped = True
                break

    if stopper is not None:
        history.best_epoch = stopper.best_epoch
        net = stopper.best_net
    else:
        history.best_epoch = history.stopped_epoch
    return net, history


# ---------------------------------------------------------------------------
# plain-text serialisation


def dumps(net: DenseNet) -> str:
    """Versioned text form; floats are written as exact hex literals."""
    buf = io.StringIO()
    buf.write(f"densenet {FORMAT_VERSION}\n")
    buf.write(f"layers {len(net.layers)}\n")
    for spec in net.layers:
        buf.write(f"layer {spec.input_dim} {spec.output_dim} {spec.activation}\n")
    for k, (w, b) in enumerate(zip(net.weights, net.biases)):
        buf.write(f"weights {k}\n")
        for row in w:
            buf.write(" ".join(float(v).hex() for v in row) + "\n")
        buf.write(f"bias {k}\n")
        buf.write(" ".join(float(v).hex() for v in b) + "\n")
    return buf.getvalue()


def loads(text: str) -> DenseNet:
    lines = iter(text.splitlines())

    def expect(word: str) -> list[str]:
        parts = next(lines).split()
        if not parts or parts[0] != word:
            raise ValueError(f"malformed network text: expected {word!r}, got {parts!r}")
        return parts[1:]

    try:
        (version,) = expect("densenet")
        if int(version) != FORMAT_VERSION:
            raise ValueError(f"unsupported network format version {version}")
        (count,) = expect("layers")
        specs = []
        for _ in range(int(count)):
            i, o, act = expect("layer")
            specs.append(LayerSpec(int(i), int(o), act))
        weights, biases = [], []
        for k, spec in enumerate(specs):
            expect("weights")
            rows = [[float.fromhex(v) for v in next(lines).split()] for _ in range(spec.output_dim)]
            weights.append(np.array(rows, dtype=np.float64).reshape(spec.output_dim, spec.input_dim))
            expect("bias")
            biases.append(np.array([float.fromhex(v) for v in next(lines).split()], dtype=np.float64))
    except StopIteration:
        raise ValueError("truncated network text") from None
    return DenseNet(tuple(specs), tuple(weights), tuple(biases))


def save(net: DenseNet, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(dumps(net))


def load(path) -> DenseNet:
    with open(path, encoding="ascii") as fh:
        return loads(fh.read())
