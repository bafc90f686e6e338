"""Dense rectifier network with hand-written backpropagation and Adam.

The network maps ``x -> relu(... relu(x W0 + b0) ... W_L + b_L)``; the output
layer is rectified as well so every prediction is a valid (nonnegative)
density ratio. Weights are stored ``(fan_in, fan_out)`` so a batch is
propagated with a plain right-multiplication.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

CHECKPOINT_VERSION = 1


@dataclass
class MlpModel:
    layer_sizes: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    l2_coefficient: float = 0.0
    dropout_keep_probability: float = 1.0

    def __post_init__(self):
        self.layer_sizes = tuple(int(s) for s in self.layer_sizes)
        _check_layer_sizes(self.layer_sizes)
        if len(self.weights) != len(self.layer_sizes) - 1 or len(self.biases) != len(self.weights):
            raise ValueError("one weight matrix and bias vector per layer required")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            shape = (self.layer_sizes[i], self.layer_sizes[i + 1])
            if w.shape != shape or b.shape != (shape[1],):
                raise ValueError(f"layer {i}: expected weight {shape}, got {w.shape}")
        if self.l2_coefficient < 0:
            raise ValueError("l2_coefficient must be >= 0")
        if not 0.0 < self.dropout_keep_probability <= 1.0:
            raise ValueError("dropout_keep_probability must lie in (0, 1]")

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def parameters(self) -> list[np.ndarray]:
        return [*self.weights, *self.biases]

    def copy(self) -> "MlpModel":
        return MlpModel(
            self.layer_sizes,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.l2_coefficient,
            self.dropout_keep_probability,
        )

    def predict(self, batch: np.ndarray) -> np.ndarray:
        return mlp_forward(self, batch, training=False)[0]


@dataclass
class ForwardTrace:
    inputs: np.ndarray
    pre_activations: list[np.ndarray]
    activations: list[np.ndarray]
    masks: list[np.ndarray | None]


@dataclass
class ParamGrads:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def tensors(self) -> list[np.ndarray]:
        return [*self.weights, *self.biases]


@dataclass
class OptimizerState:
    first_moments: list[np.ndarray]
    second_moments: list[np.ndarray]
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    skipped_steps: int = field(default=0)
    scratch: list[np.ndarray] | None = field(default=None, repr=False)

    @classmethod
    def for_model(cls, model: MlpModel, learning_rate: float = 1e-3, **kwargs) -> "OptimizerState":
        params = model.parameters()
        return cls(
            [np.zeros_like(p) for p in params],
            [np.zeros_like(p) for p in params],
            learning_rate=learning_rate,
            **kwargs,
        )


def _check_layer_sizes(layer_sizes):
    if len(layer_sizes) < 2:
        raise ValueError("need at least an input and an output layer")
    if any(s < 1 for s in layer_sizes):
        raise ValueError(f"layer widths must be positive, got {list(layer_sizes)}")
    if layer_sizes[-1] != 1:
        raise ValueError(f"output layer width must be 1, got {layer_sizes[-1]}")


def mlp_init(
    layer_sizes,
    seed: int = 0,
    l2: float = 0.0,
    keep_prob: float = 1.0,
    output_bias: float = 1.0,
) -> MlpModel:
    """He-style uniform initialisation (variance ``2/fan_in``).

    Hidden biases start at 0.01. The output bias starts at ``output_bias`` so
    a fresh network predicts ratios around 1 rather than a rectified zero.
    """
    layer_sizes = tuple(int(s) for s in layer_sizes)
    _check_layer_sizes(layer_sizes)
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        limit = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.full(fan_out, 0.01))
    biases[-1][:] = output_bias
    return MlpModel(layer_sizes, weights, biases, l2, keep_prob)


def mlp_forward(
    model: MlpModel,
    batch: np.ndarray,
    training: bool = False,
    seed: int | np.random.Generator | None = None,
) -> tuple[np.ndarray, ForwardTrace]:
    """Propagate ``batch`` (n x d) and return the n outputs with a trace for backprop.

    Inverted dropout is applied to hidden activations only when ``training``.
    """
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None] if model.layer_sizes[0] == 1 else x[None, :]
    if x.shape[1] != model.layer_sizes[0]:
        raise ValueError(f"batch has {x.shape[1]} columns, model expects {model.layer_sizes[0]}")
    keep = model.dropout_keep_probability
    use_dropout = training and keep < 1.0
    rng = np.random.default_rng(seed) if use_dropout else None

    pre, post, masks = [], [], []
    h = x
    last = model.n_layers - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = h @ w + b
        h = np.maximum(z, 0.0)
        mask = None
        if use_dropout and i < last:
            mask = (rng.random(h.shape) < keep) / keep
            h = h * mask
        pre.append(z)
        post.append(h)
        masks.append(mask)
    return h[:, 0], ForwardTrace(x, pre, post, masks)


def mlp_backward(
    model: MlpModel, trace: ForwardTrace, output_grads: np.ndarray, output_pass_through=None
) -> ParamGrads:
    """Gradients of ``loss + l2/2 * sum ||W||^2`` given dloss/doutput.

    ``output_pass_through`` optionally marks batch rows whose output gradient
    skips the final rectifier's gate (used to revive dead outputs); with the
    default ``None`` this is the exact gradient.
    """
    g = np.asarray(output_grads, dtype=np.float64).reshape(-1, 1)
    if len(trace.pre_activations) != model.n_layers or g.shape[0] != trace.inputs.shape[0]:
        raise ValueError("trace does not match model or output gradient")
    grad_w = [None] * model.n_layers
    grad_b = [None] * model.n_layers
    gate = trace.pre_activations[-1] > 0
    if output_pass_through is not None:
        gate = gate | np.asarray(output_pass_through, dtype=bool).reshape(-1, 1)
    delta = g * gate
    for i in range(model.n_layers - 1, -1, -1):
        h_in = trace.inputs if i == 0 else trace.activations[i - 1]
        grad_w[i] = h_in.T @ delta
        if model.l2_coefficient:
            grad_w[i] += model.l2_coefficient * model.weights[i]
        grad_b[i] = delta.sum(axis=0)
        if i > 0:
            dh = delta @ model.weights[i].T
            mask = trace.masks[i - 1]
            if mask is not None:
                dh = dh * mask
            delta = dh * (trace.pre_activations[i - 1] > 0)
    return ParamGrads(grad_w, grad_b)


def rescale_output(model: MlpModel, factor: float) -> None:
    """Multiply every prediction by ``factor > 0`` (exact: relu is positively homogeneous)."""
    if not factor > 0:
        raise ValueError("factor must be positive")
    model.weights[-1] *= factor
    model.biases[-1] *= factor


def l2_penalty(model: MlpModel) -> float:
    return 0.5 * model.l2_coefficient * sum(float(np.sum(w * w)) for w in model.weights)


def _all_finite(tensors) -> bool:
    # a finite sum proves every entry finite; only fall back to the
    # elementwise check when the sum itself overflowed or is nan
    for t in tensors:
        if not np.isfinite(t.sum()) and not np.all(np.isfinite(t)):
            return False
    return True


def adam_step(model: MlpModel, state: OptimizerState, grads: ParamGrads) -> bool:
    """Apply one bias-corrected Adam update in place.

    Returns False (and warns) without touching the parameters when any
    gradient entry is non-finite.
    """
    tensors = grads.tensors()
    if not _all_finite(tensors):
        state.skipped_steps += 1
        warnings.warn("non-finite gradient; Adam update skipped", RuntimeWarning, stacklevel=2)
        return False
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1**state.step
    corr2 = 1.0 - b2**state.step
    if state.scratch is None:
        state.scratch = [np.empty_like(p) for p in model.parameters()]
    for p, g, m, v, tmp in zip(model.parameters(), tensors, state.first_moments,
                               state.second_moments, state.scratch):
        # m = b1 m + (1-b1) g;  v = b2 v + (1-b2) g^2;
        # p -= lr * (m/corr1) / (sqrt(v/corr2) + eps), without temporaries
        np.multiply(g, 1.0 - b1, out=tmp)
        m *= b1
        m += tmp
        np.multiply(g, g, out=tmp)
        tmp *= 1.0 - b2
        v *= b2
        v += tmp
        np.divide(v, corr2, out=tmp)
        np.sqrt(tmp, out=tmp)
        tmp += state.epsilon
        np.divide(m, tmp, out=tmp)
        tmp *= state.learning_rate / corr1
        p -= tmp
    return True


OutputLoss = Callable[[np.ndarray], tuple[float, np.ndarray]]


def gradient_check(
    model: MlpModel,
    loss: OutputLoss,
    batch: np.ndarray,
    eps: float = 1e-6,
    backward: Callable[[MlpModel, ForwardTrace, np.ndarray], ParamGrads] = mlp_backward,
) -> float:
    """Largest relative gap between backprop and central finite differences.

    ``loss`` maps the output vector to ``(value, d value / d outputs)``. The
    L2 penalty is part of the checked objective. Dropout is never applied.
    """

    def total(m):
        out, _ = mlp_forward(m, batch, training=False)
        return loss(out)[0] + l2_penalty(m)

    out, trace = mlp_forward(model, batch, training=False)
    analytic = backward(model, trace, loss(out)[1]).tensors()
    probe = model.copy()
    worst = 0.0
    for p, a in zip(probe.parameters(), analytic):
        flat = p.reshape(-1)
        a_flat = a.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + eps
            up = total(probe)
            flat[j] = orig - eps
            down = total(probe)
            flat[j] = orig
            numeric = (up - down) / (2.0 * eps)
            denom = max(abs(a_flat[j]), abs(numeric), 1e-12)
            worst = max(worst, abs(a_flat[j] - numeric) / denom)
    return worst


def save_checkpoint(model: MlpModel, path: str | Path) -> Path:
    path = Path(path)
    arrays = {f"W{i}": w for i, w in enumerate(model.weights)}
    arrays.update({f"b{i}": b for i, b in enumerate(model.biases)})
    with open(path, "wb") as fh:
        np.savez(
            fh,
            version=np.array(CHECKPOINT_VERSION),
            layer_sizes=np.array(model.layer_sizes, dtype=np.int64),
            l2=np.array(model.l2_coefficient),
            keep_prob=np.array(model.dropout_keep_probability),
            **arrays,
        )
    return path


def load_checkpoint(path: str | Path) -> MlpModel:
    with np.load(path, allow_pickle=False) as data:
        version = int(data["version"])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        sizes = tuple(int(s) for s in data["layer_sizes"])
        n = len(sizes) - 1
        return MlpModel(
            sizes,
            [data[f"W{i}"].copy() for i in range(n)],
            [data[f"b{i}"].copy() for i in range(n)],
            float(data["l2"]),
            float(data["keep_prob"]),
        )
