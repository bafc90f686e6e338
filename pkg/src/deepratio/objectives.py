"""Deep density-ratio objectives (LSIF, DSKL, BARR) and the minibatch trainer.

Every loss takes the network outputs on evaluation samples (``f_eval``) and on
reference samples (``f_ref``) and returns ``(loss, grad_eval, grad_ref)``, the
gradient being with respect to those raw outputs. Log terms see outputs
clamped to ``clamp_epsilon``; the gradient at a clamped output is evaluated at
the clamp value so a dead output still receives a (large) push upward.
"""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autonet import (
    MlpModel,
    OptimizerState,
    adam_step,
    mlp_backward,
    mlp_forward,
    rescale_output,
)

log = logging.getLogger(__name__)

OBJECTIVES = ("LSIF", "DSKL", "BARR")


@dataclass(frozen=True)
class ObjectiveKind:
    tag: str
    lam: float | None = None

    def __post_init__(self):
        tag = self.tag.upper()
        if tag not in OBJECTIVES:
            raise ValueError(f"unknown objective {self.tag!r}; expected one of {OBJECTIVES}")
        object.__setattr__(self, "tag", tag)
        if tag == "BARR":
            lam = 10.0 if self.lam is None else float(self.lam)
            if lam < 0:
                raise ValueError("BARR lambda must be >= 0")
            object.__setattr__(self, "lam", lam)
        elif self.lam is not None:
            raise ValueError(f"lambda only applies to BARR, not {tag}")


@dataclass(frozen=True)
class TrainConfig:
    minibatch_size: int = 200
    learning_rate: float = 1e-3
    max_epochs: int = 100
    patience: int = 10
    validation_fraction: float = 0.1
    seed: int = 0
    clamp_epsilon: float = 1e-8
    # DSKL is blind to the scale of f; pin it with mean(f(reference)) == 1
    normalize_reference_mean: bool = True

    def __post_init__(self):
        if self.minibatch_size < 2:
            raise ValueError("minibatch_size must be >= 2")
        if self.learning_rate <= 0 or self.max_epochs < 1 or self.patience < 1:
            raise ValueError("learning_rate, max_epochs and patience must be positive")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must lie in [0, 1)")
        if self.clamp_epsilon <= 0:
            raise ValueError("clamp_epsilon must be > 0")


def _vectors(f_eval, f_ref):
    f_eval = np.asarray(f_eval, dtype=np.float64).ravel()
    f_ref = np.asarray(f_ref, dtype=np.float64).ravel()
    if f_eval.size == 0 or f_ref.size == 0:
        raise ValueError("both evaluation and reference outputs must be non-empty")
    return f_eval, f_ref


def lsif_loss(f_eval, f_ref):
    """``mean(f_eval**2) - 2 * mean(f_ref)``."""
    f_eval, f_ref = _vectors(f_eval, f_ref)
    n_e, n_r = f_eval.size, f_ref.size
    loss = np.sum(f_eval**2) / n_e - 2.0 * np.sum(f_ref) / n_r
    return float(loss), 2.0 * f_eval / n_e, np.full(n_r, -2.0 / n_r)


def dskl_loss(f_eval, f_ref, clamp_epsilon: float = 1e-8):
    """``-mean(log f_eval) + mean(log f_ref)``."""
    f_eval, f_ref = _vectors(f_eval, f_ref)
    n_e, n_r = f_eval.size, f_ref.size
    ce = np.maximum(f_eval, clamp_epsilon)
    cr = np.maximum(f_ref, clamp_epsilon)
    loss = -np.sum(np.log(ce)) / n_e + np.sum(np.log(cr)) / n_r
    return float(loss), -1.0 / (n_e * ce), 1.0 / (n_r * cr)


def barr_loss(f_eval, f_ref, lam: float = 10.0, clamp_epsilon: float = 1e-8):
    """``-mean(log f_eval) + lam * |mean(f_ref) - 1|``."""
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    f_eval, f_ref = _vectors(f_eval, f_ref)
    n_e, n_r = f_eval.size, f_ref.size
    ce = np.maximum(f_eval, clamp_epsilon)
    gap = np.sum(f_ref) / n_r - 1.0
    loss = -np.sum(np.log(ce)) / n_e + lam * abs(gap)
    return float(loss), -1.0 / (n_e * ce), np.full(n_r, lam * np.sign(gap) / n_r)


def objective_loss(kind: ObjectiveKind, f_eval, f_ref, clamp_epsilon: float = 1e-8):
    if kind.tag == "LSIF":
        return lsif_loss(f_eval, f_ref)
    if kind.tag == "DSKL":
        return dskl_loss(f_eval, f_ref, clamp_epsilon)
    return barr_loss(f_eval, f_ref, kind.lam, clamp_epsilon)


def stacked_output_loss(kind: ObjectiveKind, n_eval: int, clamp_epsilon: float = 1e-8):
    """Adapt an objective to a single output vector laid out ``[eval..., ref...]``."""

    def loss(outputs):
        value, g_e, g_r = objective_loss(kind, outputs[:n_eval], outputs[n_eval:], clamp_epsilon)
        return value, np.concatenate([g_e, g_r])

    return loss


@dataclass
class TrainingLog:
    epochs: list[int] = field(default_factory=list)
    train_loss: list[float] = field(default_factory=list)
    validation_loss: list[float] = field(default_factory=list)
    wall_time: list[float] = field(default_factory=list)

    def append(self, epoch, train_loss, validation_loss, wall_time):
        self.epochs.append(epoch)
        self.train_loss.append(train_loss)
        self.validation_loss.append(validation_loss)
        self.wall_time.append(wall_time)

    def same_losses(self, other: "TrainingLog") -> bool:
        return (
            self.epochs == other.epochs
            and self.train_loss == other.train_loss
            and self.validation_loss == other.validation_loss
        )

    def to_csv(self, path: str | Path) -> Path:
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "train_loss", "validation_loss", "wall_time"])
            for row in zip(self.epochs, self.train_loss, self.validation_loss, self.wall_time):
                w.writerow([row[0], repr(row[1]), repr(row[2]), f"{row[3]:.6f}"])
        return path

    @classmethod
    def from_csv(cls, path: str | Path) -> "TrainingLog":
        out = cls()
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                out.append(
                    int(row["epoch"]),
                    float(row["train_loss"]),
                    float(row["validation_loss"]),
                    float(row["wall_time"]),
                )
        return out


@dataclass
class TrainedModel:
    model: MlpModel
    objective: ObjectiveKind
    best_epoch: int
    epochs_run: int
    diverged: bool = False
    message: str = ""

    def predict(self, samples: np.ndarray) -> np.ndarray:
        return self.model.predict(samples)


def _holdout(n: int, fraction: float, rng: np.random.Generator):
    order = rng.permutation(n)
    n_val = int(round(fraction * n)) if n >= 2 else 0
    if fraction > 0 and n >= 2:
        n_val = min(max(n_val, 1), n - 1)
    return order[n_val:], order[:n_val]


def _draw(n: int, per_batch: int, n_batches: int, rng: np.random.Generator) -> np.ndarray:
    # one pass without replacement, topped up with replacement once exhausted
    total = per_batch * n_batches
    idx = rng.permutation(n)[: min(n, total)]
    if total > idx.size:
        idx = np.concatenate([idx, rng.integers(0, n, size=total - idx.size)])
    return idx.reshape(n_batches, per_batch)


def _outputs_loss(model, kind, x_eval, x_ref, clamp):
    f = model.predict(np.vstack([x_eval, x_ref]))
    return objective_loss(kind, f[: len(x_eval)], f[len(x_eval):], clamp)[0]


def train_ddre(
    model: MlpModel,
    reference: np.ndarray,
    evaluation: np.ndarray,
    objective: ObjectiveKind,
    config: TrainConfig = TrainConfig(),
) -> tuple[TrainedModel, TrainingLog]:
    """Fit ``model`` in place by minibatch Adam and return the best-validation copy.

    Each minibatch holds ``floor(B/2)`` reference and ``ceil(B/2)`` evaluation
    samples. A fixed ``validation_fraction`` of each pool is held out and
    training stops once its loss has not improved for ``patience`` epochs.
    """
    ref = np.asarray(reference, dtype=np.float64)
    ev = np.asarray(evaluation, dtype=np.float64)
    if ref.ndim == 1:
        ref = ref[:, None]
    if ev.ndim == 1:
        ev = ev[:, None]
    if len(ref) == 0 or len(ev) == 0:
        raise ValueError("reference and evaluation sets must be non-empty")
    d = model.layer_sizes[0]
    if ref.shape[1] != d or ev.shape[1] != d:
        raise ValueError(f"sample dimension does not match model input width {d}")

    rng = np.random.default_rng(config.seed)
    ref_tr, ref_val = _holdout(len(ref), config.validation_fraction, rng)
    ev_tr, ev_val = _holdout(len(ev), config.validation_fraction, rng)
    if ref_val.size == 0 or ev_val.size == 0:
        ref_val, ev_val = ref_tr, ev_tr
    x_ref, x_ev = ref[ref_tr], ev[ev_tr]
    v_ref, v_ev = ref[ref_val], ev[ev_val]

    h_ref = config.minibatch_size // 2
    h_ev = config.minibatch_size - h_ref
    n_batches = max(math.ceil(len(x_ref) / h_ref), math.ceil(len(x_ev) / h_ev))
    clamp = config.clamp_epsilon
    state = OptimizerState.for_model(model, config.learning_rate)
    history = TrainingLog()

    best = model.copy()
    best_val = _outputs_loss(model, objective, v_ev, v_ref, clamp)
    best_epoch, stale = 0, 0
    diverged, message = False, ""
    t0 = time.perf_counter()
    epoch = 0
    for epoch in range(1, config.max_epochs + 1):
        ri = _draw(len(x_ref), h_ref, n_batches, rng)
        ei = _draw(len(x_ev), h_ev, n_batches, rng)
        batch_losses = []
        for b in range(n_batches):
            xb = np.vstack([x_ev[ei[b]], x_ref[ri[b]]])
            out, trace = mlp_forward(model, xb, training=True, seed=rng)
            value, g_e, g_r = objective_loss(objective, out[:h_ev], out[h_ev:], clamp)
            if not np.isfinite(value):
                diverged, message = True, f"non-finite training loss at epoch {epoch}, batch {b}"
                break
            batch_losses.append(value)
            g = np.concatenate([g_e, g_r])
            # a clamped output whose loss wants it larger gets its gradient
            # through the dead rectifier, the only way back from f = 0
            revive = (out.ravel() < clamp) & (g < 0)
            grads = mlp_backward(model, trace, g, revive)
            adam_step(model, state, grads)
        if diverged:
            log.warning(message)
            break
        val = _outputs_loss(model, objective, v_ev, v_ref, clamp)
        history.append(epoch, float(np.mean(batch_losses)), val, time.perf_counter() - t0)
        if not np.isfinite(val):
            diverged, message = True, f"non-finite validation loss at epoch {epoch}"
            log.warning(message)
            break
        if val < best_val:
            best_val, best, best_epoch, stale = val, model.copy(), epoch, 0
        else:
            stale += 1
            if stale >= config.patience:
                break

    if objective.tag == "DSKL" and config.normalize_reference_mean:
        ref_mean = float(np.mean(best.predict(ref)))
        if np.isfinite(ref_mean) and ref_mean > 0:
            rescale_output(best, 1.0 / ref_mean)

    trained = TrainedModel(best, objective, best_epoch, len(history.epochs), diverged, message)
    return trained, history
