"""Two-window change point detection with L1, L2, RBF-kernel and AR costs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .series import TimeSeriesRecord

COSTS = ("L1", "L2", "RBF", "AR")
METHOD_COSTS = {"L1CPD": "L1", "L2CPD": "L2", "KCPD": "RBF", "ARCPD": "AR"}


@dataclass(frozen=True)
class CostKind:
    tag: str
    rbf_gamma: float | None = None
    ar_order: int | None = None

    def __post_init__(self):
        tag = self.tag.upper()
        if tag not in COSTS:
            raise ValueError(f"unknown cost {self.tag!r}; expected one of {COSTS}")
        object.__setattr__(self, "tag", tag)
        if tag == "RBF":
            if self.rbf_gamma is not None and not self.rbf_gamma > 0:
                raise ValueError("rbf_gamma must be > 0")
        elif self.rbf_gamma is not None:
            raise ValueError("rbf_gamma only applies to the RBF cost")
        if tag == "AR":
            order = 1 if self.ar_order is None else int(self.ar_order)
            if order < 1:
                raise ValueError("ar_order must be >= 1")
            object.__setattr__(self, "ar_order", order)
        elif self.ar_order is not None:
            raise ValueError("ar_order only applies to the AR cost")

    @property
    def min_size(self) -> int:
        return self.ar_order + 1 if self.tag == "AR" else 2


@dataclass(frozen=True)
class DiscrepancyTrace:
    values: np.ndarray
    half_window: int

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.half_window, self.half_window + len(self.values))


def default_rbf_gamma(samples: np.ndarray) -> float:
    """``1 / (2 * median pairwise squared distance)`` over the whole series."""
    d2 = pdist(np.asarray(samples, dtype=np.float64), "sqeuclidean")
    med = float(np.median(d2)) if d2.size else 0.0
    return 1.0 / (2.0 * med) if med > 0 else 1.0


def _ar_rss(x: np.ndarray, order: int) -> float:
    m = len(x)
    total = 0.0
    for c in range(x.shape[1]):
        y = x[order:, c]
        lags = [x[order - k : m - k, c] for k in range(1, order + 1)]
        design = np.column_stack([np.ones(m - order), *lags])
        coef, *_ = np.linalg.lstsq(design, y, rcond=None)
        r = y - design @ coef
        total += float(r @ r)
    return total


def segment_cost(segment, kind: CostKind) -> float:
    x = np.asarray(segment, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    m = len(x)
    if m < kind.min_size:
        raise ValueError(f"segment of length {m} too short for {kind.tag} cost")
    if kind.tag == "L2":
        return float(np.sum((x - x.mean(axis=0)) ** 2))
    if kind.tag == "L1":
        return float(np.sum(np.abs(x - np.median(x, axis=0))))
    if kind.tag == "RBF":
        gamma = kind.rbf_gamma if kind.rbf_gamma is not None else default_rbf_gamma(x)
        gram = np.exp(-gamma * squareform(pdist(x, "sqeuclidean")))
        return float(m - gram.sum() / m)
    return _ar_rss(x, kind.ar_order)


def _resolve(record: TimeSeriesRecord, kind: CostKind) -> CostKind:
    if kind.tag == "RBF" and kind.rbf_gamma is None:
        return CostKind("RBF", rbf_gamma=default_rbf_gamma(record.samples))
    return kind


def discrepancy_trace(record: TimeSeriesRecord, half_window: int, kind: CostKind) -> DiscrepancyTrace:
    """Split gain ``c(x[t-w:t+w]) - c(x[t-w:t]) - c(x[t:t+w])`` for ``t`` in ``[w, T-w)``."""
    w = int(half_window)
    T = record.length
    if w < kind.min_size:
        raise ValueError(f"half_window={w} too small for the {kind.tag} cost")
    if T < 2 * w + 1:
        raise ValueError(f"{record.id}: series too short (T={T}) for half_window={w}")
    kind = _resolve(record, kind)
    x = record.samples
    vals = np.empty(T - 2 * w)
    for i, t in enumerate(range(w, T - w)):
        vals[i] = (
            segment_cost(x[t - w : t + w], kind)
            - segment_cost(x[t - w : t], kind)
            - segment_cost(x[t : t + w], kind)
        )
    return DiscrepancyTrace(vals, w)


def window_detect(record: TimeSeriesRecord, half_window: int, kind: CostKind) -> int:
    """Index of the largest split gain; ``np.argmax`` keeps the earliest on ties."""
    tr = discrepancy_trace(record, half_window, kind)
    return int(tr.half_window + np.argmax(tr.values))
