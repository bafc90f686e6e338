"""Turn ratio traces into change points and score them by detection lag."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import uniform_filter1d
from scipy.optimize import least_squares

# coarse steepness grid; refinement moves off it
K_GRID = tuple(np.geomspace(0.01, 20.0, 25))
K_MAX = 50.0


class NoTransitionError(ValueError):
    """Raised for a trace with no variation to fit."""


@dataclass(frozen=True)
class RatioTrace:
    series_id: str
    values: np.ndarray
    offset: int = 0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64).ravel()
        if not np.all(np.isfinite(v)):
            raise ValueError(f"{self.series_id}: ratio trace has non-finite values")
        if np.any(v < 0):
            raise ValueError(f"{self.series_id}: ratio trace has negative values")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class LogisticFit:
    k: float
    x0: float
    scale: float
    floor: float
    residual: float
    offset: int
    length: int


@dataclass(frozen=True)
class AdlSummary:
    """``mean`` is the plain ADL; ``median`` and ``quartiles`` describe the bootstrap means."""

    per_series_lags: np.ndarray
    mean: float
    median: float
    bootstrap_runs: int
    bootstrap_means: np.ndarray
    quartiles: tuple[float, float]
    lag_median: float


def logistic(t, k, x0):
    z = np.clip(-k * (np.asarray(t, dtype=np.float64) - x0), -700, 700)
    return 1.0 / (1.0 + np.exp(z))


def smooth(values: np.ndarray, width: int) -> np.ndarray:
    """Centered moving average; edges repeat the end samples."""
    if width <= 1:
        return np.asarray(values, dtype=np.float64)
    return uniform_filter1d(np.asarray(values, dtype=np.float64), size=int(width), mode="nearest")


def fit_logistic(trace: RatioTrace, smoothing: int = 5) -> LogisticFit:
    """Least-squares fit of an increasing logistic to the normalised trace.

    The (optionally smoothed) trace is min-max scaled to [0, 1] and fitted by
    ``1 / (1 + exp(-k (t - x0)))``. Every index is tried as ``x0`` against
    :data:`K_GRID`; the best grid point is then refined with a bounded
    trust-region least-squares solve (``k > 0``). ``x0`` is reported in
    original series indices (``offset`` added).
    """
    v = trace.values
    n = v.size
    if n < 4:
        raise ValueError(f"{trace.series_id}: trace needs at least 4 values, got {n}")
    y = smooth(v, smoothing)
    lo, hi = float(y.min()), float(y.max())
    scale = hi - lo
    if not scale > 1e-12 * max(1.0, abs(hi)):
        raise NoTransitionError(f"{trace.series_id}: no transition signal (constant trace)")
    y = (y - lo) / scale
    t = np.arange(n, dtype=np.float64)

    best = (math.inf, 0.0, 0.0)
    for k in K_GRID:
        # rows: candidate x0, cols: time
        pred = logistic(t[None, :], k, t[:, None])
        sse = np.sum((pred - y[None, :]) ** 2, axis=1)
        j = int(np.argmin(sse))
        if sse[j] < best[0]:
            best = (float(sse[j]), float(k), float(t[j]))

    def resid(p):
        return logistic(t, p[0], p[1]) - y

    sol = least_squares(
        resid,
        x0=[best[1], best[2]],
        bounds=([1e-6, -0.5], [K_MAX, n - 0.5]),
        method="trf",
        xtol=1e-12,
        ftol=1e-12,
        gtol=1e-12,
    )
    sse = float(np.sum(sol.fun**2))
    k, x0 = (float(sol.x[0]), float(sol.x[1])) if sse <= best[0] else (best[1], best[2])
    sse = min(sse, best[0])
    return LogisticFit(k, x0 + trace.offset, scale, lo, sse, trace.offset, n)


def extract_change_point(trace: RatioTrace, smoothing: int = 5) -> tuple[int, LogisticFit, bool]:
    """Predicted change point, its fit, and whether it had to be clamped into range."""
    fit = fit_logistic(trace, smoothing)
    idx, clamped = _round_and_clamp(fit)
    return idx, fit, clamped


def _round_and_clamp(fit: LogisticFit) -> tuple[int, bool]:
    idx = math.floor(fit.x0 + 0.5)
    first, last = fit.offset, fit.offset + fit.length - 1
    clamped = min(max(idx, first), last)
    return clamped, clamped != idx


def average_detection_lag(truths, predictions) -> float:
    truths = np.asarray(truths, dtype=np.float64).ravel()
    predictions = np.asarray(predictions, dtype=np.float64).ravel()
    if truths.shape != predictions.shape:
        raise ValueError(f"length mismatch: {truths.size} truths vs {predictions.size} predictions")
    if truths.size == 0:
        raise ValueError("need at least one series")
    return float(np.mean(np.abs(truths - predictions)))


def bootstrap_adl(per_series_lags, runs: int = 30, seed: int = 0) -> AdlSummary:
    """Resample series-level lags with replacement ``runs`` times."""
    lags = np.asarray(per_series_lags, dtype=np.float64).ravel()
    if lags.size == 0:
        raise ValueError("no lags to summarise")
    if runs < 1:
        raise ValueError("runs must be >= 1")
    rng = np.random.default_rng(seed)
    draws = rng.integers(0, lags.size, size=(runs, lags.size))
    means = lags[draws].mean(axis=1)
    q1, q3 = np.percentile(means, [25, 75])
    return AdlSummary(
        per_series_lags=lags,
        mean=float(np.mean(lags)),
        median=float(np.median(means)),
        bootstrap_runs=runs,
        bootstrap_means=means,
        quartiles=(float(q1), float(q3)),
        lag_median=float(np.median(lags)),
    )
