"""Monte Carlo series with one Gaussian regime change.

Random streams come from numpy's PCG64 seeded through ``SeedSequence``:
``SeedSequence([seed, trial, stream])`` with ``stream`` 0 for the regime
parameters, 1 for the perturbation and 2 for the samples. Standard normal
deviates are produced from the uniform stream by the Box-Muller transform so
the construction only depends on the uniform generator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .series import Dataset, TimeSeriesRecord

STREAM_REGIME, STREAM_PERTURB, STREAM_SAMPLES = 0, 1, 2


@dataclass(frozen=True)
class GaussianSpec:
    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=np.float64).ravel()
        sigma = np.atleast_2d(np.asarray(self.sigma, dtype=np.float64))
        if sigma.shape != (mu.size, mu.size):
            raise ValueError(f"covariance shape {sigma.shape} does not match mean of size {mu.size}")
        if np.max(np.abs(sigma - sigma.T)) > 1e-12:
            raise ValueError("covariance is not symmetric")
        try:
            np.linalg.cholesky(sigma)
        except np.linalg.LinAlgError:
            raise ValueError("covariance is not positive definite") from None
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)

    @property
    def dim(self) -> int:
        return self.mu.size


@dataclass(frozen=True)
class SimConfig:
    dimension: int = 10
    series_length: int = 500
    change_point: int = 250
    perturbation_magnitude: float = 1.0
    trials: int = 20
    seed: int = 0
    # draw one (A, B) pair from `seed` for every trial instead of one per trial
    shared_regimes: bool = False

    def __post_init__(self):
        if self.dimension < 1 or self.trials < 1:
            raise ValueError("dimension and trials must be positive")
        if not 0 < self.change_point < self.series_length:
            raise ValueError("change_point must lie strictly inside the series")
        if not self.perturbation_magnitude > 0:
            raise ValueError("perturbation_magnitude must be > 0")


def stream(seed: int, trial: int, which: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, trial, which])))


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def box_muller(rng: np.random.Generator, size: int) -> np.ndarray:
    """``size`` standard normals from ``ceil(size/2)`` pairs of uniforms."""
    pairs = (size + 1) // 2
    u1 = 1.0 - rng.random(pairs)  # (0, 1], keeps log finite
    u2 = rng.random(pairs)
    r = np.sqrt(-2.0 * np.log(u1))
    z = np.concatenate([r * np.cos(2 * np.pi * u2), r * np.sin(2 * np.pi * u2)])
    return z[:size]


def random_spd(dimension: int, seed=0) -> np.ndarray:
    """``A^T A + 0.1 D I`` with ``A`` uniform on [0, 1)."""
    if dimension < 1:
        raise ValueError("dimension must be >= 1")
    a = _rng(seed).random((dimension, dimension))
    s = a.T @ a + 0.1 * dimension * np.eye(dimension)
    return 0.5 * (s + s.T)


def random_gaussian(dimension: int, seed=0) -> GaussianSpec:
    rng = _rng(seed)
    mu = rng.random(dimension)
    return GaussianSpec(mu, random_spd(dimension, rng))


def sample_mvn(spec: GaussianSpec, n: int, seed=0, z: np.ndarray | None = None) -> np.ndarray:
    """``n`` draws ``mu + L z`` with ``L`` the lower Cholesky factor.

    ``z`` (n x D standard normals) may be supplied directly, e.g. in tests.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    L = np.linalg.cholesky(spec.sigma)
    if z is None:
        z = box_muller(_rng(seed), n * spec.dim).reshape(n, spec.dim)
    else:
        z = np.asarray(z, dtype=np.float64).reshape(n, spec.dim)
    return spec.mu + z @ L.T


def perturb_params(spec: GaussianSpec, magnitude: float, seed=0) -> GaussianSpec:
    """Shift the mean by ``magnitude * U[-1, 1)^D`` and add ``magnitude * E^T E / D``."""
    if not magnitude > 0:
        raise ValueError("magnitude must be > 0")
    rng = _rng(seed)
    D = spec.dim
    mu = spec.mu + magnitude * rng.uniform(-1.0, 1.0, D)
    e = rng.random((D, D))
    shift = e.T @ e / D
    sigma = spec.sigma + magnitude * 0.5 * (shift + shift.T)
    return GaussianSpec(mu, sigma)


def regimes(config: SimConfig, trial: int) -> tuple[GaussianSpec, GaussianSpec]:
    key = 0 if config.shared_regimes else trial
    a = random_gaussian(config.dimension, stream(config.seed, key, STREAM_REGIME))
    b = perturb_params(a, config.perturbation_magnitude, stream(config.seed, key, STREAM_PERTURB))
    return a, b


def simulate_series(config: SimConfig, trial: int) -> TimeSeriesRecord:
    a, b = regimes(config, trial)
    rng = stream(config.seed, trial, STREAM_SAMPLES)
    tau, T = config.change_point, config.series_length
    x = np.vstack([sample_mvn(a, tau, rng), sample_mvn(b, T - tau, rng)])
    return TimeSeriesRecord(id=f"sim{trial:04d}", samples=x, true_change_point=tau)


def simulate_dataset(config: SimConfig) -> Dataset:
    return Dataset(tuple(simulate_series(config, i) for i in range(config.trials)))

