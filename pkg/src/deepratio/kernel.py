"""Kernel density-ratio estimators: KLIEP and rULSIF.

Both model the ratio as ``f(x) = sum_l theta_l * exp(-||x - c_l||^2 / (2 sigma^2))``
with centers ``c_l`` drawn from the evaluation (numerator) samples.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist, pdist

METHODS = ("KLIEP", "RULSIF")


@dataclass
class KernelModel:
    centers: np.ndarray
    sigma: float
    theta: np.ndarray
    method: str
    lambda_k: float = 0.0

    def predict(self, samples: np.ndarray) -> np.ndarray:
        return kernel_predict(self, samples)

    def to_json(self) -> str:
        return json.dumps(
            {
                "method": self.method,
                "sigma": self.sigma,
                "lambda_k": self.lambda_k,
                "centers": self.centers.tolist(),
                "theta": self.theta.tolist(),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "KernelModel":
        d = json.loads(text)
        return cls(
            centers=np.asarray(d["centers"], dtype=np.float64),
            sigma=float(d["sigma"]),
            theta=np.asarray(d["theta"], dtype=np.float64),
            method=d["method"],
            lambda_k=float(d.get("lambda_k", 0.0)),
        )

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(self.to_json())
        return path

    @classmethod
    def load(cls, path: str | Path) -> "KernelModel":
        return cls.from_json(Path(path).read_text())


@dataclass(frozen=True)
class KernelFitConfig:
    """Solver and model-selection settings shared by KLIEP and rULSIF.

    An empty ``sigma_grid`` means "median heuristic": the pooled median
    pairwise distance times ``sigma_multipliers``. ``lambda_grid`` is only
    searched by rULSIF; when empty, ``regularization`` is used as is.
    """

    num_centers: int = 100
    sigma_grid: tuple[float, ...] = ()
    sigma_multipliers: tuple[float, ...] = (0.25, 0.5, 1.0, 2.0, 4.0)
    regularization: float = 0.1
    lambda_grid: tuple[float, ...] = (1e-3, 1e-2, 1e-1, 1.0)
    cv_folds: int = 5
    max_iterations: int = 1000
    step_size: float = 1.0
    tolerance: float = 1e-6
    seed: int = 0
    alpha: float = 0.0

    def __post_init__(self):
        if any(s <= 0 for s in self.sigma_grid):
            raise ValueError("sigma_grid entries must be positive")
        if self.num_centers < 1 or self.cv_folds < 1:
            raise ValueError("num_centers and cv_folds must be positive")
        if self.regularization < 0 or any(l < 0 for l in self.lambda_grid):
            raise ValueError("regularization must be >= 0")
        if self.alpha != 0.0:
            raise NotImplementedError("relative mixing alpha != 0 is not supported")


def _as_matrix(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x[:, None] if x.ndim == 1 else x


def gaussian_design_matrix(samples, centers, sigma: float) -> np.ndarray:
    """``Phi[i, l] = exp(-||x_i - c_l||^2 / (2 sigma^2))``."""
    if not sigma > 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    x, c = _as_matrix(samples), _as_matrix(centers)
    if x.shape[1] != c.shape[1]:
        raise ValueError(f"samples have d={x.shape[1]}, centers d={c.shape[1]}")
    return np.exp(-cdist(x, c, "sqeuclidean") / (2.0 * sigma**2))


def kernel_predict(model: KernelModel, samples) -> np.ndarray:
    return gaussian_design_matrix(samples, model.centers, model.sigma) @ model.theta


def median_distance(*sets) -> float:
    pooled = np.vstack([_as_matrix(s) for s in sets])
    if len(pooled) > 1000:
        pooled = pooled[np.random.default_rng(0).choice(len(pooled), 1000, replace=False)]
    med = float(np.median(pdist(pooled)))
    return med if med > 0 else 1.0


def sigma_candidates(reference, evaluation, config: KernelFitConfig) -> tuple[float, ...]:
    if config.sigma_grid:
        return tuple(config.sigma_grid)
    med = median_distance(reference, evaluation)
    return tuple(m * med for m in config.sigma_multipliers)


def _pick_centers(evaluation: np.ndarray, config: KernelFitConfig) -> np.ndarray:
    b = min(config.num_centers, len(evaluation))
    idx = np.random.default_rng(config.seed).choice(len(evaluation), b, replace=False)
    return evaluation[np.sort(idx)]


# --- KLIEP -----------------------------------------------------------------


@dataclass
class KliepTrace:
    objective: list[float] = field(default_factory=list)
    iterations: int = 0


def _kliep_project(theta, ref_mean):
    theta = theta + (1.0 - ref_mean @ theta) * ref_mean / (ref_mean @ ref_mean)
    theta = np.maximum(theta, 0.0)
    s = ref_mean @ theta
    if not s > 0:
        return None
    return theta / s


def kliep_solve(
    phi_eval: np.ndarray,
    phi_ref: np.ndarray,
    max_iterations: int = 1000,
    step_size: float = 1.0,
    tolerance: float = 1e-6,
    trace: KliepTrace | None = None,
) -> np.ndarray:
    """Projected gradient ascent on ``mean(log(Phi_eval theta))``.

    Feasible set: ``theta >= 0`` and ``mean(Phi_ref theta) == 1``. A step that
    lowers the objective is halved (at most 20 times) and otherwise rejected.
    """
    ref_mean = phi_ref.mean(axis=0)
    if not np.any(ref_mean > 0):
        raise ValueError("degenerate design matrix: reference kernel mass is zero")
    theta = _kliep_project(np.ones(phi_eval.shape[1]), ref_mean)

    def objective(t):
        f = phi_eval @ t
        return -np.inf if np.any(f <= 0) else float(np.mean(np.log(f)))

    current = objective(theta)
    if trace is not None:
        trace.objective.append(current)
    for it in range(max_iterations):
        grad = phi_eval.T @ (1.0 / (phi_eval @ theta)) / len(phi_eval)
        accepted = False
        step = step_size
        for _ in range(21):
            cand = _kliep_project(theta + step * grad, ref_mean)
            value = objective(cand) if cand is not None else -np.inf
            if value >= current:
                accepted = True
                break
            step *= 0.5
        if trace is not None:
            trace.iterations = it + 1
        if not accepted:
            break
        gain = value - current
        theta, current = cand, value
        if trace is not None:
            trace.objective.append(current)
        if gain < tolerance:
            break
    return theta


def _kliep_fit_fixed(reference, evaluation, centers, sigma, config):
    phi_eval = gaussian_design_matrix(evaluation, centers, sigma)
    phi_ref = gaussian_design_matrix(reference, centers, sigma)
    theta = kliep_solve(phi_eval, phi_ref, config.max_iterations, config.step_size, config.tolerance)
    return KernelModel(centers, float(sigma), theta, "KLIEP")


def kliep_fit(reference, evaluation, config: KernelFitConfig = KernelFitConfig()) -> KernelModel:
    """Fit KLIEP, choosing sigma by held-out log-likelihood when the grid has several values."""
    ref, ev = _as_matrix(reference), _as_matrix(evaluation)
    _check_sets(ref, ev)
    if np.all(ev == ev[0]) and np.all(ref == ev[0]):
        raise ValueError("degenerate design matrix: all samples identical")
    sigma, _ = select_sigma_cv(ref, ev, config, method="KLIEP")
    return _kliep_fit_fixed(ref, ev, _pick_centers(ev, config), sigma, config)


# --- rULSIF ----------------------------------------------------------------


def rulsif_solve(phi_eval: np.ndarray, phi_ref: np.ndarray, lambda_k: float) -> np.ndarray:
    """Unclipped minimiser of ``theta'H theta/2 - h'theta + lambda_k |theta|^2/2``."""
    H = phi_ref.T @ phi_ref / len(phi_ref)
    h = phi_eval.mean(axis=0)
    A = H + lambda_k * np.eye(len(h))
    try:
        return np.linalg.solve(A, h)
    except np.linalg.LinAlgError:
        raise ValueError("singular system H + lambda_k I; use lambda_k > 0") from None


def rulsif_criterion(f_ref: np.ndarray, f_eval: np.ndarray) -> float:
    """Squared-loss score ``mean(f_ref^2)/2 - mean(f_eval)`` (lower is better)."""
    return 0.5 * float(np.mean(f_ref**2)) - float(np.mean(f_eval))


def _rulsif_fit_fixed(reference, evaluation, centers, sigma, lambda_k):
    phi_eval = gaussian_design_matrix(evaluation, centers, sigma)
    phi_ref = gaussian_design_matrix(reference, centers, sigma)
    theta = np.maximum(rulsif_solve(phi_eval, phi_ref, lambda_k), 0.0)
    return KernelModel(centers, float(sigma), theta, "RULSIF", float(lambda_k))


def rulsif_fit(reference, evaluation, config: KernelFitConfig = KernelFitConfig()) -> KernelModel:
    ref, ev = _as_matrix(reference), _as_matrix(evaluation)
    _check_sets(ref, ev)
    sigma, lambda_k = select_sigma_cv(ref, ev, config, method="RULSIF")
    return _rulsif_fit_fixed(ref, ev, _pick_centers(ev, config), sigma, lambda_k)


def _check_sets(ref, ev):
    if len(ref) == 0 or len(ev) == 0:
        raise ValueError("reference and evaluation sets must be non-empty")
    if ref.shape[1] != ev.shape[1]:
        raise ValueError("reference and evaluation dimensions differ")


# --- model selection -------------------------------------------------------


def _folds(n: int, k: int, rng: np.random.Generator) -> list[np.ndarray]:
    return np.array_split(rng.permutation(n), k)


def cv_scores(reference, evaluation, config: KernelFitConfig, method: str) -> dict[tuple[float, float], float]:
    """Held-out score for every grid point (higher is better for both methods).

    KLIEP folds the evaluation set and scores mean log f on the held-out fold.
    rULSIF folds both sets and scores the negated squared-loss criterion.
    """
    method = method.upper()
    ref, ev = _as_matrix(reference), _as_matrix(evaluation)
    sigmas = sigma_candidates(ref, ev, config)
    lambdas = (0.0,) if method == "KLIEP" else (tuple(config.lambda_grid) or (config.regularization,))
    k = min(config.cv_folds, len(ev), len(ref) if method == "RULSIF" else len(ev))
    if k < 2:
        raise ValueError("cross-validation needs cv_folds >= 2 and enough samples")
    rng = np.random.default_rng(config.seed)
    ev_folds = _folds(len(ev), k, rng)
    ref_folds = _folds(len(ref), k, rng)
    scores = {}
    for sigma in sigmas:
        for lam in lambdas:
            total = 0.0
            for i in range(k):
                ev_tr = np.concatenate([f for j, f in enumerate(ev_folds) if j != i])
                centers = _pick_centers(ev[ev_tr], config)
                if method == "KLIEP":
                    m = _kliep_fit_fixed(ref, ev[ev_tr], centers, sigma, config)
                    f = np.maximum(m.predict(ev[ev_folds[i]]), 1e-300)
                    total += float(np.mean(np.log(f)))
                else:
                    ref_tr = np.concatenate([f for j, f in enumerate(ref_folds) if j != i])
                    m = _rulsif_fit_fixed(ref[ref_tr], ev[ev_tr], centers, sigma, lam)
                    total -= rulsif_criterion(m.predict(ref[ref_folds[i]]), m.predict(ev[ev_folds[i]]))
            scores[(float(sigma), float(lam))] = total / k
    return scores


def select_sigma_cv(reference, evaluation, config: KernelFitConfig, method: str = "KLIEP") -> tuple[float, float]:
    """Return the ``(sigma, lambda_k)`` grid point with the best held-out score.

    A single-point grid is returned without any fitting. Ties go to the
    earliest grid point.
    """
    method = method.upper()
    if method not in METHODS:
        raise ValueError(f"unknown kernel method {method!r}")
    ref, ev = _as_matrix(reference), _as_matrix(evaluation)
    sigmas = sigma_candidates(ref, ev, config)
    if not sigmas:
        raise ValueError("empty sigma grid")
    lambdas = (0.0,) if method == "KLIEP" else (tuple(config.lambda_grid) or (config.regularization,))
    if len(sigmas) == 1 and len(lambdas) == 1:
        return float(sigmas[0]), float(lambdas[0])
    scores = cv_scores(ref, ev, config, method)
    best = max(scores, key=lambda key: scores[key])
    return best


def fit_kernel(method: str, reference, evaluation, config: KernelFitConfig = KernelFitConfig()) -> KernelModel:
    method = method.upper()
    if method == "KLIEP":
        return kliep_fit(reference, evaluation, config)
    if method == "RULSIF":
        return rulsif_fit(reference, evaluation, config)
    raise ValueError(f"unknown kernel method {method!r}")
