"""Experiment configs and the simulate -> fit -> detect -> score pipeline.

Configs are JSON documents with ``"schema_version": 1``. Unknown keys are
rejected everywhere, and the fully resolved config (defaults filled in) is
echoed next to every report so a run can be repeated exactly.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from scipy.linalg import solve_triangular

from . import __version__
from .autonet import mlp_init
from .kernel import KernelFitConfig, fit_kernel
from .metrics import AdlSummary, LogisticFit, RatioTrace, bootstrap_adl, extract_change_point
from .objectives import ObjectiveKind, TrainConfig, train_ddre
from .series import (
    Dataset,
    TimeSeriesRecord,
    load_csv_dataset,
    split_reference_evaluation,
    train_test_partition,
    window_features,
    write_csv_dataset,
)
from .simgen import SimConfig, simulate_dataset
from .window import METHOD_COSTS, CostKind, discrepancy_trace

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
DDRE_METHODS = ("DDRE-DSKL", "DDRE-BARR", "DDRE-LSIF")
KERNEL_METHODS = ("KLIEP", "RULSIF")
WINDOW_METHODS = tuple(METHOD_COSTS)
METHODS = DDRE_METHODS + KERNEL_METHODS + WINDOW_METHODS
PROTOCOLS = ("auto", "pooled", "per_series")

REPORT_COLUMNS = (
    "series_id",
    "true_cp",
    "predicted_cp",
    "lag_samples",
    "lag_seconds",
    "k",
    "x0",
    "residual",
    "method",
    "status",
)


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the offending field."""


# --- config ------------------------------------------------------------------


@dataclass(frozen=True)
class CsvSource:
    path: str
    has_header: bool = False
    metadata: str | None = None


@dataclass(frozen=True)
class SplitConfig:
    ref_fraction: float = 0.2
    test_fraction: float = 0.2
    # "auto": per_series for simulated data, pooled for CSV data
    protocol: str = "auto"


@dataclass(frozen=True)
class PreprocessConfig:
    # "none" or "reference": whiten inputs with the mean and covariance of the
    # reference rows the model is fitted on (no evaluation or test information)
    whiten: str = "none"
    # ridge added to the reference covariance, relative to its mean variance
    ridge: float = 1e-3

    def __post_init__(self):
        if self.whiten not in ("none", "reference"):
            raise ValueError(f"whiten: expected 'none' or 'reference', got {self.whiten!r}")
        if not self.ridge >= 0:
            raise ValueError("ridge must be >= 0")


@dataclass(frozen=True)
class DetectConfig:
    smoothing: int = 5
    bootstrap_runs: int = 30


@dataclass(frozen=True)
class DdreConfig:
    hidden_layers: tuple[int, ...] = (500, 500, 500, 500)
    l2: float = 0.01
    keep_prob: float = 0.5
    barr_lambda: float = 10.0
    train: TrainConfig = TrainConfig()


@dataclass(frozen=True)
class WindowConfig:
    half_window: int = 50
    rbf_gamma: float | None = None
    ar_order: int = 1


@dataclass(frozen=True)
class ExperimentConfig:
    method: str
    data: SimConfig | CsvSource
    split: SplitConfig = SplitConfig()
    preprocess: PreprocessConfig = PreprocessConfig()
    detect: DetectConfig = DetectConfig()
    ddre: DdreConfig | None = None
    kernel: KernelFitConfig | None = None
    window: WindowConfig | None = None
    output: str = "out"
    seed: int = 0
    workers: int = 1
    figures: bool = True

    @property
    def protocol(self) -> str:
        if self.split.protocol != "auto":
            return self.split.protocol
        return "per_series" if isinstance(self.data, SimConfig) else "pooled"

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"schema_version": SCHEMA_VERSION, "method": self.method}
        if isinstance(self.data, SimConfig):
            d["data"] = {"simulate": _plain(self.data)}
        else:
            d["data"] = {"csv": _plain(self.data)}
        d["split"] = _plain(self.split)
        d["preprocess"] = _plain(self.preprocess)
        d["detect"] = _plain(self.detect)
        for name in ("ddre", "kernel", "window"):
            sub = getattr(self, name)
            if sub is not None:
                d[name] = _plain(sub)
        d.update(output=self.output, seed=self.seed, workers=self.workers, figures=self.figures)
        return d

    def resolved_text(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _plain(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, tuple):
        return [_plain(v) for v in obj]
    return obj


def _build(cls, raw, where: str):
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{where}: expected an object")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - set(fields))
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {unknown}")
    kwargs = {}
    for name, value in raw.items():
        default = fields[name].default
        if dataclasses.is_dataclass(default):
            value = _build(type(default), value, f"{where}.{name}")
        elif isinstance(value, list):
            value = tuple(value)
        kwargs[name] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError, NotImplementedError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{where}: {exc}") from None


def parse_config(raw: dict, base_dir: str | Path | None = None) -> ExperimentConfig:
    """Validate a config mapping and fill in defaults."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    raw = dict(raw)
    version = raw.pop("schema_version", None)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"schema_version: expected {SCHEMA_VERSION}, got {version!r}")
    allowed = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = sorted(set(raw) - allowed)
    if unknown:
        raise ConfigError(f"unknown top-level key(s) {unknown}")

    method = raw.get("method")
    if not isinstance(method, str) or method.upper() not in METHODS:
        raise ConfigError(f"method: expected one of {list(METHODS)}, got {method!r}")
    method = method.upper()
    seed = raw.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigError("seed: expected an integer")

    data = raw.get("data")
    if not isinstance(data, dict) or len(data) != 1 or next(iter(data)) not in ("simulate", "csv"):
        raise ConfigError("data: expected exactly one of {'simulate': {...}} or {'csv': {...}}")
    if "simulate" in data:
        sim = dict(data["simulate"] or {})
        sim.setdefault("seed", seed)
        source = _build(SimConfig, sim, "data.simulate")
    else:
        source = _build(CsvSource, data["csv"], "data.csv")
        path = Path(source.path)
        if base_dir is not None and not path.is_absolute():
            source = dataclasses.replace(source, path=str(Path(base_dir) / path))

    split = _build(SplitConfig, raw.get("split"), "split")
    if split.protocol not in PROTOCOLS:
        raise ConfigError(f"split.protocol: expected one of {list(PROTOCOLS)}")
    preprocess = _build(PreprocessConfig, raw.get("preprocess"), "preprocess")
    detect = _build(DetectConfig, raw.get("detect"), "detect")

    family = "ddre" if method in DDRE_METHODS else "kernel" if method in KERNEL_METHODS else "window"
    for other in ("ddre", "kernel", "window"):
        if other != family and raw.get(other) is not None:
            raise ConfigError(f"{other}: section does not apply to method {method}")
    sub = {
        "ddre": lambda r: _build(DdreConfig, r, "ddre"),
        "kernel": lambda r: _build(KernelFitConfig, r, "kernel"),
        "window": lambda r: _build(WindowConfig, r, "window"),
    }[family](raw.get(family))

    workers = raw.get("workers", 1)
    if not isinstance(workers, int) or workers < 1:
        raise ConfigError("workers: expected a positive integer")
    return ExperimentConfig(
        method=method,
        data=source,
        split=split,
        preprocess=preprocess,
        detect=detect,
        output=str(raw.get("output", "out")),
        seed=seed,
        workers=workers,
        figures=bool(raw.get("figures", True)),
        **{family: sub},
    )


def load_config(path: str | Path, **overrides) -> ExperimentConfig:
    """Read a JSON config; ``overrides`` (seed, output, workers) win over the file."""
    raw = _read_raw(path)
    for key, value in overrides.items():
        if value is not None:
            raw[key] = value
    return parse_config(raw, base_dir=Path(path).parent)


# --- fitting -------------------------------------------------------------------


def derive_seed(*keys: int) -> int:
    return int(np.random.SeedSequence(list(keys)).generate_state(1)[0])


@dataclass
class FitOutcome:
    predict: Any
    diverged: bool = False
    note: str = ""


def reference_whitener(reference: np.ndarray, ridge: float = 1e-3):
    """Affine map ``x -> L^{-1} (x - mean)`` from reference statistics.

    ``L`` is the Cholesky factor of the reference covariance plus ``ridge``
    times its mean variance on the diagonal, which keeps the map defined when
    there are fewer reference rows than dimensions.
    """
    ref = np.asarray(reference, dtype=np.float64)
    mu = ref.mean(axis=0)
    cov = np.atleast_2d(np.cov(ref, rowvar=False)) if len(ref) > 1 else np.eye(ref.shape[1])
    scale = float(np.mean(np.diag(cov)))
    cov = cov + (ridge * scale if scale > 0 else 1.0) * np.eye(cov.shape[0])
    L = np.linalg.cholesky(cov)

    def apply(x):
        return solve_triangular(L, (np.asarray(x, dtype=np.float64) - mu).T, lower=True).T

    return apply


def fit_ratio_model(config: ExperimentConfig, reference: np.ndarray, evaluation: np.ndarray, seed: int) -> FitOutcome:
    if config.preprocess.whiten == "reference":
        whiten = reference_whitener(reference, config.preprocess.ridge)
        inner = _fit_ratio_model(config, whiten(reference), whiten(evaluation), seed)
        return FitOutcome(lambda x: inner.predict(whiten(x)), inner.diverged, inner.note)
    return _fit_ratio_model(config, reference, evaluation, seed)


def _fit_ratio_model(config, reference, evaluation, seed) -> FitOutcome:
    if config.method in DDRE_METHODS:
        dd = config.ddre
        tag = config.method.split("-")[1]
        kind = ObjectiveKind(tag, dd.barr_lambda if tag == "BARR" else None)
        sizes = [reference.shape[1], *dd.hidden_layers, 1]
        model = mlp_init(sizes, seed=seed, l2=dd.l2, keep_prob=dd.keep_prob)
        train_cfg = dataclasses.replace(dd.train, seed=derive_seed(seed, 1))
        trained, _ = train_ddre(model, reference, evaluation, kind, train_cfg)
        note = f"epochs={trained.epochs_run}"
        if trained.diverged:
            note += f"; diverged: {trained.message}"
        return FitOutcome(trained.predict, trained.diverged, note)
    kcfg = dataclasses.replace(config.kernel, seed=seed)
    km = fit_kernel(config.method, reference, evaluation, kcfg)
    return FitOutcome(km.predict, False, f"sigma={km.sigma:.6g}")


# --- running -------------------------------------------------------------------


@dataclass
class SeriesResult:
    series_id: str
    true_cp: int | None
    predicted_cp: int | None = None
    sample_rate: float | None = None
    fit: LogisticFit | None = None
    trace: np.ndarray | None = None
    trace_offset: int = 0
    status: str = "ok"
    diverged: bool = False

    @property
    def lag(self) -> int | None:
        if self.true_cp is None or self.predicted_cp is None:
            return None
        return abs(self.predicted_cp - self.true_cp)

    def row(self, method: str) -> dict:
        lag = self.lag
        seconds = lag / self.sample_rate if lag is not None and self.sample_rate else None
        return {
            "series_id": self.series_id,
            "true_cp": self.true_cp,
            "predicted_cp": self.predicted_cp,
            "lag_samples": lag,
            "lag_seconds": seconds,
            "k": self.fit.k if self.fit else None,
            "x0": self.fit.x0 if self.fit else None,
            "residual": self.fit.residual if self.fit else None,
            "method": method,
            "status": self.status,
        }


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    results: list[SeriesResult]
    summary: AdlSummary | None
    training_series: tuple[str, ...] = ()
    test_series: tuple[str, ...] = ()
    version: str = __version__
    wall_time: float = 0.0

    @property
    def diverged(self) -> int:
        return sum(r.diverged for r in self.results)

    def rows(self) -> list[dict]:
        return [r.row(self.config.method) for r in self.results]

    def report_csv(self) -> str:
        return _csv_text(REPORT_COLUMNS, self.rows())

    def summary_row(self) -> dict:
        s = self.summary
        failed = sum(r.status != "ok" for r in self.results)
        base = {"method": self.config.method, "n_series": len(self.results), "n_failed": failed,
                "n_diverged": self.diverged}
        if s is None:
            return {**base, "adl_mean": None, "adl_median": None, "adl_q1": None, "adl_q3": None,
                    "lag_median": None, "bootstrap_runs": None}
        return {**base, "adl_mean": s.mean, "adl_median": s.median, "adl_q1": s.quartiles[0],
                "adl_q3": s.quartiles[1], "lag_median": s.lag_median, "bootstrap_runs": s.bootstrap_runs}


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _csv_text(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row.get(c)) for c in columns])
    return buf.getvalue()


def _score(result: SeriesResult, trace: np.ndarray, offset: int, smoothing: int) -> SeriesResult:
    result.trace, result.trace_offset = trace, offset
    try:
        cp, fit, clamped = extract_change_point(RatioTrace(result.series_id, trace, offset), smoothing)
    except ValueError as exc:
        result.status = f"error: {exc}"
        return result
    result.predicted_cp, result.fit = cp, fit
    if clamped:
        result.status = "ok; x0 clamped to trace range"
    return result


def _window_series(config: ExperimentConfig, rec: TimeSeriesRecord) -> SeriesResult:
    res = SeriesResult(rec.id, rec.true_change_point, sample_rate=rec.sample_rate)
    wc = config.window
    tag = METHOD_COSTS[config.method]
    kind = CostKind(tag, rbf_gamma=wc.rbf_gamma if tag == "RBF" else None,
                    ar_order=wc.ar_order if tag == "AR" else None)
    try:
        tr = discrepancy_trace(rec, wc.half_window, kind)
    except ValueError as exc:
        res.status = f"error: {exc}"
        return res
    res.trace, res.trace_offset = tr.values, tr.half_window
    res.predicted_cp = int(tr.half_window + np.argmax(tr.values))
    return res


def _per_series_task(args) -> SeriesResult:
    config, rec, boundary, index = args
    if config.method in WINDOW_METHODS:
        return _window_series(config, rec)
    res = SeriesResult(rec.id, rec.true_change_point, sample_rate=rec.sample_rate)
    x = rec.samples
    try:
        outcome = fit_ratio_model(config, x[:boundary], x[boundary:], derive_seed(config.seed, index))
    except (ValueError, FloatingPointError) as exc:
        res.status = f"error: {exc}"
        return res
    res.diverged = outcome.diverged
    res = _score(res, outcome.predict(x[boundary:]), boundary, config.detect.smoothing)
    if outcome.diverged and res.status == "ok":
        res.status = "ok; training diverged"
    return res


def _map(fn, tasks, workers: int):
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


def load_dataset(config: ExperimentConfig) -> Dataset:
    if isinstance(config.data, SimConfig):
        return simulate_dataset(config.data)
    src = config.data
    return load_csv_dataset(src.path, src.has_header, src.metadata)


def pooled_training_samples(train: Dataset, ref_fraction: float):
    """Stack reference and evaluation rows of all training series, with the source id of each row."""
    split = split_reference_evaluation(train, ref_fraction)
    ref, ev, ref_src, ev_src = [], [], [], []
    for rec in train:
        cut = split.boundaries[rec.id]
        ref.append(rec.samples[:cut])
        ev.append(rec.samples[cut:])
        ref_src += [rec.id] * cut
        ev_src += [rec.id] * (rec.length - cut)
    return np.vstack(ref), np.vstack(ev), ref_src + ev_src


def run_pipeline(config: ExperimentConfig) -> ExperimentReport:
    """Run one experiment in memory (no files written)."""
    t0 = time.perf_counter()
    dataset = load_dataset(config)
    protocol = config.protocol
    training: tuple[str, ...] = ()
    if protocol == "per_series":
        split = split_reference_evaluation(dataset, config.split.ref_fraction)
        tasks = [(config, rec, split.boundaries[rec.id], i) for i, rec in enumerate(dataset)]
        results = _map(_per_series_task, tasks, config.workers)
        tested = tuple(r.id for r in dataset)
    else:
        train, test = train_test_partition(dataset, config.split.test_fraction, config.seed)
        tested = tuple(r.id for r in test)
        if config.method in WINDOW_METHODS:
            results = _map(_WindowTask(config), list(test), config.workers)
        else:
            ref, ev, provenance = pooled_training_samples(train, config.split.ref_fraction)
            training = tuple(dict.fromkeys(provenance))
            outcome = fit_ratio_model(config, ref, ev, derive_seed(config.seed, 0))
            results = []
            for rec in test:
                res = SeriesResult(rec.id, rec.true_change_point, sample_rate=rec.sample_rate)
                res.diverged = outcome.diverged
                results.append(_score(res, outcome.predict(rec.samples), 0, config.detect.smoothing))
    lags = [r.lag for r in results if r.lag is not None]
    summary = bootstrap_adl(lags, config.detect.bootstrap_runs, config.seed) if lags else None
    return ExperimentReport(
        config, list(results), summary, training, tested, wall_time=time.perf_counter() - t0
    )


class _WindowTask:
    """Picklable per-series window task for process pools."""

    def __init__(self, config):
        self.config = config

    def __call__(self, rec):
        return _window_series(self.config, rec)


def write_report(report: ExperimentReport, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.csv").write_text(report.report_csv())
    s = report.summary_row()
    (out / "summary.csv").write_text(_csv_text(tuple(s), [s]))
    if report.summary is not None:
        rows = [{"method": report.config.method, "run": i, "adl": m}
                for i, m in enumerate(report.summary.bootstrap_means)]
        (out / "bootstrap.csv").write_text(_csv_text(("method", "run", "adl"), rows))
    trace_rows = []
    for r in report.results:
        if r.trace is None:
            continue
        for j, v in enumerate(r.trace):
            trace_rows.append({"series_id": r.series_id, "t": r.trace_offset + j, "value": float(v)})
    (out / "traces.csv").write_text(_csv_text(("series_id", "t", "value"), trace_rows))
    (out / "config.resolved").write_text(report.config.resolved_text())
    info = {"version": report.version, "wall_time_seconds": report.wall_time,
            "protocol": report.config.protocol, "training_series": list(report.training_series),
            "test_series": list(report.test_series)}
    (out / "run_info.json").write_text(json.dumps(info, indent=2) + "\n")
    if report.config.figures:
        from .plotting import plot_run

        plot_run(report, out / "figures")
    return out


def run_experiment(config: ExperimentConfig | str | Path, out_dir: str | Path | None = None) -> ExperimentReport:
    """Run an experiment and write its report files; returns the in-memory report."""
    if not isinstance(config, ExperimentConfig):
        config = load_config(config)
    report = run_pipeline(config)
    write_report(report, out_dir if out_dir is not None else config.output)
    return report


# --- sweeps and comparisons ---------------------------------------------------

SWEEP_COLUMNS = ("objective", "minibatch_size", "adl_median", "adl_mean", "adl_q1", "adl_q3",
                 "adl_spread", "n_series", "n_failed", "n_diverged", "diverged")


@dataclass
class SweepReport:
    rows: list[dict]
    reports: dict[tuple[str, int], ExperimentReport] = field(default_factory=dict)

    def csv_text(self) -> str:
        return _csv_text(SWEEP_COLUMNS, self.rows)


def sweep_minibatch(config: ExperimentConfig | str | Path, sizes, out_dir: str | Path | None = None,
                    objectives=("LSIF", "BARR", "DSKL")) -> SweepReport:
    """Re-run a DDRE experiment for every (objective, minibatch size) cell."""
    if not isinstance(config, ExperimentConfig):
        config = load_config(config)
    if config.method not in DDRE_METHODS:
        raise ConfigError(f"sweep-minibatch needs a DDRE method, got {config.method}")
    sizes = [int(s) for s in sizes]
    if not sizes:
        raise ConfigError("no minibatch sizes given")
    out = Path(out_dir if out_dir is not None else config.output)
    rows, reports = [], {}
    for obj in objectives:
        for size in sizes:
            train = dataclasses.replace(config.ddre.train, minibatch_size=size)
            cell = dataclasses.replace(config, method=f"DDRE-{obj}",
                                       ddre=dataclasses.replace(config.ddre, train=train),
                                       figures=False)
            rep = run_pipeline(cell)
            write_report(rep, out / "cells" / f"{obj}_{size}")
            reports[(obj, size)] = rep
            s = rep.summary_row()
            spread = None if s["adl_q1"] is None else s["adl_q3"] - s["adl_q1"]
            rows.append({"objective": obj, "minibatch_size": size, "adl_median": s["adl_median"],
                         "adl_mean": s["adl_mean"], "adl_q1": s["adl_q1"], "adl_q3": s["adl_q3"],
                         "adl_spread": spread, "n_series": s["n_series"], "n_failed": s["n_failed"],
                         "n_diverged": s["n_diverged"], "diverged": s["n_diverged"] > 0})
    sweep = SweepReport(rows, reports)
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep.csv").write_text(sweep.csv_text())
    (out / "config.resolved").write_text(config.resolved_text())
    if config.figures:
        from .plotting import plot_sweep

        plot_sweep(rows, out / "figures")
    return sweep


COMPARE_COLUMNS = ("method", "n_series", "n_failed", "n_diverged", "adl_mean", "adl_median",
                   "adl_q1", "adl_q3", "lag_median", "bootstrap_runs")


def compare_methods(configs, out_dir: str | Path | None = None) -> list[ExperimentReport]:
    configs = [c if isinstance(c, ExperimentConfig) else load_config(c) for c in configs]
    if len(configs) < 2:
        raise ConfigError("compare needs >= 2 configs")
    first = configs[0]
    for c in configs[1:]:
        if c.data != first.data or c.seed != first.seed or c.split != first.split:
            raise ConfigError(f"config for {c.method} does not share the data source, split and seed")
    out = Path(out_dir if out_dir is not None else first.output)
    reports = []
    for i, c in enumerate(configs):
        rep = run_pipeline(dataclasses.replace(c, figures=False))
        write_report(rep, out / "runs" / f"{i:02d}_{c.method}")
        reports.append(rep)
    out.mkdir(parents=True, exist_ok=True)
    rows = [r.summary_row() for r in reports]
    (out / "comparison.csv").write_text(_csv_text(COMPARE_COLUMNS, rows))
    boot = [{"method": r.config.method, "run": j, "adl": m}
            for r in reports if r.summary is not None
            for j, m in enumerate(r.summary.bootstrap_means)]
    (out / "bootstrap.csv").write_text(_csv_text(("method", "run", "adl"), boot))
    if first.figures:
        from .plotting import plot_comparison

        plot_comparison(reports, out / "figures")
    return reports


# --- feature extraction and simulation export ------------------------------------


@dataclass(frozen=True)
class FeatureConfig:
    window_length: int = 256
    hop: int = 128


def window_change_point(tau: int, window_length: int, hop: int) -> int:
    """Index of the first window that contains sample ``tau``."""
    return max(0, -(-(tau - window_length + 1) // hop))


def _load_source(raw: dict, base_dir, seed: int):
    data = raw.get("data")
    if not isinstance(data, dict) or len(data) != 1 or next(iter(data)) not in ("simulate", "csv"):
        raise ConfigError("data: expected exactly one of {'simulate': {...}} or {'csv': {...}}")
    if "simulate" in data:
        sim = dict(data["simulate"] or {})
        sim.setdefault("seed", seed)
        return simulate_dataset(_build(SimConfig, sim, "data.simulate"))
    src = _build(CsvSource, data["csv"], "data.csv")
    path = Path(src.path)
    if base_dir is not None and not path.is_absolute():
        path = Path(base_dir) / path
    return load_csv_dataset(path, src.has_header, src.metadata)


def _read_raw(path: str | Path) -> dict:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"{path}: no such config file") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    return raw


def run_features(config_path: str | Path, out_dir: str | Path, seed: int | None = None) -> Path:
    """Write windowed energy features of every series as a new CSV dataset.

    Config keys: ``schema_version``, ``data`` and ``features`` (window_length,
    hop); experiment keys such as ``method`` are ignored so an experiment
    config can be reused. Labels are converted to window indices.
    """
    raw = _read_raw(config_path)
    if raw.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"schema_version: expected {SCHEMA_VERSION}")
    fc = _build(FeatureConfig, raw.get("features"), "features")
    dataset = _load_source(raw, Path(config_path).parent, seed if seed is not None else raw.get("seed", 0))
    out_records = []
    for rec in dataset:
        feats = window_features(rec, fc.window_length, fc.hop)
        n = feats.windows.shape[0]
        tau = None
        if rec.true_change_point is not None:
            tau = window_change_point(rec.true_change_point, fc.window_length, fc.hop)
            tau = tau if 0 < tau < n else None
        rate = rec.sample_rate / fc.hop if rec.sample_rate else None
        out_records.append(TimeSeriesRecord(rec.id, feats.windows, tau, rate))
    return write_csv_dataset(out_records, out_dir)


def run_simulate(config_path: str | Path, out_dir: str | Path, seed: int | None = None) -> Path:
    """Export the simulated dataset described by ``data.simulate`` as CSV files."""
    raw = _read_raw(config_path)
    if raw.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"schema_version: expected {SCHEMA_VERSION}")
    data = raw.get("data")
    if not isinstance(data, dict) or "simulate" not in data:
        raise ConfigError("data.simulate: section required for the simulate command")
    if seed is not None:
        raw["seed"] = seed
    dataset = _load_source({"data": {"simulate": data["simulate"]}}, None, raw.get("seed", 0))
    return write_csv_dataset(dataset, out_dir)
