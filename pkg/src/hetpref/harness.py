"""Seeded, replicated experiment sweeps and their persistence.

Every sweep point gets its own seed, hashed from the base seed and the sweep
coordinates, so rows do not depend on execution order and serial and parallel
runs produce identical CSVs.
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.stats import spearmanr

from . import __version__
from ._numerics import derive_seed, unit
from .datagen import (
    DiffDistribution,
    GaussianDiff,
    ItemCatalog,
    PanelSpec,
    diff_from_dict,
    diff_to_dict,
    generate,
    sample_diffs,
)
from .estimators import (
    RLHF_CONFIG,
    SIGN_CONFIG,
    LambdaSchedule,
    OptimConfig,
    fit_em_restarts,
    fit_rlhf,
    fit_sign,
)
from .metrics import catalog_pair_diffs, evaluate
from .population import (
    FiniteMixture,
    GaussianMixedLogit,
    PopulationSpec,
    mean_beta,
    scale_heterogeneity,
    spec_from_dict,
    spec_to_dict,
)

CONFIG_VERSION = 1
EXPERIMENTS = ("estimator_comparison", "rate_sweep", "scale_sweep", "em_comparison", "oracle_suite")
CSV_COLUMNS = ("experiment", "estimator", "n", "scale", "k", "replicate", "seed",
               "angle_degrees", "disagreement_rate", "wall_time_s", "converged")
WORKERS_ENV = "HETPREF_WORKERS"


class ConfigError(ValueError):
    """Invalid experiment configuration."""


# -- named populations -------------------------------------------------------

def fig1_analogue(d: int = 5) -> FiniteMixture:
    """Asymmetric two-type population used as a synthetic stand-in for the persona panel.

    A 75% majority and a 25% minority whose deviations from the mean point in
    opposite directions; the minority deviates three times as far, so the
    deviation law is not symmetric. The RMS deviation is twice the norm of the
    mean. Only the qualitative ordering of estimators is meaningful on this
    population, not any particular angle.
    """
    if d < 2:
        raise ValueError("fig1-analogue needs d >= 2")
    mean = np.zeros(d)
    mean[0] = 0.5
    dev = np.zeros(d)
    norm = 2.0 * mean[0] / math.sqrt(3.0)
    dev[0] = norm * math.cos(0.8 * math.pi)
    dev[1] = norm * math.sin(0.8 * math.pi)
    return FiniteMixture([0.75, 0.25], [mean + dev, mean - 3.0 * dev])


def gaussian_benchmark(d: int = 5, mean_norm: float = 2.0) -> GaussianMixedLogit:
    mean = np.zeros(d)
    mean[0] = mean_norm
    return GaussianMixedLogit(mean, np.eye(d))


def two_type_panel(d: int = 5) -> FiniteMixture:
    """Two equally common, well-separated user types with unequal utility norms."""
    if d < 2:
        raise ValueError("two-type-panel needs d >= 2")
    a = np.zeros(d)
    b = np.zeros(d)
    a[:2] = (3.0, 2.0)
    b[:2] = (-1.0, -2.0)
    return FiniteMixture([0.5, 0.5], [a, b])


NAMED_POPULATIONS = {
    "fig1-analogue": fig1_analogue,
    "gaussian-benchmark": gaussian_benchmark,
    "two-type-panel": two_type_panel,
}


def resolve_population(value, d: Optional[int] = None) -> PopulationSpec:
    if isinstance(value, str):
        if value not in NAMED_POPULATIONS:
            raise ConfigError(f"unknown population {value!r}; known: {sorted(NAMED_POPULATIONS)}")
        return NAMED_POPULATIONS[value](d) if d is not None else NAMED_POPULATIONS[value]()
    if isinstance(value, dict) and "name" in value:
        extra = set(value) - {"name", "dim"}
        if extra:
            raise ConfigError(f"unknown keys in named population: {sorted(extra)}")
        return resolve_population(value["name"], value.get("dim"))
    try:
        return spec_from_dict(value)
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(str(exc)) from None


# -- configuration -----------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    """Declarative description of one sweep.

    ``optimizer`` drives the logistic fits (pooled and inside EM);
    ``sign_optimizer`` and ``lambda_schedule`` drive the Sign fit.
    ``pairs_per_user`` turns on panel generation with ``n / pairs_per_user``
    users per dataset. ``eval_pairs`` diffs (drawn once per sweep) score the
    disagreement rate for continuous diff distributions; catalogs use all
    item pairs.
    """

    experiment: str
    population: PopulationSpec
    diffs: DiffDistribution
    sample_sizes: tuple = (1000,)
    replicates: int = 1
    base_seed: int = 0
    scales: tuple = (1.0,)
    em_k: tuple = (1,)
    pairs_per_user: Optional[int] = None
    optimizer: OptimConfig = RLHF_CONFIG
    sign_optimizer: OptimConfig = SIGN_CONFIG
    lambda_schedule: LambdaSchedule = LambdaSchedule()
    eval_pairs: int = 20000
    em_restarts: int = 1
    output_dir: Optional[str] = None
    population_name: Optional[str] = None

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"experiment must be one of {EXPERIMENTS}, got {self.experiment!r}")
        if self.population.dim != self.diffs.dim:
            raise ConfigError("population and diff distribution dimensions differ")
        if not self.sample_sizes or any(int(n) < 1 for n in self.sample_sizes):
            raise ConfigError("sample_sizes must be a nonempty list of positive integers")
        if not self.scales or any(not s > 0 for s in self.scales):
            raise ConfigError("scales must be a nonempty list of positive reals")
        if not self.em_k or any(int(k) < 1 for k in self.em_k):
            raise ConfigError("em_k must be a nonempty list of positive integers")
        if self.replicates < 1:
            raise ConfigError("replicates must be >= 1")
        if self.pairs_per_user is not None:
            if self.pairs_per_user < 1:
                raise ConfigError("pairs_per_user must be positive")
            bad = [n for n in self.sample_sizes if n % self.pairs_per_user]
            if bad:
                raise ConfigError(f"sample sizes {bad} are not multiples of pairs_per_user")
        if self.experiment == "em_comparison" and self.pairs_per_user is None:
            raise ConfigError("em_comparison needs pairs_per_user (panel data)")
        if self.eval_pairs < 1:
            raise ConfigError("eval_pairs must be positive")

    def to_dict(self) -> dict:
        return {
            "version": CONFIG_VERSION,
            "experiment": self.experiment,
            "population": self.population_name or spec_to_dict(self.population),
            "diffs": diff_to_dict(self.diffs),
            "sample_sizes": [int(n) for n in self.sample_sizes],
            "replicates": self.replicates,
            "base_seed": self.base_seed,
            "scales": [float(s) for s in self.scales],
            "em_k": [int(k) for k in self.em_k],
            "pairs_per_user": self.pairs_per_user,
            "optimizer": asdict(self.optimizer),
            "sign_optimizer": asdict(self.sign_optimizer),
            "lambda_schedule": asdict(self.lambda_schedule),
            "eval_pairs": self.eval_pairs,
            "em_restarts": self.em_restarts,
            "output_dir": self.output_dir,
        }


_CONFIG_KEYS = {"version", "experiment", "population", "diffs", "sample_sizes", "replicates", "base_seed",
                "scales", "em_k", "pairs_per_user", "optimizer", "sign_optimizer", "lambda_schedule",
                "eval_pairs", "em_restarts", "output_dir"}


def _dataclass_from(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be an object")
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def config_from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(data) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if data.get("version") != CONFIG_VERSION:
        raise ConfigError(f"config version must be {CONFIG_VERSION}")
    if "experiment" not in data or "population" not in data:
        raise ConfigError("config needs 'experiment' and 'population'")
    pop_value = data["population"]
    population = resolve_population(pop_value)
    name = pop_value if isinstance(pop_value, str) else None
    if isinstance(pop_value, dict) and "name" in pop_value:
        name = pop_value
    try:
        diffs = diff_from_dict(data["diffs"]) if "diffs" in data else GaussianDiff(np.eye(population.dim))
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"diffs: {exc}") from None
    kwargs = {
        "experiment": data["experiment"],
        "population": population,
        "population_name": name,
        "diffs": diffs,
    }
    for key in ("sample_sizes", "scales", "em_k"):
        if key in data:
            if not isinstance(data[key], list):
                raise ConfigError(f"{key} must be a list")
            kwargs[key] = tuple(data[key])
    for key in ("replicates", "base_seed", "pairs_per_user", "eval_pairs", "em_restarts", "output_dir"):
        if key in data:
            kwargs[key] = data[key]
    if "optimizer" in data:
        kwargs["optimizer"] = _dataclass_from(OptimConfig, data["optimizer"], "optimizer")
    if "sign_optimizer" in data:
        kwargs["sign_optimizer"] = _dataclass_from(OptimConfig, data["sign_optimizer"], "sign_optimizer")
    if "lambda_schedule" in data:
        kwargs["lambda_schedule"] = _dataclass_from(LambdaSchedule, data["lambda_schedule"], "lambda_schedule")
    return ExperimentConfig(**kwargs)


def load_config(path) -> ExperimentConfig:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    return config_from_dict(data)


# -- rows --------------------------------------------------------------------

@dataclass(frozen=True)
class RunRecord:
    experiment: str
    estimator: str
    n: int
    scale: float
    k: int
    replicate: int
    seed: int
    angle_degrees: float
    disagreement_rate: float
    wall_time_s: float
    converged: bool

    def sort_key(self):
        return (self.experiment, self.scale, self.n, self.replicate, self.k, self.estimator)

    def as_row(self) -> list:
        return [self.experiment, self.estimator, self.n, repr(float(self.scale)), self.k, self.replicate,
                self.seed, repr(float(self.angle_degrees)), repr(float(self.disagreement_rate)),
                f"{self.wall_time_s:.6f}", int(bool(self.converged))]


def write_results_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, quoting=csv.QUOTE_MINIMAL, lineterminator="\r\n")
        writer.writerow(CSV_COLUMNS)
        for row in sorted(rows, key=RunRecord.sort_key):
            writer.writerow(row.as_row())


class ResultsFormatError(ValueError):
    def __init__(self, message: str, row: Optional[int] = None):
        self.row = row
        super().__init__(f"row {row}: {message}" if row is not None else message)


def read_results_csv(path) -> list[RunRecord]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ResultsFormatError("results file is empty") from None
        if tuple(header) != CSV_COLUMNS:
            raise ResultsFormatError(f"unexpected header {header}", 1)
        rows = []
        for i, raw in enumerate(reader, start=2):
            if len(raw) != len(CSV_COLUMNS):
                raise ResultsFormatError(f"expected {len(CSV_COLUMNS)} fields, got {len(raw)}", i)
            try:
                rows.append(RunRecord(raw[0], raw[1], int(raw[2]), float(raw[3]), int(raw[4]), int(raw[5]),
                                      int(raw[6]), float(raw[7]), float(raw[8]), float(raw[9]), raw[10] == "1"))
            except ValueError as exc:
                raise ResultsFormatError(str(exc), i) from None
    if not rows:
        raise ResultsFormatError("results file has no data rows")
    return rows


# -- sweep machinery ---------------------------------------------------------

def worker_count(requested: Optional[int] = None) -> int:
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get(WORKERS_ENV)
    return max(1, int(env)) if env else 1


def eval_diffs_for(cfg: ExperimentConfig) -> np.ndarray:
    if isinstance(cfg.diffs, ItemCatalog):
        return catalog_pair_diffs(cfg.diffs, seed=derive_seed(cfg.base_seed, "eval"))
    x, _ = sample_diffs(cfg.diffs, cfg.eval_pairs, np.random.default_rng(derive_seed(cfg.base_seed, "eval")))
    return x


def dataset_seed(cfg: ExperimentConfig, n: int, replicate: int) -> int:
    return derive_seed(cfg.base_seed, "data", int(n), int(replicate))


def _row(cfg, estimator, n, scale, k, rep, seed, mu_hat, mu_bar, eval_x, elapsed, converged) -> RunRecord:
    report = evaluate(mu_hat, mu_bar, eval_x)
    return RunRecord(cfg.experiment, estimator, int(n), float(scale), int(k), int(rep), int(seed),
                     report.angle_degrees, report.disagreement_rate, elapsed, bool(converged))


def _failure(cfg, estimator, n, scale, k, rep, seed, elapsed) -> RunRecord:
    return RunRecord(cfg.experiment, estimator, int(n), float(scale), int(k), int(rep), int(seed),
                     math.nan, math.nan, elapsed, False)


def _timed(fn, *args, **kwargs):
    t0 = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - t0


def _run_point(cfg: ExperimentConfig, population: PopulationSpec, n: int, scale: float, rep: int,
               estimators: tuple, eval_x: np.ndarray) -> list[RunRecord]:
    seed = dataset_seed(cfg, n, rep)
    mu_bar = unit(mean_beta(population))
    panel = PanelSpec(n // cfg.pairs_per_user, cfg.pairs_per_user) if cfg.pairs_per_user else None
    ds = generate(population, cfg.diffs, n, panel=panel, seed=seed)
    rows = []
    for name in estimators:
        t0 = time.perf_counter()
        k = 0
        try:
            if name == "rlhf":
                est = fit_rlhf(ds, replace(cfg.optimizer, seed=derive_seed(seed, "rlhf")))
                mu, conv = est.mu_hat, est.converged
            elif name == "sign":
                est = fit_sign(ds, replace(cfg.sign_optimizer, seed=derive_seed(seed, "sign")), cfg.lambda_schedule)
                mu, conv = est.mu_hat, est.converged
            elif name.startswith("em_k"):
                k = int(name[4:])
                res = _fit_em_best(ds, k, cfg, seed)
                mu, conv = unit(res.beta_em), res.converged
            else:
                raise ValueError(f"unknown estimator {name}")
        except (ValueError, FloatingPointError, np.linalg.LinAlgError):
            rows.append(_failure(cfg, name, n, scale, k, rep, seed, time.perf_counter() - t0))
            continue
        rows.append(_row(cfg, name, n, scale, k, rep, seed, mu, mu_bar, eval_x, time.perf_counter() - t0, conv))
    return rows


def _fit_em_best(ds, k, cfg, seed):
    # The pooled start uses the RLHF seed so EM at K=1 reproduces the RLHF fit exactly.
    em_cfg = replace(cfg.optimizer, seed=derive_seed(seed, "rlhf"))
    return fit_em_restarts(ds, k, em_cfg, derive_seed(seed, "em", k), max(1, cfg.em_restarts))


def _sweep(cfg: ExperimentConfig, points, estimators, workers: Optional[int]) -> list[RunRecord]:
    """Run ``(population, n, scale, replicate)`` points, possibly in parallel."""
    eval_x = eval_diffs_for(cfg)
    jobs = [(cfg, pop, n, s, rep, estimators, eval_x) for pop, n, s, rep in points]
    nworkers = worker_count(workers)
    rows: list[RunRecord] = []
    if nworkers == 1 or len(jobs) == 1:
        for job in jobs:
            rows.extend(_run_point(*job))
    else:
        with ProcessPoolExecutor(max_workers=nworkers) as pool:
            for part in pool.map(_run_point_star, jobs):
                rows.extend(part)
    return sorted(rows, key=RunRecord.sort_key)


def _run_point_star(job):
    return _run_point(*job)


def _persist(cfg: ExperimentConfig, rows, summary: Optional[dict] = None, output_dir=None) -> None:
    out = output_dir or cfg.output_dir
    if out is None:
        return
    out = Path(out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        snapshot = {"config": cfg.to_dict(), "code_version": __version__, "base_seed": cfg.base_seed}
        (out / "config.json").write_text(json.dumps(snapshot, indent=2, sort_keys=True))
        write_results_csv(rows, out / "results.csv")
        if summary is not None:
            (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    except OSError as exc:
        raise ConfigError(f"cannot write to output directory {out}: {exc.strerror}") from None


# -- experiments -------------------------------------------------------------

def run_estimator_comparison(cfg: ExperimentConfig, workers: Optional[int] = None,
                             output_dir=None) -> list[RunRecord]:
    """Fit RLHF and Sign on identical datasets for every ``(n, replicate)``."""
    points = [(cfg.population, n, 1.0, rep) for n in cfg.sample_sizes for rep in range(cfg.replicates)]
    rows = _sweep(cfg, points, ("rlhf", "sign"), workers)
    _persist(cfg, rows, output_dir=output_dir)
    return rows


def mean_by(rows, key, estimator, field_name="angle_degrees") -> dict:
    groups: dict = {}
    for r in rows:
        if r.estimator == estimator and not math.isnan(getattr(r, field_name)):
            groups.setdefault(getattr(r, key), []).append(getattr(r, field_name))
    return {k: float(np.mean(v)) for k, v in sorted(groups.items())}


@dataclass(frozen=True)
class RateSweepResult:
    rows: list
    slope: float
    ci_low: float
    ci_high: float
    mean_angles: dict  # n -> mean angle (degrees)

    def summary(self) -> dict:
        return {"slope": self.slope, "ci": [self.ci_low, self.ci_high],
                "mean_angle_degrees": {str(k): v for k, v in self.mean_angles.items()}}


def log_log_slope(ns, values) -> float:
    return float(np.polyfit(np.log(np.asarray(ns, float)), np.log(np.asarray(values, float)), 1)[0])


def bootstrap_slope_ci(angles_by_n: dict, n_boot: int = 1000, seed: int = 0, level: float = 0.95):
    """Percentile CI of the log-log slope, resampling replicates within each ``n``."""
    rng = np.random.default_rng(seed)
    ns = sorted(angles_by_n)
    arrays = [np.asarray(angles_by_n[n]) for n in ns]
    slopes = np.empty(n_boot)
    for b in range(n_boot):
        means = [a[rng.integers(0, a.size, a.size)].mean() for a in arrays]
        slopes[b] = log_log_slope(ns, means)
    tail = (1.0 - level) / 2.0
    return float(np.quantile(slopes, tail)), float(np.quantile(slopes, 1.0 - tail))


def run_rate_sweep(cfg: ExperimentConfig, workers: Optional[int] = None, n_boot: int = 1000,
                   output_dir=None) -> RateSweepResult:
    """Sign-estimator angle across ``n`` and the fitted slope of log angle vs log n."""
    sizes = sorted(set(int(n) for n in cfg.sample_sizes))
    if len(sizes) < 3:
        raise ConfigError("rate sweep needs at least 3 distinct sample sizes")
    points = [(cfg.population, n, 1.0, rep) for n in sizes for rep in range(cfg.replicates)]
    rows = _sweep(cfg, points, ("sign",), workers)
    by_n: dict = {}
    for r in rows:
        if not math.isnan(r.angle_degrees):
            by_n.setdefault(r.n, []).append(r.angle_degrees)
    means = {n: float(np.mean(v)) for n, v in sorted(by_n.items())}
    slope = log_log_slope(list(means), list(means.values()))
    lo, hi = bootstrap_slope_ci(by_n, n_boot, seed=derive_seed(cfg.base_seed, "bootstrap"))
    result = RateSweepResult(rows, slope, lo, hi, means)
    _persist(cfg, rows, result.summary(), output_dir=output_dir)
    return result


@dataclass(frozen=True)
class ScaleSummary:
    scale: float
    rlhf_angle: float
    sign_angle: float
    rlhf_disagreement: float
    sign_disagreement: float
    rlhf_angle_se: float
    sign_angle_se: float

    @property
    def relative_improvement(self) -> float:
        """``(RLHF - Sign) / RLHF`` on disagreement rate."""
        return (self.rlhf_disagreement - self.sign_disagreement) / self.rlhf_disagreement


def summarize_scales(rows) -> list[ScaleSummary]:
    out = []
    for s in sorted({r.scale for r in rows}):
        sub = [r for r in rows if r.scale == s]

        def stats(est, field_name):
            v = np.array([getattr(r, field_name) for r in sub if r.estimator == est])
            v = v[~np.isnan(v)]
            se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0
            return float(v.mean()), se

        ra, ra_se = stats("rlhf", "angle_degrees")
        sa, sa_se = stats("sign", "angle_degrees")
        out.append(ScaleSummary(s, ra, sa, stats("rlhf", "disagreement_rate")[0],
                                stats("sign", "disagreement_rate")[0], ra_se, sa_se))
    return out


def run_scale_sweep(cfg: ExperimentConfig, workers: Optional[int] = None, output_dir=None) -> list[RunRecord]:
    """Estimator comparison at the largest sample size for each heterogeneity scale.

    Dataset seeds do not depend on the scale, so every scale sees the same
    random draws and scale 1 reproduces the plain comparison rows.
    """
    n = max(int(v) for v in cfg.sample_sizes)
    points = [(scale_heterogeneity(cfg.population, float(s)), n, float(s), rep)
              for s in cfg.scales for rep in range(cfg.replicates)]
    rows = _sweep(cfg, points, ("rlhf", "sign"), workers)
    summary = [
        {**asdict(s), "relative_improvement": s.relative_improvement} for s in summarize_scales(rows)
    ]
    if len(summary) > 1:
        scales = [s["scale"] for s in summary]
        rho = spearmanr(scales, [s["relative_improvement"] for s in summary]).statistic
        summary = {"scales": summary, "relative_improvement_spearman": float(rho)}
    else:
        summary = {"scales": summary}
    _persist(cfg, rows, summary, output_dir=output_dir)
    return rows


def run_em_comparison(cfg: ExperimentConfig, workers: Optional[int] = None, output_dir=None) -> list[RunRecord]:
    """Pooled RLHF, pooled Sign and EM at each K on identical panel datasets."""
    estimators = ("rlhf", "sign") + tuple(f"em_k{int(k)}" for k in cfg.em_k)
    points = [(cfg.population, n, 1.0, rep) for n in cfg.sample_sizes for rep in range(cfg.replicates)]
    rows = _sweep(cfg, points, estimators, workers)
    _persist(cfg, rows, output_dir=output_dir)
    return rows


# -- oracle suite ------------------------------------------------------------

@dataclass(frozen=True)
class OracleSuiteSettings:
    """Monte-Carlo budgets for :func:`run_oracle_suite`."""

    identity_diffs: int = 1000
    reweight_populations: int = 5
    reweight_n_mc: int = 1_000_000
    reweight_tolerance_degrees: float = 2.0
    counterexample_n_mc: int = 1_000_000
    counterexample_n: int = 100_000
    counterexample_tolerance_degrees: float = 5.0
    curvature_n_mc: int = 2_000_000
    curvature_angles: tuple = (0.05, 0.1, 0.15, 0.2, 0.3, 0.4, 0.5)
    curvature_exponent_range: tuple = (1.5, 2.5)


def symmetric_test_populations(d: int = 2) -> list[FiniteMixture]:
    """Five mean-symmetric discrete populations, the antipodal counterexample first."""
    from .population import antipodal_counterexample, conditionally_symmetric

    pops = [antipodal_counterexample(), conditionally_symmetric(1.0), conditionally_symmetric(3.0)]
    pops.append(FiniteMixture([0.25, 0.25, 0.5], [[1.0, 2.0], [1.0, -2.0], [1.0, 0.0]]))
    pops.append(FiniteMixture([0.1, 0.4, 0.4, 0.1], [[0.5, 4.0], [0.5, 1.0], [0.5, -1.0], [0.5, -4.0]]))
    return pops


def random_mixtures(n: int, n_atoms: int, d: int, seed: int) -> list[FiniteMixture]:
    rng = np.random.default_rng(seed)
    return [FiniteMixture(rng.dirichlet(np.ones(n_atoms)), 1.5 * rng.standard_normal((n_atoms, d)))
            for _ in range(n)]


def _check(name, fn):
    try:
        passed, evidence = fn()
    except Exception as exc:  # any oracle failure is reported, the rest still run
        return {"name": name, "passed": False, "evidence": {"error": f"{type(exc).__name__}: {exc}"}}
    return {"name": name, "passed": bool(passed), "evidence": evidence}


def run_oracle_suite(cfg: ExperimentConfig, settings: OracleSuiteSettings = OracleSuiteSettings(),
                     output_dir=None) -> dict:
    """Run every closed-form and population-level check; returns a JSON-ready report.

    The configured population, when discrete, is checked for the sign
    identity without the symmetry guard, so an asymmetric population shows up
    as a failed check listing its violating diffs.
    """
    from . import oracles
    from .metrics import angle_degrees
    from .population import antipodal_counterexample

    seed = cfg.base_seed

    def two_type():
        base = oracles.two_type_analysis(0.7, 3.0)
        grid = oracles.two_type_region_grid(20, 20, (3.0, 100.0))
        reversed_all = all(a.reversed for _, a in grid)
        ok = base.u_bar == -0.2 and base.u_naive > 0 and reversed_all
        return ok, {"u_bar": base.u_bar, "u_naive": base.u_naive, "grid_points": len(grid),
                    "all_reversed": reversed_all}

    def sign_identity():
        rng = np.random.default_rng(derive_seed(seed, "identity"))
        total, failures = 0, []
        for i, pop in enumerate(symmetric_test_populations()):
            rep = oracles.sign_identity_check(pop, rng.standard_normal((settings.identity_diffs, pop.dim)))
            total += rep.n_checked
            failures += [{"population": i, "diff": v[0], "gap": v[1], "prob": v[2]} for v in rep.violations]
        return not failures, {"diffs_checked": total, "violations": failures[:10]}

    def configured_identity():
        from .population import as_discrete

        if as_discrete(cfg.population) is None:
            return True, {"skipped": "configured population is not discrete"}
        rng = np.random.default_rng(derive_seed(seed, "identity", "configured"))
        rep = oracles.sign_identity_check(cfg.population, rng.standard_normal((settings.identity_diffs,
                                                                                cfg.population.dim)),
                                          guard=False)
        return rep.passed, {"diffs_checked": rep.n_checked, "n_violations": len(rep.violations),
                            "violations": [{"diff": v[0], "gap": v[1], "prob": v[2]} for v in rep.violations[:10]]}

    def reweighting():
        gaps = []
        for i, pop in enumerate(random_mixtures(settings.reweight_populations, 3, 3, derive_seed(seed, "prop1"))):
            s = derive_seed(seed, "prop1", i)
            a = oracles.reweighted_mean_direction(pop, np.eye(3), settings.reweight_n_mc, seed=s)
            b = oracles.population_mle_direction(pop, np.eye(3), settings.reweight_n_mc, seed=s)
            gaps.append(angle_degrees(a, b))
        return max(gaps) <= settings.reweight_tolerance_degrees, {"angle_gaps_degrees": gaps}

    def counterexample():
        pop = antipodal_counterexample()
        target = np.array([1.0, 0.0])
        mle = oracles.population_mle_direction(pop, np.eye(2), settings.counterexample_n_mc,
                                               seed=derive_seed(seed, "d2"))
        gh = oracles.reweighted_mean_direction_gh(pop, np.eye(2))
        ds = generate(pop, GaussianDiff(np.eye(2)), settings.counterexample_n, seed=derive_seed(seed, "d2", "data"))
        sign = fit_sign(ds, replace(SIGN_CONFIG, seed=derive_seed(seed, "d2", "sign")))
        mle_angle = angle_degrees(mle, target)
        sign_angle = angle_degrees(sign.mu_hat, target)
        ok = mle_angle > 1.0 and sign_angle <= settings.counterexample_tolerance_degrees
        return ok, {"mle_angle_degrees": mle_angle, "quadrature_angle_degrees": angle_degrees(gh, target),
                    "sign_angle_degrees": sign_angle}

    def curvature():
        pop = GaussianMixedLogit([2.0, 0.0, 0.0], np.eye(3))
        pts = oracles.curvature_probe(pop, GaussianDiff(np.eye(3)), settings.curvature_angles,
                                      settings.curvature_n_mc, seed=derive_seed(seed, "curvature"))
        c, p = oracles.fit_power_law(pts)
        lo, hi = settings.curvature_exponent_range
        return lo <= p <= hi, {"exponent": p, "constant": c,
                               "points": [[pt.angle, pt.excess, pt.stderr] for pt in pts]}

    checks = [
        _check("two_type_reversal", two_type),
        _check("sign_identity_symmetric", sign_identity),
        _check("sign_identity_configured", configured_identity),
        _check("reweighting_equivalence", reweighting),
        _check("antipodal_counterexample", counterexample),
        _check("curvature_exponent", curvature),
    ]
    report = {"passed": all(c["passed"] for c in checks), "checks": checks,
              "base_seed": seed, "code_version": __version__}
    out = output_dir or cfg.output_dir
    if out is not None:
        out = Path(out)
        try:
            out.mkdir(parents=True, exist_ok=True)
            (out / "oracle_report.json").write_text(json.dumps(report, indent=2, sort_keys=True))
            snapshot = {"config": cfg.to_dict(), "code_version": __version__, "base_seed": seed}
            (out / "config.json").write_text(json.dumps(snapshot, indent=2, sort_keys=True))
        except OSError as exc:
            raise ConfigError(f"cannot write to output directory {out}: {exc.strerror}") from None
    return report


# -- presets -----------------------------------------------------------------

def _gauss(d):
    return GaussianDiff(np.eye(d))


def preset(name: str) -> ExperimentConfig:
    """Named, ready-to-run configurations matching the shipped examples."""
    d = 5
    if name == "fig1-analogue":
        return ExperimentConfig("estimator_comparison", fig1_analogue(d), _gauss(d),
                                sample_sizes=(1000, 3000, 10_000, 30_000, 100_000), replicates=20,
                                population_name="fig1-analogue")
    if name == "fig1-analogue-scale":
        return ExperimentConfig("scale_sweep", fig1_analogue(d), _gauss(d), sample_sizes=(100_000,),
                                replicates=20, scales=(1.0, 4.0, 8.0, 12.0), population_name="fig1-analogue")
    if name == "fig1-analogue-panel":
        return ExperimentConfig("em_comparison", fig1_analogue(d), _gauss(d), sample_sizes=(50_000,),
                                replicates=20, em_k=(1, 2, 3), pairs_per_user=2, population_name="fig1-analogue")
    if name == "two-type-panel":
        return ExperimentConfig("em_comparison", two_type_panel(d), _gauss(d), sample_sizes=(20_000,),
                                replicates=20, em_k=(1, 2), pairs_per_user=20, population_name="two-type-panel")
    if name == "gaussian-rate":
        return ExperimentConfig("rate_sweep", gaussian_benchmark(d), _gauss(d),
                                sample_sizes=(1000, 3000, 10_000, 30_000, 100_000), replicates=20,
                                population_name="gaussian-benchmark")
    if name == "oracles":
        from .population import antipodal_counterexample

        return ExperimentConfig("oracle_suite", antipodal_counterexample(), _gauss(2))
    raise ConfigError(f"unknown preset {name!r}; known: {PRESETS}")


PRESETS = ("fig1-analogue", "fig1-analogue-scale", "fig1-analogue-panel", "two-type-panel",
           "gaussian-rate", "oracles")


def run_experiment(cfg: ExperimentConfig, workers: Optional[int] = None, output_dir=None):
    """Dispatch on ``cfg.experiment``."""
    runners = {
        "estimator_comparison": run_estimator_comparison,
        "rate_sweep": run_rate_sweep,
        "scale_sweep": run_scale_sweep,
        "em_comparison": run_em_comparison,
    }
    if cfg.experiment == "oracle_suite":
        return run_oracle_suite(cfg, output_dir=output_dir)
    if cfg.experiment not in runners:
        raise ConfigError(f"experiment {cfg.experiment!r} is not a sweep")
    return runners[cfg.experiment](cfg, workers=workers, output_dir=output_dir)
