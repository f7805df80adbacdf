"""Monte-Carlo experiment driver: RMSE sweeps, configuration studies, and
timing benchmarks.

Every experiment is fully determined by its :class:`ExperimentConfig`,
including the seed: trial noise comes from a counter-based stream indexed
by (seed, distance index, trial index), so results are bit-identical
across runs and across worker counts.  CSV output carries one row per
method and distance and no volatile metadata; JSON output adds the seed,
package version, and a timestamp.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Callable, Optional

import numpy as np

from . import __version__
from .exceptions import EstimationError
from .geometry import EulerAngles, SensorConfig, Pose6D, regular_tetrahedron, wrap_angle
from .metrics import (
    SphericalGrid,
    crlb_agent,
    crlb_sensor,
    gdop_agent,
    gdop_sensor,
    gdop_sweep,
    spherical_to_cartesian,
)
from .geometry import isosceles_tetrahedron
from .ranging import NoiseModel, true_ranges_agent, true_ranges_sensor
from .solvers import (
    SolverOptions,
    frocvx_agent,
    frocvx_sensor,
    mle_agent,
    mle_sensor,
    tt_agent,
    tt_sensor,
)
from .edm import edmt_agent_individually, edmt_agent_jointly, edmt_sensor

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1

SENSOR_METHODS = ("tt", "fro-cvx", "edmt", "mle-tt", "mle-edmt")
AGENT_METHODS = (
    "tt",
    "fro-cvx",
    "edmt-jointly",
    "edmt-individually",
    "mle-tt",
    "mle-edmt-jointly",
    "mle-edmt-individually",
)

_ALIASES = {
    "frocvx": "fro-cvx",
    "fro_cvx": "fro-cvx",
    "mle_tt": "mle-tt",
    "mle_edmt": "mle-edmt",
    "edmt_jointly": "edmt-jointly",
    "edmt_individually": "edmt-individually",
    "mle_edmt_jointly": "mle-edmt-jointly",
    "mle_edmt_individually": "mle-edmt-individually",
}

_DEFAULT_ATTITUDE = EulerAngles(
    math.radians(10.0), math.radians(20.0), math.radians(30.0)
)


def canonical_method(name: str, scenario: str) -> str:
    """Normalize a method label and check it fits the scenario."""
    canon = name.strip().lower()
    canon = _ALIASES.get(canon, canon)
    allowed = SENSOR_METHODS if scenario == "sensor" else AGENT_METHODS
    if canon not in allowed:
        raise ValueError(
            f"unknown method {name!r} for scenario {scenario!r}; "
            f"choose from {', '.join(allowed)}"
        )
    return canon


def parse_distance_spec(spec) -> tuple:
    """Distances from a list or a ``start:stop:step`` string (inclusive)."""
    if isinstance(spec, str):
        parts = spec.split(":")
        if len(parts) != 3:
            raise ValueError(f"distance spec must be start:stop:step, got {spec!r}")
        start, stop, step = (float(p) for p in parts)
        if step <= 0 or stop < start:
            raise ValueError(f"bad distance range {spec!r}")
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        return tuple(start + step * i for i in range(count))
    return tuple(float(d) for d in spec)


@dataclass(frozen=True)
class ExperimentConfig:
    """Full specification of a Monte-Carlo experiment.

    Attributes:
        scenario: ``sensor`` or ``agent``.
        distances: target ranges to sweep, cm.
        trials: Monte-Carlo trials per distance.
        methods: estimator labels (see SENSOR_METHODS / AGENT_METHODS).
        sigma0: range noise standard deviation, cm.
        side_a: tetrahedron edge of both sensor layouts, cm.
        direction: (polar, azimuth) of the target direction, degrees.
        attitude: target attitude for agent scenarios.
        seed: noise stream seed.
        threads: worker threads for the trial loop (results identical for
            any value).
    """

    scenario: str
    distances: tuple
    trials: int
    methods: tuple
    sigma0: float = 5.0
    side_a: float = 100.0
    direction: tuple = (60.0, 60.0)
    attitude: EulerAngles = _DEFAULT_ATTITUDE
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.scenario not in ("sensor", "agent"):
            raise ValueError(f"scenario must be sensor or agent, got {self.scenario!r}")
        distances = parse_distance_spec(self.distances)
        if not distances or any(d <= 0 for d in distances):
            raise ValueError("distances must be positive and non-empty")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.sigma0 < 0:
            raise ValueError("sigma0 must be >= 0")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        methods = tuple(canonical_method(m, self.scenario) for m in self.methods)
        if not methods:
            raise ValueError("methods must be non-empty")
        object.__setattr__(self, "distances", distances)
        object.__setattr__(self, "methods", methods)
        object.__setattr__(
            self, "direction", tuple(float(v) for v in self.direction)
        )

    @staticmethod
    def from_json(doc) -> "ExperimentConfig":
        """Build from a JSON document (dict, JSON string, or file path)."""
        if isinstance(doc, (str, bytes)):
            text = str(doc)
            if text.lstrip().startswith("{"):
                data = json.loads(text)
            else:
                with open(text, "r", encoding="utf-8") as fh:
                    data = json.load(fh)
        else:
            data = dict(doc)
        attitude_deg = data.pop("attitude_deg", None)
        kwargs = dict(data)
        if attitude_deg is not None:
            kwargs["attitude"] = EulerAngles(*(math.radians(a) for a in attitude_deg))
        for key in ("distances", "methods"):
            if key in kwargs and not isinstance(kwargs[key], str):
                kwargs[key] = tuple(kwargs[key])
        return ExperimentConfig(**kwargs)

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "distances": list(self.distances),
            "trials": self.trials,
            "methods": list(self.methods),
            "sigma0": self.sigma0,
            "side_a": self.side_a,
            "direction": list(self.direction),
            "attitude_deg": [
                math.degrees(self.attitude.gamma),
                math.degrees(self.attitude.theta),
                math.degrees(self.attitude.psi),
            ],
            "seed": self.seed,
            "threads": self.threads,
        }


@dataclass(frozen=True)
class RmseRow:
    """Aggregate for one (method, distance) cell."""

    method: str
    distance_cm: float
    trials: int
    failures: int
    rmse_position_cm: float
    se_position_cm: float
    crlb_position_cm: float
    rmse_gamma_rad: Optional[float] = None
    rmse_theta_rad: Optional[float] = None
    rmse_psi_rad: Optional[float] = None
    se_gamma_rad: Optional[float] = None
    se_theta_rad: Optional[float] = None
    se_psi_rad: Optional[float] = None
    crlb_gamma_rad: Optional[float] = None
    crlb_theta_rad: Optional[float] = None
    crlb_psi_rad: Optional[float] = None


_SENSOR_COLUMNS = (
    "method",
    "distance_cm",
    "trials",
    "failures",
    "rmse_position_cm",
    "se_position_cm",
    "crlb_position_cm",
)
_AGENT_COLUMNS = _SENSOR_COLUMNS + (
    "rmse_gamma_rad",
    "rmse_theta_rad",
    "rmse_psi_rad",
    "se_gamma_rad",
    "se_theta_rad",
    "se_psi_rad",
    "crlb_gamma_rad",
    "crlb_theta_rad",
    "crlb_psi_rad",
)


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass(frozen=True)
class RmseSummary:
    """Per-method, per-distance RMSE aggregates with their lower bounds."""

    config: ExperimentConfig
    rows: tuple

    def row(self, method: str, distance: float) -> RmseRow:
        for r in self.rows:
            if r.method == method and r.distance_cm == distance:
                return r
        raise KeyError(f"no row for ({method}, {distance})")

    def to_csv(self, stream) -> None:
        columns = _SENSOR_COLUMNS if self.config.scenario == "sensor" else _AGENT_COLUMNS
        writer = csv.writer(stream)
        writer.writerow(columns)
        for r in self.rows:
            writer.writerow([_fmt(getattr(r, c)) for c in columns])

    def to_json(self, stream) -> None:
        columns = _SENSOR_COLUMNS if self.config.scenario == "sensor" else _AGENT_COLUMNS
        doc = {
            "schema_version": SCHEMA_VERSION,
            "kind": "rmse_summary",
            "package_version": __version__,
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "config": self.config.to_dict(),
            "rows": [{c: getattr(r, c) for c in columns} for r in self.rows],
        }
        json.dump(doc, stream, indent=2)
        stream.write("\n")


@dataclass(frozen=True)
class BenchRow:
    method: str
    trials: int
    failures: int
    total_seconds: float
    ratio_to_fastest: float


@dataclass(frozen=True)
class BenchReport:
    """Single-threaded wall-clock totals per method over pre-generated inputs."""

    scenario: str
    distance_cm: float
    rows: tuple

    def row(self, method: str) -> BenchRow:
        for r in self.rows:
            if r.method == method:
                return r
        raise KeyError(f"no bench row for {method}")

    def to_csv(self, stream) -> None:
        writer = csv.writer(stream)
        writer.writerow(
            ["method", "trials", "failures", "total_seconds", "ratio_to_fastest"]
        )
        for r in self.rows:
            writer.writerow(
                [r.method, r.trials, r.failures, _fmt(r.total_seconds), _fmt(r.ratio_to_fastest)]
            )

    def to_json(self, stream) -> None:
        doc = {
            "schema_version": SCHEMA_VERSION,
            "kind": "bench_report",
            "package_version": __version__,
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "scenario": self.scenario,
            "distance_cm": self.distance_cm,
            "rows": [
                {
                    "method": r.method,
                    "trials": r.trials,
                    "failures": r.failures,
                    "total_seconds": r.total_seconds,
                    "ratio_to_fastest": r.ratio_to_fastest,
                }
                for r in self.rows
            ],
        }
        json.dump(doc, stream, indent=2)
        stream.write("\n")


def _estimation_noise(cfg: ExperimentConfig) -> NoiseModel:
    # the MLE argmin does not depend on sigma0, but the model requires > 0
    return NoiseModel(cfg.sigma0 if cfg.sigma0 > 0 else 1.0, cfg.seed)


def _sensor_estimators(cfg: ExperimentConfig, config: SensorConfig) -> dict:
    noise = _estimation_noise(cfg)
    opts_tt = SolverOptions(initializer="tt")
    opts_edmt = SolverOptions(initializer="edmt")

    def solved(report):
        if not report.converged:
            raise EstimationError("solver did not converge")
        return report.estimate

    return {
        "tt": lambda dhat: tt_sensor(config, dhat),
        "edmt": lambda dhat: edmt_sensor(config, dhat),
        "fro-cvx": lambda dhat: solved(frocvx_sensor(config, dhat, opts_tt)),
        "mle-tt": lambda dhat: solved(mle_sensor(config, dhat, noise, opts_tt)),
        "mle-edmt": lambda dhat: solved(mle_sensor(config, dhat, noise, opts_edmt)),
    }


def _agent_estimators(
    cfg: ExperimentConfig, config_a: SensorConfig, config_b: SensorConfig
) -> dict:
    noise = _estimation_noise(cfg)
    opts = {
        name: SolverOptions(initializer=name)
        for name in ("tt", "edmt-jointly", "edmt-individually")
    }

    def solved(report):
        if not report.converged:
            raise EstimationError("solver did not converge")
        return report.estimate

    return {
        "tt": lambda dhat: tt_agent(config_a, dhat, config_b).pose,
        "edmt-jointly": lambda dhat: edmt_agent_jointly(config_a, dhat, config_b).pose,
        "edmt-individually": lambda dhat: edmt_agent_individually(
            config_a, dhat, config_b
        ).pose,
        "fro-cvx": lambda dhat: solved(frocvx_agent(config_a, dhat, config_b, opts["tt"])),
        "mle-tt": lambda dhat: solved(
            mle_agent(config_a, dhat, config_b, noise, opts["tt"])
        ),
        "mle-edmt-jointly": lambda dhat: solved(
            mle_agent(config_a, dhat, config_b, noise, opts["edmt-jointly"])
        ),
        "mle-edmt-individually": lambda dhat: solved(
            mle_agent(config_a, dhat, config_b, noise, opts["edmt-individually"])
        ),
    }


def _run_trials(fn: Callable[[int], None], trials: int, threads: int) -> None:
    """Run fn(t) for every trial index, optionally across a thread pool."""
    if threads <= 1:
        for t in range(trials):
            fn(t)
        return
    chunk = (trials + threads - 1) // threads
    bounds = [(i * chunk, min((i + 1) * chunk, trials)) for i in range(threads)]

    def run_block(lo_hi):
        lo, hi = lo_hi
        for t in range(lo, hi):
            fn(t)

    with ThreadPoolExecutor(max_workers=threads) as pool:
        list(pool.map(run_block, [b for b in bounds if b[0] < b[1]]))


def _rmse_and_se(sq_errors: np.ndarray) -> tuple:
    """RMSE over valid trials plus its delta-method standard error."""
    valid = sq_errors[~np.isnan(sq_errors)]
    n = valid.size
    if n == 0:
        return math.nan, math.nan, 0
    mean_sq = float(valid.mean())
    rmse = math.sqrt(mean_sq)
    if n < 2 or rmse == 0.0:
        return rmse, 0.0, n
    se_mean_sq = float(valid.std(ddof=1)) / math.sqrt(n)
    return rmse, se_mean_sq / (2.0 * rmse), n


def run_sensor_experiment(cfg: ExperimentConfig) -> RmseSummary:
    """RMSE-versus-distance sweep for target-sensor localization.

    For every distance, the target sits along ``cfg.direction``; each trial
    perturbs the true ranges with seeded Gaussian noise and every requested
    method estimates the position from the same perturbed measurement.
    Estimator failures are counted and excluded from the aggregate.
    """
    if cfg.scenario != "sensor":
        raise ValueError("run_sensor_experiment requires scenario='sensor'")
    config = regular_tetrahedron(cfg.side_a)
    noise = NoiseModel(cfg.sigma0, cfg.seed)
    estimators = _sensor_estimators(cfg, config)
    rows = []
    for di, dist in enumerate(cfg.distances):
        truth = spherical_to_cartesian(dist, cfg.direction[0], cfg.direction[1])
        d_true = true_ranges_sensor(config, truth)
        crlb = crlb_sensor(gdop_sensor(config, truth), noise)
        draws = noise.standard_draws((cfg.trials, config.k), counter=(di,))
        sq_err = np.full((cfg.trials, len(cfg.methods)), np.nan)

        def one_trial(t):
            dhat = d_true + cfg.sigma0 * draws[t]
            for mi, label in enumerate(cfg.methods):
                try:
                    p = estimators[label](dhat)
                    sq_err[t, mi] = float(((p - truth) ** 2).sum())
                except EstimationError:
                    pass

        _run_trials(one_trial, cfg.trials, cfg.threads)
        for mi, label in enumerate(cfg.methods):
            rmse, se, n = _rmse_and_se(sq_err[:, mi])
            rows.append(
                RmseRow(
                    method=label,
                    distance_cm=float(dist),
                    trials=cfg.trials,
                    failures=cfg.trials - n,
                    rmse_position_cm=rmse,
                    se_position_cm=se,
                    crlb_position_cm=crlb,
                )
            )
        log.info("sensor sweep: distance %.1f cm done", dist)
    return RmseSummary(config=cfg, rows=tuple(rows))


def run_agent_experiment(cfg: ExperimentConfig) -> RmseSummary:
    """RMSE-versus-distance sweep for target-agent localization.

    Position RMSE uses the centroid estimate; per-angle RMSEs wrap each
    error to (-pi, pi] before squaring.  Trials where an estimator raises
    (including gimbal lock) count as failures for that method.
    """
    if cfg.scenario != "agent":
        raise ValueError("run_agent_experiment requires scenario='agent'")
    config_a = regular_tetrahedron(cfg.side_a)
    config_b = regular_tetrahedron(cfg.side_a)
    noise = NoiseModel(cfg.sigma0, cfg.seed)
    estimators = _agent_estimators(cfg, config_a, config_b)
    true_angles = cfg.attitude.normalized()
    rows = []
    for di, dist in enumerate(cfg.distances):
        position = spherical_to_cartesian(dist, cfg.direction[0], cfg.direction[1])
        pose = Pose6D(position, true_angles)
        d_true = true_ranges_agent(config_a, pose, config_b)
        crlb = crlb_agent(gdop_agent(config_a, pose, config_b), noise)
        draws = noise.standard_draws((cfg.trials,) + d_true.shape, counter=(di,))
        sq_err = np.full((cfg.trials, len(cfg.methods), 4), np.nan)

        def one_trial(t):
            dhat = d_true + cfg.sigma0 * draws[t]
            for mi, label in enumerate(cfg.methods):
                try:
                    est = estimators[label](dhat)
                except EstimationError:
                    continue
                sq_err[t, mi, 0] = float(((est.position - position) ** 2).sum())
                att = est.attitude
                sq_err[t, mi, 1] = wrap_angle(att.gamma - true_angles.gamma) ** 2
                sq_err[t, mi, 2] = wrap_angle(att.theta - true_angles.theta) ** 2
                sq_err[t, mi, 3] = wrap_angle(att.psi - true_angles.psi) ** 2

        _run_trials(one_trial, cfg.trials, cfg.threads)
        for mi, label in enumerate(cfg.methods):
            rmse_p, se_p, n = _rmse_and_se(sq_err[:, mi, 0])
            rmse_g, se_g, _ = _rmse_and_se(sq_err[:, mi, 1])
            rmse_t, se_t, _ = _rmse_and_se(sq_err[:, mi, 2])
            rmse_s, se_s, _ = _rmse_and_se(sq_err[:, mi, 3])
            rows.append(
                RmseRow(
                    method=label,
                    distance_cm=float(dist),
                    trials=cfg.trials,
                    failures=cfg.trials - n,
                    rmse_position_cm=rmse_p,
                    se_position_cm=se_p,
                    crlb_position_cm=crlb.position,
                    rmse_gamma_rad=rmse_g,
                    rmse_theta_rad=rmse_t,
                    rmse_psi_rad=rmse_s,
                    se_gamma_rad=se_g,
                    se_theta_rad=se_t,
                    se_psi_rad=se_s,
                    crlb_gamma_rad=crlb.roll,
                    crlb_theta_rad=crlb.pitch,
                    crlb_psi_rad=crlb.yaw,
                )
            )
        log.info("agent sweep: distance %.1f cm done", dist)
    return RmseSummary(config=cfg, rows=tuple(rows))


@dataclass(frozen=True)
class ConfigStudyRow:
    vertex_angle_deg: float
    avg_gdop: float
    max_gdop: float
    excluded: int


@dataclass(frozen=True)
class ConfigStudyResult:
    """Average and worst-case GDOP per candidate vertex angle."""

    unit_edge_cm: float
    rows: tuple

    def best_angle(self) -> float:
        finite = [r for r in self.rows if math.isfinite(r.avg_gdop)]
        return min(finite, key=lambda r: r.avg_gdop).vertex_angle_deg

    def to_csv(self, stream) -> None:
        writer = csv.writer(stream)
        writer.writerow(["vertex_angle_deg", "avg_gdop", "max_gdop", "excluded"])
        for r in self.rows:
            writer.writerow(
                [_fmt(r.vertex_angle_deg), _fmt(r.avg_gdop), _fmt(r.max_gdop), r.excluded]
            )

    def to_json(self, stream) -> None:
        doc = {
            "schema_version": SCHEMA_VERSION,
            "kind": "config_study",
            "package_version": __version__,
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "unit_edge_cm": self.unit_edge_cm,
            "rows": [
                {
                    "vertex_angle_deg": r.vertex_angle_deg,
                    "avg_gdop": r.avg_gdop,
                    "max_gdop": r.max_gdop,
                    "excluded": r.excluded,
                }
                for r in self.rows
            ],
        }
        json.dump(doc, stream, indent=2)
        stream.write("\n")


def run_config_study(
    angles_deg, grid: SphericalGrid, unit_edge: float = 100.0
) -> ConfigStudyResult:
    """GDOP sweep for a family of five-equal-edge tetrahedron layouts.

    For each candidate vertex angle the corresponding layout is built and
    :func:`relloc.metrics.gdop_sweep` is evaluated over ``grid``.
    """
    rows = []
    for angle in angles_deg:
        config = isosceles_tetrahedron(float(angle), unit_edge)
        sweep = gdop_sweep(config, grid)
        rows.append(
            ConfigStudyRow(
                vertex_angle_deg=float(angle),
                avg_gdop=sweep.average,
                max_gdop=sweep.maximum,
                excluded=sweep.excluded,
            )
        )
        log.info("config study: angle %.1f deg -> avg %.4f", angle, sweep.average)
    return ConfigStudyResult(unit_edge_cm=float(unit_edge), rows=tuple(rows))


def run_bench(
    methods, scenario: str, trials: int, cfg: ExperimentConfig
) -> BenchReport:
    """Wall-clock comparison of estimators on pre-generated noisy inputs.

    Noise generation is excluded from the timing: all measurements are
    drawn up front, each method is warmed up once (JIT compilation and
    caches), and then timed single-threaded end to end over the same
    inputs.  Absolute seconds are machine-dependent; the ratios are the
    meaningful output.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    labels = [canonical_method(m, scenario) for m in methods]
    dist = cfg.distances[0]
    noise = NoiseModel(cfg.sigma0, cfg.seed)
    if scenario == "sensor":
        config = regular_tetrahedron(cfg.side_a)
        truth = spherical_to_cartesian(dist, cfg.direction[0], cfg.direction[1])
        d_true = true_ranges_sensor(config, truth)
        estimators = _sensor_estimators(cfg, config)
        draws = noise.standard_draws((trials,) + d_true.shape, counter=(0,))
    else:
        config_a = regular_tetrahedron(cfg.side_a)
        config_b = regular_tetrahedron(cfg.side_a)
        pose = Pose6D(
            spherical_to_cartesian(dist, cfg.direction[0], cfg.direction[1]),
            cfg.attitude.normalized(),
        )
        d_true = true_ranges_agent(config_a, pose, config_b)
        estimators = _agent_estimators(cfg, config_a, config_b)
        draws = noise.standard_draws((trials,) + d_true.shape, counter=(0,))
    measurements = d_true + cfg.sigma0 * draws
    results = []
    for label in labels:
        fn = estimators[label]
        fn(measurements[0])  # warmup
        failures = 0
        t0 = time.perf_counter()
        for t in range(trials):
            try:
                fn(measurements[t])
            except EstimationError:
                failures += 1
        total = time.perf_counter() - t0
        results.append((label, failures, total))
        log.info("bench %s: %.3f s over %d trials", label, total, trials)
    fastest = min(r[2] for r in results)
    rows = tuple(
        BenchRow(
            method=label,
            trials=trials,
            failures=failures,
            total_seconds=total,
            ratio_to_fastest=total / fastest,
        )
        for label, failures, total in results
    )
    return BenchReport(scenario=scenario, distance_cm=float(dist), rows=rows)
