"""Least-squares estimators: linearized trilateration, squared-distance
fitting, and maximum likelihood, sharing one damped Gauss-Newton engine.

The iterative solvers minimize either the squared-range residuals (the
maximum-likelihood objective under i.i.d. Gaussian range noise) or the
squared residuals of squared ranges (the Frobenius-norm distance-matrix
objective).  Both start from a cheap closed-form fix chosen through
:class:`SolverOptions.initializer`.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Union

import numpy as np

from . import _kernels
from .edm import (
    AgentEstimate,
    _agent_estimate,
    _raise_for_status,
    _require_four,
    _require_measured,
    _writable,
    edmt_agent_individually,
    edmt_agent_jointly,
    edmt_sensor,
)
from .exceptions import DegenerateGeometryError
from .geometry import EulerAngles, Pose6D, SensorConfig
from .ranging import NoiseModel, _body_point_derivatives

#: Damping is escalated by 10x up to this value before giving up.
DAMPING_MAX = 1e12

_SENSOR_INITIALIZERS = ("tt", "edmt", "explicit-guess")
_AGENT_INITIALIZERS = ("tt", "edmt-jointly", "edmt-individually", "explicit-guess")


@dataclass(frozen=True)
class SolverOptions:
    """Settings for the iterative solvers.

    Attributes:
        max_iterations: accepted-step budget.
        step_tolerance: terminate when the accepted step norm drops below
            this (cm for positions; pose steps mix cm and rad).
        residual_tolerance: terminate when the residual norm drops below
            this.
        damping_initial: first nonzero damping level; each iteration tries
            the undamped step first, escalates 10x per rejection, and
            relaxes 10x per acceptance.
        initializer: one of tt, edmt, edmt-jointly, edmt-individually, or
            explicit-guess (which requires ``initial_guess``).
        initial_guess: starting point for explicit-guess initialization.
        multistart: number of evenly spaced yaw restarts for agent solvers
            (keeps the lowest-residual solution); 1 disables restarts.
    """

    max_iterations: int = 100
    step_tolerance: float = 1e-10
    residual_tolerance: float = 1e-10
    damping_initial: float = 1e-3
    initializer: str = "tt"
    initial_guess: Optional[np.ndarray] = None
    multistart: int = 1

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.step_tolerance <= 0 or self.residual_tolerance <= 0:
            raise ValueError("tolerances must be > 0")
        if self.damping_initial <= 0:
            raise ValueError("damping_initial must be > 0")
        if self.multistart < 1:
            raise ValueError("multistart must be >= 1")
        object.__setattr__(self, "initializer", self.initializer.strip().lower())


@dataclass(frozen=True)
class EstimateReport:
    """Outcome of an iterative estimation run."""

    estimate: Union[np.ndarray, Pose6D]
    iterations: int
    final_residual_norm: float
    converged: bool
    initializer_used: str
    wall_time: float  # seconds


def gauss_newton(
    residual_map: Callable[[np.ndarray], np.ndarray],
    jacobian_map: Callable[[np.ndarray], np.ndarray],
    initial_guess: np.ndarray,
    opts: SolverOptions,
) -> EstimateReport:
    """Damped Gauss-Newton minimization of ``||residual_map(x)||^2``.

    Each iteration first attempts the plain Gauss-Newton step; if the
    normal equations are singular or the step would increase the residual
    norm, Levenberg damping (scaled by the normal-matrix diagonal) is
    escalated tenfold per retry starting from ``damping_initial``.
    Accepted steps never increase the residual norm, and a proposed step
    below ``step_tolerance`` terminates as converged.  Linear least-squares
    problems therefore finish in a single undamped iteration.

    Returns:
        :class:`EstimateReport` with ``estimate`` as the raw parameter
        vector.  ``converged`` is False when the iteration or damping
        budget ran out first.
    """
    t0 = time.perf_counter()
    x = np.asarray(initial_guess, dtype=float).copy()
    r = np.asarray(residual_map(x), dtype=float)
    rnorm = float(np.linalg.norm(r))
    lam = 0.0
    iterations = 0
    converged = rnorm < opts.residual_tolerance
    while not converged and iterations < opts.max_iterations:
        jac = np.asarray(jacobian_map(x), dtype=float)
        grad = jac.T @ r
        normal = jac.T @ jac
        diag = np.maximum(np.diag(normal), 1e-12 * max(np.max(np.diag(normal)), 1e-30))
        accepted = False
        while True:
            lhs = normal if lam == 0.0 else normal + np.diag(lam * diag)
            try:
                step = np.linalg.solve(lhs, -grad)
            except np.linalg.LinAlgError:
                step = None
            if step is not None and np.all(np.isfinite(step)):
                if float(np.linalg.norm(step)) < opts.step_tolerance:
                    # proposal below resolution: stationary at x
                    converged = True
                    break
                x_trial = x + step
                r_trial = np.asarray(residual_map(x_trial), dtype=float)
                rnorm_trial = float(np.linalg.norm(r_trial))
                if np.isfinite(rnorm_trial) and rnorm_trial <= rnorm:
                    accepted = True
                    break
            lam = opts.damping_initial if lam == 0.0 else lam * 10.0
            if lam > DAMPING_MAX:
                break
        if not accepted:
            break
        x, r, rnorm = x_trial, r_trial, rnorm_trial
        iterations += 1
        if lam != 0.0:
            lam = 0.0 if lam <= opts.damping_initial * 1e-8 else lam / 10.0
        if float(np.linalg.norm(step)) < opts.step_tolerance:
            converged = True
        if rnorm < opts.residual_tolerance:
            converged = True
    return EstimateReport(
        estimate=x,
        iterations=iterations,
        final_residual_norm=rnorm,
        converged=bool(converged),
        initializer_used="explicit-guess",
        wall_time=time.perf_counter() - t0,
    )


def tt_sensor(config: SensorConfig, measured: np.ndarray) -> np.ndarray:
    """Closed-form trilateration of a target sensor.

    Differences of squared ranges between consecutive sensor pairs cancel
    the quadratic term, leaving a linear system whose least-squares
    solution is the position estimate.

    Args:
        config: ego layout with exactly 4 sensors.
        measured: (4,) measured ranges, cm.

    Returns:
        (3,) estimated position, cm.

    Raises:
        DegenerateGeometryError: if the difference system is singular.
    """
    _require_four(config, "config")
    measured = _require_measured(measured, (4,))
    p, status = _kernels.tt_sensor_core(_writable(config.positions), _writable(measured))
    _raise_for_status(status, "tt_sensor")
    return p


def tt_agent(
    config_a: SensorConfig, measured: np.ndarray, config_b: SensorConfig
) -> AgentEstimate:
    """Closed-form trilateration of a target agent.

    Each target sensor is localized from its range-matrix column, the
    centroid of the four fixes is the position estimate, and the attitude
    comes from a Procrustes fit of the centered fixes against the target
    layout.

    Raises:
        DegenerateGeometryError: per-column degeneracy.
        GimbalLockError: if the fitted attitude sits at pitch +/- pi/2.
    """
    _require_four(config_a, "config_a")
    _require_four(config_b, "config_b")
    measured = _require_measured(measured, (4, 4))
    beta, vertices, status = _kernels.tt_agent_core(
        _writable(config_a.positions),
        _writable(config_b.positions),
        _writable(measured),
    )
    _raise_for_status(status, "tt_agent")
    return _agent_estimate(beta, vertices)


def _canonical_initializer(name: str, allowed: tuple) -> str:
    canon = name.strip().lower().replace("_", "-")
    if canon not in allowed:
        raise ValueError(f"initializer must be one of {allowed}, got {name!r}")
    return canon


def _sensor_initial_guess(
    config: SensorConfig, measured: np.ndarray, opts: SolverOptions
) -> tuple:
    canon = _canonical_initializer(opts.initializer, _SENSOR_INITIALIZERS)
    if canon == "tt":
        return tt_sensor(config, measured), "tt"
    if canon == "edmt":
        return edmt_sensor(config, measured), "edmt"
    if opts.initial_guess is None:
        raise ValueError("explicit-guess initialization requires initial_guess")
    return np.asarray(opts.initial_guess, dtype=float), "explicit-guess"


def _agent_initial_guess(
    config_a: SensorConfig,
    measured: np.ndarray,
    config_b: SensorConfig,
    opts: SolverOptions,
) -> tuple:
    canon = _canonical_initializer(opts.initializer, _AGENT_INITIALIZERS)
    if canon == "tt":
        return tt_agent(config_a, measured, config_b).pose.as_vector(), "tt"
    if canon == "edmt-jointly":
        return (
            edmt_agent_jointly(config_a, measured, config_b).pose.as_vector(),
            "edmt-jointly",
        )
    if canon == "edmt-individually":
        return (
            edmt_agent_individually(config_a, measured, config_b).pose.as_vector(),
            "edmt-individually",
        )
    guess = opts.initial_guess
    if guess is None:
        raise ValueError("explicit-guess initialization requires initial_guess")
    if isinstance(guess, Pose6D):
        return guess.as_vector(), "explicit-guess"
    return np.asarray(guess, dtype=float), "explicit-guess"


def _sensor_range_model(config: SensorConfig, measured: np.ndarray, squared: bool):
    anchors = config.positions

    if squared:
        target_vals = measured**2

        def residual(p):
            return target_vals - ((p - anchors) ** 2).sum(axis=1)

        def jacobian(p):
            return -2.0 * (p - anchors)

    else:

        def residual(p):
            return measured - np.sqrt(((p - anchors) ** 2).sum(axis=1))

        def jacobian(p):
            diff = p - anchors
            d = np.maximum(np.sqrt((diff**2).sum(axis=1)), 1e-12)
            return -diff / d[:, None]

    return residual, jacobian


def _agent_range_model(
    config_a: SensorConfig,
    measured: np.ndarray,
    config_b: SensorConfig,
    squared: bool,
):
    anchors = config_a.positions
    target_vals = (measured**2 if squared else measured).T.ravel()

    def geometry(beta):
        pose = Pose6D(beta[:3], EulerAngles(beta[3], beta[4], beta[5]))
        pts, dpts = _body_point_derivatives(pose, config_b)
        diff = pts[None, :, :] - anchors[:, None, :]  # (ka, kb, 3)
        dsq = (diff**2).sum(axis=2)
        return diff, dsq, dpts

    if squared:

        def residual(beta):
            _, dsq, _ = geometry(beta)
            return target_vals - dsq.T.ravel()

        def jacobian(beta):
            diff, _, dpts = geometry(beta)
            ka, kb = diff.shape[:2]
            jac = np.empty((ka * kb, 6))
            jac[:, :3] = -2.0 * diff.transpose(1, 0, 2).reshape(-1, 3)
            for a in range(3):
                jac[:, 3 + a] = -2.0 * (diff * dpts[a][None, :, :]).sum(axis=2).T.ravel()
            return jac

    else:

        def residual(beta):
            _, dsq, _ = geometry(beta)
            return target_vals - np.sqrt(dsq).T.ravel()

        def jacobian(beta):
            diff, dsq, dpts = geometry(beta)
            d = np.maximum(np.sqrt(dsq), 1e-12)
            unit = diff / d[..., None]
            ka, kb = d.shape
            jac = np.empty((ka * kb, 6))
            jac[:, :3] = -unit.transpose(1, 0, 2).reshape(-1, 3)
            for a in range(3):
                jac[:, 3 + a] = -(unit * dpts[a][None, :, :]).sum(axis=2).T.ravel()
            return jac

    return residual, jacobian


def _finish_agent_report(report: EstimateReport, label: str) -> EstimateReport:
    beta = report.estimate
    pose = Pose6D(beta[:3], EulerAngles(beta[3], beta[4], beta[5]).normalized())
    return replace(report, estimate=pose, initializer_used=label)


def _solve_agent(
    config_a, measured, config_b, opts, squared: bool
) -> EstimateReport:
    t0 = time.perf_counter()
    x0, label = _agent_initial_guess(config_a, measured, config_b, opts)
    residual, jacobian = _agent_range_model(config_a, measured, config_b, squared)
    report = gauss_newton(residual, jacobian, x0, opts)
    if opts.multistart > 1:
        for k in range(1, opts.multistart):
            shifted = x0.copy()
            shifted[5] += 2.0 * np.pi * k / opts.multistart
            trial = gauss_newton(residual, jacobian, shifted, opts)
            if trial.final_residual_norm < report.final_residual_norm:
                report = trial
    report = replace(report, wall_time=time.perf_counter() - t0)
    return _finish_agent_report(report, label)


def frocvx_sensor(
    config: SensorConfig, measured: np.ndarray, opts: SolverOptions | None = None
) -> EstimateReport:
    """Squared-distance-matrix fit of a target sensor position.

    Minimizes the sum of squared residuals between measured and modeled
    squared ranges, which equals the squared Frobenius distance between
    the measured bordered distance matrix and the one generated by the
    candidate position.

    Args:
        config: ego layout, 4 sensors.
        measured: (4,) measured ranges, cm.
        opts: solver settings; trilateration initialization by default.

    Returns:
        Report whose ``estimate`` is the (3,) position.
    """
    _require_four(config, "config")
    measured = _require_measured(measured, (4,))
    opts = opts or SolverOptions()
    t0 = time.perf_counter()
    x0, label = _sensor_initial_guess(config, measured, opts)
    residual, jacobian = _sensor_range_model(config, measured, squared=True)
    report = gauss_newton(residual, jacobian, x0, opts)
    return replace(
        report, initializer_used=label, wall_time=time.perf_counter() - t0
    )


def frocvx_agent(
    config_a: SensorConfig,
    measured: np.ndarray,
    config_b: SensorConfig,
    opts: SolverOptions | None = None,
) -> EstimateReport:
    """Squared-distance-matrix fit of a full 6D agent pose.

    Returns:
        Report whose ``estimate`` is a :class:`Pose6D`.
    """
    _require_four(config_a, "config_a")
    _require_four(config_b, "config_b")
    measured = _require_measured(measured, (4, 4))
    opts = opts or SolverOptions()
    return _solve_agent(config_a, measured, config_b, opts, squared=True)


def mle_sensor(
    config: SensorConfig,
    measured: np.ndarray,
    noise: NoiseModel,
    opts: SolverOptions | None = None,
) -> EstimateReport:
    """Maximum-likelihood position estimate under Gaussian range noise.

    With i.i.d. errors the likelihood is maximized by least squares on the
    plain range residuals; the noise level scales the likelihood but not
    its argmin, so it only needs to be positive.

    Args:
        config: ego layout, 4 sensors.
        measured: (4,) measured ranges, cm.
        noise: noise model with sigma0 > 0.
        opts: solver settings; trilateration initialization by default.
    """
    if not noise.sigma0 > 0.0:
        raise ValueError("mle_sensor requires sigma0 > 0")
    _require_four(config, "config")
    measured = _require_measured(measured, (4,))
    opts = opts or SolverOptions()
    t0 = time.perf_counter()
    x0, label = _sensor_initial_guess(config, measured, opts)
    residual, jacobian = _sensor_range_model(config, measured, squared=False)
    report = gauss_newton(residual, jacobian, x0, opts)
    return replace(
        report, initializer_used=label, wall_time=time.perf_counter() - t0
    )


def mle_agent(
    config_a: SensorConfig,
    measured: np.ndarray,
    config_b: SensorConfig,
    noise: NoiseModel,
    opts: SolverOptions | None = None,
) -> EstimateReport:
    """Maximum-likelihood 6D pose estimate under Gaussian range noise.

    Minimizes the sum of squared range residuals over all sixteen
    ego/target sensor pairs.

    Returns:
        Report whose ``estimate`` is a :class:`Pose6D`.
    """
    if not noise.sigma0 > 0.0:
        raise ValueError("mle_agent requires sigma0 > 0")
    _require_four(config_a, "config_a")
    _require_four(config_b, "config_b")
    measured = _require_measured(measured, (4, 4))
    opts = opts or SolverOptions()
    return _solve_agent(config_a, measured, config_b, opts, squared=False)
