"""Range generation, Gaussian measurement noise, and range-map Jacobians.

Range containers are plain numpy arrays:

- a range vector is a (k,) array of sensor-to-target distances;
- a range matrix is a (k, k) array whose (i, j) entry is the distance from
  ego sensor i to target sensor j.

Stacked agent measurements (and the rows of the agent Jacobian) follow
column-major order of the range matrix: all ego sensors against target
sensor 1, then against target sensor 2, and so on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DegenerateGeometryError
from .geometry import (
    Pose6D,
    SensorConfig,
    attitude_rotation_derivatives,
    rotation_from_euler,
    transform_body_points,
)

#: Distances below this are treated as a coincident sensor pair (cm).
COINCIDENT_TOL = 1e-9


@dataclass(frozen=True)
class NoiseModel:
    """I.i.d. zero-mean Gaussian range noise.

    Draws come from a counter-based generator (Philox), so the noise of any
    trial is a pure function of (seed, counter) and trials can run in
    parallel without shared state.

    Attributes:
        sigma0: standard deviation in centimeters, >= 0.
        seed: 64-bit stream seed.
    """

    sigma0: float
    seed: int = 0

    def __post_init__(self):
        if not self.sigma0 >= 0.0:
            raise ValueError(f"sigma0 must be >= 0, got {self.sigma0}")

    def standard_draws(self, shape, counter=()) -> np.ndarray:
        """Unit-variance normal draws for the given (seed, counter) stream."""
        if isinstance(counter, int):
            counter = (counter,)
        seq = np.random.SeedSequence(
            entropy=int(self.seed), spawn_key=tuple(int(c) for c in counter)
        )
        return np.random.Generator(np.random.Philox(seq)).standard_normal(shape)


def true_ranges_sensor(config: SensorConfig, target: np.ndarray) -> np.ndarray:
    """Euclidean distances from every onboard sensor to a target point.

    Args:
        config: ego sensor layout.
        target: (3,) target position in the ego frame, cm.

    Returns:
        (k,) strictly positive distances.

    Raises:
        DegenerateGeometryError: if the target coincides with a sensor.
    """
    target = np.asarray(target, dtype=float)
    if target.shape != (3,) or not np.all(np.isfinite(target)):
        raise ValueError("target must be a finite 3-vector")
    d = np.linalg.norm(config.positions - target, axis=1)
    if np.any(d <= COINCIDENT_TOL):
        raise DegenerateGeometryError(
            f"target coincides with sensor {int(np.argmin(d))}"
        )
    return d


def true_ranges_agent(
    config_a: SensorConfig, pose_b: Pose6D, config_b: SensorConfig
) -> np.ndarray:
    """Inter-agent distance matrix for a target agent at a given pose.

    Entry (i, j) is the distance from ego sensor i to target sensor j after
    the target layout is placed at ``pose_b``.

    Raises:
        DegenerateGeometryError: if any ego/target sensor pair coincides.
    """
    pts_b = transform_body_points(pose_b, config_b)
    diff = config_a.positions[:, None, :] - pts_b[None, :, :]
    d = np.sqrt((diff**2).sum(axis=2))
    if np.any(d <= COINCIDENT_TOL):
        i, j = np.unravel_index(int(np.argmin(d)), d.shape)
        raise DegenerateGeometryError(f"ego sensor {i} coincides with target sensor {j}")
    return d


def add_noise(values: np.ndarray, noise: NoiseModel, counter=()) -> np.ndarray:
    """Perturb each entry by an independent N(0, sigma0^2) draw.

    The draw depends only on (noise.seed, counter) and the array shape,
    never on the values themselves.  Outputs are not clamped at zero: in the
    operating regime (ranges well above sigma0) negative draws do not occur,
    and clamping would bias the Gaussian model the CRLB assumes.

    Args:
        values: range vector or matrix.
        noise: noise model; sigma0 = 0 returns the input unchanged.
        counter: trial index or index tuple selecting the noise stream.

    Returns:
        Array of the same shape.
    """
    values = np.asarray(values, dtype=float)
    if noise.sigma0 == 0.0:
        return values.copy()
    return values + noise.sigma0 * noise.standard_draws(values.shape, counter)


def jacobian_sensor(config: SensorConfig, target: np.ndarray) -> np.ndarray:
    """Jacobian of the sensor range vector w.r.t. the target position.

    Row i is the unit direction ``(target - p_i)^T / d_i``.

    Raises:
        DegenerateGeometryError: if the target coincides with a sensor.
    """
    target = np.asarray(target, dtype=float)
    d = true_ranges_sensor(config, target)
    return (target - config.positions) / d[:, None]


def _body_point_derivatives(pose: Pose6D, config: SensorConfig):
    """Ego-frame target sensor positions and their pose derivatives.

    Returns:
        pts: (k, 3) ego-frame positions.
        dpts: (3, k, 3) derivative of each position w.r.t. roll, pitch, yaw.
    """
    r = rotation_from_euler(pose.attitude)
    pts = pose.position + config.positions @ r
    derivs = attitude_rotation_derivatives(pose.attitude)
    # d p_j / d angle = (dR/dangle)^T p_j  ==  rows p_j @ dR
    dpts = np.stack([config.positions @ dr for dr in derivs])
    return pts, dpts


def jacobian_agent(
    config_a: SensorConfig, pose_b: Pose6D, config_b: SensorConfig
) -> np.ndarray:
    """Jacobian of the stacked inter-agent ranges w.r.t. the 6D pose.

    Ranges are stacked in column-major order of the range matrix (ego
    sensors against target sensor 1 first).  Columns are the derivatives
    w.r.t. (x, y, z, gamma, theta, psi); the translation block holds unit
    directions and the angle block follows by the chain rule through the
    body-to-ego transform.

    Returns:
        (k_a * k_b, 6) Jacobian.

    Raises:
        DegenerateGeometryError: if any sensor pair coincides.
    """
    pts_b, dpts = _body_point_derivatives(pose_b, config_b)
    diff = pts_b[None, :, :] - config_a.positions[:, None, :]  # (ka, kb, 3)
    d = np.sqrt((diff**2).sum(axis=2))
    if np.any(d <= COINCIDENT_TOL):
        raise DegenerateGeometryError("coincident ego/target sensor pair")
    unit = diff / d[..., None]
    ka, kb = d.shape
    jac = np.empty((ka * kb, 6))
    # column-major stacking: row index = j * ka + i
    jac[:, :3] = unit.transpose(1, 0, 2).reshape(ka * kb, 3)
    for a in range(3):
        contrib = (unit * dpts[a][None, :, :]).sum(axis=2)  # (ka, kb)
        jac[:, 3 + a] = contrib.T.ravel()
    return jac
