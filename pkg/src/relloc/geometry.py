"""Rigid-body geometry: rotation matrices, Euler angles, and sensor layouts.

Conventions used throughout the package:

- Body frames are rotated in the order yaw, pitch, roll, so the attitude
  matrix is ``R(gamma, theta, psi) = R1(gamma) @ R2(theta) @ R3(psi)`` with
  ``R1``, ``R2``, ``R3`` the basic rotations about x, y, z.
- ``R`` maps ego-frame coordinates to body-frame coordinates; its transpose
  maps body-frame sensor positions into the ego frame.
- Lengths are centimeters, angles are radians.  Degrees appear only at the
  command-line boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import GimbalLockError

#: Orthonormality / unit-determinant tolerance for rotation matrices.
ROTATION_TOL = 1e-10

#: |R13| within this margin of 1 is treated as gimbal lock.
GIMBAL_LOCK_MARGIN = 1e-9


def wrap_angle(angle: float) -> float:
    """Wrap an angle in radians to the interval (-pi, pi]."""
    wrapped = math.remainder(angle, math.tau)
    if wrapped == -math.pi:
        wrapped = math.pi
    return wrapped


@dataclass(frozen=True)
class EulerAngles:
    """Roll, pitch, yaw attitude angles in radians."""

    gamma: float  # roll, about body x
    theta: float  # pitch, about body y
    psi: float  # yaw, about body z

    def normalized(self) -> "EulerAngles":
        """Return the equivalent angles on the principal branch.

        The returned angles satisfy gamma, psi in (-pi, pi] and
        theta in [-pi/2, pi/2], folding through the two-chart equivalence
        (gamma, theta, psi) ~ (gamma + pi, pi - theta, psi + pi) when the
        pitch lies outside its principal range.
        """
        gamma, theta, psi = self.gamma, wrap_angle(self.theta), self.psi
        if abs(theta) > math.pi / 2:
            theta = math.copysign(math.pi, theta) - theta
            gamma += math.pi
            psi += math.pi
        return EulerAngles(wrap_angle(gamma), theta, wrap_angle(psi))

    def as_array(self) -> np.ndarray:
        return np.array([self.gamma, self.theta, self.psi], dtype=float)


@dataclass(frozen=True)
class SensorConfig:
    """Positions of the onboard ranging sensors in the body frame.

    Attributes:
        positions: (k, 3) float array, centimeters.  k >= 4 and the centered
            position matrix must have rank 3 (no four sensors coplanar).
    """

    positions: np.ndarray

    def __post_init__(self):
        pos = np.ascontiguousarray(np.asarray(self.positions, dtype=float))
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise ValueError(f"positions must be (k, 3), got {pos.shape}")
        if pos.shape[0] < 4:
            raise ValueError(f"at least 4 sensors required, got {pos.shape[0]}")
        if not np.all(np.isfinite(pos)):
            raise ValueError("sensor positions must be finite")
        centered = pos - pos.mean(axis=0)
        singvals = np.linalg.svd(centered, compute_uv=False)
        if singvals[2] <= 1e-9 * max(singvals[0], 1.0):
            raise ValueError("sensor positions are coplanar (centered rank < 3)")
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)

    @property
    def k(self) -> int:
        """Number of sensors."""
        return self.positions.shape[0]

    @property
    def centroid(self) -> np.ndarray:
        return self.positions.mean(axis=0)


@dataclass(frozen=True)
class Pose6D:
    """Position and attitude of a target agent relative to the ego frame.

    Attributes:
        position: (3,) centroid of the target's sensor set, centimeters.
        attitude: roll/pitch/yaw of the target body frame.
    """

    position: np.ndarray
    attitude: EulerAngles

    def __post_init__(self):
        pos = np.ascontiguousarray(np.asarray(self.position, dtype=float))
        if pos.shape != (3,):
            raise ValueError(f"position must be a 3-vector, got shape {pos.shape}")
        if not np.all(np.isfinite(pos)):
            raise ValueError("position must be finite")
        pos.setflags(write=False)
        object.__setattr__(self, "position", pos)

    def as_vector(self) -> np.ndarray:
        """Stacked (x, y, z, gamma, theta, psi) parameter vector."""
        return np.concatenate([self.position, self.attitude.as_array()])

    @staticmethod
    def from_vector(beta: np.ndarray) -> "Pose6D":
        beta = np.asarray(beta, dtype=float)
        return Pose6D(beta[:3], EulerAngles(beta[3], beta[4], beta[5]))


def _rot_x(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def _rot_y(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _rot_z(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _rot_x_deriv(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[0.0, 0.0, 0.0], [0.0, -s, -c], [0.0, c, -s]])


def _rot_y_deriv(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[-s, 0.0, c], [0.0, 0.0, 0.0], [-c, 0.0, -s]])


def _rot_z_deriv(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[-s, -c, 0.0], [c, -s, 0.0], [0.0, 0.0, 0.0]])


def rotation_from_euler(angles: EulerAngles) -> np.ndarray:
    """Compose the attitude matrix R = R1(gamma) @ R2(theta) @ R3(psi).

    Args:
        angles: roll/pitch/yaw in radians, all finite.

    Returns:
        (3, 3) proper rotation matrix mapping ego-frame coordinates to
        body-frame coordinates.

    Raises:
        ValueError: if any angle is not finite.
    """
    vals = (angles.gamma, angles.theta, angles.psi)
    if not all(math.isfinite(v) for v in vals):
        raise ValueError(f"Euler angles must be finite, got {vals}")
    return _rot_x(angles.gamma) @ _rot_y(angles.theta) @ _rot_z(angles.psi)


def attitude_rotation_derivatives(angles: EulerAngles) -> tuple[np.ndarray, ...]:
    """Partial derivatives of ``rotation_from_euler`` w.r.t. each angle.

    Returns:
        (dR/dgamma, dR/dtheta, dR/dpsi), each (3, 3).
    """
    r1, r2, r3 = _rot_x(angles.gamma), _rot_y(angles.theta), _rot_z(angles.psi)
    return (
        _rot_x_deriv(angles.gamma) @ r2 @ r3,
        r1 @ _rot_y_deriv(angles.theta) @ r3,
        r1 @ r2 @ _rot_z_deriv(angles.psi),
    )


def _require_rotation(r: np.ndarray) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    if r.shape != (3, 3):
        raise ValueError(f"rotation matrix must be (3, 3), got {r.shape}")
    if not np.all(np.isfinite(r)):
        raise ValueError("rotation matrix must be finite")
    if np.max(np.abs(r.T @ r - np.eye(3))) > 1e-6:
        raise ValueError("matrix is not orthonormal")
    if np.linalg.det(r) < 0.0:
        raise ValueError("matrix is a reflection, not a proper rotation")
    return r


def euler_from_rotation(r: np.ndarray) -> EulerAngles:
    """Extract roll/pitch/yaw from an attitude matrix in R1*R2*R3 form.

    Uses psi = atan2(-R12, R11), theta = asin(R13), gamma = atan2(-R23, R33).

    Args:
        r: (3, 3) proper rotation matrix.

    Returns:
        Angles on the principal branch; exact round trip with
        ``rotation_from_euler`` away from gimbal lock.

    Raises:
        GimbalLockError: if |R13| >= 1 - 1e-9 (pitch at +/- pi/2, where the
            yaw/roll split is undefined).
        ValueError: if ``r`` is not a proper rotation matrix.
    """
    r = _require_rotation(r)
    if abs(r[0, 2]) >= 1.0 - GIMBAL_LOCK_MARGIN:
        raise GimbalLockError(f"pitch at asin({r[0, 2]:+.9f}): yaw/roll undefined")
    return EulerAngles(
        gamma=math.atan2(-r[1, 2], r[2, 2]),
        theta=math.asin(r[0, 2]),
        psi=math.atan2(-r[0, 1], r[0, 0]),
    )


def transform_body_points(pose: Pose6D, config: SensorConfig) -> np.ndarray:
    """Map body-frame sensor positions into the ego frame.

    Each sensor j maps to ``pose.position + R^T @ p_j`` where R is the
    attitude matrix of the pose; R^T is the body-to-ego direction cosine
    matrix.

    Args:
        pose: target position and attitude.
        config: target's sensor layout in its own body frame.

    Returns:
        (k, 3) ego-frame sensor positions, centimeters.
    """
    r = rotation_from_euler(pose.attitude)
    # rows p_j @ R  ==  (R^T @ p_j)^T
    return pose.position + config.positions @ r


def regular_tetrahedron(side: float) -> SensorConfig:
    """Sensor layout on the vertices of a regular tetrahedron.

    One vertex sits on the +z axis and the base triangle is parallel to the
    xy plane; the centroid is at the body-frame origin.  This placement is
    fixed for reproducibility; any congruent placement is geometrically
    equivalent.

    Args:
        side: edge length in centimeters, > 0.

    Returns:
        Four-sensor configuration with all pairwise distances equal to
        ``side``.
    """
    side = float(side)
    if not math.isfinite(side) or side <= 0.0:
        raise ValueError(f"side must be positive, got {side}")
    apex_z = side * math.sqrt(6.0) / 4.0
    base_z = -side * math.sqrt(6.0) / 12.0
    base_r = side / math.sqrt(3.0)
    positions = np.array(
        [
            [0.0, 0.0, apex_z],
            [base_r, 0.0, base_z],
            [base_r * math.cos(2.0 * math.pi / 3.0), base_r * math.sin(2.0 * math.pi / 3.0), base_z],
            [base_r * math.cos(4.0 * math.pi / 3.0), base_r * math.sin(4.0 * math.pi / 3.0), base_z],
        ]
    )
    positions -= positions.mean(axis=0)
    return SensorConfig(positions)


def isosceles_tetrahedron(vertex_angle_deg: float, unit_edge: float) -> SensorConfig:
    """Tetrahedron with five edges equal to ``unit_edge`` and one that varies.

    The two faces meeting at the odd edge are isosceles triangles whose apex
    angle is ``vertex_angle_deg``; the odd edge has length
    ``2 * unit_edge * sin(vertex_angle_deg / 2)``.  The solid flattens to a
    plane exactly at 120 degrees, so the valid range is (0, 120).  At 60
    degrees the layout is congruent to ``regular_tetrahedron(unit_edge)``.

    Args:
        vertex_angle_deg: apex angle of the isosceles faces, degrees,
            strictly between 0 and 120.
        unit_edge: length of the five equal edges, centimeters.

    Returns:
        Four-sensor configuration centered on the body-frame origin.

    Raises:
        ValueError: if the angle lies outside (0, 120) or the edge is not
            positive.
    """
    vertex_angle_deg = float(vertex_angle_deg)
    unit_edge = float(unit_edge)
    if not 0.0 < vertex_angle_deg < 120.0:
        raise ValueError(
            f"vertex angle must lie in (0, 120) degrees, got {vertex_angle_deg}"
        )
    if not math.isfinite(unit_edge) or unit_edge <= 0.0:
        raise ValueError(f"unit edge must be positive, got {unit_edge}")
    half = math.radians(vertex_angle_deg) / 2.0
    odd = 2.0 * unit_edge * math.sin(half)  # base of the isosceles faces
    # Odd edge along x; remaining two vertices in the x=0 plane at distance
    # unit_edge from both ends of the odd edge and from each other.
    z0 = unit_edge / 2.0
    y0 = math.sqrt(0.75 * unit_edge**2 - 0.25 * odd**2)
    positions = np.array(
        [
            [-odd / 2.0, 0.0, 0.0],
            [odd / 2.0, 0.0, 0.0],
            [0.0, y0, z0],
            [0.0, y0, -z0],
        ]
    )
    positions -= positions.mean(axis=0)
    return SensorConfig(positions)
