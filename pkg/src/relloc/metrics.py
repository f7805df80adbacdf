"""Dilution-of-precision and lower-bound metrics for range localization.

The geometric dilution of precision (GDOP) maps the range noise level to
the best achievable estimation error: for a target sensor it is
``sqrt(trace((H^T H)^-1))`` with H the range Jacobian, and for a target
agent the inverse normal matrix is split into position and per-angle
components.  Multiplying by the range noise sigma gives the corresponding
lower bound on the RMSE.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .exceptions import DegenerateGeometryError
from .geometry import Pose6D, SensorConfig
from .ranging import COINCIDENT_TOL, NoiseModel, jacobian_agent

#: Normal matrices with condition number above this are degenerate.
CONDITION_LIMIT = 1e12


@dataclass(frozen=True)
class AgentGdop:
    """GDOP of a target agent, split into position and attitude components.

    Each component is the square root of the corresponding diagonal block
    of the inverse normal matrix, so multiplying by sigma gives an RMSE
    bound (position in cm per cm of range noise, angles in rad per cm).
    """

    position: float
    roll: float
    pitch: float
    yaw: float


class AgentCrlb(NamedTuple):
    """Best achievable RMSEs for an agent pose at a given noise level."""

    position: float  # cm
    roll: float  # rad
    pitch: float  # rad
    yaw: float  # rad


def _axis(start: float, stop: float, step: float) -> np.ndarray:
    """Inclusive arithmetic grid; the endpoint is kept within tolerance."""
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return start + step * np.arange(count)


@dataclass(frozen=True)
class SphericalGrid:
    """Evaluation grid in spherical coordinates.

    Polar angle is measured from +z, azimuth from +x in the xy plane; all
    three ranges are inclusive of both endpoints.

    Attributes:
        radial_cm: (start, stop, step) radial distance, cm.
        polar_deg: (start, stop, step) polar angle, degrees.
        azimuth_deg: (start, stop, step) azimuth angle, degrees.
    """

    radial_cm: tuple[float, float, float]
    polar_deg: tuple[float, float, float]
    azimuth_deg: tuple[float, float, float]

    def __post_init__(self):
        for name in ("radial_cm", "polar_deg", "azimuth_deg"):
            start, stop, step = (float(v) for v in getattr(self, name))
            if step <= 0.0:
                raise ValueError(f"{name}: step must be > 0, got {step}")
            if stop < start:
                raise ValueError(f"{name}: empty range {start}..{stop}")
            object.__setattr__(self, name, (start, stop, step))

    @staticmethod
    def default_cone() -> "SphericalGrid":
        """Evaluation cone used by the sensor-configuration study."""
        return SphericalGrid(
            radial_cm=(80.0, 500.0, 10.0),
            polar_deg=(0.0, 180.0, 5.0),
            azimuth_deg=(30.0, 90.0, 5.0),
        )

    def axes(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return (
            _axis(*self.radial_cm),
            _axis(*self.polar_deg),
            _axis(*self.azimuth_deg),
        )

    def points(self) -> np.ndarray:
        """All (r, polar, azimuth) triples, radial index slowest."""
        r, pol, az = self.axes()
        grid = np.stack(np.meshgrid(r, pol, az, indexing="ij"), axis=-1)
        return grid.reshape(-1, 3)


def spherical_to_cartesian(r, polar_deg, azimuth_deg) -> np.ndarray:
    """Cartesian coordinates from radial distance and angles in degrees."""
    polar = np.radians(polar_deg)
    azimuth = np.radians(azimuth_deg)
    sin_p = np.sin(polar)
    return np.stack(
        [
            r * sin_p * np.cos(azimuth),
            r * sin_p * np.sin(azimuth),
            r * np.cos(polar) * np.ones_like(azimuth),
        ],
        axis=-1,
    )


def _gdop_batch(anchors: np.ndarray, targets: np.ndarray):
    """GDOP at many target points at once.

    Returns:
        gdops: (N,) values, NaN where the geometry is degenerate.
        ok: (N,) bool validity mask.
    """
    diff = targets[:, None, :] - anchors[None, :, :]
    d = np.sqrt((diff**2).sum(axis=2))
    ok = np.all(d > COINCIDENT_TOL, axis=1)
    d_safe = np.where(d > COINCIDENT_TOL, d, 1.0)
    h = diff / d_safe[..., None]
    normal = np.einsum("nki,nkj->nij", h, h)
    w = np.linalg.eigvalsh(normal)
    ok &= (w[:, 0] > 0.0) & (w[:, 0] * CONDITION_LIMIT > w[:, -1])
    gdops = np.full(targets.shape[0], np.nan)
    if np.any(ok):
        gdops[ok] = np.sqrt((1.0 / w[ok]).sum(axis=1))
    return gdops, ok


def gdop_sensor(config: SensorConfig, target) -> float:
    """GDOP for localizing a single target point.

    Depends only on the unit directions from the target to the sensors, so
    it is invariant under rigid motion and uniform scaling of the whole
    scene.

    Raises:
        DegenerateGeometryError: if the normal matrix is singular beyond
            the condition limit or the target coincides with a sensor.
    """
    target = np.asarray(target, dtype=float)
    if target.shape != (3,) or not np.all(np.isfinite(target)):
        raise ValueError("target must be a finite 3-vector")
    gdops, ok = _gdop_batch(config.positions, target[None, :])
    if not ok[0]:
        raise DegenerateGeometryError("sensor geometry is degenerate at this target")
    return float(gdops[0])


def gdop_agent(
    config_a: SensorConfig, pose_b: Pose6D, config_b: SensorConfig
) -> AgentGdop:
    """Position and attitude GDOP for localizing a target agent.

    The (i, i) entries of the inverse normal matrix of the 6-parameter
    range Jacobian give per-component error gains; square roots are applied
    so each component is comparable to an RMSE.

    Raises:
        DegenerateGeometryError: singular normal matrix, e.g. when the
            target sits on a symmetry axis that makes yaw unobservable.
    """
    h = jacobian_agent(config_a, pose_b, config_b)
    normal = h.T @ h
    w = np.linalg.eigvalsh(normal)
    if w[0] <= 0.0 or w[0] * CONDITION_LIMIT <= w[-1]:
        raise DegenerateGeometryError(
            f"agent normal matrix is degenerate (eigenvalues {w[0]:.3e}..{w[-1]:.3e})"
        )
    d = np.diag(np.linalg.inv(normal))
    return AgentGdop(
        position=float(np.sqrt(d[0] + d[1] + d[2])),
        roll=float(np.sqrt(d[3])),
        pitch=float(np.sqrt(d[4])),
        yaw=float(np.sqrt(d[5])),
    )


def crlb_sensor(gdop: float, noise: NoiseModel) -> float:
    """Best achievable position RMSE: sigma0 times the GDOP."""
    if not math.isfinite(gdop):
        raise ValueError(f"gdop must be finite, got {gdop}")
    return noise.sigma0 * gdop


def crlb_agent(gdop: AgentGdop, noise: NoiseModel) -> AgentCrlb:
    """Best achievable pose RMSEs: sigma0 times each GDOP component."""
    return AgentCrlb(
        position=noise.sigma0 * gdop.position,
        roll=noise.sigma0 * gdop.roll,
        pitch=noise.sigma0 * gdop.pitch,
        yaw=noise.sigma0 * gdop.yaw,
    )


@dataclass(frozen=True)
class SweepResult:
    """GDOP evaluated over a spherical grid.

    Attributes:
        average: mean GDOP over valid grid points.
        maximum: largest GDOP over valid grid points.
        samples: (N, 4) array of (r_cm, polar_deg, azimuth_deg, gdop), with
            NaN GDOP at excluded (degenerate) points.
        excluded: number of degenerate grid points left out of the stats.
    """

    average: float
    maximum: float
    samples: np.ndarray
    excluded: int

    def to_csv(self, stream) -> None:
        writer = csv.writer(stream)
        writer.writerow(["r_cm", "polar_deg", "azimuth_deg", "gdop"])
        for row in self.samples:
            writer.writerow([repr(float(v)) for v in row])
        stream.write(
            f"# summary average={float(self.average)!r} "
            f"maximum={float(self.maximum)!r} excluded={self.excluded}\n"
        )


def gdop_sweep(config: SensorConfig, grid: SphericalGrid) -> SweepResult:
    """Evaluate :func:`gdop_sensor` over every point of a spherical grid.

    Degenerate points are excluded from the mean and maximum and counted in
    the result.  Evaluation is vectorized over the grid with a fixed
    reduction order, so results are reproducible.
    """
    pts = grid.points()
    targets = spherical_to_cartesian(pts[:, 0], pts[:, 1], pts[:, 2])
    gdops, ok = _gdop_batch(config.positions, targets)
    samples = np.column_stack([pts, gdops])
    if np.any(ok):
        average = float(gdops[ok].mean())
        maximum = float(gdops[ok].max())
    else:
        average = math.nan
        maximum = math.nan
    return SweepResult(
        average=average,
        maximum=maximum,
        samples=samples,
        excluded=int(np.sum(~ok)),
    )
