"""Euclidean distance matrix machinery and the distance-matrix estimators.

Squared-distance matrices are plain (n, n) numpy arrays: symmetric, zero
diagonal, nonnegative entries (squared centimeters).  A measured matrix is
generally not a valid EDM; the estimators project it onto the cone of EDMs
embeddable in three dimensions, realize coordinates from the Gram matrix,
and rigidly align the known anchor columns back onto the sensor layout.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import _kernels
from .exceptions import (
    AlignmentUnderdeterminedError,
    DegenerateGeometryError,
    GimbalLockError,
    InconsistentInputError,
)
from .geometry import EulerAngles, Pose6D, SensorConfig

#: Default relative eigenvalue tolerance for EDM validity and rank decisions.
DEFAULT_EIG_TOL = 1e-10


@dataclass(frozen=True)
class AgentEstimate:
    """Estimated pose of a target agent plus its per-sensor position fixes."""

    pose: Pose6D
    vertices: np.ndarray  # (4, 3) estimated target sensor positions, cm


class EdmCheck(NamedTuple):
    """Result of the EDM membership test."""

    valid: bool
    embed_rank: int


@dataclass(frozen=True)
class GramFactor:
    """Gram matrix of a realized point set and the coordinates themselves.

    Attributes:
        gram: (n, n) positive semi-definite Gram matrix with the first
            point at the origin.
        realized: (3, n) coordinates with ``realized.T @ realized == gram``
            up to the embedding rank; first column is zero.
    """

    gram: np.ndarray
    realized: np.ndarray


def _require_sdm(m: np.ndarray) -> np.ndarray:
    """Validate the squared-distance-matrix invariants and return float64."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 2:
        raise ValueError(f"expected a square matrix of order >= 2, got {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("squared-distance matrix must be finite")
    scale = max(float(np.max(np.abs(m))), 1.0)
    if np.max(np.abs(m - m.T)) > 1e-9 * scale:
        raise ValueError("squared-distance matrix must be symmetric")
    if np.max(np.abs(np.diag(m))) > 1e-9 * scale:
        raise ValueError("squared-distance matrix must have a zero diagonal")
    if np.min(m) < -1e-9 * scale:
        raise ValueError("squared-distance matrix entries must be nonnegative")
    return m


def build_sdm(points) -> np.ndarray:
    """Squared pairwise distances of a point set.

    Args:
        points: (n, 3) array-like, n >= 2.

    Returns:
        (n, n) symmetric hollow matrix of squared distances; exactly
        symmetric with a zero diagonal by construction.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 2:
        raise ValueError(f"expected (n, 3) with n >= 2, got {pts.shape}")
    diff = pts[:, None, :] - pts[None, :, :]
    m = (diff**2).sum(axis=2)
    m = 0.5 * (m + m.T)
    np.fill_diagonal(m, 0.0)
    return m


def _double_center(m: np.ndarray) -> np.ndarray:
    row = m.mean(axis=1, keepdims=True)
    return m - row - row.T + m.mean()


def _centered_eigh(m: np.ndarray):
    """Eigendecomposition of -Vc @ m @ Vc with Vc the centering projector."""
    return np.linalg.eigh(-_double_center(m))


def is_edm(m: np.ndarray, tol: float = DEFAULT_EIG_TOL) -> EdmCheck:
    """Test whether a hollow symmetric matrix is a Euclidean distance matrix.

    The matrix is an EDM exactly when its doubly centered negative is
    positive semi-definite; the count of eigenvalues above tolerance is the
    embedding dimension.

    Args:
        m: candidate squared-distance matrix.
        tol: relative eigenvalue tolerance (scaled by the largest magnitude
            eigenvalue).

    Returns:
        ``EdmCheck(valid, embed_rank)``.
    """
    m = _require_sdm(m)
    w, _ = _centered_eigh(m)
    scale = max(abs(w[0]), abs(w[-1]))
    if scale == 0.0:
        return EdmCheck(valid=True, embed_rank=0)
    cut = tol * scale
    return EdmCheck(valid=bool(w[0] >= -cut), embed_rank=int(np.sum(w > cut)))


def closest_edm(m: np.ndarray, target_rank: int = 3) -> np.ndarray:
    """Best-fitting EDM of bounded embedding rank.

    Diagonalizes the doubly centered negative of ``m``, keeps the largest
    ``target_rank`` eigenvalues clipped at zero, zeroes the rest, and maps
    the result back to a hollow matrix.  The output is optimal among EDMs of
    embedding rank <= ``target_rank`` in the spectral family of norms on
    hollow matrices, and the operation is a projection (idempotent).

    Args:
        m: measured squared-distance matrix.
        target_rank: embedding rank bound, >= 1.

    Returns:
        A valid EDM with ``embed_rank <= target_rank``.
    """
    m = _require_sdm(m)
    if target_rank < 1:
        raise ValueError(f"target_rank must be >= 1, got {target_rank}")
    w, t = _centered_eigh(m)
    lam = np.zeros_like(w)
    keep = min(target_rank, m.shape[0])
    lam[-keep:] = np.maximum(w[-keep:], 0.0)
    b = (t * lam) @ t.T
    half = 0.5 * np.diag(b)
    e = -(b - half[:, None] - half[None, :])
    e = 0.5 * (e + e.T)
    np.fill_diagonal(e, 0.0)
    # mathematically nonnegative; clear floating-point dust
    np.maximum(e, 0.0, out=e)
    return e


def realize_from_edm(e: np.ndarray) -> GramFactor:
    """Coordinates realizing an EDM, with the first point at the origin.

    Builds the Gram matrix from the first row and column of the EDM,
    eigendecomposes it, and keeps the three leading nonnegative directions.

    Args:
        e: valid EDM of embedding rank <= 3.

    Returns:
        :class:`GramFactor` whose ``realized`` columns reproduce ``e``.

    Raises:
        InconsistentInputError: if the Gram matrix is indefinite beyond
            tolerance (the input is not close to a realizable EDM).
    """
    e = _require_sdm(e)
    n = e.shape[0]
    e1 = e[:, :1]
    gram = -0.5 * (e - e1 - e1.T)
    gram = 0.5 * (gram + gram.T)
    w, u = np.linalg.eigh(gram)
    scale = max(abs(w[0]), abs(w[-1]))
    if scale > 0.0 and w[0] < -_kernels.GRAM_TOL * scale:
        raise InconsistentInputError(
            f"Gram matrix indefinite: min eigenvalue {w[0]:.3e} at scale {scale:.3e}"
        )
    realized = np.zeros((3, n))
    for k in range(min(3, n)):
        lam = w[-1 - k]
        if lam > 0.0:
            realized[k] = np.sqrt(lam) * u[:, -1 - k]
    return GramFactor(gram=gram, realized=realized)


def procrustes(source: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Proper rotation best aligning ``reference`` onto ``source``.

    Solves ``min_Q ||source - Q @ reference||_F`` over rotations via the
    singular value decomposition of ``reference @ source.T``.  If the
    unconstrained orthogonal optimum is a reflection, the smallest singular
    direction is sign-flipped: sensor layouts are chiral rigid bodies, so
    only proper rotations are physical here.

    Args:
        source: (3, m) column-centered target point set, m >= 3.
        reference: (3, m) column-centered point set to rotate.

    Returns:
        (3, 3) rotation with determinant +1.

    Raises:
        AlignmentUnderdeterminedError: if the cross-covariance has rank < 2.
        ValueError: if shapes disagree or the inputs are not centered.
    """
    source = np.asarray(source, dtype=float)
    reference = np.asarray(reference, dtype=float)
    if source.shape != reference.shape or source.ndim != 2 or source.shape[0] != 3:
        raise ValueError(
            f"expected matching (3, m) matrices, got {source.shape} and {reference.shape}"
        )
    if source.shape[1] < 3:
        raise ValueError("need at least 3 points to align")
    scale = max(np.max(np.abs(source)), np.max(np.abs(reference)), 1.0)
    if (
        np.max(np.abs(source.mean(axis=1))) > 1e-6 * scale
        or np.max(np.abs(reference.mean(axis=1))) > 1e-6 * scale
    ):
        raise ValueError("inputs must be column-centered by the caller")
    u, s, vt = np.linalg.svd(reference @ source.T)
    if s[1] <= 1e-12 * max(s[0], 1.0):
        raise AlignmentUnderdeterminedError(
            "cross-covariance rank < 2: alignment not determined"
        )
    q = vt.T @ u.T
    if np.linalg.det(q) < 0.0:
        vt = vt.copy()
        vt[-1] *= -1.0
        q = vt.T @ u.T
    return q


_STATUS_ERRORS = {
    _kernels.STATUS_DEGENERATE: (DegenerateGeometryError, "degenerate geometry"),
    _kernels.STATUS_GIMBAL_LOCK: (GimbalLockError, "attitude at gimbal lock"),
    _kernels.STATUS_REALIZATION: (
        InconsistentInputError,
        "distance matrix could not be realized",
    ),
}


def _raise_for_status(status: int, context: str):
    if status == _kernels.STATUS_OK:
        return
    exc, msg = _STATUS_ERRORS[status]
    raise exc(f"{context}: {msg}")


def _writable(a: np.ndarray) -> np.ndarray:
    return np.array(a, dtype=float, order="C", copy=True)


def _require_measured(measured, shape, name="measured"):
    m = np.asarray(measured, dtype=float)
    if m.shape != shape:
        raise ValueError(f"{name} must have shape {shape}, got {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} must be finite")
    return m


def _require_four(config: SensorConfig, name: str):
    if config.k != 4:
        raise ValueError(f"{name} must have exactly 4 sensors, got {config.k}")


def _agent_estimate(beta: np.ndarray, vertices: np.ndarray) -> AgentEstimate:
    pose = Pose6D(beta[:3], EulerAngles(beta[3], beta[4], beta[5]))
    return AgentEstimate(pose=pose, vertices=vertices)


def edmt_sensor(config: SensorConfig, measured: np.ndarray) -> np.ndarray:
    """Localize a target sensor from four measured ranges via EDM fitting.

    Assembles the 5x5 squared-distance matrix (anchor block from the
    layout, border from the measurements), projects it onto the rank-3 EDM
    cone if it is not one already, realizes coordinates, and rigidly aligns
    the four anchor columns back onto the layout.  The aligned fifth column
    is the target estimate.

    Args:
        config: ego layout with exactly 4 sensors.
        measured: (4,) measured ranges, cm.

    Returns:
        (3,) estimated target position, cm.

    Raises:
        DegenerateGeometryError, InconsistentInputError: on unrealizable
            geometry.
    """
    _require_four(config, "config")
    measured = _require_measured(measured, (4,))
    p, status = _kernels.edmt_sensor_core(_writable(config.positions), _writable(measured))
    _raise_for_status(status, "edmt_sensor")
    return p


def edmt_agent_jointly(
    config_a: SensorConfig,
    measured: np.ndarray,
    config_b: SensorConfig,
    three_anchor_alignment: bool = False,
) -> AgentEstimate:
    """Localize a target agent from the full 4x4 range matrix in one shot.

    Assembles the 8x8 squared-distance matrix from both sensor layouts and
    the measured cross block, projects/realizes/aligns as in
    :func:`edmt_sensor`, and recovers the attitude with a second Procrustes
    fit of the estimated target vertices against the target layout.

    Args:
        config_a: ego layout, 4 sensors.
        measured: (4, 4) ranges, entry (i, j) from ego sensor i to target
            sensor j, cm.
        config_b: target layout, 4 sensors.
        three_anchor_alignment: align using only the first three anchors
            (compatibility variant; the four-anchor default conditions the
            alignment strictly better).

    Returns:
        :class:`AgentEstimate` with the pose and the four vertex fixes.
    """
    _require_four(config_a, "config_a")
    _require_four(config_b, "config_b")
    measured = _require_measured(measured, (4, 4))
    n_align = 3 if three_anchor_alignment else 4
    beta, vertices, status = _kernels.edmt_jointly_core(
        _writable(config_a.positions),
        _writable(config_b.positions),
        _writable(measured),
        n_align,
    )
    _raise_for_status(status, "edmt_agent_jointly")
    return _agent_estimate(beta, vertices)


def edmt_agent_individually(
    config_a: SensorConfig, measured: np.ndarray, config_b: SensorConfig
) -> AgentEstimate:
    """Localize a target agent one sensor at a time.

    Runs :func:`edmt_sensor` on each column of the range matrix, averages
    the vertex fixes into the centroid estimate, and recovers the attitude
    by a Procrustes fit against the target layout.
    """
    _require_four(config_a, "config_a")
    _require_four(config_b, "config_b")
    measured = _require_measured(measured, (4, 4))
    beta, vertices, status = _kernels.edmt_individually_core(
        _writable(config_a.positions),
        _writable(config_b.positions),
        _writable(measured),
    )
    _raise_for_status(status, "edmt_agent_individually")
    return _agent_estimate(beta, vertices)
