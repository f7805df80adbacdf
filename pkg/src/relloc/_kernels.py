"""Hot estimator kernels with a numba fast path and a numpy fallback.

Every kernel is written in njit-compatible numpy (explicit loops plus
``np.linalg`` factorizations), so the same source either compiles under
numba or runs interpreted.  The environment variable ``RELLOC_BACKEND``
selects the path at import time:

- ``auto`` (default): compile with numba when it is importable;
- ``numba``: require numba, raise if missing;
- ``numpy``: force the interpreted fallback.

Kernels assume validated inputs and signal failure through integer status
codes; the wrappers in :mod:`relloc.edm` and :mod:`relloc.solvers` raise
typed exceptions from them.

Status codes: 0 ok, 1 degenerate geometry, 2 gimbal lock, 3 realization
failure (indefinite Gram matrix).
"""

from __future__ import annotations

import os

import numpy as np

try:
    import numba

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    _HAVE_NUMBA = False

_CHOICE = os.environ.get("RELLOC_BACKEND", "auto").strip().lower()
if _CHOICE not in ("auto", "numba", "numpy"):
    raise ValueError(f"RELLOC_BACKEND must be auto, numba or numpy, got {_CHOICE!r}")
if _CHOICE == "numba" and not _HAVE_NUMBA:
    raise ImportError("RELLOC_BACKEND=numba but numba is not importable")

USE_NUMBA = _CHOICE != "numpy" and _HAVE_NUMBA
ACTIVE_BACKEND = "numba" if USE_NUMBA else "numpy"


def _maybe_jit(fn):
    if USE_NUMBA:
        return numba.njit(cache=True)(fn)
    return fn


STATUS_OK = 0
STATUS_DEGENERATE = 1
STATUS_GIMBAL_LOCK = 2
STATUS_REALIZATION = 3

#: Relative eigenvalue tolerance for EDM validity / rank decisions.
EIG_TOL = 1e-10

#: Relative tolerance below which a Gram matrix counts as indefinite.
GRAM_TOL = 1e-8

#: |R13| within this margin of 1 is gimbal lock.
GIMBAL_MARGIN = 1e-9


@_maybe_jit
def _det3(m):
    return (
        m[0, 0] * (m[1, 1] * m[2, 2] - m[1, 2] * m[2, 1])
        - m[0, 1] * (m[1, 0] * m[2, 2] - m[1, 2] * m[2, 0])
        + m[0, 2] * (m[1, 0] * m[2, 1] - m[1, 1] * m[2, 0])
    )


@_maybe_jit
def tt_sensor_core(anchors, dhat):
    """Linearized trilateration from consecutive squared-range differences."""
    J = np.empty((4, 3))
    n = np.empty(4)
    for r in range(4):
        i = (r + 1) % 4
        acc = 0.0
        for c in range(3):
            J[r, c] = 2.0 * (anchors[i, c] - anchors[r, c])
            acc += anchors[i, c] ** 2 - anchors[r, c] ** 2
        n[r] = acc - (dhat[i] ** 2 - dhat[r] ** 2)
    jtj = J.T @ np.ascontiguousarray(J)
    det = _det3(jtj)
    scale = (jtj[0, 0] + jtj[1, 1] + jtj[2, 2]) / 3.0
    if det <= 1e-12 * scale**3:
        return np.zeros(3), STATUS_DEGENERATE
    p = np.linalg.solve(jtj, J.T @ np.ascontiguousarray(n))
    return p, STATUS_OK


@_maybe_jit
def _attitude_from_vertices(vertices, body):
    """Roll/pitch/yaw mapping a body layout onto estimated ego vertices.

    Proper-rotation Procrustes between the centered vertex estimates and
    the centered body layout; angles come from the transposed optimum (the
    ego-to-body matrix), matching the attitude parameterization.
    """
    m = vertices.shape[0]
    cx = np.zeros(3)
    cy = np.zeros(3)
    for j in range(m):
        for c in range(3):
            cx[c] += vertices[j, c] / m
            cy[c] += body[j, c] / m
    M = np.zeros((3, 3))
    for j in range(m):
        for a in range(3):
            for b in range(3):
                M[a, b] += (body[j, a] - cy[a]) * (vertices[j, b] - cx[b])
    U, s, Vt = np.linalg.svd(M)
    if s[1] <= 1e-12 * max(s[0], 1.0):
        return 0.0, 0.0, 0.0, STATUS_DEGENERATE
    Q = Vt.T @ np.ascontiguousarray(U.T)
    if _det3(Q) < 0.0:
        # flip the smallest singular direction to keep a proper rotation
        Vf = Vt.copy()
        for c in range(3):
            Vf[2, c] = -Vf[2, c]
        Q = Vf.T @ np.ascontiguousarray(U.T)
    r = Q.T
    if abs(r[0, 2]) >= 1.0 - GIMBAL_MARGIN:
        return 0.0, 0.0, 0.0, STATUS_GIMBAL_LOCK
    gamma = np.arctan2(-r[1, 2], r[2, 2])
    theta = np.arcsin(r[0, 2])
    psi = np.arctan2(-r[0, 1], r[0, 0])
    return gamma, theta, psi, STATUS_OK


@_maybe_jit
def tt_agent_core(anchors, body_b, dhat):
    """Per-column trilateration, centroid average, Procrustes attitude."""
    beta = np.zeros(6)
    vertices = np.zeros((4, 3))
    for j in range(4):
        p, status = tt_sensor_core(anchors, dhat[:, j].copy())
        if status != STATUS_OK:
            return beta, vertices, status
        for c in range(3):
            vertices[j, c] = p[c]
            beta[c] += p[c] / 4.0
    gamma, theta, psi, status = _attitude_from_vertices(vertices, body_b)
    if status != STATUS_OK:
        return beta, vertices, status
    beta[3] = gamma
    beta[4] = theta
    beta[5] = psi
    return beta, vertices, STATUS_OK


@_maybe_jit
def _edm_realign(E, anchors, n_align):
    """Project onto the rank-3 EDM cone, realize, and align to the anchors.

    The anchor alignment is the unconstrained orthogonal Procrustes
    optimum: eigendecomposition may realize the mirror image of the true
    layout, in which case an improper transform is the correct map back.

    Returns:
        (3, n) aligned position matrix and a status code.
    """
    n = E.shape[0]
    # B = -Vc E Vc via double centering
    rm = np.zeros(n)
    gm = 0.0
    for i in range(n):
        acc = 0.0
        for j in range(n):
            acc += E[i, j]
        rm[i] = acc / n
        gm += acc / (n * n)
    B = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            B[i, j] = -(E[i, j] - rm[i] - rm[j] + gm)
    w, T = np.linalg.eigh(B)  # ascending eigenvalues
    scale = max(abs(w[0]), abs(w[n - 1]))
    if scale <= 0.0:
        return np.zeros((3, n)), STATUS_DEGENERATE
    tol = EIG_TOL * scale
    needs_projection = w[0] < -tol or w[n - 4] > tol
    if needs_projection:
        lam = np.zeros(n)
        for k in range(3):
            v = w[n - 1 - k]
            if v > 0.0:
                lam[n - 1 - k] = v
        B3 = (T * lam) @ np.ascontiguousarray(T.T)
        E2 = np.empty((n, n))
        for i in range(n):
            for j in range(n):
                E2[i, j] = -(B3[i, j] - 0.5 * B3[i, i] - 0.5 * B3[j, j])
    else:
        E2 = E.copy()
    # Gram matrix with the first point at the origin
    G = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            G[i, j] = -0.5 * (E2[i, j] - E2[i, 0] - E2[j, 0])
    wg, Ug = np.linalg.eigh(G)
    gscale = max(abs(wg[0]), abs(wg[n - 1]))
    if gscale <= 0.0:
        return np.zeros((3, n)), STATUS_DEGENERATE
    if wg[0] < -GRAM_TOL * gscale:
        return np.zeros((3, n)), STATUS_REALIZATION
    P0 = np.zeros((3, n))
    for k in range(3):
        v = wg[n - 1 - k]
        if v > 0.0:
            root = np.sqrt(v)
            for j in range(n):
                P0[k, j] = root * Ug[j, n - 1 - k]
    # translate so the realized 4-anchor centroid matches the config centroid
    t = np.zeros(3)
    for i in range(4):
        for c in range(3):
            t[c] += 0.25 * (P0[c, i] - anchors[i, c])
    P1 = np.empty((3, n))
    for c in range(3):
        for j in range(n):
            P1[c, j] = P0[c, j] - t[c]
    # orthogonal alignment of the first n_align anchor columns
    cx = np.zeros(3)
    cy = np.zeros(3)
    for i in range(n_align):
        for c in range(3):
            cx[c] += anchors[i, c] / n_align
            cy[c] += P1[c, i] / n_align
    M = np.zeros((3, 3))
    for i in range(n_align):
        for a in range(3):
            for b in range(3):
                M[a, b] += (P1[a, i] - cy[a]) * (anchors[i, b] - cx[b])
    U, s, Vt = np.linalg.svd(M)
    if s[1] <= 1e-12 * max(s[0], 1.0):
        return np.zeros((3, n)), STATUS_DEGENERATE
    Q = Vt.T @ np.ascontiguousarray(U.T)
    out = np.empty((3, n))
    for j in range(n):
        for a in range(3):
            acc = cx[a]
            for b in range(3):
                acc += Q[a, b] * (P1[b, j] - cy[b])
            out[a, j] = acc
    return out, STATUS_OK


@_maybe_jit
def edmt_sensor_core(anchors, dhat):
    """Distance-matrix trilateration of a single target sensor."""
    E = np.zeros((5, 5))
    for i in range(4):
        for j in range(4):
            if i != j:
                acc = 0.0
                for c in range(3):
                    acc += (anchors[i, c] - anchors[j, c]) ** 2
                E[i, j] = acc
        E[i, 4] = dhat[i] ** 2
        E[4, i] = dhat[i] ** 2
    P, status = _edm_realign(E, anchors, 4)
    if status != STATUS_OK:
        return np.zeros(3), status
    return P[:, 4].copy(), STATUS_OK


@_maybe_jit
def edmt_jointly_core(anchors, body_b, dhat, n_align):
    """Joint eight-point distance-matrix localization of a target agent."""
    E = np.zeros((8, 8))
    for i in range(4):
        for j in range(4):
            if i != j:
                acc_a = 0.0
                acc_b = 0.0
                for c in range(3):
                    acc_a += (anchors[i, c] - anchors[j, c]) ** 2
                    acc_b += (body_b[i, c] - body_b[j, c]) ** 2
                E[i, j] = acc_a
                E[4 + i, 4 + j] = acc_b
            E[i, 4 + j] = dhat[i, j] ** 2
            E[4 + j, i] = dhat[i, j] ** 2
    P, status = _edm_realign(E, anchors, n_align)
    beta = np.zeros(6)
    vertices = np.zeros((4, 3))
    if status != STATUS_OK:
        return beta, vertices, status
    for j in range(4):
        for c in range(3):
            vertices[j, c] = P[c, 4 + j]
            beta[c] += P[c, 4 + j] / 4.0
    gamma, theta, psi, status = _attitude_from_vertices(vertices, body_b)
    if status != STATUS_OK:
        return beta, vertices, status
    beta[3] = gamma
    beta[4] = theta
    beta[5] = psi
    return beta, vertices, STATUS_OK


@_maybe_jit
def edmt_individually_core(anchors, body_b, dhat):
    """Column-wise distance-matrix localization of a target agent."""
    beta = np.zeros(6)
    vertices = np.zeros((4, 3))
    for j in range(4):
        p, status = edmt_sensor_core(anchors, dhat[:, j].copy())
        if status != STATUS_OK:
            return beta, vertices, status
        for c in range(3):
            vertices[j, c] = p[c]
            beta[c] += p[c] / 4.0
    gamma, theta, psi, status = _attitude_from_vertices(vertices, body_b)
    if status != STATUS_OK:
        return beta, vertices, status
    beta[3] = gamma
    beta[4] = theta
    beta[5] = psi
    return beta, vertices, STATUS_OK
