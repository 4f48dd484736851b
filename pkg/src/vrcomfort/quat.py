"""Unit-quaternion helpers, scalar-first (w, x, y, z), right-handed.

All functions accept either a single quaternion of shape (4,) or a batch
of shape (N, 4) and are pure.
"""

from __future__ import annotations

import numpy as np

IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])


def normalize(q: np.ndarray) -> np.ndarray:
    """Scale to unit norm. Raises ValueError on (near-)zero norm."""
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(n < 1e-12):
        raise ValueError("cannot normalize zero-norm quaternion")
    return q / n


def multiply(q1: np.ndarray, q2: np.ndarray) -> np.ndarray:
    """Hamilton product q1 ⊗ q2."""
    q1 = np.asarray(q1, dtype=float)
    q2 = np.asarray(q2, dtype=float)
    w1, x1, y1, z1 = q1[..., 0], q1[..., 1], q1[..., 2], q1[..., 3]
    w2, x2, y2, z2 = q2[..., 0], q2[..., 1], q2[..., 2], q2[..., 3]
    return np.stack(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ],
        axis=-1,
    )


def conjugate(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def relative(qa: np.ndarray, qb: np.ndarray) -> np.ndarray:
    """Body-frame rotation taking qa to qb: qa⁻¹ ⊗ qb (unit quats)."""
    return multiply(conjugate(qa), qb)


def rotation_vector(r: np.ndarray) -> np.ndarray:
    """Axis-angle vector (axis · angle, radians) of rotation quaternion(s) r.

    The double cover is resolved toward the shortest arc, so the returned
    angle is always in [0, π].
    """
    r = np.asarray(r, dtype=float)
    single = r.ndim == 1
    r = np.atleast_2d(r)
    # canonicalize sign so w >= 0 (same rotation, shortest arc)
    r = np.where(r[:, :1] < 0.0, -r, r)
    vec = r[:, 1:]
    s = np.linalg.norm(vec, axis=1)
    theta = 2.0 * np.arctan2(s, r[:, 0])
    with np.errstate(invalid="ignore", divide="ignore"):
        axis = np.where(s[:, None] > 1e-12, vec / np.where(s == 0.0, 1.0, s)[:, None], 0.0)
    out = theta[:, None] * axis
    return out[0] if single else out


def from_axis_angle(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    n = np.linalg.norm(axis)
    if n < 1e-12:
        raise ValueError("rotation axis must be nonzero")
    half = 0.5 * float(angle)
    return np.concatenate([[np.cos(half)], np.sin(half) * axis / n])


def fix_signs(quats: np.ndarray) -> np.ndarray:
    """Flip signs so consecutive quaternions sit on the same cover.

    After the fix, dot(q[k], q[k+1]) >= 0 for all k, which keeps
    interpolation and differencing on the shortest arc.
    """
    q = np.array(quats, dtype=float)
    if q.ndim != 2 or q.shape[1] != 4:
        raise ValueError("expected an (N, 4) quaternion array")
    flips = np.cumsum(np.einsum("ij,ij->i", q[:-1], q[1:]) < 0.0)
    q[1:][flips % 2 == 1] *= -1.0
    return q


def slerp(q0: np.ndarray, q1: np.ndarray, u: float) -> np.ndarray:
    """Spherical interpolation along the shortest arc, u in [0, 1]."""
    q0 = normalize(q0)
    q1 = normalize(q1)
    dot = float(np.dot(q0, q1))
    if dot < 0.0:
        q1 = -q1
        dot = -dot
    if dot > 1.0 - 1e-9:
        return normalize(q0 + u * (q1 - q0))  # nearly parallel: lerp is exact enough
    omega = np.arccos(min(dot, 1.0))
    so = np.sin(omega)
    return (np.sin((1.0 - u) * omega) * q0 + np.sin(u * omega) * q1) / so


def slerp_batch(qa: np.ndarray, qb: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Row-wise slerp of (N, 4) pairs at fractions u (N,), shortest arc."""
    qa = normalize(np.atleast_2d(qa))
    qb = normalize(np.atleast_2d(qb))
    u = np.asarray(u, dtype=float)
    dot = np.einsum("ij,ij->i", qa, qb)
    qb = np.where(dot[:, None] < 0.0, -qb, qb)
    dot = np.clip(np.abs(dot), 0.0, 1.0)

    near = dot > 1.0 - 1e-9
    omega = np.arccos(dot)
    so = np.where(near, 1.0, np.sin(omega))  # placeholder 1 avoids 0/0 on near rows
    wa = np.where(near, 1.0 - u, np.sin((1.0 - u) * omega) / so)
    wb = np.where(near, u, np.sin(u * omega) / so)
    return normalize(wa[:, None] * qa + wb[:, None] * qb)
