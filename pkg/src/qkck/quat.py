"""Vectorised quaternion arithmetic on arrays with a trailing axis of length 4
ordered (1, i, j, k)."""

import numpy as np


def qmul(p, q):
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    w1, x1, y1, z1 = np.moveaxis(p, -1, 0)
    w2, x2, y2, z2 = np.moveaxis(q, -1, 0)
    return np.stack([
        w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
        w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
        w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
        w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
    ], axis=-1)


def qconj(q):
    q = np.asarray(q, dtype=float)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def left_matrix(p):
    """Real 4x4 matrix of ``q -> p q``."""
    p = np.asarray(p, dtype=float)
    w, x, y, z = np.moveaxis(p, -1, 0)
    rows = [
        [w, -x, -y, -z],
        [x, w, -z, y],
        [y, z, w, -x],
        [z, -y, x, w],
    ]
    return np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)


def as_quaternions(points):
    """Split chart points of shape (..., 4n) into (..., n, 4)."""
    points = np.asarray(points, dtype=float)
    return points.reshape(points.shape[:-1] + (points.shape[-1] // 4, 4))


def from_quaternions(q):
    q = np.asarray(q, dtype=float)
    return q.reshape(q.shape[:-2] + (q.shape[-2] * 4,))


def matvec(A, v):
    """Quaternionic matrix (r, s, 4) times column (..., s, 4), acting on the left."""
    return qmul(A, v[..., None, :, :]).sum(axis=-2)


UNITS = np.eye(4)
