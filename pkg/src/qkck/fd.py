"""Central finite differences over batches of points."""

from __future__ import annotations

import numpy as np

CHUNK = 4096


def chunked(fn, points, chunk: int = CHUNK):
    """Evaluate a vectorised ``fn`` on (..., m) points in flat chunks."""
    points = np.asarray(points, dtype=float)
    lead = points.shape[:-1]
    flat = points.reshape(-1, points.shape[-1])
    if flat.shape[0] <= chunk:
        out = fn(flat)
    else:
        out = np.concatenate([fn(flat[i:i + chunk]) for i in range(0, flat.shape[0], chunk)])
    return out.reshape(lead + out.shape[1:])


def partials(fn, points, h: float):
    """``d_a fn`` at each point by O(h^2) central differences.

    The derivative index is inserted right after the batch axes, so a field
    with values of shape ``S`` yields an array of shape ``(..., m) + S``.
    """
    points = np.asarray(points, dtype=float)
    m = points.shape[-1]
    offsets = h * np.eye(m)
    stencil = np.concatenate([points[..., None, :] + offsets, points[..., None, :] - offsets], axis=-2)
    values = fn(stencil)
    lead = (slice(None),) * (points.ndim - 1)
    return (values[lead + (slice(0, m),)] - values[lead + (slice(m, 2 * m),)]) / (2.0 * h)


def partials4(fn, points, h: float):
    """Fourth-order central differences: Richardson combination of steps h and h/2."""
    return (4.0 * partials(fn, points, h / 2) - partials(fn, points, h)) / 3.0


def directional(fn, points, direction, h: float):
    points = np.asarray(points, dtype=float)
    step = h * np.asarray(direction, dtype=float)
    return (fn(points + step) - fn(points - step)) / (2.0 * h)


def richardson_order(fn, points, h: float):
    """Observed convergence order of :func:`partials` from steps h, h/2, h/4."""
    d1 = partials(fn, points, h)
    d2 = partials(fn, points, h / 2)
    d3 = partials(fn, points, h / 4)
    e1 = np.max(np.abs(d1 - d2))
    e2 = np.max(np.abs(d2 - d3))
    return float(np.log2(e1 / e2)), float(e1 / e2)
