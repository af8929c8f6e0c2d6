"""Transport of parallel sections of the prolongation connection.

A section is a pair ``(psi, X)`` of a compatible 2-form and a vector.  Along a
curve with velocity ``v`` the parallel condition reads

    d psi_bc/dt = v^a (G^e_ab psi_ec + G^e_ac psi_be) + form_coeff(X, v)
    d X^b/dt    = -v^a G^b_ae X^e + vec_coeff(psi, v)

which is integrated with the classical Runge-Kutta scheme on straight segments,
re-projecting ``psi`` onto S^2H + S^2E after every step.  Many sections and many
paths are integrated together as one batch.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..curvalg import Fiber, prolong_form_coeff
from ..manifolds import ChartModel, christoffels, random_points
from ..qalg import compatible_part, lambda2_norm
from .fields import FormField, VecField

DRIFT_LIMIT = 1e-5
INIT_PROJECTION_TOL = 1e-6
EXTENSION_STEPS = 4


class TransportError(RuntimeError):
    pass


@dataclass(frozen=True)
class PathSpec:
    """Polyline through ``waypoints`` with ``steps_per_segment`` RK4 steps per segment."""

    waypoints: np.ndarray
    steps_per_segment: int = 200

    def __post_init__(self):
        w = np.asarray(self.waypoints, dtype=float)
        if w.ndim != 2 or len(w) < 2:
            raise ValueError("a path needs at least two waypoints")
        if self.steps_per_segment < 1:
            raise ValueError("steps_per_segment must be positive")
        object.__setattr__(self, "waypoints", w)

    @property
    def closed(self) -> bool:
        return bool(np.array_equal(self.waypoints[0], self.waypoints[-1]))

    @property
    def start(self) -> np.ndarray:
        return self.waypoints[0]

    @property
    def end(self) -> np.ndarray:
        return self.waypoints[-1]

    def check(self, model: ChartModel, margin: float = 0.0) -> None:
        # segments are straight, so the chart ball contains them once it contains the vertices
        model.check_domain(self.waypoints, margin)


@dataclass(frozen=True)
class ProlongSection:
    """A fiber value ``(psi, X)`` at ``point``; ``drift`` is the accumulated re-projection size."""

    point: np.ndarray
    psi: np.ndarray
    X: np.ndarray
    drift: float = 0.0
    steps: int = 0


# --------------------------------------------------------------------------
# the batched integrator


BLOCK_STEPS = 10


def projector_matrices(B, g):
    """Matrices of psi -> psi^H and psi -> psi^E on row-major flattened forms.

    ``psi^E = 1/4 (psi + sum J_a^T psi J_a)`` and ``psi^H = sum_a tr(psi J_a g^-1)/m omega_a``.
    """
    m = g.shape[-1]
    lead = g.shape[:-2]
    J = B.J
    K = J @ np.linalg.inv(g)[..., None, :, :]
    omega = B.omega.reshape(lead + (3, m * m))
    Kt = np.swapaxes(K, -1, -2).reshape(lead + (3, m * m))
    PH = np.swapaxes(omega, -1, -2) @ Kt / m
    flatJ = J.reshape((-1,) + J.shape[-3:])
    constant = bool(np.all(flatJ == flatJ[0]))
    JT = np.swapaxes(flatJ[:1] if constant else J, -1, -2)
    turned = (JT[..., :, None, :, None] * JT[..., None, :, None, :]).sum(axis=-5)
    turned = turned.reshape(turned.shape[:-4] + (m * m, m * m))
    if constant:
        turned = turned[0]
    PE = 0.25 * (np.eye(m * m) + turned)
    return PH, PE


def form_coeff_matrix(v, g, B, n: int) -> np.ndarray:
    """Matrix of ``X -> form_coeff(X, v)`` from vectors to row-major flattened forms.

    Uses ``g J_a = -omega_a`` to write every wedge as an outer product.
    """
    m = g.shape[-1]
    u = np.einsum("...ij,...j->...i", g, v)
    A = -B.omega
    w = np.einsum("...aij,...j->...ai", A, v)
    F = g[..., :, None, :] * u[..., None, :, None] - u[..., :, None, None] * g[..., None, :, :]
    F = F + (A[..., :, :, None, :] * w[..., :, None, :, None]).sum(axis=-4)
    F = F - (w[..., :, :, None, None] * A[..., :, None, :, :]).sum(axis=-4)
    wv = np.einsum("...aij,...j->...ai", B.omega, v)
    F = F - (B.omega[..., :, :, :, None] * wv[..., :, None, None, :]).sum(axis=-4)
    return F.reshape(F.shape[:-3] + (m * m, m)) / (4 * n - 1)


def _operators(model: ChartModel, pts, v):
    """Per-point matrices of the linear right-hand side at ``pts`` (N, m) with velocities ``v``.

    Returns ``(Gv, F, V, P, gi)``: ``Gv[e, b] = v^a G^e_ab``; ``F`` maps X to the
    form coefficient (flattened form); ``V`` maps a flattened form to the vector
    coefficient; ``P`` is the projector onto S^2H + S^2E; ``gi`` the inverse metric.
    Both chart models have W^Q = 0, so no Weyl term enters ``V``.
    """
    m, n = model.m, model.n
    N = pts.shape[0]
    g = model.metric_at(pts)
    G = christoffels(model, pts)
    B = model.basis_at(pts)
    gi = np.linalg.inv(g)
    Gv = np.einsum("na,neab->neb", v, G)
    F = form_coeff_matrix(v, g, B, n)
    PH, PE = projector_matrices(B, g)
    Q = (PE - 2.0 * PH).reshape(N, m, m, m * m)
    V = (4 * n - 1) / 4.0 * model.nu * gi @ (v[:, None, :] @ Q.reshape(N, m, m * m * m)).reshape(N, m, m * m)
    return Gv, F, V, PH + PE, gi


def _apply(ops, psi, X):
    """Right-hand side for sections ``psi`` (L, K, m, m), ``X`` (L, K, m)."""
    Gv, F, V = ops[:3]
    L, K, m = X.shape
    T = np.swapaxes(Gv, -1, -2)[:, None] @ psi
    dpsi = T - np.swapaxes(T, -1, -2) + (F[:, None] @ X[..., None]).reshape(L, K, m, m)
    dX = -(Gv[:, None] @ X[..., None])[..., 0] + (V[:, None] @ psi.reshape(L, K, m * m, 1))[..., 0]
    return dpsi, dX


def _take(ops, i, n_points):
    return tuple(o.reshape((-1, n_points) + o.shape[1:])[:, i] for o in ops)


def integrate_segments(model: ChartModel, starts, ends, psi, X, steps: int,
                       drift_limit: Optional[float] = DRIFT_LIMIT):
    """Transport ``(psi, X)`` of shape (L, K, ...) along straight segments ``starts -> ends``.

    Returns ``(psi, X, drift)`` with ``drift`` the accumulated pre-projection
    norm of the non-compatible part, per path.
    """
    starts = np.asarray(starts, dtype=float)
    ends = np.asarray(ends, dtype=float)
    psi = np.asarray(psi, dtype=float)
    X = np.asarray(X, dtype=float)
    L, K, m = X.shape
    v = ends - starts
    model.check_domain(np.stack([starts, ends]), model.fd_step)
    dt = 1.0 / steps
    drift = np.zeros(L)
    for s0 in range(0, steps, BLOCK_STEPS):
        count = min(BLOCK_STEPS, steps - s0)
        # geometry on the half-step grid of this block, shared by consecutive RK stages
        t = (s0 + 0.5 * np.arange(2 * count + 1)) * dt
        pts = starts[:, None, :] + t[None, :, None] * v[:, None, :]
        npts = len(t)
        ops = _operators(model, pts.reshape(-1, m), np.repeat(v, npts, axis=0))
        for s in range(count):
            o0, o1, o2 = (_take(ops, i, npts) for i in (2 * s, 2 * s + 1, 2 * s + 2))
            k1 = _apply(o0, psi, X)
            k2 = _apply(o1, psi + 0.5 * dt * k1[0], X + 0.5 * dt * k1[1])
            k3 = _apply(o1, psi + 0.5 * dt * k2[0], X + 0.5 * dt * k2[1])
            k4 = _apply(o2, psi + dt * k3[0], X + dt * k3[1])
            psi = psi + dt / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
            X = X + dt / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
            P, gi = o2[3], o2[4]
            proj = (P[:, None] @ psi.reshape(L, K, m * m, 1)).reshape(L, K, m, m)
            off = psi - proj
            norm2 = 0.5 * np.sum((gi[:, None] @ off @ gi[:, None]) * off, axis=(-2, -1))
            drift += np.max(np.sqrt(np.maximum(norm2, 0.0)), axis=-1)
            psi = proj
    if drift_limit is not None and np.any(drift > drift_limit):
        raise TransportError(f"sub-bundle drift {float(np.max(drift)):.2e} exceeds {drift_limit:g}")
    return psi, X, drift


def _initial(model: ChartModel, point, psi):
    g = model.metric_at(point)
    B = model.basis_at(point)
    proj = compatible_part(psi, B, g)
    off = float(np.max(lambda2_norm(g, psi - proj)))
    if off > INIT_PROJECTION_TOL:
        raise TransportError(f"initial form is not compatible (off-part {off:.2e})")
    return proj


def transport_along(model: ChartModel, waypoints, psi, X, steps: int,
                    drift_limit: Optional[float] = DRIFT_LIMIT):
    """Batched polyline transport: ``waypoints`` (L, W, m), sections (L, K, ...)."""
    waypoints = np.asarray(waypoints, dtype=float)
    drift = np.zeros(waypoints.shape[0])
    for j in range(waypoints.shape[1] - 1):
        psi, X, d = integrate_segments(model, waypoints[:, j], waypoints[:, j + 1], psi, X, steps, None)
        drift += d
    if drift_limit is not None and np.any(drift > drift_limit):
        raise TransportError(f"sub-bundle drift {float(np.max(drift)):.2e} exceeds {drift_limit:g}")
    return psi, X, drift


def prolong_transport(model: ChartModel, path: PathSpec, init: ProlongSection) -> ProlongSection:
    """Parallel transport of ``init`` (given at the path start) to the path end."""
    path.check(model, model.fd_step)
    if not np.allclose(init.point, path.start):
        raise TransportError("initial section is not based at the path start")
    psi0 = _initial(model, path.start, init.psi)
    psi, X, drift = transport_along(model, path.waypoints[None], psi0[None, None], np.asarray(init.X)[None, None],
                                    path.steps_per_segment)
    segs = len(path.waypoints) - 1
    return ProlongSection(point=path.end.copy(), psi=psi[0, 0], X=X[0, 0], drift=float(drift[0]),
                          steps=segs * path.steps_per_segment)


def transported_fields(model: ChartModel, path: PathSpec, init: ProlongSection,
                       extension_steps: int = EXTENSION_STEPS) -> tuple[FormField, VecField, ProlongSection]:
    """The parallel section through ``init``, evaluable near the path end.

    Values at a point ``q`` come from transporting the endpoint value along the
    straight segment to ``q`` with ``extension_steps`` RK4 steps.
    """
    end = prolong_transport(model, path, init)

    def extend(points):
        points = np.asarray(points, dtype=float)
        flat = points.reshape(-1, points.shape[-1])
        L = flat.shape[0]
        psi0 = np.broadcast_to(end.psi, (L, 1) + end.psi.shape).copy()
        X0 = np.broadcast_to(end.X, (L, 1) + end.X.shape).copy()
        starts = np.broadcast_to(end.point, flat.shape)
        psi, X, _ = integrate_segments(model, starts, flat, psi0, X0, extension_steps, None)
        return psi[:, 0].reshape(points.shape + (points.shape[-1],)), X[:, 0].reshape(points.shape)

    data = {"path": path.waypoints, "steps": path.steps_per_segment, "init": (init.psi, init.X)}
    Xf = VecField(lambda p: extend(p)[1], "transported", 1, data)
    psif = FormField(lambda p: extend(p)[0], "transported", 1, codiff=Xf, data=data)
    return psif, Xf, end


# --------------------------------------------------------------------------
# holonomy


@dataclass(frozen=True)
class HolonomyReport:
    loop_count: int
    singular_values: np.ndarray
    fixed_dim: int
    gap_ratio: float
    threshold: float
    max_drift: float
    matrices: np.ndarray = field(repr=False, compare=False, default=None)


SV_THRESHOLD = 1e-6
SV_FLOOR = 1e-15
MIN_VERTEX_SEPARATION = 0.05


def random_loop(rng, base, waypoints: int, radius: float) -> np.ndarray:
    """Closed polyline ``base -> w_1 -> ... -> base`` with ``waypoints`` distinct vertices.

    Samples with nearly coincident vertices are rejected and redrawn.
    """
    base = np.asarray(base, dtype=float)
    while True:
        inner = base + random_points(rng, waypoints - 1, base.shape[-1], radius)
        verts = np.concatenate([base[None], inner])
        d = np.linalg.norm(verts[:, None] - verts[None], axis=-1)
        if np.min(d[np.triu_indices(len(verts), 1)]) >= MIN_VERTEX_SEPARATION:
            return np.concatenate([verts, base[None]])


def summarize_singular_values(sv, fiber_dim: int) -> tuple[int, float, float]:
    """``(fixed_dim, gap_ratio, threshold)`` from singular values of the stacked ``H - Id``.

    The threshold is relative to ``max(sv_max, 1)``: a non-trivial holonomy moves
    the unit fiber basis by O(1), so exact-flat noise is not mistaken for scale.
    """
    sv = np.sort(np.asarray(sv, dtype=float))
    ref = max(float(sv[-1]) if sv.size else 0.0, 1.0)
    threshold = SV_THRESHOLD * ref
    fixed = int(np.sum(sv < threshold))
    if fixed == 0:
        gap = float(sv[0]) / SV_FLOOR
    elif fixed == fiber_dim:
        gap = ref / max(float(sv[-1]), SV_FLOOR)
    else:
        gap = float(sv[fixed]) / max(float(sv[fixed - 1]), SV_FLOOR)
    return fixed, gap, threshold


def holonomy_dimension(model: ChartModel, base=None, loops: int = 64, seed: int = 0, *,
                       steps_per_segment: int = 200, radius: float = 0.3,
                       waypoint_range: tuple[int, int] = (4, 6), keep_matrices: bool = False) -> HolonomyReport:
    """Dimension of the joint fixed space of holonomies around random loops at ``base``."""
    base = np.zeros(model.m) if base is None else np.asarray(base, dtype=float)
    rng = np.random.default_rng(seed)
    counts = rng.integers(waypoint_range[0], waypoint_range[1] + 1, size=loops)
    paths = [random_loop(rng, base, int(k), radius) for k in counts]
    for path in paths:
        model.check_domain(path, model.fd_step)
    fiber = Fiber(model.context_at(base))
    psi0, X0 = fiber.unpack(np.eye(fiber.dim))
    H = np.zeros((loops, fiber.dim, fiber.dim))
    max_drift = 0.0
    for k in np.unique(counts):
        idx = np.flatnonzero(counts == k)
        wp = np.stack([paths[i] for i in idx])
        L = len(idx)
        psi = np.broadcast_to(psi0, (L,) + psi0.shape).copy()
        X = np.broadcast_to(X0, (L,) + X0.shape).copy()
        psi, X, drift = transport_along(model, wp, psi, X, steps_per_segment)
        max_drift = max(max_drift, float(np.max(drift)))
        H[idx] = np.swapaxes(fiber.pack(psi, X), -1, -2)
    stack = (H - np.eye(fiber.dim)).reshape(-1, fiber.dim)
    sv = np.sort(np.linalg.svd(stack, compute_uv=False))
    fixed, gap, threshold = summarize_singular_values(sv, fiber.dim)
    return HolonomyReport(loop_count=loops, singular_values=sv, fixed_dim=fixed, gap_ratio=gap,
                          threshold=threshold, max_drift=max_drift, matrices=H if keep_matrices else None)
