"""Algebraic curvature: the quaternionic-Kaehler decomposition, W^Q, and the
coefficient maps and curvature of the prolongation connection.

Curvature tensors are stored fully lowered, ``R[a, b, c, d] = g(R_{e_a, e_b} e_c, e_d)``
with ``R_{X,Y} = [nabla_X, nabla_Y] - nabla_{[X,Y]}``.  As an endomorphism of
2-forms a curvature tensor acts by ``R(psi)_{cd} = 1/2 psi^{ab} R_{abcd}``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .qalg import (
    AdmissibleBasis,
    QAlgError,
    compatible_basis,
    endo_bracket_on_form,
    form_to_endo,
    interior,
    lambda2_inner,
    lambda2_norm,
    orthonormal_frame,
    project,
    quaternionic_dim,
    raise_,
    s2e_part,
    s2h_part,
    wedge,
)

WEYL_TOL = 1e-9


class CurvatureError(ValueError):
    pass


@dataclass(frozen=True)
class QKContext:
    """Pointwise quaternionic-Kaehler data: metric, basis of Q, nu, W^Q and nabla W^Q."""

    n: int
    g: np.ndarray
    B: AdmissibleBasis
    nu: float
    W: np.ndarray
    gradW: Optional[np.ndarray] = None
    name: str = ""

    def __post_init__(self):
        if self.n < 2:
            raise CurvatureError("n must be >= 2")
        m = 4 * self.n
        if self.g.shape != (m, m) or self.W.shape != (m,) * 4:
            raise CurvatureError(f"context shapes inconsistent with n={self.n}")

    @property
    def m(self) -> int:
        return 4 * self.n

    @property
    def grad_w(self) -> np.ndarray:
        return np.zeros((self.m,) * 5) if self.gradW is None else self.gradW


def make_context(g, B: AdmissibleBasis, nu: float, W=None, gradW=None, name: str = "") -> QKContext:
    g = np.asarray(g, dtype=float)
    m = g.shape[-1]
    n = quaternionic_dim(m)
    W = np.zeros((m,) * 4) if W is None else np.asarray(W, dtype=float)
    return QKContext(n=n, g=g, B=B, nu=float(nu), W=W, gradW=gradW, name=name)


def flat_context(n: int) -> QKContext:
    from .qalg import standard_flat_basis

    g, B = standard_flat_basis(n)
    return make_context(g, B, 0.0, name="flat")


# --------------------------------------------------------------------------
# tensor utilities


def base_curvature_tensor(g, B: AdmissibleBasis, nu: float) -> np.ndarray:
    """The nu-multiple of the HP^n model curvature, fully lowered."""
    g = np.asarray(g, dtype=float)
    w = B.omega
    t = np.einsum("ac,bd->abcd", g, g) - np.einsum("ad,bc->abcd", g, g)
    t += np.einsum("iac,ibd->abcd", w, w) - np.einsum("iad,ibc->abcd", w, w)
    t += 2.0 * np.einsum("iab,icd->abcd", w, w)
    return -0.25 * nu * t


def base_curvature(ctx: QKContext) -> np.ndarray:
    return base_curvature_tensor(ctx.g, ctx.B, ctx.nu)


def full_curvature(ctx: QKContext) -> np.ndarray:
    report = validate_weylq(ctx.W, ctx)
    if not report.passed:
        raise CurvatureError(f"invalid W^Q: {report.failures()}")
    return base_curvature(ctx) + ctx.W


def ricci(R, g) -> np.ndarray:
    """``Ric(Y, Z) = sum_k g(R_{e_k, Y} Z, e_k)``."""
    gi = np.linalg.inv(np.asarray(g, dtype=float))
    return np.einsum("ad,...abcd->...bc", gi, R)


def einstein_nu(R, g, n: int) -> tuple[float, float]:
    """Recover nu from ``Ric = nu (n + 2) g``; second value is the relative misfit."""
    g = np.asarray(g, dtype=float)
    ric = ricci(R, g)
    lam = float(np.sum(ric * g) / np.sum(g * g))
    scale = max(float(np.max(np.abs(ric))), 1e-300)
    misfit = float(np.max(np.abs(ric - lam * g))) / scale
    return lam / (n + 2), misfit


def act_on_form(R, g, psi) -> np.ndarray:
    """``R(psi)_{cd} = 1/2 psi^{ab} R_{abcd}``."""
    gi = np.linalg.inv(np.asarray(g, dtype=float))
    return 0.5 * np.einsum("ai,bj,...ij,abcd->...cd", gi, gi, psi, R, optimize=True)


def curvature_form(R, Y, Z) -> np.ndarray:
    """The 2-form ``(U, V) -> R(Y, Z, U, V)``."""
    return np.einsum("a,b,abcd->cd", Y, Z, R)


def curvature_endo(R, g, Y, Z) -> np.ndarray:
    return form_to_endo(g, curvature_form(R, Y, Z))


def lambda2_matrix(R, g) -> np.ndarray:
    """Matrix of ``R`` acting on 2-forms in an orthonormal basis of Lambda^2."""
    from .qalg import lambda2_basis, lambda2_coords

    basis = lambda2_basis(g)
    images = act_on_form(R, g, basis)
    return lambda2_coords(g, images, basis).T


def curvature_residuals(R, g=None) -> dict[str, float]:
    """Max violation of the algebraic curvature-tensor symmetries."""
    R = np.asarray(R, dtype=float)
    scale = 1.0
    out = {
        "antisym12": float(np.max(np.abs(R + R.transpose(1, 0, 2, 3)))) / scale,
        "antisym34": float(np.max(np.abs(R + R.transpose(0, 1, 3, 2)))) / scale,
        "pair": float(np.max(np.abs(R - R.transpose(2, 3, 0, 1)))) / scale,
        "bianchi": float(np.max(np.abs(R + R.transpose(1, 2, 0, 3) + R.transpose(2, 0, 1, 3)))) / scale,
    }
    return out


# --------------------------------------------------------------------------
# W^Q validation and the Grassmannian point model


@dataclass
class WeylReport:
    residuals: dict[str, float]
    tol: float = WEYL_TOL

    @property
    def passed(self) -> bool:
        return all(v <= self.tol for v in self.residuals.values())

    def failures(self) -> dict[str, float]:
        return {k: v for k, v in self.residuals.items() if v > self.tol}


def validate_weylq(W, ctx: QKContext, tol: float = WEYL_TOL, rng=None) -> WeylReport:
    """Check that ``W`` has every symmetry required of a quaternionic-Weyl tensor."""
    W = np.asarray(W, dtype=float)
    res = curvature_residuals(W)
    Js = list(ctx.B.J)
    rng = np.random.default_rng(0) if rng is None else rng
    c = rng.standard_normal(3)
    c /= np.linalg.norm(c)
    Js.append(np.einsum("a,aij->ij", c, ctx.B.J))
    res["j_invariance"] = max(
        float(np.max(np.abs(np.einsum("ia,jb,ijcd->abcd", J, J, W, optimize=True) - W))) for J in Js
    )
    res["ricci"] = float(np.max(np.abs(ricci(W, ctx.g))))
    return WeylReport(res, tol)


def _m_basis() -> list[np.ndarray]:
    mats = []
    for p in range(2):
        for q in range(2):
            for unit in (1.0, 1.0j):
                B = np.zeros((2, 2), dtype=complex)
                B[p, q] = unit
                X = np.zeros((4, 4), dtype=complex)
                X[:2, 2:] = B
                X[2:, :2] = -B.conj().T
                mats.append(X)
    return mats


def _su4_inner(A, B) -> float:
    return float(np.real(-0.5 * np.trace(A @ B)))


def grassmannian_curvature() -> tuple[np.ndarray, np.ndarray]:
    """Curvature of Gr_2(C^4) at the base point and the isotropy su(2) action.

    Returns ``(R, J)`` with ``R`` lowered in an orthonormal basis of the
    off-diagonal block ``m`` of su(4) (inner product ``-1/2 tr(AB)``) and ``J``
    the three endomorphisms of ``m`` given by the first su(2) isotropy factor.
    """
    basis = _m_basis()
    m = len(basis)

    def coords(X):
        return np.array([_su4_inner(X, E) for E in basis])

    R = np.zeros((m,) * 4)
    for a in range(m):
        for b in range(m):
            K = basis[a] @ basis[b] - basis[b] @ basis[a]
            for c in range(m):
                RZ = -(K @ basis[c] - basis[c] @ K)
                R[a, b, c, :] = coords(RZ)
    k1 = np.array([[1j, 0], [0, -1j]])
    k2 = np.array([[0, 1], [-1, 0]], dtype=complex)
    gens = [k1, k2, k1 @ k2]
    J = np.zeros((3, m, m))
    for a, k in enumerate(gens):
        K = np.zeros((4, 4), dtype=complex)
        K[:2, :2] = k
        for b, E in enumerate(basis):
            J[a, :, b] = coords(K @ E - E @ K)
    return R, J


def weylq_grassmannian() -> QKContext:
    """Point model of Gr_2(C^4) with its genuine, non-zero W^Q (n = 2)."""
    R, J = grassmannian_curvature()
    m = R.shape[0]
    n = quaternionic_dim(m)
    g = np.eye(m)
    B = AdmissibleBasis.from_endos(J, g)
    bad = {k: v for k, v in B.residuals(g).items() if v > 1e-12}
    if bad:
        raise CurvatureError(f"Grassmannian isotropy action is not admissible: {bad}")
    sec = R[0, 1, 1, 0]
    if sec < 0:
        raise CurvatureError("Grassmannian curvature has the wrong sign convention")
    nu, misfit = einstein_nu(R, g, n)
    if misfit > 1e-9:
        raise CurvatureError(f"Grassmannian Ricci is not Einstein (misfit {misfit:.3e})")
    W = R - base_curvature_tensor(g, B, nu)
    ctx = QKContext(n=n, g=g, B=B, nu=nu, W=W, gradW=np.zeros((m,) * 5), name="gr2")
    report = validate_weylq(W, ctx)
    if not report.passed:
        raise CurvatureError(f"Grassmannian W^Q failed validation: {report.failures()}")
    return ctx


# --------------------------------------------------------------------------
# coefficient maps of the prolongation connection


def prolong_form_coeff(X, Z, g, B: AdmissibleBasis, n: int) -> np.ndarray:
    """Batched form coefficient; ``g`` and ``B`` broadcast against ``X`` and ``Z``."""
    X = np.asarray(X, dtype=float)
    Z = np.asarray(Z, dtype=float)
    g = np.asarray(g, dtype=float)
    JX = np.einsum("...aij,...j->...ai", B.J, X)
    JZ = np.einsum("...aij,...j->...ai", B.J, Z)
    out = wedge(X, Z, g) + wedge(JX, JZ, g[..., None, :, :]).sum(axis=-3)
    wxz = np.einsum("...i,...ai->...a", Z, np.einsum("...aij,...i->...aj", B.omega, X))
    out = out - np.einsum("...a,...akl->...kl", wxz, B.omega)
    return out / (4 * n - 1)


def prolong_vec_coeff(psi, Z, g, B: AdmissibleBasis, n: int, nu: float, W=None) -> np.ndarray:
    """Batched vector coefficient; ``W`` (if any) is a single pointwise tensor."""
    psi = np.asarray(psi, dtype=float)
    form = nu * (s2e_part(psi, B) - 2.0 * s2h_part(psi, B, g))
    if W is not None and np.any(W):
        form = form + act_on_form(W, g, psi) / (n + 1)
    return raise_(g, interior(Z, form)) * (4 * n - 1) / 4.0


def dcoeff_form(X, Z, ctx: QKContext) -> np.ndarray:
    """``(X^Z + sum J_i X ^ J_i Z - sum omega_i(X, Z) omega_i) / (4n - 1)``."""
    return prolong_form_coeff(X, Z, ctx.g, ctx.B, ctx.n)


def weyl_action(ctx: QKContext, psi) -> np.ndarray:
    return act_on_form(ctx.W, ctx.g, psi)


def dcoeff_vec(psi, Z, ctx: QKContext) -> np.ndarray:
    """``(4n-1)/4 i_Z(nu psi^E - 2 nu psi^H + W(psi)/(n+1))`` as a vector."""
    return prolong_vec_coeff(psi, Z, ctx.g, ctx.B, ctx.n, ctx.nu, ctx.W)


def _wedge_id_s2e(A, Y, Z, ctx: QKContext) -> np.ndarray:
    """``(i_Y A ^ Z - i_Z A ^ Y)^{S^2E}``."""
    g = ctx.g
    a_y = raise_(g, interior(Y, A))
    a_z = raise_(g, interior(Z, A))
    return s2e_part(wedge(a_y, Z, g) - wedge(a_z, Y, g), ctx.B)


def c_tensor(psi_e, Y, Z, ctx: QKContext) -> np.ndarray:
    """``i_Y (nabla_Z W)(psi^E) - i_Z (nabla_Y W)(psi^E)`` as a vector."""
    gW = ctx.grad_w
    if not np.any(gW):
        return np.zeros(ctx.m)
    dZ = np.einsum("z,zabcd->abcd", Z, gW)
    dY = np.einsum("z,zabcd->abcd", Y, gW)
    form_z = act_on_form(dZ, ctx.g, psi_e)
    form_y = act_on_form(dY, ctx.g, psi_e)
    return raise_(ctx.g, interior(Y, form_z) - interior(Z, form_y))


def curvature_RD(Y, Z, psi, X, ctx: QKContext) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form curvature ``R^D_{Y,Z}(psi, X)``: (form part, vector part)."""
    n = ctx.n
    g = ctx.g
    W_yz = form_to_endo(g, curvature_form(ctx.W, Y, Z))
    w_psi = weyl_action(ctx, psi)
    form = endo_bracket_on_form(W_yz, psi) - _wedge_id_s2e(w_psi, Y, Z, ctx) / (n + 1)
    psi_e = s2e_part(psi, ctx.B)
    vec = (n + 2) / (n + 1) * (W_yz @ X) + (4 * n - 1) / (4 * (n + 1)) * c_tensor(psi_e, Y, Z, ctx)
    return form, vec


# --------------------------------------------------------------------------
# the fiber S^2H + S^2E + TM as a real vector space


@dataclass
class Fiber:
    """Coordinates on S^2H + S^2E + TM at one point: orthonormal form basis
    coordinates followed by orthonormal frame coordinates of the vector."""

    ctx: QKContext
    forms: np.ndarray = field(init=False)
    frame: np.ndarray = field(init=False)

    def __post_init__(self):
        self.forms = compatible_basis(self.ctx.B, self.ctx.g)
        self.frame = orthonormal_frame(self.ctx.g)

    @property
    def dim(self) -> int:
        return self.forms.shape[0] + self.ctx.m

    def pack(self, psi, X) -> np.ndarray:
        g = self.ctx.g
        c = lambda2_inner(g, self.forms, np.asarray(psi)[..., None, :, :])
        x = np.linalg.solve(np.broadcast_to(self.frame, np.shape(X)[:-1] + self.frame.shape),
                            np.asarray(X)[..., None])[..., 0]
        return np.concatenate([c, x], axis=-1)

    def unpack(self, v) -> tuple[np.ndarray, np.ndarray]:
        v = np.asarray(v, dtype=float)
        k = self.forms.shape[0]
        psi = np.einsum("...k,kij->...ij", v[..., :k], self.forms)
        X = np.einsum("ij,...j->...i", self.frame, v[..., k:])
        return psi, X

    def matrix(self, op) -> np.ndarray:
        """Matrix of a linear map ``op(psi, X) -> (psi', X')`` of the fiber."""
        cols = []
        for e in np.eye(self.dim):
            psi, X = self.unpack(e)
            cols.append(self.pack(*op(psi, X)))
        return np.stack(cols, axis=-1)


def rd_matrix(Y, Z, ctx: QKContext, fiber: Fiber | None = None) -> np.ndarray:
    fiber = Fiber(ctx) if fiber is None else fiber
    return fiber.matrix(lambda psi, X: curvature_RD(Y, Z, psi, X, ctx))


def rd_matrix_direct(Y, Z, ctx: QKContext, R=None, fiber: Fiber | None = None) -> np.ndarray:
    """Curvature of D from its definition, ``R^nabla + [A_Y, A_Z]``.

    Valid where the coefficient maps are parallel (nu constant, nabla W^Q = 0),
    i.e. on the flat, HP^n and symmetric-space models.  ``R`` defaults to the
    full curvature of ``ctx``.
    """
    fiber = Fiber(ctx) if fiber is None else fiber
    R = base_curvature(ctx) + ctx.W if R is None else R
    R_yz = curvature_endo(R, ctx.g, Y, Z)

    def a_map(V):
        return lambda psi, X: (dcoeff_form(X, V, ctx), dcoeff_vec(psi, V, ctx))

    def r_nabla(psi, X):
        return endo_bracket_on_form(R_yz, psi), R_yz @ X

    AY = fiber.matrix(a_map(Y))
    AZ = fiber.matrix(a_map(Z))
    return fiber.matrix(r_nabla) + AY @ AZ - AZ @ AY


def rd_common_kernel_dim(ctx: QKContext, pairs, tol: float = 1e-9) -> tuple[int, np.ndarray]:
    """Dimension of the common kernel of ``R^D_{Y,Z}`` over the given pairs."""
    fiber = Fiber(ctx)
    stack = np.concatenate([rd_matrix(Y, Z, ctx, fiber) for Y, Z in pairs], axis=0)
    sv = np.linalg.svd(stack, compute_uv=False)
    scale = max(float(sv[0]), 1.0) if sv.size else 1.0
    rank = int(np.sum(sv > tol * scale))
    return fiber.dim - rank, sv


# --------------------------------------------------------------------------
# identities used in the curvature analysis


def _require_s2e(x, ctx: QKContext, what: str, tol: float = 1e-10) -> None:
    parts = project(x, ctx.B, ctx.g)
    scale = max(float(lambda2_norm(ctx.g, x)), 1e-300)
    off = max(float(lambda2_norm(ctx.g, parts.s2h)), float(lambda2_norm(ctx.g, parts.hw))) / scale
    if off > tol:
        raise CurvatureError(f"{what} is not in S^2E (off-component {off:.2e})")


def wedge_id_applied(A, v, ctx: QKContext) -> np.ndarray:
    """``(A ^ Id)^{S^2E}(v)`` with ``v = 1/2 sum_k e_k ^ v(e_k)``."""
    E = orthonormal_frame(ctx.g)
    out = np.zeros_like(np.asarray(A, dtype=float))
    for k in range(ctx.m):
        e = E[:, k]
        ve = raise_(ctx.g, interior(e, v))
        out += _wedge_id_s2e(A, e, ve, ctx)
    return 0.5 * out


def form_bracket(a, b, g) -> np.ndarray:
    """2-form of the commutator of the endomorphisms of ``a`` and ``b``."""
    return endo_bracket_on_form(form_to_endo(g, a), b)


def check_identity_put(A, v, ctx: QKContext) -> float:
    """Residual of ``(A ^ Id)^{S^2E}(v) = [A, v]`` for ``A, v`` in S^2E."""
    _require_s2e(A, ctx, "A")
    _require_s2e(v, ctx, "v")
    diff = wedge_id_applied(A, v, ctx) - form_bracket(A, v, ctx.g)
    return float(lambda2_norm(ctx.g, diff))


def check_identity_w1(ctx: QKContext, u, v) -> float:
    """Residual of ``[W(u), v] = (n + 1)[W(v), u]`` (diagnostic only)."""
    lhs = form_bracket(weyl_action(ctx, u), v, ctx.g)
    rhs = (ctx.n + 1) * form_bracket(weyl_action(ctx, v), u, ctx.g)
    return float(lambda2_norm(ctx.g, lhs - rhs))


def with_weyl(ctx: QKContext, W, gradW=None) -> QKContext:
    return replace(ctx, W=np.asarray(W, dtype=float), gradW=gradW)


__all__ = [
    "CurvatureError",
    "Fiber",
    "QKContext",
    "WeylReport",
    "act_on_form",
    "base_curvature",
    "base_curvature_tensor",
    "c_tensor",
    "check_identity_put",
    "check_identity_w1",
    "curvature_RD",
    "curvature_endo",
    "curvature_form",
    "curvature_residuals",
    "dcoeff_form",
    "dcoeff_vec",
    "prolong_form_coeff",
    "prolong_vec_coeff",
    "einstein_nu",
    "flat_context",
    "form_bracket",
    "full_curvature",
    "grassmannian_curvature",
    "lambda2_matrix",
    "make_context",
    "rd_common_kernel_dim",
    "rd_matrix",
    "rd_matrix_direct",
    "ricci",
    "validate_weylq",
    "weyl_action",
    "weylq_grassmannian",
    "with_weyl",
    "QAlgError",
]
