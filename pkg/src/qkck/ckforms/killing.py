"""Killing fields of HP^n, the conformal-Killing forms they determine, the
closed-form flat family and the correspondence with S^2E-valued potentials."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from ..curvalg import prolong_form_coeff
from ..manifolds import ChartModel
from ..qalg import AdmissibleBasis, lower, s2e_part, s2h_part, standard_flat_basis, wedge
from ..quat import as_quaternions, from_quaternions, matvec, qmul
from .fields import FormField, VecField, constant_vec
from .operators import (
    codiff_field,
    codifferential,
    expand_basis,
    form_norm,
    killing_check,
    nabla_psi,
    nabla_x,
    nabla_x_form,
    vec_norm,
)


class KillingError(RuntimeError):
    pass


# --------------------------------------------------------------------------
# sp(n+1) and its Killing fields on the affine chart


def sp_basis(n: int) -> np.ndarray:
    """Basis of quaternionic anti-Hermitian (n+1)x(n+1) matrices, shape (K, n+1, n+1, 4)."""
    size = n + 1
    out = []
    for a in range(size):
        for unit in (1, 2, 3):
            A = np.zeros((size, size, 4))
            A[a, a, unit] = 1.0
            out.append(A)
    for a, b in combinations(range(size), 2):
        for unit in range(4):
            A = np.zeros((size, size, 4))
            A[a, b, unit] = 1.0
            conj = -np.eye(4)[unit] * (1.0 if unit == 0 else -1.0)
            A[b, a] = conj
            out.append(A)
    return np.array(out)


def is_anti_hermitian(A, tol: float = 1e-14) -> bool:
    conj_t = np.swapaxes(A, 0, 1) * np.array([1.0, -1.0, -1.0, -1.0])
    return bool(np.max(np.abs(conj_t + A)) <= tol)


def killing_vector(A, points) -> np.ndarray:
    """``X_A(q) = head(A q^) - q tail(A q^)`` with ``q^ = (q, 1)``."""
    points = np.asarray(points, dtype=float)
    q = as_quaternions(points)
    one = np.zeros(q.shape[:-2] + (1, 4))
    one[..., 0, 0] = 1.0
    qhat = np.concatenate([q, one], axis=-2)
    image = matvec(A, qhat)
    head, tail = image[..., :-1, :], image[..., -1:, :]
    return from_quaternions(head - qmul(q, tail))


def killing_field(A) -> VecField:
    A = np.asarray(A, dtype=float)
    return VecField(lambda p: killing_vector(A, p), data={"matrix": A})


def killing_fields_hpn(n: int, model: ChartModel | None = None, *, check: bool = True,
                       samples: int = 6, tol: float = 1e-5, seed: int = 0) -> list[VecField]:
    """The Killing fields of HP^n induced by sp(n+1), one per basis matrix.

    With ``check`` each field is verified against the chart metric of ``model``.
    """
    fields = [killing_field(A) for A in sp_basis(n)]
    if check:
        if model is None:
            raise ValueError("checking the Killing fields needs the chart model")
        from ..manifolds import random_points

        pts = random_points(np.random.default_rng(seed), samples, 4 * n, 0.6)
        for k, X in enumerate(fields):
            rep = killing_check(model, X, pts)
            if float(np.max(rep.lie_g)) > tol:
                raise KillingError(f"field {k} fails the Killing check (|L_X g| = {np.max(rep.lie_g):.2e})")
        values = np.array([X(np.zeros(4 * n)) for X in fields])
        first = np.array([nabla_x(model, X, np.zeros(4 * n)).ravel() for X in fields])
        jet = np.concatenate([values, first], axis=1)
        if np.linalg.matrix_rank(jet, tol=1e-8) != len(fields):
            raise KillingError("Killing fields are linearly dependent")
    return fields


def sp_structure_constants(n: int) -> np.ndarray:
    """``f[a, b, c]`` with ``[A_a, A_b] = sum_c f[a, b, c] A_c`` (matrix commutator)."""
    basis = sp_basis(n)
    flat = basis.reshape(len(basis), -1)

    def mm(A, B):
        return qmul(A[:, :, None, :], B[None, :, :, :]).sum(axis=1)

    out = np.zeros((len(basis),) * 3)
    for a in range(len(basis)):
        for b in range(len(basis)):
            C = mm(basis[a], basis[b]) - mm(basis[b], basis[a])
            coeff, *_ = np.linalg.lstsq(flat.T, C.ravel(), rcond=None)
            out[a, b] = coeff
    return out


# --------------------------------------------------------------------------
# Killing fields to conformal-Killing forms


def killing_to_ck(model: ChartModel, X: VecField) -> FormField:
    """``psi = 4/((4n-1)nu) (nabla X)^E - 2/((4n-1)nu) (nabla X)^H``.

    The result carries ``X`` as its codifferential.
    """
    if model.nu == 0.0:
        raise KillingError("the Killing-to-CK map needs nu != 0")
    n = model.n
    c = 1.0 / ((4 * n - 1) * model.nu)

    def fn(p):
        g = model.metric_at(p)
        B = model.basis_at(p)
        F = nabla_x_form(model, X, p, g)
        return 4.0 * c * s2e_part(F, B) - 2.0 * c * s2h_part(F, B, g)

    return FormField(fn, "constructed", X.depth + 1, codiff=X, data={"killing": X.data})


def penrose_section(model: ChartModel, X: VecField) -> FormField:
    """``2/(3 nu) (nabla X)^H``, the twistor section of a Killing field."""
    if model.nu == 0.0:
        raise KillingError("needs nu != 0")

    def fn(p):
        g = model.metric_at(p)
        return 2.0 / (3.0 * model.nu) * s2h_part(nabla_x_form(model, X, p, g), model.basis_at(p), g)

    return FormField(fn, "constructed", X.depth + 1, codiff=X)


def hpn_ck_form(model: ChartModel, coeffs) -> FormField:
    """The conformal-Killing form of the Killing field ``sum coeffs[k] X_k``.

    The combination is formed on the matrix side, so it costs one field evaluation.
    """
    A = np.tensordot(np.asarray(coeffs, dtype=float), sp_basis(model.n), axes=1)
    return killing_to_ck(model, killing_field(A))


def hpn_ck_family(model: ChartModel) -> tuple[list[FormField], list[VecField]]:
    fields = killing_fields_hpn(model.n, model, check=False)
    return [killing_to_ck(model, X) for X in fields], fields


# --------------------------------------------------------------------------
# the flat closed-form family


def flat_ck_form(psi0, X0, n: int) -> FormField:
    """``psi(x) = psi0 + coefficient(X0, x)`` on flat H^n; its codifferential is X0."""
    g, B = standard_flat_basis(n)
    psi0 = np.asarray(psi0, dtype=float)
    X0 = np.asarray(X0, dtype=float)

    def fn(p):
        Bx = AdmissibleBasis(J=np.broadcast_to(B.J, p.shape[:-1] + B.J.shape),
                             omega=np.broadcast_to(B.omega, p.shape[:-1] + B.omega.shape))
        return psi0 + prolong_form_coeff(np.broadcast_to(X0, p.shape), p, g, Bx, n)

    return FormField(fn, "closed-form", 0, codiff=constant_vec(X0), data={"psi0": psi0, "X0": X0})


# --------------------------------------------------------------------------
# psi <-> psi^E


@dataclass(frozen=True)
class S2ECorrespondence:
    u: FormField
    reconstructed: FormField
    X: VecField  # (4n-1)/(4n+2) delta u


def s2e_correspondence(model: ChartModel, psi: FormField) -> S2ECorrespondence:
    """``u = psi^E`` and the reconstruction ``u - (nabla delta u)^H / ((2n+1) nu)``."""
    if model.nu == 0.0:
        raise KillingError("the correspondence needs nu != 0")
    n = model.n

    def u_fn(p):
        return s2e_part(psi(p), model.basis_at(p))

    u = FormField(u_fn, "constructed", psi.depth)
    delta_u = codiff_field(model, u)
    X = VecField(lambda p: (4 * n - 1) / (4 * n + 2) * delta_u(p), "constructed", delta_u.depth)

    def rec(p):
        g = model.metric_at(p)
        F = nabla_x_form(model, delta_u, p, g)
        return u_fn(p) - s2h_part(F, model.basis_at(p), g) / ((2 * n + 1) * model.nu)

    return S2ECorrespondence(u=u, reconstructed=FormField(rec, "constructed", delta_u.depth + 1), X=X)


def hamiltonian_residual(model: ChartModel, corr: S2ECorrespondence, p) -> np.ndarray:
    """``|nabla_Y u - (X ^ Y + sum J_i X ^ J_i Y)/(4n-1)|`` over coordinate Y."""
    p = np.asarray(p, dtype=float)
    n, m = model.n, model.m
    g = model.metric_at(p)
    B = model.basis_at(p)
    X = corr.X(p)
    N = nabla_psi(model, corr.u, p)
    eye = np.broadcast_to(np.eye(m), p.shape[:-1] + (m, m))
    gY = g[..., None, :, :]
    JX = np.einsum("...aij,...j->...ai", B.J, X)[..., None, :, :]
    JY = np.einsum("...aij,...yj->...yai", B.J, eye)
    rhs = wedge(X[..., None, :], eye, gY) + wedge(JX, JY, gY[..., None, :, :]).sum(axis=-3)
    return np.max(form_norm(gY, N - rhs / (4 * n - 1)), axis=-1)


def codiff_ratios(model: ChartModel, psi: FormField, p) -> dict[str, np.ndarray]:
    """``delta psi^H`` and ``delta psi^E`` as multiples of ``delta psi`` (least squares)."""
    p = np.asarray(p, dtype=float)

    def part(fn):
        return FormField(lambda q: fn(psi(q), q), "constructed", psi.depth)

    h = part(lambda v, q: s2h_part(v, model.basis_at(q), model.metric_at(q)))
    e = part(lambda v, q: s2e_part(v, model.basis_at(q)))
    d = codifferential(model, psi, p)
    g = model.metric_at(p)
    out = {}
    for name, f in (("s2h", h), ("s2e", e)):
        v = codifferential(model, f, p)
        ratio = np.einsum("...i,...ij,...j->...", v, g, d) / np.einsum("...i,...ij,...j->...", d, g, d)
        spread = vec_norm(g, v - ratio[..., None] * d) / vec_norm(g, d)
        out[name] = ratio
        out[name + "_spread"] = spread
    return out


def d_parallel_residual(model: ChartModel, psi: FormField, p, X: VecField | None = None) -> np.ndarray:
    """Size of ``D(psi, X)`` over coordinate directions, ``X`` defaulting to the carried codifferential."""
    from ..curvalg import prolong_vec_coeff

    p = np.asarray(p, dtype=float)
    n, m = model.n, model.m
    X = codiff_field(model, psi) if X is None else X
    g = model.metric_at(p)
    B = expand_basis(model.basis_at(p))
    eye = np.broadcast_to(np.eye(m), p.shape[:-1] + (m, m))
    gY = g[..., None, :, :]
    Np = nabla_psi(model, psi, p)
    Nx = nabla_x(model, X, p)
    xv = X(p)
    form = Np - prolong_form_coeff(xv[..., None, :], eye, gY, B, n)
    vec = Nx - prolong_vec_coeff(psi(p)[..., None, :, :], eye, gY, B, n, model.nu)
    return np.maximum(np.max(form_norm(gY, form), axis=-1), np.max(vec_norm(gY, vec), axis=-1))
