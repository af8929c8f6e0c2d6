"""First-order operators on chart fields: nabla, codifferential, exterior
derivative, the conformal-Killing residuals, Lie derivatives and the Penrose
operator.

All derivatives are central differences.  A field whose values already contain
finite differences (``depth > 0``) is differentiated with the model's nested
step instead of the first-derivative step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..curvalg import prolong_form_coeff
from ..fd import partials
from ..manifolds import ChartModel, nabla_form, nabla_vector
from ..qalg import (
    AdmissibleBasis,
    lambda2_norm,
    lower,
    project,
    raise_,
    s2h_part,
    wedge,
    wedge_1_2,
)
from .fields import FormField, VecField


def step_for(model: ChartModel, *fields) -> float:
    depth = max(f.depth for f in fields)
    return model.fd_step if depth == 0 else model.nested_step


def expand_basis(B: AdmissibleBasis, axis_count: int = 1) -> AdmissibleBasis:
    """Insert broadcast axes right before the basis index."""
    J, w = B.J, B.omega
    for _ in range(axis_count):
        J = J[..., None, :, :, :]
        w = w[..., None, :, :, :]
    return AdmissibleBasis(J=J, omega=w)


def vec_norm(g, X) -> np.ndarray:
    return np.sqrt(np.maximum(np.einsum("...i,...ij,...j->...", X, g, X), 0.0))


def form_norm(g, psi) -> np.ndarray:
    return lambda2_norm(g, psi)


def three_form_norm(g, t) -> np.ndarray:
    """``|t|^2 = 1/6 t_{abc} t^{abc}``."""
    gi = np.linalg.inv(g)
    s = np.einsum("...ai,...bj,...ck,...abc,...ijk->...", gi, gi, gi, t, t) / 6.0
    return np.sqrt(np.maximum(s, 0.0))


# --------------------------------------------------------------------------
# covariant derivatives


def nabla_psi(model: ChartModel, psi: FormField, p) -> np.ndarray:
    """``out[..., a, b, c] = (nabla_a psi)_{bc}``."""
    return nabla_form(model, psi, p, step_for(model, psi))


def nabla_x(model: ChartModel, X: VecField, p) -> np.ndarray:
    """``out[..., a, b] = (nabla_a X)^b``."""
    return nabla_vector(model, X, p, step_for(model, X))


def nabla_x_form(model: ChartModel, X: VecField, p, g=None) -> np.ndarray:
    """The 2-form ``(Z, V) -> g(nabla_Z X, V)`` skew-symmetrised (its full value for Killing X)."""
    g = model.metric_at(p) if g is None else g
    N = lower(g[..., None, :, :], nabla_x(model, X, p))
    return 0.5 * (N - np.swapaxes(N, -1, -2))


def codifferential(model: ChartModel, psi: FormField, p) -> np.ndarray:
    """``delta psi = -sum_k (nabla_{e_k} psi)(e_k, .)`` as a vector."""
    p = np.asarray(p, dtype=float)
    N = nabla_psi(model, psi, p)
    g = model.metric_at(p)
    alpha = -np.einsum("...ac,...acb->...b", np.linalg.inv(g), N)
    return raise_(g, alpha)


def codiff_field(model: ChartModel, psi: FormField, *, use_known: bool = True) -> VecField:
    """``delta psi`` as a field; the carried codifferential is used if present."""
    if use_known and psi.codiff is not None:
        return psi.codiff
    return VecField(lambda p: codifferential(model, psi, p), "constructed", psi.depth + 1)


def exterior_derivative(model: ChartModel, psi: FormField, p, method: str = "coordinate") -> np.ndarray:
    """``(d psi)_{abc}`` from coordinate partials or from the Levi-Civita derivative."""
    p = np.asarray(p, dtype=float)
    if method == "coordinate":
        model.check_domain(p, step_for(model, psi))
        D = partials(psi, p, step_for(model, psi))
    elif method == "christoffel":
        D = nabla_psi(model, psi, p)
    else:
        raise ValueError(f"unknown method {method!r}")
    return D + np.moveaxis(D, (-3, -2, -1), (-2, -1, -3)) + np.moveaxis(D, (-3, -2, -1), (-1, -3, -2))


def exterior_derivative_1form(model: ChartModel, alpha_fn, p, h: float) -> np.ndarray:
    """``(d alpha)_{ab} = d_a alpha_b - d_b alpha_a``."""
    p = np.asarray(p, dtype=float)
    model.check_domain(p, h)
    D = partials(alpha_fn, p, h)
    return D - np.swapaxes(D, -1, -2)


# --------------------------------------------------------------------------
# conformal-Killing residuals


@dataclass(frozen=True)
class CKResidual:
    """Residuals over the coordinate directions at each point.

    ``ck`` is the conformal-Killing equation residual, ``prolong`` the residual
    of ``nabla_Y psi = coefficient(delta psi, Y)``; ``codiff_mismatch`` compares
    the numerical codifferential with the carried one (0 when none is carried).
    """

    ck: np.ndarray
    prolong: np.ndarray
    codiff_mismatch: np.ndarray
    scale: np.ndarray

    @property
    def max_ck(self) -> float:
        return float(np.max(self.ck))

    @property
    def max_prolong(self) -> float:
        return float(np.max(self.prolong))


def ck_residual(model: ChartModel, psi: FormField, p) -> CKResidual:
    p = np.asarray(p, dtype=float)
    m = model.m
    n = model.n
    g = model.metric_at(p)
    N = nabla_psi(model, psi, p)
    dpsi = N + np.moveaxis(N, (-3, -2, -1), (-2, -1, -3)) + np.moveaxis(N, (-3, -2, -1), (-1, -3, -2))
    gi = np.linalg.inv(g)
    delta = raise_(g, -np.einsum("...ac,...acb->...b", gi, N))
    eye = np.broadcast_to(np.eye(m), p.shape[:-1] + (m, m))
    gY = g[..., None, :, :]
    ck = N - dpsi / 3.0 + wedge(eye, delta[..., None, :], gY) / (4 * n - 1)
    B = expand_basis(model.basis_at(p))
    coeff = prolong_form_coeff(delta[..., None, :], eye, gY, B, n)
    prolong = N - coeff
    ck_norm = np.max(form_norm(gY, ck), axis=-1)
    pr_norm = np.max(form_norm(gY, prolong), axis=-1)
    if psi.codiff is not None:
        mismatch = vec_norm(g, delta - psi.codiff(p))
    else:
        mismatch = np.zeros(p.shape[:-1])
    scale = np.max(form_norm(gY, N), axis=-1)
    return CKResidual(ck=ck_norm, prolong=pr_norm, codiff_mismatch=mismatch, scale=scale)


def d_formula_residual(model: ChartModel, psi: FormField, p, X=None) -> np.ndarray:
    """``|d psi + 3/(4n-1) sum J_i X ^ omega_i|`` with ``X = delta psi`` by default."""
    p = np.asarray(p, dtype=float)
    n = model.n
    g = model.metric_at(p)
    B = model.basis_at(p)
    X = codiff_field(model, psi)(p) if X is None else X
    dpsi = exterior_derivative(model, psi, p)
    JX = np.einsum("...aij,...j->...ai", B.J, X)
    rhs = wedge_1_2(lower(g[..., None, :, :], JX), B.omega).sum(axis=-4)
    return three_form_norm(g, dpsi + 3.0 / (4 * n - 1) * rhs)


# --------------------------------------------------------------------------
# Lie derivatives and Killing fields


def lie_derivative(model: ChartModel, X: VecField, psi: FormField, p) -> np.ndarray:
    """``L_X psi = i_X d psi + d(i_X psi)`` (Cartan)."""
    p = np.asarray(p, dtype=float)
    h = step_for(model, X, psi)
    dpsi = exterior_derivative(model, psi, p)
    first = np.einsum("...a,...abc->...bc", X(p), dpsi)

    def alpha(q):
        return np.einsum("...a,...ab->...b", X(q), psi(q))

    return first + exterior_derivative_1form(model, alpha, p, h)


def lie_field(model: ChartModel, X: VecField, psi: FormField) -> FormField:
    return FormField(lambda p: lie_derivative(model, X, psi, p), "constructed",
                     max(X.depth, psi.depth) + 1)


def vector_bracket(model: ChartModel, X: VecField, Y: VecField, p) -> np.ndarray:
    """``[X, Y]^b = X^a d_a Y^b - Y^a d_a X^b``."""
    p = np.asarray(p, dtype=float)
    h = step_for(model, X, Y)
    model.check_domain(p, h)
    dX = partials(X, p, h)
    dY = partials(Y, p, h)
    return np.einsum("...a,...ab->...b", X(p), dY) - np.einsum("...a,...ab->...b", Y(p), dX)


def bracket_field(model: ChartModel, X: VecField, Y: VecField) -> VecField:
    return VecField(lambda p: vector_bracket(model, X, Y, p), "constructed", max(X.depth, Y.depth) + 1)


@dataclass(frozen=True)
class KillingReport:
    """``|L_X g|``, ``div X`` and the non-compatible part of ``nabla X`` at each point."""

    lie_g: np.ndarray
    divergence: np.ndarray
    hw: np.ndarray

    @property
    def worst(self) -> float:
        return float(max(np.max(self.lie_g), np.max(np.abs(self.divergence))))


def killing_check(model: ChartModel, X: VecField, p) -> KillingReport:
    p = np.asarray(p, dtype=float)
    g = model.metric_at(p)
    NX = nabla_x(model, X, p)
    N = lower(g[..., None, :, :], NX)
    S = N + np.swapaxes(N, -1, -2)
    gi = np.linalg.inv(g)
    lie = np.sqrt(np.maximum(np.einsum("...ai,...bj,...ab,...ij->...", gi, gi, S, S), 0.0))
    div = np.einsum("...aa->...", NX)
    A = 0.5 * (N - np.swapaxes(N, -1, -2))
    hw = form_norm(g, project(A, model.basis_at(p), g).hw)
    return KillingReport(lie_g=lie, divergence=div, hw=hw)


# --------------------------------------------------------------------------
# the Penrose operator on sections of Q


class PenroseError(ValueError):
    pass


@dataclass(frozen=True)
class PenroseResult:
    value: np.ndarray  # [..., y, u, v]
    residual: np.ndarray  # |value| over the coordinate directions
    codiff: np.ndarray


def penrose(model: ChartModel, sigma: FormField, p, *, s2h_tol: float = 1e-8) -> PenroseResult:
    """``D sigma = nabla sigma + 1/3 sum (delta sigma) o J_i (x) omega_i`` for S^2H-valued sigma."""
    p = np.asarray(p, dtype=float)
    g = model.metric_at(p)
    B = model.basis_at(p)
    s = sigma(p)
    off = form_norm(g, s - s2h_part(s, B, g))
    if np.any(off > s2h_tol * np.maximum(1.0, form_norm(g, s))):
        raise PenroseError(f"sigma is not a section of S^2H (off-part {float(np.max(off)):.2e})")
    N = nabla_psi(model, sigma, p)
    delta = raise_(g, -np.einsum("...ac,...acb->...b", np.linalg.inv(g), N))
    # (delta sigma)(J_i e_y) = g(delta, J_i e_y)
    dj = np.einsum("...b,...bc,...icy->...iy", delta, g, B.J)
    value = N + np.einsum("...iy,...iuv->...yuv", dj, B.omega) / 3.0
    residual = np.max(form_norm(g[..., None, :, :], value), axis=-1)
    return PenroseResult(value=value, residual=residual, codiff=delta)


def twistor_residual(model: ChartModel, psi: FormField, p, X=None) -> np.ndarray:
    """``|nabla_Y psi^H + 1/(4n-1) sum omega_i(X, Y) omega_i|`` maximised over coordinate Y."""
    p = np.asarray(p, dtype=float)
    n = model.n

    def sigma(q):
        return s2h_part(psi(q), model.basis_at(q), model.metric_at(q))

    sig = FormField(sigma, "constructed", psi.depth)
    X = codiff_field(model, psi)(p) if X is None else X
    N = nabla_psi(model, sig, p)
    g = model.metric_at(p)
    B = model.basis_at(p)
    wxy = np.einsum("...j,...ijy->...iy", X, B.omega)  # omega_i(X, e_y)
    res = N + np.einsum("...iy,...iuv->...yuv", wxy, B.omega) / (4 * n - 1)
    return np.max(form_norm(g[..., None, :, :], res), axis=-1)
