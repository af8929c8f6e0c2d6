"""Pointwise quaternionic and exterior algebra on R^{4n}.

Conventions used throughout the package:

* vectors carry an upper index, 2-forms are stored with both indices lowered
  as antisymmetric ``(m, m)`` arrays, endomorphisms act as ``A @ v``;
* ``omega_a = g(J_a ., .)``, i.e. ``omega_a = J_a.T @ g``;
* ``(X ^ Y)(U, V) = g(X, U) g(Y, V) - g(X, V) g(Y, U)``;
* the inner product on 2-forms is ``<a, b> = 1/2 a_{kl} b^{kl}`` so that
  decomposable forms pair through the Gram determinant and ``|omega_a|^2 = 2n``.

Every function accepts arbitrary leading batch dimensions.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

# right multiplication by i and j on a quaternion (1, i, j, k) block
_RIGHT_I = np.array([[0, -1, 0, 0],
                     [1, 0, 0, 0],
                     [0, 0, 0, 1],
                     [0, 0, -1, 0]], dtype=float)
_RIGHT_J = np.array([[0, 0, -1, 0],
                     [0, 0, 0, -1],
                     [1, 0, 0, 0],
                     [0, 1, 0, 0]], dtype=float)


class QAlgError(ValueError):
    """Raised on malformed pointwise input (dimension, symmetry, admissibility)."""


def quaternionic_dim(m: int) -> int:
    if m % 4 or m < 8:
        raise QAlgError(f"dimension {m} is not 4n with n >= 2")
    return m // 4


@dataclass(frozen=True)
class AdmissibleBasis:
    """A triple (J1, J2, J3) spanning Q at a point, with its Kaehler forms.

    ``J`` and ``omega`` have shape ``(..., 3, m, m)``.
    """

    J: np.ndarray
    omega: np.ndarray

    @classmethod
    def from_endos(cls, J, g) -> "AdmissibleBasis":
        J = np.asarray(J, dtype=float)
        return cls(J=J, omega=kahler_forms(J, g))

    @classmethod
    def from_forms(cls, omega, g) -> "AdmissibleBasis":
        omega = np.asarray(omega, dtype=float)
        return cls(J=form_to_endo(np.asarray(g)[..., None, :, :], omega), omega=omega)

    @property
    def m(self) -> int:
        return self.J.shape[-1]

    def rotated(self, R) -> "AdmissibleBasis":
        """Basis ``J'_a = sum_b R[a, b] J_b`` for ``R`` in SO(3)."""
        R = np.asarray(R, dtype=float)
        return AdmissibleBasis(J=np.einsum("ab,...bij->...aij", R, self.J),
                               omega=np.einsum("ab,...bij->...aij", R, self.omega))

    def residuals(self, g) -> dict[str, float]:
        """Max violation of each admissibility invariant."""
        g = np.asarray(g, dtype=float)
        m = self.m
        n = quaternionic_dim(m)
        eye = np.eye(m)
        J = self.J
        sq = max(_maxabs(J[..., a, :, :] @ J[..., a, :, :] + eye) for a in range(3))
        anti = max(_maxabs(J[..., a, :, :] @ J[..., b, :, :] + J[..., b, :, :] @ J[..., a, :, :])
                   for a in range(3) for b in range(a + 1, 3))
        prod = _maxabs(J[..., 0, :, :] @ J[..., 1, :, :] - J[..., 2, :, :])
        metric = max(_maxabs(np.swapaxes(J[..., a, :, :], -1, -2) @ g @ J[..., a, :, :] - g)
                     for a in range(3))
        kahler = _maxabs(self.omega - kahler_forms(J, g))
        gram = np.stack([np.stack([lambda2_inner(g, self.omega[..., a, :, :], self.omega[..., b, :, :])
                                   for b in range(3)], axis=-1) for a in range(3)], axis=-2)
        return {
            "square": sq,
            "anticommute": anti,
            "product": prod,
            "metric": metric,
            "kahler": kahler,
            "gram": _maxabs(gram - 2 * n * np.eye(3)),
        }

    def check(self, g, tol: float = 1e-10) -> None:
        bad = {k: v for k, v in self.residuals(g).items() if v > tol}
        if bad:
            raise QAlgError(f"admissible basis invariants violated: {bad}")


@dataclass(frozen=True)
class SplitForm:
    """The S^2H, S^2E and S^2H (x) Lambda^2_0 E components of a 2-form."""

    s2h: np.ndarray
    s2e: np.ndarray
    hw: np.ndarray

    @property
    def compatible(self) -> np.ndarray:
        return self.s2h + self.s2e


def _maxabs(a) -> float:
    a = np.asarray(a)
    return float(np.max(np.abs(a))) if a.size else 0.0


def standard_flat_basis(n: int) -> tuple[np.ndarray, AdmissibleBasis]:
    """Identity metric on H^n = R^{4n} with J1, J2 right multiplication by i, j.

    Coordinates are grouped ``(x, xi, xj, xk)`` per quaternionic factor and
    ``J3 := J1 J2``, which is right multiplication by ``-k``.
    """
    if int(n) != n or n < 2:
        raise QAlgError(f"n must be an integer >= 2, got {n!r}")
    n = int(n)
    blocks = np.eye(n)
    J1 = np.kron(blocks, _RIGHT_I)
    J2 = np.kron(blocks, _RIGHT_J)
    J = np.stack([J1, J2, J1 @ J2])
    g = np.eye(4 * n)
    return g, AdmissibleBasis.from_endos(J, g)


def kahler_forms(J, g) -> np.ndarray:
    """``omega_a(X, Y) = g(J_a X, Y)``; works on a stack of endomorphisms."""
    J = np.asarray(J, dtype=float)
    g = np.asarray(g, dtype=float)
    if J.ndim == g.ndim + 1:
        g = g[..., None, :, :]
    return np.swapaxes(J, -1, -2) @ g


def _check_square(*arrays) -> int:
    m = arrays[0].shape[-1]
    for a in arrays:
        if a.shape[-2:] != (m, m):
            raise QAlgError(f"dimension mismatch: {[x.shape for x in arrays]}")
    return m


def lambda2_inner(g, a, b) -> np.ndarray:
    """``<a, b> = 1/2 sum a_{kl} b^{kl}`` with indices raised by ``g``."""
    g, a, b = (np.asarray(x, dtype=float) for x in (g, a, b))
    _check_square(g, a, b)
    gi = np.linalg.inv(g)
    return 0.5 * np.sum((gi @ a @ gi) * b, axis=(-2, -1))


def lambda2_norm(g, a) -> np.ndarray:
    return np.sqrt(np.maximum(lambda2_inner(g, a, a), 0.0))


def orthonormal_frame(g) -> np.ndarray:
    """Columns ``e_k`` of the returned matrix are g-orthonormal (Cholesky)."""
    L = np.linalg.cholesky(np.asarray(g, dtype=float))
    return np.swapaxes(np.linalg.inv(L), -1, -2)


def form_to_endo(g, psi) -> np.ndarray:
    """Endomorphism ``A`` with ``g(A X, Y) = psi(X, Y)``."""
    g = np.asarray(g, dtype=float)
    psi = np.asarray(psi, dtype=float)
    return -np.linalg.solve(np.broadcast_to(g, psi.shape), psi)


def endo_to_form(g, A) -> np.ndarray:
    """Inverse of :func:`form_to_endo`: ``psi(X, Y) = g(A X, Y)``."""
    return np.swapaxes(np.asarray(A, dtype=float), -1, -2) @ np.asarray(g, dtype=float)


def endo_bracket_on_form(A, psi, g=None, *, skew_tol: float = 1e-8) -> np.ndarray:
    """2-form of the commutator ``[A, Psi]``: ``-psi(A X, Y) - psi(X, A Y)``.

    ``A`` is expected to be g-skew; otherwise the result depends on which
    identification of forms and endomorphisms is used and a warning is issued.
    """
    A = np.asarray(A, dtype=float)
    psi = np.asarray(psi, dtype=float)
    if g is not None:
        g = np.asarray(g, dtype=float)
        skew = g @ A + np.swapaxes(A, -1, -2) @ g
        if _maxabs(skew) > skew_tol * max(1.0, _maxabs(A)):
            warnings.warn("endomorphism is not g-skew; bracket is convention dependent",
                          RuntimeWarning, stacklevel=2)
    return -(np.swapaxes(A, -1, -2) @ psi + psi @ A)


def lower(g, X) -> np.ndarray:
    return np.einsum("...ij,...j->...i", np.asarray(g, dtype=float), np.asarray(X, dtype=float))


def raise_(g, alpha) -> np.ndarray:
    g = np.asarray(g, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    return np.linalg.solve(np.broadcast_to(g, alpha.shape[:-1] + g.shape[-2:]), alpha[..., None])[..., 0]


def wedge_covectors(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return a[..., :, None] * b[..., None, :] - b[..., :, None] * a[..., None, :]


def wedge(X, Y, g) -> np.ndarray:
    """``(X ^ Y)(U, V) = g(X, U) g(Y, V) - g(X, V) g(Y, U)``."""
    return wedge_covectors(lower(g, X), lower(g, Y))


def interior(X, psi) -> np.ndarray:
    """The 1-form ``psi(X, .)``."""
    return np.einsum("...a,...ab->...b", np.asarray(X, dtype=float), np.asarray(psi, dtype=float))


def wedge_1_2(alpha, psi) -> np.ndarray:
    """3-form ``alpha ^ psi`` with components ``a_i p_jk + a_j p_ki + a_k p_ij``."""
    alpha = np.asarray(alpha, dtype=float)
    psi = np.asarray(psi, dtype=float)
    t = alpha[..., :, None, None] * psi[..., None, :, :]
    return t + np.moveaxis(t, (-3, -2, -1), (-2, -1, -3)) + np.moveaxis(t, (-3, -2, -1), (-1, -3, -2))


def _frame_sum(psi, J, E) -> np.ndarray:
    # sum_k psi(e_k, J_a e_k) = tr(psi J_a E E^T) for each a
    K = J @ (E @ np.swapaxes(E, -1, -2))[..., None, :, :]
    return np.sum(psi[..., None, :, :] * np.swapaxes(K, -1, -2), axis=(-2, -1))


def s2h_part(psi, B: AdmissibleBasis, g, frame=None) -> np.ndarray:
    g = np.asarray(g, dtype=float)
    psi = np.asarray(psi, dtype=float)
    E = orthonormal_frame(g) if frame is None else np.asarray(frame, dtype=float)
    m = psi.shape[-1]
    coeff = _frame_sum(psi, B.J, E) / m
    return np.einsum("...a,...aij->...ij", coeff, B.omega)


def s2e_part(psi, B: AdmissibleBasis) -> np.ndarray:
    psi = np.asarray(psi, dtype=float)
    J = B.J
    turned = (np.swapaxes(J, -1, -2) @ psi[..., None, :, :] @ J).sum(axis=-3)
    return 0.25 * (psi + turned)


def project(psi, B: AdmissibleBasis, g, frame=None) -> SplitForm:
    """Split a 2-form into its S^2H, S^2E and remainder components."""
    g = np.asarray(g, dtype=float)
    psi = np.asarray(psi, dtype=float)
    _check_square(g, psi, B.J[..., 0, :, :])
    h = s2h_part(psi, B, g, frame)
    e = s2e_part(psi, B)
    return SplitForm(s2h=h, s2e=e, hw=psi - h - e)


def compatible_part(psi, B: AdmissibleBasis, g) -> np.ndarray:
    return s2h_part(psi, B, g) + s2e_part(psi, B)


def lambda2_basis(g) -> np.ndarray:
    """Orthonormal basis ``theta^a ^ theta^b`` (a < b) of 2-forms, shape (..., N, m, m)."""
    g = np.asarray(g, dtype=float)
    m = g.shape[-1]
    coframe = np.swapaxes(np.linalg.cholesky(g), -1, -2)  # rows are theta^a
    ia, ib = np.triu_indices(m, 1)
    return wedge_covectors(coframe[..., ia, :], coframe[..., ib, :])


def lambda2_coords(g, psi, basis=None) -> np.ndarray:
    basis = lambda2_basis(g) if basis is None else basis
    g = np.asarray(g, dtype=float)
    return lambda2_inner(g[..., None, :, :], basis, np.asarray(psi, dtype=float)[..., None, :, :])


def compatible_basis(B: AdmissibleBasis, g) -> np.ndarray:
    """Orthonormal basis of S^2H + S^2E: the 3 normalised Kaehler forms, then S^2E.

    Shape ``(3 + n(2n+1), m, m)``; single point only.
    """
    g = np.asarray(g, dtype=float)
    m = g.shape[-1]
    n = quaternionic_dim(m)
    full = lambda2_basis(g)
    images = s2e_part(full, AdmissibleBasis(J=B.J[None], omega=B.omega[None]))
    P = lambda2_coords(g, images, full)  # P[i, j] = <e_j, P_E e_i>
    w, v = np.linalg.eigh(0.5 * (P + P.T))
    dim_e = n * (2 * n + 1)
    keep = v[:, np.argsort(w)[-dim_e:]]
    e_forms = np.einsum("Nk,Nij->kij", keep, full)
    h_forms = B.omega / np.sqrt(2 * n)
    return np.concatenate([h_forms, e_forms])


def random_form(rng, m: int) -> np.ndarray:
    a = rng.standard_normal((m, m))
    return a - a.T


def random_s2e(rng, B: AdmissibleBasis, g) -> np.ndarray:
    return s2e_part(random_form(rng, B.m), B)


def random_compatible(rng, B: AdmissibleBasis, g) -> np.ndarray:
    return compatible_part(random_form(rng, B.m), B, g)
