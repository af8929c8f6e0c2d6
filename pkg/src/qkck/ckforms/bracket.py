"""The bracket of conformal-Killing 2-forms and the Lie algebras it generates."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..manifolds import ChartModel
from ..qalg import project
from .fields import FormField, VecField
from .operators import bracket_field, ck_residual, codiff_field, form_norm, lie_derivative, vector_bracket


class BracketError(ValueError):
    pass


CK_PRECONDITION_TOL = 1e-4


def ck_bracket(model: ChartModel, psi1: FormField, psi2: FormField, *, check_at=None,
               tol: float = CK_PRECONDITION_TOL) -> FormField:
    """``[psi1, psi2] = 1/2 (L_{delta psi1} psi2 - L_{delta psi2} psi1)``.

    The result carries the vector bracket of the codifferentials as its known
    codifferential, so it can be bracketed again without a third level of
    nested differences; :func:`bracket_codiff_residual` checks that identity
    against the numerical codifferential.  ``check_at`` points are used to
    verify that both inputs are conformal-Killing.
    """
    if check_at is not None:
        for k, psi in enumerate((psi1, psi2)):
            res = ck_residual(model, psi, check_at)
            bad = res.ck > tol * np.maximum(1.0, res.scale)
            if np.any(bad):
                raise BracketError(f"input {k + 1} is not conformal-Killing (residual {res.max_ck:.2e})")
    X1 = codiff_field(model, psi1)
    X2 = codiff_field(model, psi2)

    def fn(p):
        return 0.5 * (lie_derivative(model, X1, psi2, p) - lie_derivative(model, X2, psi1, p))

    depth = max(psi1.depth, psi2.depth, X1.depth, X2.depth) + 1
    return FormField(fn, "constructed", depth, codiff=bracket_field(model, X1, X2))


def bracket_codiff_residual(model: ChartModel, psi1: FormField, psi2: FormField, p) -> np.ndarray:
    """``|delta [psi1, psi2] - [delta psi1, delta psi2]|`` with the left side by finite differences."""
    from .operators import codifferential, vec_norm

    p = np.asarray(p, dtype=float)
    br = ck_bracket(model, psi1, psi2)
    lhs = codifferential(model, br, p)
    rhs = vector_bracket(model, codiff_field(model, psi1), codiff_field(model, psi2), p)
    return vec_norm(model.metric_at(p), lhs - rhs)


def bracket_hw_residual(model: ChartModel, psi1: FormField, psi2: FormField, p) -> np.ndarray:
    """Size of the non-compatible part of ``[psi1, psi2]``."""
    p = np.asarray(p, dtype=float)
    g = model.metric_at(p)
    value = ck_bracket(model, psi1, psi2)(p)
    return form_norm(g, project(value, model.basis_at(p), g).hw)


# --------------------------------------------------------------------------
# structure constants


@dataclass(frozen=True)
class Expansion:
    coeffs: np.ndarray
    residual: float  # worst least-squares misfit relative to the largest fitted field
    rank: int
    condition: float


def _expand(values, basis_values) -> Expansion:
    """Least-squares coefficients of each sampled field in ``values`` (Q, ...) over the
    sampled basis ``basis_values`` (K, ...); returns coefficients of shape (Q, K)."""
    A = basis_values.reshape(basis_values.shape[0], -1).T
    b = values.reshape(values.shape[0], -1).T
    coeffs, *_ = np.linalg.lstsq(A, b, rcond=None)
    misfit = A @ coeffs - b
    scale = max(float(np.max(np.linalg.norm(b, axis=0))), 1e-300)
    sv = np.linalg.svd(A, compute_uv=False)
    rank = int(np.sum(sv > 1e-10 * sv[0]))
    return Expansion(coeffs=coeffs.T, residual=float(np.max(np.linalg.norm(misfit, axis=0) / scale)),
                     rank=rank, condition=float(sv[0] / sv[-1]))


def _require_full_rank(exp: Expansion, K: int) -> None:
    if exp.rank < K:
        raise BracketError(f"sample points separate only {exp.rank} of {K} basis fields; use more points")


def form_structure_constants(model: ChartModel, forms: Sequence[FormField], points) -> tuple[np.ndarray, Expansion]:
    """``c[a, b, k]`` with ``[psi_a, psi_b] = sum_k c[a, b, k] psi_k``, fitted on ``points``."""
    points = np.asarray(points, dtype=float)
    K = len(forms)
    basis_values = np.stack([f(points) for f in forms])
    out = np.zeros((K, K, K))
    pairs = [(a, b) for a in range(K) for b in range(a + 1, K)]
    values = np.stack([ck_bracket(model, forms[a], forms[b])(points) for a, b in pairs])
    exp = _expand(values, basis_values)
    _require_full_rank(exp, K)
    for (a, b), c in zip(pairs, exp.coeffs):
        out[a, b] = c
        out[b, a] = -c
    return out, Expansion(coeffs=out, residual=exp.residual, rank=exp.rank, condition=exp.condition)


def vector_structure_constants(model: ChartModel, fields: Sequence[VecField], points) -> tuple[np.ndarray, Expansion]:
    """``f[a, b, k]`` with ``[X_a, X_b] = sum_k f[a, b, k] X_k``, fitted on ``points``."""
    points = np.asarray(points, dtype=float)
    K = len(fields)
    basis_values = np.stack([X(points) for X in fields])
    pairs = [(a, b) for a in range(K) for b in range(a + 1, K)]
    values = np.stack([vector_bracket(model, fields[a], fields[b], points) for a, b in pairs])
    exp = _expand(values, basis_values)
    _require_full_rank(exp, K)
    out = np.zeros((K, K, K))
    for (a, b), c in zip(pairs, exp.coeffs):
        out[a, b] = c
        out[b, a] = -c
    return out, Expansion(coeffs=out, residual=exp.residual, rank=exp.rank, condition=exp.condition)


def jacobi_residual(model: ChartModel, psi1: FormField, psi2: FormField, psi3: FormField, p) -> tuple[np.ndarray, np.ndarray]:
    """``|[[psi1, psi2], psi3] + cyclic|`` at ``p`` and the largest single term, by nested brackets."""
    p = np.asarray(p, dtype=float)
    g = model.metric_at(p)
    terms = []
    for a, b, c in ((psi1, psi2, psi3), (psi2, psi3, psi1), (psi3, psi1, psi2)):
        terms.append(ck_bracket(model, ck_bracket(model, a, b), c)(p))
    total = sum(terms)
    scale = np.max(np.stack([form_norm(g, t) for t in terms]), axis=0)
    return form_norm(g, total), scale
