"""Form and vector fields on a chart, evaluated on batches of points."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

PROVENANCES = ("closed-form", "transported", "constructed")


@dataclass(frozen=True)
class VecField:
    """A vector field ``fn: (..., m) -> (..., m)``.

    ``depth`` counts the finite-difference derivatives already inside ``fn``;
    differentiating a field with ``depth > 0`` uses the model's nested step.
    """

    fn: Callable[[np.ndarray], np.ndarray]
    provenance: str = "closed-form"
    depth: int = 0
    data: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")

    def __call__(self, points) -> np.ndarray:
        return self.fn(np.asarray(points, dtype=float))


@dataclass(frozen=True)
class FormField:
    """A 2-form field ``fn: (..., m) -> (..., m, m)``.

    ``codiff`` optionally carries a field known to equal the codifferential,
    which saves one level of nested differentiation.
    """

    fn: Callable[[np.ndarray], np.ndarray]
    provenance: str = "closed-form"
    depth: int = 0
    codiff: Optional[VecField] = None
    data: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")

    def __call__(self, points) -> np.ndarray:
        return self.fn(np.asarray(points, dtype=float))


def constant_vec(X) -> VecField:
    X = np.asarray(X, dtype=float)
    return VecField(lambda p: np.broadcast_to(X, p.shape[:-1] + X.shape).copy(), data={"value": X})


def constant_form(psi) -> FormField:
    psi = np.asarray(psi, dtype=float)
    zero = constant_vec(np.zeros(psi.shape[-1]))
    return FormField(lambda p: np.broadcast_to(psi, p.shape[:-1] + psi.shape).copy(),
                     codiff=zero, data={"value": psi})


def combine_vec(fields: Sequence[VecField], coeffs) -> VecField:
    coeffs = np.asarray(coeffs, dtype=float)
    fields = list(fields)

    def fn(p):
        return sum(c * f(p) for c, f in zip(coeffs, fields) if c != 0.0) + np.zeros(p.shape)

    prov = "closed-form" if all(f.provenance == "closed-form" for f in fields) else "constructed"
    return VecField(fn, prov, max(f.depth for f in fields), {"coeffs": coeffs})


def combine_forms(fields: Sequence[FormField], coeffs) -> FormField:
    """Linear combination; the codifferential is combined too when all inputs carry one."""
    coeffs = np.asarray(coeffs, dtype=float)
    fields = list(fields)

    def fn(p):
        m = p.shape[-1]
        return sum(c * f(p) for c, f in zip(coeffs, fields) if c != 0.0) + np.zeros(p.shape + (m,))

    codiff = None
    if all(f.codiff is not None for f in fields):
        codiff = combine_vec([f.codiff for f in fields], coeffs)
    prov = "closed-form" if all(f.provenance == "closed-form" for f in fields) else "constructed"
    return FormField(fn, prov, max(f.depth for f in fields), codiff, {"coeffs": coeffs})
