"""Chart models of quaternionic-Kaehler manifolds with finite-difference geometry.

Two chart models are provided: flat H^n and the affine chart ``q -> [q : 1]``
of HP^n with its Fubini-Study type metric.  The Grassmannian Gr_2(C^4) is only
available as an algebraic point model (:func:`qkck.curvalg.weylq_grassmannian`).

The quaternionic bundle Q of the HP^n chart is recovered spectrally from the
numerical curvature (:func:`basis_field`).  Bulk evaluations use the constant
right-multiplication triple, which the model constructor cross-checks against
the spectral recovery before the model is handed out.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import curvalg
from .fd import chunked, partials, partials4
from .qalg import (
    AdmissibleBasis,
    QAlgError,
    form_to_endo,
    kahler_forms,
    lambda2_basis,
    standard_flat_basis,
)
from .quat import as_quaternions, left_matrix, qconj

FD_STEP = 1e-4
CURV_STEP = 1e-3
NESTED_STEP = 1e-3
HPN_RADIUS = 0.8


class DomainError(ValueError):
    """A point or finite-difference stencil leaves the chart domain."""


class ModelValidationError(RuntimeError):
    """A chart model failed its self-validation."""


class BasisRecoveryError(RuntimeError):
    pass


@dataclass(frozen=True)
class ChartModel:
    name: str
    n: int
    radius: float
    metric_fn: Callable[[np.ndarray], np.ndarray]
    fd_step: float = FD_STEP
    curv_step: float = CURV_STEP
    nested_step: float = NESTED_STEP
    nu: float = 0.0
    is_flat: bool = False
    validation: dict = field(default_factory=dict, compare=False)

    @property
    def m(self) -> int:
        return 4 * self.n

    def check_domain(self, points, margin: float = 0.0) -> None:
        r = np.linalg.norm(np.asarray(points, dtype=float), axis=-1)
        if np.any(r + margin >= self.radius):
            raise DomainError(f"point at radius {float(np.max(r)):.4f} (+{margin:g}) outside "
                              f"{self.name} chart ball of radius {self.radius}")

    def metric_at(self, points) -> np.ndarray:
        return chunked(self.metric_fn, points)

    def basis_at(self, points) -> AdmissibleBasis:
        """Admissible basis used for bulk evaluation (constant J triple)."""
        g = self.metric_at(points)
        _, B0 = standard_flat_basis(self.n)
        J = np.broadcast_to(B0.J, g.shape[:-2] + B0.J.shape)
        return AdmissibleBasis(J=J, omega=kahler_forms(J, g))

    def context_at(self, p) -> curvalg.QKContext:
        """Pointwise context with W^Q = 0 (both chart models are W^Q-flat)."""
        p = np.asarray(p, dtype=float)
        g = self.metric_at(p)
        return curvalg.make_context(g, self.basis_at(p), self.nu, name=self.name)


# --------------------------------------------------------------------------
# metrics


def flat_metric(points):
    points = np.asarray(points, dtype=float)
    m = points.shape[-1]
    return np.broadcast_to(np.eye(m), points.shape[:-1] + (m, m)).copy()


def hpn_metric(points):
    """``Re[<v, w>/(1+|q|^2) - <v, q><q, w>/(1+|q|^2)^2]`` with ``<v, w> = sum conj(v_a) w_a``."""
    points = np.asarray(points, dtype=float)
    m = points.shape[-1]
    q = as_quaternions(points)
    s = 1.0 + np.sum(points * points, axis=-1)
    L = left_matrix(qconj(q))  # column c of L[a] is conj(q_a) e_c
    S = np.swapaxes(L, -1, -2).reshape(points.shape[:-1] + (m, 4))
    G = np.eye(m) / s[..., None, None] - (S @ np.swapaxes(S, -1, -2)) / (s * s)[..., None, None]
    return G


def flat_model(n: int) -> ChartModel:
    if n < 2:
        raise QAlgError("n must be >= 2")
    return ChartModel(name="flat", n=n, radius=np.inf, metric_fn=flat_metric, nu=0.0, is_flat=True)


# --------------------------------------------------------------------------
# Levi-Civita geometry


def christoffels(model: ChartModel, p, h: Optional[float] = None) -> np.ndarray:
    """``Gamma[..., k, i, j] = Gamma^k_{ij}`` from fourth-order central differences of g."""
    h = model.fd_step if h is None else h
    p = np.asarray(p, dtype=float)
    model.check_domain(p, h)
    if model.is_flat:
        return np.zeros(p.shape + (model.m, model.m))

    def gamma(pts):
        g = model.metric_fn(pts)
        dg = partials4(model.metric_fn, pts, h)  # dg[..., l, i, j] = d_l g_ij
        # t[..., l, i, j] = d_i g_lj + d_j g_li - d_l g_ij
        t = np.swapaxes(dg, -3, -2) + np.moveaxis(dg, -3, -1) - dg
        m = g.shape[-1]
        flat = t.reshape(t.shape[:-3] + (m, m * m))
        return 0.5 * (np.linalg.inv(g) @ flat).reshape(t.shape)

    return chunked(gamma, p, chunk=2048)


def riemann(model: ChartModel, p, h: Optional[float] = None, *, with_quality: bool = False):
    """Lowered Riemann tensor by central differences of the Christoffel symbols.

    Antisymmetry in each pair and pair symmetry are enforced; the asymmetry
    before enforcement is returned as a quality metric when requested.
    """
    h = model.curv_step if h is None else h
    p = np.asarray(p, dtype=float)
    model.check_domain(p, h + model.fd_step)
    G = christoffels(model, p)
    dG = partials(lambda x: christoffels(model, x), p, h)  # [..., a, d, b, c] = d_a Gamma^d_bc
    up = (np.einsum("...adbc->...abcd", dG) - np.einsum("...bdac->...abcd", dG)
          + np.einsum("...ebc,...dae->...abcd", G, G) - np.einsum("...eac,...dbe->...abcd", G, G))
    g = model.metric_at(p)
    R = np.einsum("...abce,...ed->...abcd", up, g)
    raw = R
    R = 0.5 * (R - np.swapaxes(R, -4, -3))
    R = 0.5 * (R - np.swapaxes(R, -2, -1))
    R = 0.5 * (R + np.moveaxis(R, (-4, -3), (-2, -1)))
    if not with_quality:
        return R
    scale = max(float(np.max(np.abs(R))), 1e-300)
    quality = {
        "asym12": float(np.max(np.abs(raw + np.swapaxes(raw, -4, -3)))) / scale,
        "asym34": float(np.max(np.abs(raw + np.swapaxes(raw, -2, -1)))) / scale,
        "pair": float(np.max(np.abs(raw - np.moveaxis(raw, (-4, -3), (-2, -1))))) / scale,
        "bianchi": float(np.max(np.abs(R + np.einsum("...bcad->...abcd", R)
                                       + np.einsum("...cabd->...abcd", R)))) / scale,
    }
    return R, quality


def richardson_riemann(model: ChartModel, p, h: Optional[float] = None) -> np.ndarray:
    """Curvature with the leading O(h^2) error of the outer difference removed."""
    h = model.curv_step if h is None else h
    return (4.0 * riemann(model, p, h / 2) - riemann(model, p, h)) / 3.0


@dataclass(frozen=True)
class GeometrySample:
    p: np.ndarray
    g: np.ndarray
    B: AdmissibleBasis
    Gamma: np.ndarray
    Rg: np.ndarray
    nu: float
    quality: dict


def geometry_sample(model: ChartModel, p, basis: str = "spectral") -> GeometrySample:
    p = np.asarray(p, dtype=float)
    R, quality = riemann(model, p, with_quality=True)
    g = model.metric_at(p)
    nu, misfit = curvalg.einstein_nu(R, g, model.n) if not model.is_flat else (0.0, 0.0)
    quality = dict(quality, einstein_misfit=misfit)
    B = basis_field(model, p, method=basis, R=R)
    return GeometrySample(p=p, g=g, B=B, Gamma=christoffels(model, p), Rg=R, nu=nu, quality=quality)


# --------------------------------------------------------------------------
# the quaternionic structure


def procrustes_rotation(B: AdmissibleBasis, ref: AdmissibleBasis, g) -> np.ndarray:
    """Rotation ``R`` in SO(3) making ``B.rotated(R)`` closest to ``ref``."""
    from .qalg import lambda2_inner

    M = np.array([[float(lambda2_inner(g, ref.omega[a], B.omega[b])) for b in range(3)]
                  for a in range(3)])
    U, _, Vt = np.linalg.svd(M)
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(U @ Vt))])
    return U @ D @ Vt


def _isolated_triple(w) -> tuple[int, float]:
    best, ratio = -1, -np.inf
    scale = max(float(np.max(np.abs(w))), 1e-300)
    for i in range(len(w) - 2):
        spread = w[i + 2] - w[i]
        left = w[i] - w[i - 1] if i > 0 else np.inf
        right = w[i + 3] - w[i + 2] if i + 3 < len(w) else np.inf
        gap = min(left, right)
        r = gap / max(spread, 1e-13 * scale)
        if r > ratio:
            best, ratio = i, r
    return best, ratio


def spectral_basis(R, g, n: int, min_gap_ratio: float = 1e3) -> tuple[AdmissibleBasis, dict]:
    """Recover Q as the isolated 3-dimensional eigenspace of R acting on 2-forms."""
    basis = lambda2_basis(g)
    M = curvalg.lambda2_matrix(R, g)
    M = 0.5 * (M + M.T)
    w, v = np.linalg.eigh(M)
    i, ratio = _isolated_triple(w)
    if ratio < min_gap_ratio:
        raise BasisRecoveryError(f"no isolated 3-dimensional eigenspace (gap ratio {ratio:.3g})")
    forms = np.sqrt(2 * n) * np.einsum("Nk,Nij->kij", v[:, i:i + 3], basis)
    J = form_to_endo(g, forms)
    if np.max(np.abs(J[0] @ J[1] - J[2])) > np.max(np.abs(J[0] @ J[1] + J[2])):
        forms[2] = -forms[2]
        J[2] = -J[2]
    info = {"eigenvalues": w, "index": i, "gap_ratio": float(ratio), "eigenvalue": float(w[i:i + 3].mean())}
    return AdmissibleBasis(J=J, omega=forms), info


def basis_field(model: ChartModel, p, method: str = "spectral", *, R=None, rng=None,
                reference: AdmissibleBasis | None = None) -> AdmissibleBasis:
    """Admissible basis of Q at ``p``.

    ``method="spectral"`` recovers Q from the curvature (flat model: the
    constant basis); ``method="chart"`` returns the constant right-multiplication
    triple.  ``rng`` applies a random SO(3) rotation; ``reference`` aligns the
    result to a neighbouring basis by orthogonal Procrustes.
    """
    p = np.asarray(p, dtype=float)
    g = model.metric_at(p)
    if model.is_flat or method == "chart":
        B = model.basis_at(p)
    elif method == "spectral":
        R = riemann(model, p) if R is None else R
        B, _ = spectral_basis(R, g, model.n)
    else:
        raise ValueError(f"unknown basis method {method!r}")
    if rng is not None:
        from scipy.spatial.transform import Rotation

        B = B.rotated(Rotation.random(random_state=rng).as_matrix())
    if reference is not None:
        B = B.rotated(procrustes_rotation(B, reference, g))
    return B


def basis_along(model: ChartModel, points, method: str = "spectral") -> list[AdmissibleBasis]:
    """Bases at successive path points, each Procrustes-aligned to its predecessor."""
    out: list[AdmissibleBasis] = []
    for p in np.asarray(points, dtype=float):
        out.append(basis_field(model, p, method, reference=out[-1] if out else None))
    return out


def q_projector(B: AdmissibleBasis, g) -> np.ndarray:
    """Orthogonal projector onto span(omega_a) in Lambda^2 coordinates."""
    from .qalg import lambda2_coords

    c = lambda2_coords(g, B.omega)  # (3, N)
    return c.T @ np.linalg.solve(c @ c.T, c)


# --------------------------------------------------------------------------
# covariant derivatives of fields


def nabla_vector(model: ChartModel, field_fn, p, h: Optional[float] = None) -> np.ndarray:
    """``out[..., a, b] = (nabla_a X)^b``."""
    h = model.fd_step if h is None else h
    p = np.asarray(p, dtype=float)
    model.check_domain(p, h)
    dX = partials(field_fn, p, h)
    X = field_fn(p)
    G = christoffels(model, p)
    return dX + np.einsum("...bae,...e->...ab", G, X)


def nabla_form(model: ChartModel, field_fn, p, h: Optional[float] = None) -> np.ndarray:
    """``out[..., a, b, c] = (nabla_a psi)_{bc}``."""
    h = model.fd_step if h is None else h
    p = np.asarray(p, dtype=float)
    model.check_domain(p, h)
    dpsi = partials(field_fn, p, h)
    psi = field_fn(p)
    G = christoffels(model, p)
    return (dpsi - np.einsum("...eab,...ec->...abc", G, psi)
            - np.einsum("...eac,...be->...abc", G, psi))


def covariant_derivative(model: ChartModel, field_fn, p, Z=None, h: Optional[float] = None):
    """nabla of a vector or 2-form field; along ``Z`` if given, else all directions."""
    p = np.asarray(p, dtype=float)
    sample = field_fn(p)
    extra = sample.ndim - (p.ndim - 1)
    if extra == 1:
        full = nabla_vector(model, field_fn, p, h)
    elif extra == 2:
        full = nabla_form(model, field_fn, p, h)
    else:
        raise ValueError("field must return vectors or 2-forms")
    if Z is None:
        return full
    lead = p.ndim - 1
    Z = np.broadcast_to(np.asarray(Z, dtype=float), p.shape).reshape(p.shape + (1,) * extra)
    return np.sum(Z * full, axis=lead)


def metricity_residual(model: ChartModel, p, h: Optional[float] = None) -> float:
    """``max |nabla g|`` at ``p`` from finite differences."""
    h = model.fd_step if h is None else h
    p = np.asarray(p, dtype=float)
    dg = partials4(model.metric_fn, p, h)
    g = model.metric_at(p)
    G = christoffels(model, p)
    ng = dg - np.einsum("...eab,...ec->...abc", G, g) - np.einsum("...eac,...be->...abc", G, g)
    return float(np.max(np.abs(ng)))


# --------------------------------------------------------------------------
# HP^n


def random_points(rng, count: int, m: int, radius: float) -> np.ndarray:
    d = rng.standard_normal((count, m))
    d /= np.linalg.norm(d, axis=-1, keepdims=True)
    r = radius * rng.uniform(0.0, 1.0, size=(count, 1)) ** (1.0 / m)
    return d * r


def validate_hpn(model: ChartModel, points) -> dict:
    """Check the chart curvature against the W^Q = 0 decomposition.

    Returns residuals; raises :class:`ModelValidationError` naming the broken one.
    """
    nus, weyl, spectral_dev, einstein = [], [], [], []
    for p in points:
        R = riemann(model, p)
        g = model.metric_at(p)
        nu, misfit = curvalg.einstein_nu(R, g, model.n)
        nus.append(nu)
        einstein.append(misfit)
        B = model.basis_at(p)
        base = curvalg.base_curvature_tensor(g, B, nu)
        weyl.append(float(np.linalg.norm(R - base) / np.linalg.norm(R)))
        Bs, _ = spectral_basis(R, g, model.n)
        spectral_dev.append(float(np.max(np.abs(q_projector(Bs, g) - q_projector(B, g)))))
    nus = np.array(nus)
    report = {
        "nu": float(nus[0]),
        "nu_spread": float((nus.max() - nus.min()) / abs(nus[0])),
        "weyl_residual": float(max(weyl)),
        "einstein_misfit": float(max(einstein)),
        "basis_deviation": float(max(spectral_dev)),
    }
    limits = {"nu_spread": 1e-4, "weyl_residual": 1e-4, "einstein_misfit": 1e-4, "basis_deviation": 1e-5}
    broken = {k: report[k] for k, lim in limits.items() if report[k] > lim}
    if broken:
        raise ModelValidationError(f"HP^{model.n} chart failed self-validation: {broken}")
    return report


@functools.lru_cache(maxsize=8)
def hpn_chart_model(n: int, *, validate: bool = True, samples: int = 10, seed: int = 0) -> ChartModel:
    """HP^n in the affine chart ``q -> [q : 1]``, ball ``|q| < 0.8``.

    ``nu`` is measured from the Ricci contraction at the chart centre.  With
    ``validate`` the curvature is checked against the W^Q = 0 decomposition at
    the centre and at ``samples`` random points.
    """
    if n < 2:
        raise QAlgError("n must be >= 2")
    probe = ChartModel(name="hpn", n=n, radius=HPN_RADIUS, metric_fn=hpn_metric)
    origin = np.zeros(4 * n)
    nu, _ = curvalg.einstein_nu(richardson_riemann(probe, origin), probe.metric_at(origin), n)
    validation: dict = {}
    if validate:
        rng = np.random.default_rng(seed)
        pts = np.concatenate([origin[None], random_points(rng, samples, 4 * n, 0.6)])
        validation = validate_hpn(probe, pts)
    return ChartModel(name="hpn", n=n, radius=HPN_RADIUS, metric_fn=hpn_metric, nu=nu,
                      validation=validation)


def get_model(name: str, n: int = 2):
    """Model by selection string: ``flat``, ``hpn`` or ``gr2`` (point model)."""
    if name == "flat":
        return flat_model(n)
    if name == "hpn":
        return hpn_chart_model(n)
    if name == "gr2":
        if n != 2:
            raise ValueError("the Grassmannian point model exists only for n = 2")
        return curvalg.weylq_grassmannian()
    raise ValueError(f"unknown model {name!r}")
