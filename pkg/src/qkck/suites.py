"""Named verification suites behind ``qkck verify``.

Every check returns one number: a residual compared against an upper bound, a
quantity that must exceed a lower bound, or an integer that must match exactly.
All bounds live in :data:`TOLERANCES`; ``tol_scale`` multiplies upper bounds
and divides lower bounds.  Each check draws from its own generator seeded with
``(seed, crc32(name))`` so adding a check never perturbs the samples of another.
"""

from __future__ import annotations

import time
import zlib
from dataclasses import asdict, dataclass, replace
from typing import Callable

import numpy as np
from scipy.spatial.transform import Rotation

from . import curvalg, qalg
from .ckforms import (
    FormField,
    PathSpec,
    ProlongSection,
    VecField,
    bracket_codiff_residual,
    bracket_hw_residual,
    ck_bracket,
    ck_residual,
    codiff_ratios,
    codifferential,
    d_formula_residual,
    d_parallel_residual,
    exterior_derivative,
    flat_ck_form,
    form_structure_constants,
    hamiltonian_residual,
    hpn_ck_form,
    holonomy_dimension,
    jacobi_residual,
    killing_check,
    killing_field,
    killing_fields_hpn,
    killing_to_ck,
    penrose,
    penrose_section,
    prolong_transport,
    s2e_correspondence,
    sp_basis,
    sp_structure_constants,
    transport_along,
    transported_fields,
    twistor_residual,
    vector_structure_constants,
)
from .ckforms.operators import exterior_derivative_1form, form_norm, nabla_psi, vec_norm
from .manifolds import (
    flat_model,
    hpn_chart_model,
    metricity_residual,
    q_projector,
    random_points,
    riemann,
    richardson_riemann,
    spectral_basis,
)

SUITES = ("qalg", "curvature", "flat", "hpn", "grassmannian", "ck", "bracket", "dim")
SAMPLE_RADIUS = 0.4

# name -> (bound, kind, reference); kind is "upper", "lower" or "exact"
TOLERANCES: dict[str, tuple[float, str, str]] = {
    "qalg.admissible": (1e-12, "upper", "admissible basis: J_a^2 = -1, J_1 J_2 = J_3, g-orthogonal"),
    "qalg.kahler_norms": (1e-10, "upper", "Kaehler form norms |omega_i|^2 = 2n"),
    "qalg.split_orthogonality": (1e-10, "upper", "Lambda^2 = S^2H + S^2E + remainder, orthogonal"),
    "qalg.projection_idempotent": (1e-10, "upper", "projections onto S^2H and S^2E are idempotent"),
    "qalg.split_dimensions": (0, "exact", "dimensions 3, n(2n+1) and the remainder"),
    "qalg.commutator": (1e-12, "upper", "[J_1, omega_2] = 2 omega_3"),
    "curvature.base_symmetries": (1e-12, "upper", "HP^n model curvature has Riemann symmetries"),
    "curvature.base_spectrum": (1e-10, "upper", "model curvature eigenvalues on S^2H, S^2E, remainder"),
    "curvature.einstein": (1e-12, "upper", "Ric = nu (n+2) g for the model curvature"),
    "curvature.put_identity": (1e-10, "upper", "(A ^ Id)^{S^2E}(v) = [A, v] on S^2E"),
    "curvature.rd_routes": (1e-10, "upper", "curvature of D: closed form against R^nabla + [A_Y, A_Z]"),
    "curvature.rd_vanishes": (1e-10, "upper", "curvature of D vanishes when W^Q = 0"),
    "curvature.w1_flat": (1e-12, "upper", "Weyl bracket identity in the W^Q = 0 regime"),
    "grassmannian.weylq_valid": (1e-9, "upper", "W^Q of Gr_2(C^4) is J-invariant, Ricci-null, algebraic"),
    "grassmannian.weyl_fraction": (0.1, "lower", "Gr_2(C^4) has W^Q != 0"),
    "grassmannian.RD_nonzero": (1e-3, "lower", "curvature of D is non-zero when W^Q != 0"),
    "grassmannian.rd_kernel": (20, "upper", "common kernel of the curvature of D is proper"),
    "grassmannian.rd_routes": (1e-10, "upper", "curvature of D: closed form against direct route"),
    "flat.codiff_constant": (1e-12, "upper", "constant forms are co-closed on flat H^n"),
    "flat.codiff_family": (1e-10, "upper", "closed-form CK family has codifferential X_0"),
    "flat.ck_family": (1e-9, "upper", "closed-form CK family solves the CK and prolonged systems"),
    "flat.non_ck_guard": (1e-2, "lower", "generic quadratic forms are not conformal-Killing"),
    "flat.d_squared": (1e-9, "upper", "d o d = 0"),
    "flat.killing_fields": (1e-10, "upper", "translations and sp(n) rotations are Killing"),
    "flat.transport_closed_form": (1e-10, "upper", "transport of D reproduces the closed-form family"),
    "flat.transport_zero": (1e-14, "upper", "the zero section transports to zero"),
    "flat.compatible_killing_parallel": (1e-4, "upper", "sections with X = 0 are parallel forms"),
    "flat.holonomy": (0, "exact", "D is flat: fixed space is the whole fiber"),
    "flat.bracket_commute": (1e-6, "upper", "brackets of the flat family are co-closed"),
    "hpn.model_validation": (1e-4, "upper", "chart curvature matches the W^Q = 0 model"),
    "hpn.curvature_model": (1e-4, "upper", "chart curvature equals nu times the model curvature"),
    "hpn.nu_constant": (1e-4, "upper", "reduced scalar curvature is constant"),
    "hpn.spectral_basis": (1e-5, "upper", "chart triple spans the curvature-determined Q"),
    "hpn.metricity": (1e-10, "upper", "Levi-Civita connection is metric"),
    "hpn.torsion_free": (1e-8, "upper", "d from partials equals d from nabla"),
    "hpn.killing_count": (0, "exact", "sp(n+1) gives (n+1)(2n+3) Killing fields"),
    "hpn.killing": (1e-5, "upper", "L_X g = 0 for the sp(n+1) fields"),
    "hpn.killing_divergence": (1e-5, "upper", "Killing fields are divergence-free"),
    "hpn.killing_hw": (1e-4, "upper", "nabla X of a Killing field is compatible"),
    "ck.ck_residual": (1e-4, "upper", "Killing-to-CK images solve the CK equation"),
    "ck.codiff_inverse": (1e-4, "upper", "delta of the Killing-to-CK image returns X"),
    "ck.prolong_equation": (1e-4, "upper", "nabla psi equals the coefficient of delta psi"),
    "ck.d_parallel": (1e-4, "upper", "(psi, delta psi) is D-parallel"),
    "ck.codiff_ratio_s2h": (1e-4, "upper", "delta psi^H = -3/(4n-1) delta psi"),
    "ck.codiff_ratio_s2e": (1e-4, "upper", "delta psi^E = (4n+2)/(4n-1) delta psi"),
    "ck.dpsi_formula": (1e-4, "upper", "d psi = -3/(4n-1) sum J_i X ^ omega_i"),
    "ck.twistor": (1e-4, "upper", "psi^H solves the twistor equation"),
    "ck.penrose": (1e-4, "upper", "Penrose operator annihilates (nabla X)^H sections"),
    "ck.penrose_inverse": (1e-4, "upper", "delta sigma = X for the Penrose section"),
    "ck.s2e_round_trip": (1e-4, "upper", "psi is recovered from psi^E"),
    "ck.hamiltonian": (1e-4, "upper", "nabla psi^E is determined by X"),
    "ck.transport_ck": (1e-4, "upper", "transported D-parallel sections are conformal-Killing"),
    "ck.transport_codiff": (1e-4, "upper", "transported X equals delta psi"),
    "ck.transport_order": (0.5, "upper", "RK4 transport converges at order 4"),
    "ck.linearity": (1e-9, "upper", "Killing-to-CK map is linear"),
    "ck.rank": (0, "exact", "Killing-to-CK images are linearly independent"),
    "bracket.codiff_homomorphism": (1e-3, "upper", "delta [psi_1, psi_2] = [delta psi_1, delta psi_2]"),
    "bracket.compatible": (1e-4, "upper", "bracket of compatible CK forms is compatible"),
    "bracket.structure_constants": (1e-3, "upper", "CK algebra constants equal Killing algebra constants"),
    "bracket.killing_constants": (1e-6, "upper", "Killing algebra is sp(n+1)"),
    "bracket.jacobi": (1e-3, "upper", "Jacobi identity for the CK bracket"),
    "bracket.antisymmetry": (1e-12, "upper", "[psi, psi] = 0"),
    "dim.holonomy_fixed_dim": (0, "exact", "dim of parallel sections is (n+1)(2n+3)"),
    "dim.holonomy_gap": (1e3, "lower", "singular value gap at the fixed space"),
    "dim.holonomy_drift": (1e-5, "upper", "transport stays in S^2H + S^2E + TM"),
    "dim.killing_ck_rank": (0, "exact", "(n+1)(2n+3) independent CK forms from Killing fields"),
}


class SuiteError(ValueError):
    pass


@dataclass(frozen=True)
class SuiteConfig:
    suite: str = "all"
    n: int = 2
    samples: int = 4
    seed: int = 0
    fd_step: float | None = None
    tol_scale: float = 1.0
    report_path: str | None = None
    manifold: str = "hpn"
    loops: int = 64

    def validate(self) -> None:
        if self.suite not in SUITES + ("all",):
            raise SuiteError(f"unknown suite {self.suite!r}")
        if self.n < 2:
            raise SuiteError("n must be >= 2")
        if self.samples < 1:
            raise SuiteError("samples must be >= 1")
        if not self.tol_scale > 0:
            raise SuiteError("tol_scale must be positive")
        if self.fd_step is not None and not self.fd_step > 0:
            raise SuiteError("fd_step must be positive")
        if self.manifold not in ("flat", "hpn"):
            raise SuiteError(f"unknown manifold {self.manifold!r}")
        if self.loops < 1:
            raise SuiteError("loops must be >= 1")
        if self.suite in ("grassmannian", "all") and self.n != 2:
            raise SuiteError("the Grassmannian suite exists only for n = 2")


@dataclass(frozen=True)
class Check:
    name: str
    fn: Callable[["RunContext"], float]


class RunContext:
    def __init__(self, config: SuiteConfig):
        self.config = config
        self.n = config.n
        self.m = 4 * config.n
        self.samples = config.samples
        self._cache: dict = {}

    def rng(self, name: str) -> np.random.Generator:
        return np.random.default_rng([self.config.seed, zlib.crc32(name.encode())])

    def model(self, name: str):
        if name not in self._cache:
            model = flat_model(self.n) if name == "flat" else hpn_chart_model(self.n)
            if self.config.fd_step is not None:
                model = replace(model, fd_step=self.config.fd_step)
            self._cache[name] = model
        return self._cache[name]

    def points(self, name: str, count: int | None = None, radius: float = SAMPLE_RADIUS) -> np.ndarray:
        return random_points(self.rng(name + "/points"), count or self.samples, self.m, radius)

    def memo(self, key, make):
        if key not in self._cache:
            self._cache[key] = make()
        return self._cache[key]

    def hpn_family(self):
        def make():
            model = self.model("hpn")
            fields = killing_fields_hpn(self.n, model, check=False)
            return [killing_to_ck(model, X) for X in fields], fields
        return self.memo("hpn_family", make)

    def random_ck(self, name: str, count: int) -> list[FormField]:
        rng = self.rng(name + "/coeffs")
        K = (self.n + 1) * (2 * self.n + 3)
        return [hpn_ck_form(self.model("hpn"), rng.standard_normal(K)) for _ in range(count)]


REGISTRY: dict[str, list[Check]] = {s: [] for s in SUITES}


def check(name: str):
    if name not in TOLERANCES:
        raise KeyError(f"check {name!r} has no tolerance entry")

    def deco(fn):
        REGISTRY[name.split(".")[0]].append(Check(name, fn))
        return fn
    return deco


def _max(x) -> float:
    return float(np.max(np.abs(np.asarray(x, dtype=float))))


def _random_admissible(rng, n):
    g, B = qalg.standard_flat_basis(n)
    return g, B.rotated(Rotation.random(random_state=rng).as_matrix())


# --------------------------------------------------------------------------
# qalg


@check("qalg.admissible")
def _(ctx):
    g, B = _random_admissible(ctx.rng("qalg.admissible"), ctx.n)
    g0, B0 = qalg.standard_flat_basis(ctx.n)
    return max(max(B.residuals(g).values()), max(B0.residuals(g0).values()))


@check("qalg.kahler_norms")
def _(ctx):
    g, B = _random_admissible(ctx.rng("qalg.kahler_norms"), ctx.n)
    return _max(qalg.lambda2_inner(g, B.omega, B.omega) - 2 * ctx.n)


@check("qalg.split_orthogonality")
def _(ctx):
    rng = ctx.rng("qalg.split_orthogonality")
    g, B = _random_admissible(rng, ctx.n)
    worst = 0.0
    for _ in range(ctx.samples):
        psi = qalg.random_form(rng, ctx.m)
        s = qalg.project(psi, B, g)
        worst = max(worst, _max(s.s2h + s.s2e + s.hw - psi))
        for a, b in ((s.s2h, s.s2e), (s.s2h, s.hw), (s.s2e, s.hw)):
            worst = max(worst, abs(float(qalg.lambda2_inner(g, a, b))))
    return worst


@check("qalg.projection_idempotent")
def _(ctx):
    rng = ctx.rng("qalg.projection_idempotent")
    g, B = _random_admissible(rng, ctx.n)
    worst = 0.0
    for _ in range(ctx.samples):
        psi = qalg.random_form(rng, ctx.m)
        h = qalg.s2h_part(psi, B, g)
        e = qalg.s2e_part(psi, B)
        worst = max(worst, _max(qalg.s2h_part(h, B, g) - h), _max(qalg.s2e_part(e, B) - e),
                    _max(qalg.s2h_part(e, B, g)), _max(qalg.s2e_part(h, B)))
    return worst


@check("qalg.split_dimensions")
def _(ctx):
    g, B = qalg.standard_flat_basis(ctx.n)
    basis = qalg.lambda2_basis(g)
    n = ctx.n
    ranks = [np.linalg.matrix_rank(np.array([f(b).ravel() for b in basis]), tol=1e-9) for f in
             (lambda b: qalg.s2h_part(b, B, g), lambda b: qalg.s2e_part(b, B),
              lambda b: qalg.project(b, B, g).hw)]
    expected = [3, n * (2 * n + 1), len(basis) - 3 - n * (2 * n + 1)]
    return float(sum(abs(int(r) - e) for r, e in zip(ranks, expected)))


@check("qalg.commutator")
def _(ctx):
    g, B = _random_admissible(ctx.rng("qalg.commutator"), ctx.n)
    lhs = qalg.endo_bracket_on_form(B.J[0], B.omega[1])
    return _max(lhs - 2.0 * B.omega[2])


# --------------------------------------------------------------------------
# curvature algebra


def _model_context(rng, n, nu=None):
    g, B = _random_admissible(rng, n)
    nu = rng.uniform(0.5, 2.0) * rng.choice([-1.0, 1.0]) if nu is None else nu
    return curvalg.make_context(g, B, float(nu))


@check("curvature.base_symmetries")
def _(ctx):
    c = _model_context(ctx.rng("curvature.base_symmetries"), ctx.n)
    return max(curvalg.curvature_residuals(curvalg.base_curvature(c), c.g).values())


@check("curvature.base_spectrum")
def _(ctx):
    c = _model_context(ctx.rng("curvature.base_spectrum"), ctx.n)
    n, nu = ctx.n, c.nu
    ev = np.sort(np.linalg.eigvalsh(curvalg.lambda2_matrix(curvalg.base_curvature(c), c.g)))
    hw = ctx.m * (ctx.m - 1) // 2 - 3 - n * (2 * n + 1)
    # -n nu on the Kaehler forms, -nu on S^2E, 0 on the remainder
    expected = np.sort(np.concatenate([np.full(3, -n * nu), np.full(n * (2 * n + 1), -nu), np.zeros(hw)]))
    return _max(ev - expected)


@check("curvature.einstein")
def _(ctx):
    c = _model_context(ctx.rng("curvature.einstein"), ctx.n)
    nu, misfit = curvalg.einstein_nu(curvalg.base_curvature(c), c.g, ctx.n)
    return max(abs(nu - c.nu), misfit)


@check("curvature.put_identity")
def _(ctx):
    rng = ctx.rng("curvature.put_identity")
    worst = 0.0
    contexts = [_model_context(rng, ctx.n)]
    if ctx.n == 2:
        contexts.append(curvalg.weylq_grassmannian())
    for c in contexts:
        for _ in range(ctx.samples):
            A = qalg.random_s2e(rng, c.B, c.g)
            v = qalg.random_s2e(rng, c.B, c.g)
            worst = max(worst, curvalg.check_identity_put(A, v, c))
    return worst


@check("curvature.rd_routes")
def _(ctx):
    rng = ctx.rng("curvature.rd_routes")
    c = _model_context(rng, ctx.n)
    fiber = curvalg.Fiber(c)
    worst = 0.0
    for _ in range(ctx.samples):
        Y, Z = rng.standard_normal((2, ctx.m))
        worst = max(worst, _max(curvalg.rd_matrix(Y, Z, c, fiber) - curvalg.rd_matrix_direct(Y, Z, c, fiber=fiber)))
    return worst


def rd_random_norms(rng, c, count):
    """``|R^D_{Y,Z}(psi, X)|`` over random unit inputs, closed form and direct route."""
    fiber = curvalg.Fiber(c)
    closed, direct = [], []
    for _ in range(count):
        Y, Z = rng.standard_normal((2, c.m))
        Y /= np.linalg.norm(Y)
        Z /= np.linalg.norm(Z)
        v = rng.standard_normal(fiber.dim)
        v /= np.linalg.norm(v)
        psi, X = fiber.unpack(v)
        closed.append(np.linalg.norm(fiber.pack(*curvalg.curvature_RD(Y, Z, psi, X, c))))
        direct.append(np.linalg.norm(curvalg.rd_matrix_direct(Y, Z, c, fiber=fiber) @ v))
    return np.array(closed), np.array(direct)


@check("curvature.rd_vanishes")
def _(ctx):
    rng = ctx.rng("curvature.rd_vanishes")
    worst = 0.0
    for c in (curvalg.flat_context(ctx.n), _model_context(rng, ctx.n)):
        closed, direct = rd_random_norms(rng, c, 200 if ctx.samples >= 4 else 50)
        worst = max(worst, _max(closed), _max(direct))
    return worst


@check("curvature.w1_flat")
def _(ctx):
    rng = ctx.rng("curvature.w1_flat")
    c = _model_context(rng, ctx.n)
    return max(curvalg.check_identity_w1(c, qalg.random_s2e(rng, c.B, c.g), qalg.random_s2e(rng, c.B, c.g))
               for _ in range(ctx.samples))


# --------------------------------------------------------------------------
# Grassmannian


def _gr2(ctx):
    return ctx.memo("gr2", curvalg.weylq_grassmannian)


@check("grassmannian.weylq_valid")
def _(ctx):
    c = _gr2(ctx)
    return max(curvalg.validate_weylq(c.W, c, rng=ctx.rng("grassmannian.weylq_valid")).residuals.values())


@check("grassmannian.weyl_fraction")
def _(ctx):
    c = _gr2(ctx)
    return float(np.linalg.norm(c.W) / np.linalg.norm(curvalg.full_curvature(c)))


@check("grassmannian.RD_nonzero")
def _(ctx):
    c = _gr2(ctx)
    closed, _ = rd_random_norms(ctx.rng("grassmannian.RD_nonzero"), c, 200)
    return float(np.max(closed) / np.linalg.norm(c.W))


@check("grassmannian.rd_kernel")
def _(ctx):
    rng = ctx.rng("grassmannian.rd_kernel")
    c = _gr2(ctx)
    pairs = [tuple(rng.standard_normal((2, c.m))) for _ in range(max(ctx.samples, 4))]
    dim, _ = curvalg.rd_common_kernel_dim(c, pairs)
    return float(dim)


@check("grassmannian.rd_routes")
def _(ctx):
    rng = ctx.rng("grassmannian.rd_routes")
    c = _gr2(ctx)
    fiber = curvalg.Fiber(c)
    worst = 0.0
    for _ in range(ctx.samples):
        Y, Z = rng.standard_normal((2, c.m))
        worst = max(worst, _max(curvalg.rd_matrix(Y, Z, c, fiber) - curvalg.rd_matrix_direct(Y, Z, c, fiber=fiber)))
    return worst


# --------------------------------------------------------------------------
# flat H^n


def _flat_family(ctx, name, count=None):
    rng = ctx.rng(name + "/family")
    g, B = qalg.standard_flat_basis(ctx.n)
    out = []
    for _ in range(count or ctx.samples):
        out.append(flat_ck_form(qalg.random_compatible(rng, B, g), rng.standard_normal(ctx.m), ctx.n))
    return out


@check("flat.codiff_constant")
def _(ctx):
    model = ctx.model("flat")
    rng = ctx.rng("flat.codiff_constant")
    psi = qalg.random_form(rng, ctx.m)
    p = ctx.points("flat.codiff_constant")
    return _max(codifferential(model, FormField(lambda q: np.broadcast_to(psi, q.shape[:-1] + psi.shape)), p))


@check("flat.codiff_family")
def _(ctx):
    model = ctx.model("flat")
    p = ctx.points("flat.codiff_family")
    return max(_max(codifferential(model, f, p) - f.data["X0"]) for f in _flat_family(ctx, "flat.codiff_family"))


@check("flat.ck_family")
def _(ctx):
    model = ctx.model("flat")
    p = ctx.points("flat.ck_family")
    worst = 0.0
    for f in _flat_family(ctx, "flat.ck_family"):
        r = ck_residual(model, f, p)
        worst = max(worst, r.max_ck, r.max_prolong)
    return worst


def _quadratic_form_field(rng, m):
    A = rng.standard_normal((m, m))
    Bq = rng.standard_normal((m, m, m))
    C = rng.standard_normal((m, m, m, m))

    def fn(p):
        v = A + np.einsum("ijk,...k->...ij", Bq, p) + np.einsum("ijkl,...k,...l->...ij", C, p, p)
        return v - np.swapaxes(v, -1, -2)
    return FormField(fn)


@check("flat.non_ck_guard")
def _(ctx):
    model = ctx.model("flat")
    p = ctx.points("flat.non_ck_guard")
    rng = ctx.rng("flat.non_ck_guard")
    r = ck_residual(model, _quadratic_form_field(rng, ctx.m), p)
    # relative to the size of nabla psi, smallest over the sample points
    return float(np.min(r.ck / r.scale))


@check("flat.d_squared")
def _(ctx):
    model = ctx.model("flat")
    rng = ctx.rng("flat.d_squared")
    m = ctx.m
    Bq = rng.standard_normal((m, m))
    C = rng.standard_normal((m, m, m))
    a = rng.standard_normal(m)

    def alpha(p):
        return a + np.einsum("bc,...c->...b", Bq, p) + np.einsum("bcd,...c,...d->...b", C, p, p)

    def dalpha(p):
        # d_a alpha_b = B_ba + (C_bad + C_bda) x_d
        D = Bq.T + np.einsum("bad,...d->...ab", C + np.swapaxes(C, 1, 2), p)
        return D - np.swapaxes(D, -1, -2)

    p = ctx.points("flat.d_squared")
    fd = exterior_derivative_1form(model, alpha, p, model.fd_step)
    psi = FormField(dalpha)
    return max(_max(exterior_derivative(model, psi, p)), _max(fd - dalpha(p)))


@check("flat.killing_fields")
def _(ctx):
    model = ctx.model("flat")
    rng = ctx.rng("flat.killing_fields")
    p = ctx.points("flat.killing_fields")
    _, B = qalg.standard_flat_basis(ctx.n)
    T = rng.standard_normal(ctx.m)
    S = rng.standard_normal((ctx.m, ctx.m))
    S = S - S.T
    # averaging over conjugation by the triple projects onto its commutant, sp(n)
    A = 0.25 * (S + sum(J @ S @ J.T for J in B.J))
    fields = [VecField(lambda q: np.broadcast_to(T, q.shape)), VecField(lambda q: q @ A.T)]
    worst = 0.0
    for X in fields:
        rep = killing_check(model, X, p)
        worst = max(worst, rep.worst, _max(rep.hw))
    return worst


def _flat_section(ctx, name):
    rng = ctx.rng(name + "/section")
    g, B = qalg.standard_flat_basis(ctx.n)
    return qalg.random_compatible(rng, B, g), rng.standard_normal(ctx.m)


@check("flat.transport_closed_form")
def _(ctx):
    model = ctx.model("flat")
    psi0, X0 = _flat_section(ctx, "flat.transport_closed_form")
    wp = ctx.points("flat.transport_closed_form", 4, 0.5)
    exact = flat_ck_form(psi0, X0, ctx.n)
    start = wp[0]
    end = prolong_transport(model, PathSpec(wp, 50), ProlongSection(start, exact(start), X0))
    return max(_max(end.psi - exact(end.point)), _max(end.X - X0))


@check("flat.transport_zero")
def _(ctx):
    wp = ctx.points("flat.transport_zero", 4, 0.5)
    worst = 0.0
    for name in ("flat", "hpn"):
        end = prolong_transport(ctx.model(name), PathSpec(wp, 20),
                                ProlongSection(wp[0], np.zeros((ctx.m, ctx.m)), np.zeros(ctx.m)))
        worst = max(worst, _max(end.psi), _max(end.X))
    return worst


@check("flat.compatible_killing_parallel")
def _(ctx):
    model = ctx.model("flat")
    psi0, _ = _flat_section(ctx, "flat.compatible_killing_parallel")
    wp = ctx.points("flat.compatible_killing_parallel", 3, 0.4)
    psi, X, end = transported_fields(model, PathSpec(wp, 20), ProlongSection(wp[0], psi0, np.zeros(ctx.m)))
    p = end.point + 0.05 * ctx.points("flat.compatible_killing_parallel/near", radius=1.0)
    return max(_max(X(p)), _max(nabla_psi(model, psi, p)))


@check("flat.holonomy")
def _(ctx):
    rep = holonomy_dimension(ctx.model("flat"), loops=4, seed=zlib.crc32(b"flat.holonomy") ^ ctx.config.seed,
                             steps_per_segment=10)
    return float(abs(rep.fixed_dim - _fiber_dim(ctx.n)))


def _fiber_dim(n):
    return (n + 1) * (2 * n + 3)


@check("flat.bracket_commute")
def _(ctx):
    model = ctx.model("flat")
    p = ctx.points("flat.bracket_commute", 2)
    a, b = _flat_family(ctx, "flat.bracket_commute", 2)
    br = ck_bracket(model, a, b)
    return max(_max(codifferential(model, br, p)), _max(br.codiff(p)))


# --------------------------------------------------------------------------
# HP^n chart geometry


@check("hpn.model_validation")
def _(ctx):
    v = ctx.model("hpn").validation
    return max(v["nu_spread"], v["weyl_residual"], v["einstein_misfit"], v["basis_deviation"])


@check("hpn.curvature_model")
def _(ctx):
    model = ctx.model("hpn")
    worst = 0.0
    for p in ctx.points("hpn.curvature_model"):
        R = riemann(model, p)
        g = model.metric_at(p)
        base = curvalg.base_curvature_tensor(g, model.basis_at(p), model.nu)
        worst = max(worst, float(np.linalg.norm(R - base) / np.linalg.norm(R)))
    return worst


@check("hpn.nu_constant")
def _(ctx):
    model = ctx.model("hpn")
    nus = [curvalg.einstein_nu(richardson_riemann(model, p), model.metric_at(p), ctx.n)[0]
           for p in ctx.points("hpn.nu_constant", max(ctx.samples, 3))]
    return float((max(nus) - min(nus)) / abs(model.nu))


@check("hpn.spectral_basis")
def _(ctx):
    model = ctx.model("hpn")
    worst = 0.0
    for p in ctx.points("hpn.spectral_basis"):
        g = model.metric_at(p)
        Bs, _ = spectral_basis(riemann(model, p), g, ctx.n)
        worst = max(worst, _max(q_projector(Bs, g) - q_projector(model.basis_at(p), g)))
    return worst


@check("hpn.metricity")
def _(ctx):
    model = ctx.model("hpn")
    return max(metricity_residual(model, p) for p in ctx.points("hpn.metricity"))


@check("hpn.torsion_free")
def _(ctx):
    model = ctx.model("hpn")
    psi = ctx.random_ck("hpn.torsion_free", 1)[0]
    p = ctx.points("hpn.torsion_free")
    return _max(exterior_derivative(model, psi, p) - exterior_derivative(model, psi, p, method="christoffel"))


@check("hpn.killing_count")
def _(ctx):
    fields = killing_fields_hpn(ctx.n, ctx.model("hpn"), check=True, samples=2)
    return float(abs(len(fields) - _fiber_dim(ctx.n)))


def _killing_reports(ctx):
    def make():
        model = ctx.model("hpn")
        p = ctx.points("hpn.killing")
        return [killing_check(model, X, p) for X in ctx.hpn_family()[1]]
    return ctx.memo("killing_reports", make)


@check("hpn.killing")
def _(ctx):
    return max(_max(r.lie_g) for r in _killing_reports(ctx))


@check("hpn.killing_divergence")
def _(ctx):
    return max(_max(r.divergence) for r in _killing_reports(ctx))


@check("hpn.killing_hw")
def _(ctx):
    return max(_max(r.hw) for r in _killing_reports(ctx))


# --------------------------------------------------------------------------
# conformal-Killing forms on HP^n


def _ck_sample(ctx, name):
    """Random CK forms (as combinations of Killing fields) and sample points."""
    return ctx.random_ck(name, ctx.samples), ctx.points(name)


def _ck_residuals(ctx):
    def make():
        forms, p = _ck_sample(ctx, "ck.ck_residual")
        return [ck_residual(ctx.model("hpn"), f, p) for f in forms]
    return ctx.memo("ck_residuals", make)


@check("ck.ck_residual")
def _(ctx):
    return max(r.max_ck for r in _ck_residuals(ctx))


@check("ck.codiff_inverse")
def _(ctx):
    return max(_max(r.codiff_mismatch) for r in _ck_residuals(ctx))


@check("ck.prolong_equation")
def _(ctx):
    return max(r.max_prolong for r in _ck_residuals(ctx))


@check("ck.d_parallel")
def _(ctx):
    forms, p = _ck_sample(ctx, "ck.d_parallel")
    return max(_max(d_parallel_residual(ctx.model("hpn"), f, p)) for f in forms)


def _ratios(ctx):
    def make():
        forms, p = _ck_sample(ctx, "ck.codiff_ratio")
        return [codiff_ratios(ctx.model("hpn"), f, p) for f in forms]
    return ctx.memo("ratios", make)


@check("ck.codiff_ratio_s2h")
def _(ctx):
    target = -3.0 / (4 * ctx.n - 1)
    return max(max(_max(r["s2h"] / target - 1.0), _max(r["s2h_spread"])) for r in _ratios(ctx))


@check("ck.codiff_ratio_s2e")
def _(ctx):
    target = (4 * ctx.n + 2) / (4 * ctx.n - 1)
    return max(max(_max(r["s2e"] / target - 1.0), _max(r["s2e_spread"])) for r in _ratios(ctx))


@check("ck.dpsi_formula")
def _(ctx):
    forms, p = _ck_sample(ctx, "ck.dpsi_formula")
    return max(_max(d_formula_residual(ctx.model("hpn"), f, p)) for f in forms)


@check("ck.twistor")
def _(ctx):
    forms, p = _ck_sample(ctx, "ck.twistor")
    return max(_max(twistor_residual(ctx.model("hpn"), f, p)) for f in forms)


def _penrose(ctx):
    def make():
        model = ctx.model("hpn")
        rng = ctx.rng("ck.penrose/coeffs")
        p = ctx.points("ck.penrose")
        out = []
        for _ in range(ctx.samples):
            A = np.tensordot(rng.standard_normal(_fiber_dim(ctx.n)), sp_basis(ctx.n), axes=1)
            X = killing_field(A)
            res = penrose(model, penrose_section(model, X), p)
            out.append((res, vec_norm(model.metric_at(p), res.codiff - X(p))))
        return out
    return ctx.memo("penrose", make)


@check("ck.penrose")
def _(ctx):
    return max(_max(res.residual) for res, _ in _penrose(ctx))


@check("ck.penrose_inverse")
def _(ctx):
    return max(_max(err) for _, err in _penrose(ctx))


@check("ck.s2e_round_trip")
def _(ctx):
    model = ctx.model("hpn")
    forms, p = _ck_sample(ctx, "ck.s2e_round_trip")
    g = model.metric_at(p)
    return max(_max(form_norm(g, s2e_correspondence(model, f).reconstructed(p) - f(p))) for f in forms)


@check("ck.hamiltonian")
def _(ctx):
    model = ctx.model("hpn")
    forms, p = _ck_sample(ctx, "ck.hamiltonian")
    return max(_max(hamiltonian_residual(model, s2e_correspondence(model, f), p)) for f in forms)


def random_section(rng, model, point) -> ProlongSection:
    """A random fiber value at ``point`` (compatible form, arbitrary vector)."""
    g = model.metric_at(point)
    psi = qalg.random_compatible(rng, model.basis_at(point), g)
    return ProlongSection(np.asarray(point, dtype=float), psi, rng.standard_normal(model.m))


def random_path(rng, m, vertices: int = 3, radius: float = SAMPLE_RADIUS) -> np.ndarray:
    return random_points(rng, vertices, m, radius)


def transported_ck_residuals(model, rng, count: int, steps: int = 100):
    """``(ck, codiff mismatch)`` at the end of ``count`` random transported sections."""
    ck, mismatch = [], []
    for _ in range(count):
        wp = random_path(rng, model.m)
        psi, _, end = transported_fields(model, PathSpec(wp, steps), random_section(rng, model, wp[0]))
        r = ck_residual(model, psi, end.point[None])
        ck.append(r.max_ck)
        mismatch.append(float(np.max(r.codiff_mismatch)))
    return np.array(ck), np.array(mismatch)


def _transport(ctx):
    return ctx.memo("transport", lambda: transported_ck_residuals(ctx.model("hpn"), ctx.rng("ck.transport"),
                                                                  ctx.samples))


@check("ck.transport_ck")
def _(ctx):
    return _max(_transport(ctx)[0])


@check("ck.transport_codiff")
def _(ctx):
    return _max(_transport(ctx)[1])


def transport_order(model, rng, steps=(8, 16, 32)) -> float:
    """Observed convergence order of the transported endpoint under step halving.

    The drift guard is off: at these coarse steps the truncation error is the point.
    """
    wp = random_path(rng, model.m, 2, 0.6)
    init = random_section(rng, model, wp[0])
    vals = []
    for s in steps:
        psi, X, _ = transport_along(model, wp[None], init.psi[None, None], init.X[None, None], s, drift_limit=None)
        vals.append(np.concatenate([psi.ravel(), X.ravel()]))
    e1 = np.linalg.norm(vals[0] - vals[1])
    e2 = np.linalg.norm(vals[1] - vals[2])
    return float(np.log2(e1 / e2))


@check("ck.transport_order")
def _(ctx):
    return abs(transport_order(ctx.model("hpn"), ctx.rng("ck.transport_order")) - 4.0)


@check("ck.linearity")
def _(ctx):
    model = ctx.model("hpn")
    rng = ctx.rng("ck.linearity")
    K = _fiber_dim(ctx.n)
    a, b = rng.standard_normal((2, K))
    s, t = rng.standard_normal(2)
    p = ctx.points("ck.linearity")
    lhs = hpn_ck_form(model, s * a + t * b)(p)
    rhs = s * hpn_ck_form(model, a)(p) + t * hpn_ck_form(model, b)(p)
    return _max(lhs - rhs) / max(_max(lhs), 1.0)


def killing_ck_gram(model, point=None) -> tuple[int, float]:
    """Rank and condition number of the Gram matrix of the Killing-to-CK images.

    Each image is recorded by its fiber value ``(psi, delta psi)`` at ``point``,
    with the codifferential taken by finite differences rather than the carried one.
    """
    point = np.zeros(model.m) if point is None else np.asarray(point, dtype=float)
    fields = killing_fields_hpn(model.n, model, check=False)
    fiber = curvalg.Fiber(model.context_at(point))
    rows = []
    for X in fields:
        psi = killing_to_ck(model, X)
        rows.append(fiber.pack(psi(point), codifferential(model, psi, point)))
    V = np.array(rows)
    G = V @ V.T
    ev = np.linalg.eigvalsh(G)
    rank = int(np.sum(ev > 1e-10 * ev[-1]))
    return rank, float(np.sqrt(ev[-1] / max(ev[0], 1e-300)))


@check("ck.rank")
def _(ctx):
    rank, _ = ctx.memo("gram", lambda: killing_ck_gram(ctx.model("hpn")))
    return float(abs(rank - _fiber_dim(ctx.n)))


# --------------------------------------------------------------------------
# bracket


@check("bracket.codiff_homomorphism")
def _(ctx):
    model = ctx.model("hpn")
    a, b = ctx.random_ck("bracket.codiff_homomorphism", 2)
    return _max(bracket_codiff_residual(model, a, b, ctx.points("bracket.codiff_homomorphism", 2)))


@check("bracket.compatible")
def _(ctx):
    model = ctx.model("hpn")
    a, b = ctx.random_ck("bracket.compatible", 2)
    return _max(bracket_hw_residual(model, a, b, ctx.points("bracket.compatible", 2)))


def structure_constant_mismatch(model, points) -> tuple[float, float, dict]:
    """``(max |c_CK - c_Killing|, max |c_Killing + c_matrix|, diagnostics)``.

    Killing fields of left matrix actions are anti-homomorphic, hence the sign.
    """
    forms = [killing_to_ck(model, X) for X in killing_fields_hpn(model.n, model, check=False)]
    fields = [f.codiff for f in forms]
    fK, eK = vector_structure_constants(model, fields, points)
    fC, eC = form_structure_constants(model, forms, points)
    fM = sp_structure_constants(model.n)
    diag = {"ck_fit": eC.residual, "ck_rank": eC.rank, "ck_condition": eC.condition, "killing_fit": eK.residual}
    return float(np.max(np.abs(fC - fK))), float(np.max(np.abs(fK + fM))), diag


def _structure(ctx):
    return ctx.memo("structure", lambda: structure_constant_mismatch(ctx.model("hpn"),
                                                                     ctx.points("bracket.structure", 4)))


@check("bracket.structure_constants")
def _(ctx):
    return _structure(ctx)[0]


@check("bracket.killing_constants")
def _(ctx):
    return _structure(ctx)[1]


@check("bracket.jacobi")
def _(ctx):
    model = ctx.model("hpn")
    p = ctx.points("bracket.jacobi", 2)
    worst = 0.0
    for k in range(max(1, min(ctx.samples, 10))):
        a, b, c = ctx.random_ck(f"bracket.jacobi/{k}", 3)
        res, scale = jacobi_residual(model, a, b, c, p)
        worst = max(worst, _max(res))
    return worst


@check("bracket.antisymmetry")
def _(ctx):
    model = ctx.model("hpn")
    (a,) = ctx.random_ck("bracket.antisymmetry", 1)
    return _max(ck_bracket(model, a, a)(ctx.points("bracket.antisymmetry", 2)))


# --------------------------------------------------------------------------
# dimension


def _holonomy(ctx):
    cfg = ctx.config
    return ctx.memo("holonomy", lambda: holonomy_dimension(ctx.model(cfg.manifold), loops=cfg.loops, seed=cfg.seed))


@check("dim.holonomy_fixed_dim")
def _(ctx):
    return float(abs(_holonomy(ctx).fixed_dim - _fiber_dim(ctx.n)))


@check("dim.holonomy_gap")
def _(ctx):
    return _holonomy(ctx).gap_ratio


@check("dim.holonomy_drift")
def _(ctx):
    return _holonomy(ctx).max_drift


@check("dim.killing_ck_rank")
def _(ctx):
    rank, _ = ctx.memo("gram", lambda: killing_ck_gram(ctx.model("hpn")))
    return float(abs(rank - _fiber_dim(ctx.n)))


# --------------------------------------------------------------------------
# runner


def judge(name: str, value: float, tol_scale: float = 1.0) -> dict:
    bound, kind, ref = TOLERANCES[name]
    if kind == "upper":
        tol = bound * tol_scale
        ok = bool(np.isfinite(value) and value <= tol)
    elif kind == "lower":
        tol = bound / tol_scale
        ok = bool(np.isfinite(value) and value >= tol)
    else:
        tol = bound
        ok = bool(value == bound)
    return {"name": name, "paper_ref": ref, "max_residual": float(value), "tolerance": float(tol),
            "kind": kind, "pass": ok}


def suite_names(suite: str) -> tuple[str, ...]:
    return SUITES if suite == "all" else (suite,)


def run_suite(config: SuiteConfig) -> dict:
    """Run the checks of ``config.suite`` and return the report dictionary."""
    config.validate()
    t0 = time.perf_counter()
    ctx = RunContext(config)
    checks = []
    for suite in suite_names(config.suite):
        for chk in REGISTRY[suite]:
            if suite == "grassmannian" and config.n != 2:
                continue
            try:
                value = float(chk.fn(ctx))
                entry = judge(chk.name, value, config.tol_scale)
            except (ArithmeticError, ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
                entry = judge(chk.name, float("nan"), config.tol_scale)
                entry["error"] = f"{type(exc).__name__}: {exc}"
            checks.append(entry)
    extra = {}
    if "holonomy" in ctx._cache:
        rep = ctx._cache["holonomy"]
        extra["holonomy"] = {"manifold": config.manifold, "fixed_dim": rep.fixed_dim, "gap_ratio": rep.gap_ratio,
                             "threshold": rep.threshold, "loops": rep.loop_count}
    if "gram" in ctx._cache:
        extra["killing_ck_gram"] = {"rank": ctx._cache["gram"][0], "condition": ctx._cache["gram"][1]}
    report = {
        "suite": config.suite,
        "n": config.n,
        "seed": config.seed,
        "config": asdict(config),
        "checks": checks,
        "pass": all(c["pass"] for c in checks),
        **extra,
        "wall_time": time.perf_counter() - t0,
    }
    return report
