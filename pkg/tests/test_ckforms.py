import numpy as np
import pytest

from qkck import qalg
from qkck.ckforms import (
    FormField,
    KillingError,
    PenroseError,
    VecField,
    ck_residual,
    codiff_field,
    codiff_ratios,
    codifferential,
    combine_forms,
    constant_form,
    d_formula_residual,
    d_parallel_residual,
    exterior_derivative,
    flat_ck_form,
    hamiltonian_residual,
    hpn_ck_form,
    killing_check,
    killing_field,
    killing_fields_hpn,
    killing_to_ck,
    lie_derivative,
    penrose,
    penrose_section,
    s2e_correspondence,
    sp_basis,
    twistor_residual,
)
from qkck.ckforms.killing import is_anti_hermitian
from qkck.ckforms.operators import form_norm, vec_norm
from qkck.fd import partials
from qkck.manifolds import random_points


@pytest.fixture(scope="module")
def points():
    return random_points(np.random.default_rng(11), 3, 8, 0.4)


@pytest.fixture(scope="module")
def ck_forms(hpn):
    rng = np.random.default_rng(12)
    return [hpn_ck_form(hpn, rng.standard_normal(21)) for _ in range(3)]


def quadratic_form(rng, m=8):
    A, B = rng.standard_normal((m, m)), rng.standard_normal((m, m, m))

    def fn(p):
        v = A + np.einsum("ijk,...k->...ij", B, p)
        return v - np.swapaxes(v, -1, -2)
    return FormField(fn)


def test_field_provenance_is_validated():
    with pytest.raises(ValueError):
        VecField(lambda p: p, provenance="guessed")
    with pytest.raises(ValueError):
        FormField(lambda p: p, provenance="")


def test_constant_and_combined_forms(flat, points):
    rng = np.random.default_rng(0)
    psi = constant_form(qalg.random_form(rng, 8))
    assert np.max(np.abs(codifferential(flat, psi, points))) == 0.0
    a, b = (flat_ck_form(np.zeros((8, 8)), rng.standard_normal(8), 2) for _ in range(2))
    c = combine_forms([a, b], [2.0, -1.0])
    np.testing.assert_allclose(c(points), 2 * a(points) - b(points), atol=1e-15)
    np.testing.assert_allclose(c.codiff(points), np.broadcast_to(2 * a.data["X0"] - b.data["X0"], (3, 8)), atol=1e-15)


def test_flat_family_is_conformal_killing(flat, points):
    rng = np.random.default_rng(1)
    _, B = qalg.standard_flat_basis(2)
    for _ in range(3):
        X0 = rng.standard_normal(8)
        psi = flat_ck_form(qalg.random_compatible(rng, B, np.eye(8)), X0, 2)
        np.testing.assert_allclose(codifferential(flat, psi, points), np.broadcast_to(X0, (3, 8)), atol=1e-10)
        res = ck_residual(flat, psi, points)
        assert res.max_ck < 1e-9 and res.max_prolong < 1e-9
        assert np.max(d_formula_residual(flat, psi, points)) < 1e-9


def test_generic_forms_fail_the_ck_equation(flat, hpn, points):
    rng = np.random.default_rng(2)
    for model in (flat, hpn):
        res = ck_residual(model, quadratic_form(rng), points)
        assert np.min(res.ck / res.scale) > 1e-2
        assert np.min(d_parallel_residual(model, quadratic_form(rng), points)) > 1e-2


def coordinate_lie_derivative(model, X, psi, p, h):
    """(L_X psi)_ab = X^c d_c psi_ab + psi_cb d_a X^c + psi_ac d_b X^c."""
    dpsi = partials(psi, p, h)
    dX = partials(X, p, h)
    v = psi(p)
    return (np.einsum("...c,...cab->...ab", X(p), dpsi) + np.einsum("...cb,...ac->...ab", v, dX)
            + np.einsum("...ac,...bc->...ab", v, dX))


def test_lie_derivative_two_routes(hpn, points):
    rng = np.random.default_rng(3)
    X = killing_field(np.tensordot(rng.standard_normal(21), sp_basis(2), axes=1))
    psi = quadratic_form(rng)
    cartan = lie_derivative(hpn, X, psi, points)
    direct = coordinate_lie_derivative(hpn, X, psi, points, hpn.fd_step)
    assert np.max(np.abs(cartan - direct)) < 1e-7 * np.max(np.abs(direct))


def test_exterior_derivative_two_routes(hpn, ck_forms, points):
    for psi in ck_forms:
        a = exterior_derivative(hpn, psi, points)
        b = exterior_derivative(hpn, psi, points, method="christoffel")
        assert np.max(np.abs(a - b)) < 1e-8


def test_sp_basis():
    basis = sp_basis(2)
    assert basis.shape == (21, 3, 3, 4)
    assert all(is_anti_hermitian(A) for A in basis)
    assert np.linalg.matrix_rank(basis.reshape(21, -1)) == 21


def test_killing_fields(hpn, points):
    fields = killing_fields_hpn(2, hpn, check=True, samples=2)
    assert len(fields) == 21
    for X in fields:
        rep = killing_check(hpn, X, points)
        assert rep.worst < 1e-5 and np.max(rep.hw) < 1e-4


def test_non_killing_field_is_detected(hpn, points):
    rep = killing_check(hpn, VecField(lambda p: p * p), points)
    assert rep.worst > 1e-2


def test_killing_to_ck_carries_its_codifferential(hpn, ck_forms, points):
    for psi in ck_forms:
        res = ck_residual(hpn, psi, points)
        assert res.max_ck < 1e-4 and res.max_prolong < 1e-4
        assert np.max(res.codiff_mismatch) < 1e-4
        assert np.max(d_parallel_residual(hpn, psi, points)) < 1e-4
        g = hpn.metric_at(points)
        assert np.max(form_norm(g, qalg.project(psi(points), hpn.basis_at(points), g).hw)) < 1e-8


def test_killing_to_ck_is_linear(hpn, points):
    rng = np.random.default_rng(4)
    a, b = rng.standard_normal((2, 21))
    lhs = hpn_ck_form(hpn, 2 * a - b)(points)
    rhs = 2 * hpn_ck_form(hpn, a)(points) - hpn_ck_form(hpn, b)(points)
    assert np.max(np.abs(lhs - rhs)) < 1e-9 * np.max(np.abs(lhs))


def test_codifferential_ratios(hpn, ck_forms, points):
    for psi in ck_forms:
        r = codiff_ratios(hpn, psi, points)
        np.testing.assert_allclose(r["s2h"], -3 / 7, rtol=1e-4)
        np.testing.assert_allclose(r["s2e"], 10 / 7, rtol=1e-4)
        assert np.max(r["s2h_spread"]) < 1e-4 and np.max(r["s2e_spread"]) < 1e-4


def test_dpsi_and_twistor(hpn, ck_forms, points):
    for psi in ck_forms:
        assert np.max(d_formula_residual(hpn, psi, points)) < 1e-4
        assert np.max(twistor_residual(hpn, psi, points)) < 1e-4


def test_penrose_section_inverts_to_killing_field(hpn, points):
    rng = np.random.default_rng(5)
    X = killing_field(np.tensordot(rng.standard_normal(21), sp_basis(2), axes=1))
    res = penrose(hpn, penrose_section(hpn, X), points)
    assert np.max(res.residual) < 1e-4
    assert np.max(vec_norm(hpn.metric_at(points), res.codiff - X(points))) < 1e-4


def test_penrose_rejects_non_s2h_sections(hpn, points):
    rng = np.random.default_rng(6)
    with pytest.raises(PenroseError):
        penrose(hpn, quadratic_form(rng), points)


def test_s2e_round_trip(hpn, ck_forms, points):
    g = hpn.metric_at(points)
    for psi in ck_forms:
        corr = s2e_correspondence(hpn, psi)
        assert np.max(form_norm(g, corr.reconstructed(points) - psi(points))) < 1e-4
        assert np.max(hamiltonian_residual(hpn, corr, points)) < 1e-4
        assert np.max(vec_norm(g, corr.X(points) - psi.codiff(points))) < 1e-4


def test_killing_to_ck_needs_curvature(flat):
    with pytest.raises(KillingError):
        killing_to_ck(flat, killing_field(sp_basis(2)[0]))


def test_numerical_codifferential_without_carried_field(hpn, ck_forms, points):
    psi = ck_forms[0]
    bare = FormField(psi.fn, "constructed", psi.depth)
    X = codiff_field(hpn, bare)
    assert np.max(np.abs(X(points) - psi.codiff(points))) < 1e-4
