import numpy as np
import pytest

from qkck import curvalg
from qkck.manifolds import (
    ChartModel,
    DomainError,
    basis_field,
    christoffels,
    covariant_derivative,
    hpn_metric,
    metricity_residual,
    procrustes_rotation,
    q_projector,
    random_points,
    richardson_riemann,
    riemann,
    spectral_basis,
)
from qkck.qalg import QAlgError, standard_flat_basis
from qkck.quat import as_quaternions, qconj, qmul


def sphere_model():
    # round unit sphere S^8 in stereographic coordinates: sectional curvature 1
    return ChartModel(name="sphere", n=2, radius=0.8,
                      metric_fn=lambda p: (4.0 / (1 + np.sum(p * p, -1)) ** 2)[..., None, None] * np.eye(p.shape[-1]))


def conformal_model(a):
    return ChartModel(name="conf", n=2, radius=0.8,
                      metric_fn=lambda p: np.exp(2 * p @ a)[..., None, None] * np.eye(p.shape[-1]))


def quaternion_metric_oracle(q_point, v, w):
    """Re[<v, w>/(1+|q|^2) - <v, q><q, w>/(1+|q|^2)^2] with <v, w> = sum conj(v_a) w_a."""
    q, v, w = (as_quaternions(x) for x in (q_point, v, w))
    s = 1 + np.sum(q * q)

    def herm(a, b):
        return qmul(qconj(a), b).sum(axis=0)

    return (herm(v, w) / s - qmul(herm(v, q), herm(q, w)) / s**2)[0]


def test_hpn_metric_matches_quaternionic_formula():
    rng = np.random.default_rng(0)
    for p in random_points(rng, 5, 8, 0.7):
        g = hpn_metric(p)
        v, w = rng.standard_normal((2, 8))
        assert abs(v @ g @ w - quaternion_metric_oracle(p, v, w)) < 1e-14
        assert np.linalg.eigvalsh(g).min() > 0


def test_christoffels_of_conformal_metric():
    a = np.linspace(-0.5, 0.5, 8)
    model = conformal_model(a)
    p = random_points(np.random.default_rng(1), 3, 8, 0.5)
    G = christoffels(model, p)
    # Gamma^k_ij = d_ij-free form: delta_ki a_j + delta_kj a_i - delta_ij a_k
    I = np.eye(8)
    expect = np.einsum("ki,j->kij", I, a) + np.einsum("kj,i->kij", I, a) - np.einsum("ij,k->kij", I, a)
    np.testing.assert_allclose(G, np.broadcast_to(expect, G.shape), atol=1e-9)
    assert metricity_residual(model, p) < 1e-9


def test_riemann_of_round_sphere():
    model = sphere_model()
    p = random_points(np.random.default_rng(2), 2, 8, 0.5)
    for x in p:
        R = richardson_riemann(model, x)
        g = model.metric_at(x)
        expect = np.einsum("ad,bc->abcd", g, g) - np.einsum("ac,bd->abcd", g, g)
        assert np.max(np.abs(R - expect)) < 1e-6 * np.max(np.abs(expect))


def test_flat_model_is_flat(flat):
    p = random_points(np.random.default_rng(3), 4, 8, 2.0)
    assert np.max(np.abs(riemann(flat, p))) == 0.0
    assert np.max(np.abs(christoffels(flat, p))) == 0.0


def test_hpn_curvature_is_model_curvature(hpn):
    assert abs(hpn.nu - 4.0) < 1e-6
    rng = np.random.default_rng(4)
    for p in random_points(rng, 4, 8, 0.6):
        R = riemann(hpn, p)
        base = curvalg.base_curvature_tensor(hpn.metric_at(p), hpn.basis_at(p), hpn.nu)
        assert np.linalg.norm(R - base) / np.linalg.norm(R) < 1e-4


def test_hpn_sectional_curvatures_at_origin(hpn):
    R = richardson_riemann(hpn, np.zeros(8))
    e = np.eye(8)
    _, B = standard_flat_basis(2)

    def sec(X, Y):
        return np.einsum("a,b,c,d,abcd->", X, Y, Y, X, R)

    # quaternionic lines are holomorphically curved at 4, totally real planes at 1
    assert abs(sec(e[0], B.J[0] @ e[0]) - 4) < 1e-6
    assert abs(sec(e[0], e[4]) - 1) < 1e-6


def test_chart_triple_spans_curvature_q(hpn):
    rng = np.random.default_rng(5)
    for p in random_points(rng, 3, 8, 0.6):
        g = hpn.metric_at(p)
        Bs, info = spectral_basis(riemann(hpn, p), g, 2)
        assert info["gap_ratio"] > 1e3
        assert np.max(np.abs(q_projector(Bs, g) - q_projector(hpn.basis_at(p), g))) < 1e-5
        assert max(Bs.residuals(g).values()) < 1e-6


def test_procrustes_recovers_rotation(hpn):
    from scipy.spatial.transform import Rotation

    p = np.full(8, 0.1)
    g = hpn.metric_at(p)
    B = hpn.basis_at(p)
    R = Rotation.random(random_state=6).as_matrix()
    rot = B.rotated(R)
    np.testing.assert_allclose(rot.rotated(procrustes_rotation(rot, B, g)).omega, B.omega, atol=1e-12)
    aligned = basis_field(hpn, p, "spectral", reference=B)
    np.testing.assert_allclose(aligned.omega, B.omega, atol=1e-5)


def test_covariant_derivative_of_coordinate_field(hpn):
    # nabla_Z d_0 = Z^a Gamma^b_{a0}
    p = random_points(np.random.default_rng(7), 3, 8, 0.5)
    Z = np.random.default_rng(8).standard_normal(8)
    N = covariant_derivative(hpn, lambda x: np.broadcast_to(np.eye(8)[0], x.shape), p, Z=Z)
    np.testing.assert_allclose(N, np.einsum("a,nba->nb", Z, christoffels(hpn, p)[..., 0]), atol=1e-12)
    with pytest.raises(ValueError):
        covariant_derivative(hpn, lambda x: np.ones(x.shape[:-1]), p)


def test_domain_and_dimension_errors(hpn):
    with pytest.raises(DomainError):
        riemann(hpn, np.full(8, 0.5))
    with pytest.raises(QAlgError):
        from qkck.manifolds import hpn_chart_model
        hpn_chart_model(1)
    pts = random_points(np.random.default_rng(8), 200, 8, 0.3)
    assert np.linalg.norm(pts, axis=-1).max() <= 0.3
