"""End-to-end acceptance criteria, one test per criterion at its stated size and tolerance.

Each test records a PASS/FAIL line that the terminal summary prints.
"""

from functools import cache

import numpy as np
import pytest
from conftest import record

from qkck import curvalg
from qkck.ckforms import (
    bracket_codiff_residual,
    bracket_hw_residual,
    ck_residual,
    codiff_ratios,
    d_formula_residual,
    d_parallel_residual,
    hamiltonian_residual,
    holonomy_dimension,
    hpn_ck_form,
    jacobi_residual,
    killing_field,
    penrose,
    penrose_section,
    s2e_correspondence,
    sp_basis,
    twistor_residual,
)
from qkck.ckforms.operators import form_norm, vec_norm
from qkck.manifolds import flat_model, hpn_chart_model, random_points, richardson_riemann, riemann
from qkck.suites import (
    SAMPLE_RADIUS,
    SuiteConfig,
    rd_random_norms,
    killing_ck_gram,
    run_suite,
    structure_constant_mismatch,
    transported_ck_residuals,
)

N = 2
DIM = (N + 1) * (2 * N + 3)
SEED = 7


@cache
def model(name):
    return flat_model(N) if name == "flat" else hpn_chart_model(N)


@cache
def holonomy(name):
    return holonomy_dimension(model(name), loops=64, seed=SEED, steps_per_segment=200)


@cache
def ck_family():
    return [hpn_ck_form(model("hpn"), e) for e in np.eye(DIM)]


def points(tag, count):
    return random_points(np.random.default_rng([SEED, tag]), count, 4 * N, SAMPLE_RADIUS)


def rmax(x):
    return float(np.max(np.abs(x)))


def test_criterion_1_flatness():
    rng = np.random.default_rng([SEED, 1])
    rd = 0.0
    for name in ("flat", "hpn"):
        c = model(name).context_at(np.zeros(4 * N))
        closed, direct = rd_random_norms(rng, c, 200)
        rd = max(rd, rmax(closed), rmax(direct))
    reps = {name: holonomy(name) for name in ("flat", "hpn")}
    ok = rd <= 1e-10 and all(r.fixed_dim == DIM and r.gap_ratio >= 1e3 for r in reps.values())
    detail = f"max|R^D| = {rd:.1e}; " + ", ".join(
        f"{k}: fixed_dim {r.fixed_dim}, gap {r.gap_ratio:.1e}" for k, r in reps.items())
    record(1, ok, detail)
    assert ok, detail


def test_criterion_2_non_flat():
    c = curvalg.weylq_grassmannian()
    valid = max(curvalg.validate_weylq(c.W, c, rng=np.random.default_rng([SEED, 2])).residuals.values())
    fraction = float(np.linalg.norm(c.W) / np.linalg.norm(curvalg.full_curvature(c)))
    closed, direct = rd_random_norms(np.random.default_rng([SEED, 2, 1]), c, 200)
    ratio = float(np.max(closed) / np.linalg.norm(c.W))
    ok = valid <= 1e-9 and fraction > 0.1 and ratio > 1e-3 and np.allclose(closed, direct, atol=1e-10)
    detail = f"validator {valid:.1e}, |W|/|R| = {fraction:.3f}, max|R^D|/|W| = {ratio:.3e}"
    record(2, ok, detail)
    assert ok, detail


def test_criterion_3_dimension():
    rep = holonomy("hpn")
    rank, cond = killing_ck_gram(model("hpn"))
    ok = rep.fixed_dim == DIM and rank == DIM
    detail = f"holonomy fixed_dim {rep.fixed_dim}, Killing-to-CK Gram rank {rank} (condition {cond:.2e}), expected {DIM}"
    record(3, ok, detail)
    assert ok, detail


def test_criterion_4_prolongation():
    m = model("hpn")
    ck, mismatch = transported_ck_residuals(m, np.random.default_rng([SEED, 4]), 20)
    p = points(4, 20)
    dpar = max(rmax(d_parallel_residual(m, f, p)) for f in ck_family())
    ok = rmax(ck) <= 1e-4 and rmax(mismatch) <= 1e-4 and dpar <= 1e-4
    detail = f"transported: ck {rmax(ck):.1e}, |delta psi - X| {rmax(mismatch):.1e}; Killing images: D-residual {dpar:.1e}"
    record(4, ok, detail)
    assert ok, detail


def test_criterion_5_ratios_and_twistor():
    m = model("hpn")
    p = points(5, 3)
    h_target, e_target = -3.0 / (4 * N - 1), (4 * N + 2) / (4 * N - 1)
    rh = re = dpsi = tw = 0.0
    for f in ck_family():
        r = codiff_ratios(m, f, p)
        rh = max(rh, rmax(r["s2h"] / h_target - 1), rmax(r["s2h_spread"]))
        re = max(re, rmax(r["s2e"] / e_target - 1), rmax(r["s2e_spread"]))
        dpsi = max(dpsi, rmax(d_formula_residual(m, f, p)))
        tw = max(tw, rmax(twistor_residual(m, f, p)))
    inv = 0.0
    for A in sp_basis(N):
        X = killing_field(A)
        res = penrose(m, penrose_section(m, X), p)
        inv = max(inv, rmax(vec_norm(m.metric_at(p), res.codiff - X(p))))
    ok = max(rh, re, dpsi, tw, inv) <= 1e-4
    detail = f"S2H ratio {rh:.1e}, S2E ratio {re:.1e}, d psi {dpsi:.1e}, twistor {tw:.1e}, Penrose inverse {inv:.1e}"
    record(5, ok, detail)
    assert ok, detail


def test_criterion_6_round_trip():
    m = model("hpn")
    p = points(6, 20)
    g = m.metric_at(p)
    rng = np.random.default_rng([SEED, 6])
    trip = ham = 0.0
    for _ in range(2):
        f = hpn_ck_form(m, rng.standard_normal(DIM))
        corr = s2e_correspondence(m, f)
        trip = max(trip, rmax(form_norm(g, corr.reconstructed(p) - f(p))))
        ham = max(ham, rmax(hamiltonian_residual(m, corr, p)))
    ok = trip <= 1e-4 and ham <= 1e-4
    detail = f"round trip {trip:.1e}, hamiltonian {ham:.1e} over 20 points"
    record(6, ok, detail)
    assert ok, detail


@pytest.mark.slow
def test_criterion_7_bracket():
    m = model("hpn")
    rng = np.random.default_rng([SEED, 7])
    p = points(7, 2)
    a, b = (hpn_ck_form(m, rng.standard_normal(DIM)) for _ in range(2))
    hom = rmax(bracket_codiff_residual(m, a, b, p))
    hw = rmax(bracket_hw_residual(m, a, b, p))
    struct, killing, diag = structure_constant_mismatch(m, points(71, 4))
    jac = 0.0
    for _ in range(10):
        triple = [hpn_ck_form(m, rng.standard_normal(DIM)) for _ in range(3)]
        res, _ = jacobi_residual(m, *triple, p[:1])
        jac = max(jac, rmax(res))
    ok = hom <= 1e-3 and hw <= 1e-4 and struct <= 1e-3 and jac <= 1e-3
    detail = (f"homomorphism {hom:.1e}, hw part {hw:.1e}, structure constants {struct:.1e} "
              f"(Killing vs sp(3) {killing:.1e}), Jacobi {jac:.1e}")
    record(7, ok, detail)
    assert ok, detail


def test_criterion_8_geometry():
    m = model("hpn")
    p = points(8, 10)
    curv, nus = 0.0, []
    for q in p:
        R = riemann(m, q)
        base = curvalg.base_curvature_tensor(m.metric_at(q), m.basis_at(q), m.nu)
        curv = max(curv, float(np.linalg.norm(R - base) / np.linalg.norm(R)))
        nus.append(curvalg.einstein_nu(richardson_riemann(m, q), m.metric_at(q), N)[0])
    spread = (max(nus) - min(nus)) / abs(m.nu)
    algebraic = []
    for suite in ("qalg", "curvature"):
        algebraic += run_suite(SuiteConfig(suite=suite, n=N, seed=SEED))["checks"]
    worst = max(c["max_residual"] for c in algebraic)
    ok = curv <= 1e-4 and spread <= 1e-4 and worst <= 1e-10 and all(c["pass"] for c in algebraic)
    detail = f"curvature vs model {curv:.1e}, nu spread {spread:.1e}, algebraic suites max {worst:.1e}"
    record(8, ok, detail)
    assert ok, detail
