import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from qkck.fd import chunked, directional, partials, partials4, richardson_order


def cubic(rng, m):
    a = rng.standard_normal(m)
    B = rng.standard_normal((m, m))
    C = rng.standard_normal((m, m, m))

    def fn(p):
        return p @ a + np.einsum("...i,ij,...j->...", p, B, p) + np.einsum("...i,...j,...k,ijk->...", p, p, p, C)

    def grad(p):
        return a + p @ (B + B.T) + (np.einsum("...j,...k,ijk->...i", p, p, C)
                                    + np.einsum("...i,...k,ijk->...j", p, p, C)
                                    + np.einsum("...i,...j,ijk->...k", p, p, C))
    return fn, grad


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=20, deadline=None)
def test_partials_on_polynomials(seed):
    rng = np.random.default_rng(seed)
    fn, grad = cubic(rng, 5)
    p = rng.uniform(-0.5, 0.5, (3, 5))
    # central differences are exact on quadratics; the cubic term leaves h^2 error
    np.testing.assert_allclose(partials(fn, p, 1e-3), grad(p), atol=1e-4)
    np.testing.assert_allclose(partials4(fn, p, 1e-2), grad(p), atol=1e-10)


def test_derivative_axis_follows_batch_axes():
    p = np.zeros((2, 3, 4))
    out = partials(lambda x: np.stack([x, 2 * x], axis=-2), p, 1e-3)
    assert out.shape == (2, 3, 4, 2, 4)
    np.testing.assert_allclose(out[0, 0, :, 1, :], 2 * np.eye(4), atol=1e-12)


def test_orders():
    p = np.array([[0.3, -0.2]])
    fn = lambda x: np.sin(x[..., 0]) * np.exp(x[..., 1])
    order, _ = richardson_order(fn, p, 0.1)
    assert abs(order - 2) < 0.1
    exact = np.array([np.cos(0.3) * np.exp(-0.2), np.sin(0.3) * np.exp(-0.2)])
    e1 = np.abs(partials4(fn, p, 0.2) - exact).max()
    e2 = np.abs(partials4(fn, p, 0.1) - exact).max()
    assert 3.5 < np.log2(e1 / e2) < 4.5
    d = directional(fn, p, [1.0, 0.0], 1e-4)
    assert abs(d[0] - exact[0]) < 1e-8


def test_chunked_matches_direct():
    p = np.random.default_rng(0).standard_normal((3, 50, 2))
    fn = lambda x: x[..., :1] * x
    np.testing.assert_array_equal(chunked(fn, p, chunk=7), fn(p))
