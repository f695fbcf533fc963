import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bcinverse.grids import SpaceGrid, TimeGrid
from bcinverse.schrodinger_forward import (MatrixPotential, SpatialOperator, chebyshev, clenshaw_curtis,
                                           dirichlet_spectrum_oracle, free_spectral_data, neumann_trace,
                                           solve_schrodinger, synthesize_response_kernel)
from bcinverse.validation import ValidationError


@settings(max_examples=30, deadline=None)
@given(n=st.integers(4, 60), deg=st.integers(0, 3), ell=st.floats(0.2, 5.0))
def test_clenshaw_curtis_exact_on_polynomials(n, deg, ell):
    x, _ = chebyshev(n, ell)
    w = clenshaw_curtis(n, ell)
    assert np.isclose(w @ x**deg, ell ** (deg + 1) / (deg + 1), rtol=1e-11)


@settings(max_examples=30, deadline=None)
@given(n=st.integers(6, 40), deg=st.integers(1, 5))
def test_chebyshev_differentiation_exact(n, deg):
    x, D = chebyshev(n, 1.0)
    assert x[0] == 0.0 and np.isclose(x[-1], 1.0)
    assert np.allclose(D @ x**deg, deg * x ** (deg - 1), atol=1e-9)


def test_presets():
    g = SpaceGrid(1.0, 50)
    assert MatrixPotential.preset("zero", g, N=3).values.shape == (51, 3, 3)
    Q = MatrixPotential.preset("shift:2.5", g, N=2)
    assert np.all(Q.values == 2.5 * np.eye(2))
    Q = MatrixPotential.preset("nonsym2x2:2,2", g)
    assert Q.N == 2 and not Q.is_symmetric()
    assert np.isclose(Q.max_norm(), 2.0)
    assert np.allclose(Q.transpose().values, np.swapaxes(Q.values, 1, 2))
    with pytest.raises(ValidationError):
        MatrixPotential.preset("cosine:1", g)


@pytest.mark.parametrize("scheme,n_x,tol", [("chebyshev", 64, 1e-9), ("fd2", 400, 1e-3)])
def test_oracle_free_spectrum(scheme, n_x, tol):
    Q = MatrixPotential.preset("zero", SpaceGrid(1.0, n_x))
    sd = dirichlet_spectrum_oracle(Q, 8, scheme, n_x)
    k = np.arange(1, 9)
    assert np.allclose(sd.eigenvalues.real, (k * np.pi) ** 2, rtol=tol)
    prods = np.array([r.products()[0, 0, 0].real for r in sd.records])
    assert np.allclose(prods, 2 * (k * np.pi) ** 2, rtol=10 * tol)


def test_oracle_matches_closed_form_shift():
    Q = MatrixPotential.preset("shift:2", SpaceGrid(1.0, 64), N=2)
    sd = dirichlet_spectrum_oracle(Q, 6, "chebyshev", 64)
    ref = free_spectral_data(3, 1.0, 2, 2.0)
    assert np.allclose(sd.eigenvalues, ref.eigenvalues, rtol=1e-10)
    # semisimple level: compare the level sum of products (gauge invariant)
    for k in range(3):
        P = sum(r.products()[0] for r in sd.records[2 * k:2 * k + 2])
        Pr = sum(r.products()[0] for r in ref.records[2 * k:2 * k + 2])
        assert np.allclose(P, Pr, rtol=1e-8)


def test_oracle_nonsymmetric_simple_spectrum():
    Q = MatrixPotential.preset("nonsym2x2:2,2", SpaceGrid(1.0, 64))
    sd = dirichlet_spectrum_oracle(Q, 10, "chebyshev", 64)
    assert np.all(sd.multiplicities == 1)
    # asymptotically lam_k ~ (k pi)^2 + mean eigenvalue of Q (trace 0 here)
    assert abs(sd.eigenvalues[-1].real - (5 * np.pi) ** 2) < 5.0


def test_nonzero_initial_control_rejected():
    Q = MatrixPotential.preset("zero", SpaceGrid(1.0, 20))
    f = np.ones((11, 1))
    with pytest.raises(ValidationError):
        solve_schrodinger(Q, f, TimeGrid(0.01, 10))


def test_kernel_causal_and_time_invariant():
    Q = MatrixPotential.preset("nonsym2x2:2,2", SpaceGrid(1.0, 40))
    K = synthesize_response_kernel(Q, TimeGrid(0.02, 40), "chebyshev", 40)
    assert K.acausal_mass() < 1e-12
    d = K.dim_Y
    M = K.matrix
    # column blocks j >= 1 are shifted copies of each other
    assert np.allclose(M[3 * d:, 2 * d:3 * d], M[2 * d:-d, d:2 * d], atol=1e-12 * np.abs(M).max())


def test_noise_is_seeded_and_causal():
    Q = MatrixPotential.preset("zero", SpaceGrid(1.0, 30))
    g = TimeGrid(0.02, 30)
    K1 = synthesize_response_kernel(Q, g, "chebyshev", 30, noise=1e-3, seed=4)
    K2 = synthesize_response_kernel(Q, g, "chebyshev", 30, noise=1e-3, seed=4)
    assert np.array_equal(K1.matrix, K2.matrix)
    assert K1.acausal_mass() == 0.0


def test_spatial_operator_schemes():
    Q = MatrixPotential.preset("shift:1", SpaceGrid(1.0, 30))
    for scheme in ("chebyshev", "fd2"):
        op = SpatialOperator.build(Q, scheme, 30)
        assert op.N == 1
    with pytest.raises(ValidationError):
        SpatialOperator.build(Q, "spectral", 30)


def _trace(Q, nt, scheme, nx, T=0.05):
    g = TimeGrid(T, nt)
    s = np.sin(np.pi * g.t / T) ** 4  # vanishes to fourth order: corner-compatible data
    f = np.stack([s, s * np.cos(np.pi * g.t / T)], 1)
    return neumann_trace(solve_schrodinger(Q, f, g, scheme, nx))


def test_self_convergence_second_order():
    Q = MatrixPotential.preset("nonsym2x2:2,2", SpaceGrid(1.0, 400))
    r = [_trace(Q, n, "chebyshev", 40) for n in (100, 200, 400, 800)]
    d = [np.abs(r[i] - r[i + 1][::2]).max() for i in range(3)]
    assert np.log2(d[1] / d[2]) >= 1.9
    s = [_trace(Q, 400, "fd2", n) for n in (100, 200, 400, 800)]
    d = [np.abs(s[i] - s[i + 1]).max() for i in range(3)]
    assert np.log2(d[1] / d[2]) >= 1.9
