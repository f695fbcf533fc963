import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bcinverse.abstract_system import (ControlSignal, FiniteSystem, JordanSpec, abstract_kernel, check_duality,
                                       connecting_direct, connecting_from_data, jordan_testbed, response,
                                       solve_forward, toeplitz_kernel)
from bcinverse.grids import TimeGrid
from bcinverse.validation import ValidationError

from .conftest import sine_control


def test_testbed_chains_are_jordan_chains(dim6):
    A = dim6.A
    Ah = A.conj().T
    for lam, phi, psi in dim6.chains():
        L = len(phi)
        assert np.allclose((A - lam * np.eye(6)) @ phi[0], 0, atol=1e-12)
        for l in range(1, L):
            assert np.allclose((A - lam * np.eye(6)) @ phi[l], phi[l - 1], atol=1e-12)
        assert np.allclose((Ah - np.conj(lam) * np.eye(6)) @ psi[-1], 0, atol=1e-12)
        for l in range(L - 1):
            assert np.allclose((Ah - np.conj(lam) * np.eye(6)) @ psi[l], psi[l + 1], atol=1e-12)
        G = psi.conj() @ phi.T
        assert np.allclose(G, np.eye(L), atol=1e-12)


def test_testbed_block_sizes(dim6):
    assert [size for _, size in dim6.structure["spec"].blocks] == [1, 2, 3]
    assert np.all(np.abs(np.imag([lam for lam, _ in dim6.structure["spec"].blocks])) > 0)


def test_similarity_respects_condition_bound():
    spec = JordanSpec(((1.0, 2), (2.0, 1)), seed=7, cond_bound=1e3)
    assert np.linalg.cond(spec.similarity()) < 1e3


def test_diagonal_system_has_no_chains(diag3):
    with pytest.raises(ValidationError):
        diag3.chains()


def test_kernel_is_causal_and_toeplitz(dim6):
    K = response(dim6, TimeGrid(1.0, 60))
    assert K.acausal_mass() == 0.0
    M = K.matrix
    # time invariance: interior columns are shifted copies of each other
    assert np.allclose(M[3:, 2], M[2:-1, 1], rtol=0, atol=1e-14 * np.abs(M).max())


def test_toeplitz_kernel_block_layout():
    first = np.arange(1, 5, dtype=complex)[:, None, None]  # K(t_i - t_0), i = 0..3
    K = toeplitz_kernel(first, first, 3, 1)
    assert K.shape == (4, 4)
    assert np.all(np.triu(K, 1) == 0)


def test_same_scheme_duality_is_exact(dim6, grid_half):
    assert check_duality(dim6, grid_half, adjoint_method="cn") < 1e-12


def test_duality_converges_second_order(dim6):
    d1 = check_duality(dim6, TimeGrid(0.5, 200), adjoint_method="exact")
    d2 = check_duality(dim6, TimeGrid(0.5, 400), adjoint_method="exact")
    assert 3.5 < d1 / d2 < 4.5


def test_connecting_form_matches_definition(dim6, grid_half, rng):
    C = connecting_from_data(response(dim6, grid_half.doubled()))
    for _ in range(5):
        f = sine_control(grid_half, rng.standard_normal(6) + 1j * rng.standard_normal(6))
        g = sine_control(grid_half, rng.standard_normal(6) + 1j * rng.standard_normal(6))
        ref = connecting_direct(dim6, f, g, method="cn")
        assert abs(C.form(f, g) - ref) <= 1e-5 * abs(ref)


def test_connecting_form_sesquilinear(dim6, grid_half, rng):
    C = connecting_from_data(response(dim6, grid_half.doubled()))
    f1, f2, g = (sine_control(grid_half, rng.standard_normal(4)) for _ in range(3))
    a = 0.3 - 1.1j
    fa = ControlSignal(grid_half, f1.values + a * f2.values)
    assert np.isclose(C.form(fa, g), C.form(f1, g) + a * C.form(f2, g), rtol=1e-12)
    ga = ControlSignal(grid_half, a * g.values)
    assert np.isclose(C.form(f1, ga), np.conj(a) * C.form(f1, g), rtol=1e-12)


def test_forward_zero_control_stays_zero(dim6, grid_half):
    u = solve_forward(dim6, ControlSignal(grid_half, np.zeros(grid_half.n + 1)))
    assert np.all(u == 0)


def test_abstract_kernel_conjugates_and_negates(dim6):
    K = response(dim6, TimeGrid(0.2, 20))
    Ka = abstract_kernel(K)
    assert np.array_equal(Ka.matrix, -np.conj(K.matrix))


@settings(max_examples=20, deadline=None)
@given(n=st.integers(4, 40).filter(lambda n: n % 2 == 0), T=st.floats(0.1, 3.0))
def test_connecting_from_data_requires_even_kernel_grid(n, T):
    sys_ = FiniteSystem(np.diag([1.0, 2.0]), np.ones((2, 1)))
    C = connecting_from_data(response(sys_, TimeGrid(T, n)))
    assert C.grid.n == n // 2
    assert np.isclose(C.grid.T, T / 2)


def test_invalid_inputs_rejected():
    with pytest.raises(ValidationError):
        FiniteSystem(np.ones((2, 3)), np.ones((2, 1)))
    with pytest.raises(ValidationError):
        TimeGrid(-1.0, 10)
    with pytest.raises(ValidationError):
        jordan_testbed("dim7")
