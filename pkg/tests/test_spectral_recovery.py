import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bcinverse.abstract_system import ResponseKernel, connecting_from_data, jordan_testbed, response
from bcinverse.grids import TimeGrid
from bcinverse.spectral_recovery import (ControlBasis, EigenSolution, RecoveryConfig, SpectralData, SpectralRecord,
                                         detect_multiplicity, run_algorithm, solve_gevp, solve_gevp_adjoint)
from bcinverse.validation import ValidationError


def _recover(sys_, M, T=4.0, n=800, **cfg):
    grid = TimeGrid(T, n)
    C = connecting_from_data(response(sys_, grid.doubled()))
    return run_algorithm(C, config=RecoveryConfig(M=M, **cfg))


@pytest.fixture(scope="module")
def dim6_data():
    return _recover(jordan_testbed("dim6"), 20)


@settings(max_examples=25, deadline=None)
@given(M=st.integers(1, 30), n=st.integers(80, 400))
def test_sine_basis_is_orthonormal(M, n):
    """Trapezoid rule on the sine basis is exact (discrete orthogonality)."""
    b = ControlBasis(TimeGrid(1.0, n), M, derivative="analytic")
    G = b.gram()
    assert np.allclose(G, np.eye(M), atol=1e-12)


def test_tustin_basis_vanishes_on_last_step():
    b = ControlBasis(TimeGrid(1.0, 100), 10)
    S = b.samples()
    assert np.all(S[0] == 0) and np.all(S[-1] == 0)
    assert np.isclose(b.support, 0.99)


def test_basis_order_bounds():
    with pytest.raises(ValidationError):
        ControlBasis(TimeGrid(1.0, 10), 9)


def test_simple_spectrum_and_products(diag3):
    sd = _recover(diag3, 12)
    assert sd.multiplicities.tolist() == [1, 1, 1]
    assert np.allclose(np.sort_complex(sd.eigenvalues), np.sort_complex(np.array([1 + 1j, 2.0, 3 - 0.5j])),
                       atol=1e-8)
    for r in sd.records:
        k = int(np.argmin(np.abs(np.array([1 + 1j, 2.0, 3 - 0.5j]) - r.lam)))
        ref = np.zeros((3, 3))
        ref[k, k] = 1.0
        # B = I: the gauge-invariant product is the coordinate projector
        assert np.allclose(r.products()[0], ref, atol=1e-8)


def test_jordan_multiplicities(dim6_data):
    assert sorted(dim6_data.multiplicities.tolist()) == [1, 2, 3]


def test_jordan_eigenvalues(dim6_data):
    ref = np.array([0.5 + 0.3j, 1.0 - 0.4j, 1.6 + 0.2j])
    for lam in ref:
        assert np.min(np.abs(dim6_data.eigenvalues - lam)) < 1e-6


def test_jordan_products_match_chains(dim6_data):
    sys_ = jordan_testbed("dim6")
    O = sys_.O
    for lam, phi, psi in sys_.chains():
        r = min(dim6_data.records, key=lambda r: abs(r.lam - lam))
        L = len(phi)
        for p in range(L):
            P = sum(np.outer(O @ phi[j], (O @ psi[j + p]).conj()) for j in range(L - p))
            assert np.allclose(r.products()[p], P, rtol=0, atol=1e-4 * max(1.0, np.abs(P).max()))


def test_jordan_diagnostics(dim6_data):
    for r in dim6_data.records:
        d = r.diagnostics
        assert d["biorth_error"] < 1e-6
        if r.L > 1:
            assert d["shift_identity"] < 1e-6 and d["triangular_vanishing"] < 1e-6


def test_dim5_testbed():
    sd = _recover(jordan_testbed("dim5"), 20)
    assert sorted(sd.multiplicities.tolist()) == [2, 3]


def test_gevp_residuals_and_adjoint_conjugates(diag3):
    grid = TimeGrid(4.0, 800)
    C = connecting_from_data(response(diag3, grid.doubled()))
    b = ControlBasis(C.grid, 12)
    fw, ad = solve_gevp(C, b), solve_gevp_adjoint(C, b)
    for s in fw.retained:
        assert s.residual < 1e-6
    for lam in fw.eigenvalues:
        assert np.min(np.abs(ad.eigenvalues - lam)) < 1e-6


def test_zero_kernel_gives_empty():
    grid = TimeGrid(1.0, 100)
    C = connecting_from_data(ResponseKernel(grid, np.zeros((grid.n + 1, grid.n + 1)), 1))
    sd = run_algorithm(C, config=RecoveryConfig(M=10))
    assert len(sd) == 0 and sd.status == "empty"


def _sol(lam):
    return EigenSolution(complex(lam), np.zeros(1), 0.0, np.zeros(1))


def test_cluster_detection_groups_split_eigenvalues():
    eps = 1e-5
    sols = [_sol(1.0 + eps * np.exp(2j * np.pi * k / 3)) for k in range(3)] + [_sol(2.0), _sol(3.0)]
    cl = detect_multiplicity(sols, tol_cluster=1e-3)
    assert [c.size for c in cl] == [3, 1, 1]
    assert abs(cl[0].lam - 1.0) < 1e-12


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(1.0, 100.0), min_size=1, max_size=10, unique=True))
def test_well_separated_values_are_singletons(vals):
    vals = sorted(vals)
    if len(vals) > 1 and np.min(np.diff(vals)) < 0.01 * max(vals):
        return
    cl = detect_multiplicity([_sol(v) for v in vals], tol_cluster=1e-4)
    assert [c.size for c in cl] == [1] * len(vals)


def test_spectral_data_sorted_and_truncated():
    recs = [SpectralRecord(complex(l), 1, np.ones((1, 1)), np.ones((1, 1))) for l in (3.0, 1.0, 2.0)]
    sd = SpectralData(recs, 1, {})
    assert sd.eigenvalues.real.tolist() == [1.0, 2.0, 3.0]
    assert len(sd.truncated(2)) == 2
