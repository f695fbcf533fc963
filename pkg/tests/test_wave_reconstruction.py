import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bcinverse.grids import TimeGrid
from bcinverse.schrodinger_forward import free_spectral_data
from bcinverse.spectral_recovery import SpectralData
from bcinverse.validation import ValidationError
from bcinverse.wave_reconstruction import (ReconstructionConfig, assemble_Cw, chain_sines, estimate_qbar,
                                           extract_mu, group_levels, recover_potential, tikhonov_lcurve, y_oracle)


def test_y_oracle_closed_forms():
    x = np.linspace(0.05, 1.0, 20)
    y0 = y_oracle(lambda s: np.zeros((np.size(s), 1, 1)), x)[:, 0, 0]
    assert np.allclose(y0, x, atol=1e-12)
    yc = y_oracle(lambda s: np.full((np.size(s), 1, 1), 2.0), x)[:, 0, 0]
    assert np.allclose(yc, np.sinh(np.sqrt(2) * x) / np.sqrt(2), atol=1e-11)


def test_chain_sines_simple_eigenvalue():
    lam, h, n = 9.0, 0.01, 50
    s = chain_sines(lam, 1, h, n)
    t = h * np.arange(n + 1)
    assert np.allclose(np.asarray(s).reshape(-1)[: n + 1], np.sin(3 * t) / 3, atol=1e-12)


def test_free_wave_form_is_identity():
    """Q = 0 spectral data gives the identity wave form on T <= ell."""
    g = TimeGrid(1.0, 200)
    Cw = assemble_Cw(free_spectral_data(30, 1.0, 1), g, K=30)
    W = np.diag(g.weights)
    assert np.allclose(Cw.matrix, W, atol=1e-10 * W.max())


@settings(max_examples=25, deadline=None)
@given(c=st.lists(st.floats(-5, 5), min_size=3, max_size=3), stencil=st.integers(4, 12))
def test_extract_mu_recovers_quadratic_intercept(c, stencil):
    t = np.linspace(0, 0.1, 20)
    p = c[0] + c[1] * t + c[2] * t**2
    mu, flagged = extract_mu(p, t, stencil)
    assert np.isclose(mu[0], c[0], atol=1e-9)


def test_extract_mu_rejects_short_stencil():
    with pytest.raises(ValidationError):
        extract_mu(np.zeros(2), np.zeros(2), 8)


def test_tikhonov_well_posed_uses_smallest_alpha(rng):
    G = np.eye(10) + 0.1 * rng.standard_normal((10, 10))
    b = rng.standard_normal(10)
    p, alpha, info = tikhonov_lcurve(G, b)
    assert alpha == info["alphas"][0]
    assert np.allclose(G @ p, b, atol=1e-8)


def test_levels_and_qbar():
    d = free_spectral_data(20, 1.0, 2, 1.5)
    levels = group_levels(d)
    assert len(levels) == 20 and all(len(lv) == 2 for lv in levels)
    qbar = estimate_qbar(levels, 1.0)
    assert np.allclose(qbar, 1.5 * np.eye(2), atol=1e-10)


@pytest.fixture(scope="module")
def shift_rec():
    return recover_potential(free_spectral_data(30, 1.0, 1, 2.0), ReconstructionConfig(n_T=80))


def test_boundary_trace_matches_fundamental_solution(shift_rec):
    x = shift_rec.x
    y = np.sinh(np.sqrt(2) * x) / np.sqrt(2)
    assert np.allclose(shift_rec.trace.M[:, 0, 0], y, rtol=1e-2)


def test_shift_recovered_from_analytic_data(shift_rec):
    m = shift_rec.interior()
    assert np.max(np.abs(shift_rec.values[m, 0, 0] - 2.0)) < 1e-2
    assert shift_rec.reliable and shift_rec.report["masked_fraction"] == 0.0


def test_zero_recovered_from_analytic_data():
    rec = recover_potential(free_spectral_data(30, 1.0, 2), ReconstructionConfig(n_T=40))
    assert rec.max_abs() < 1e-6


def test_recover_rejects_bad_input():
    with pytest.raises(ValidationError):
        recover_potential("not data")
    with pytest.raises(ValidationError):
        recover_potential(SpectralData([], 1, {}))
    with pytest.raises(ValidationError):
        recover_potential(free_spectral_data(5, 1.0, 1), ReconstructionConfig(K=30))
