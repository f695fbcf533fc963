import numpy as np
import pytest
from sklearn.base import clone

from bcinverse import PotentialReconstructor, SpectralRecovery, ValidationError, jordan_testbed, response
from bcinverse.grids import TimeGrid
from bcinverse.schrodinger_forward import free_spectral_data


def test_params_round_trip():
    est = SpectralRecovery(M=25, convention="abstract", cluster_tol=1e-3)
    c = clone(est)
    assert c.get_params() == est.get_params()
    rec = PotentialReconstructor(K=12).set_params(n_T=50)
    assert rec.get_params()["n_T"] == 50


def test_spectral_recovery_on_testbed():
    K = response(jordan_testbed("dim6"), TimeGrid(8.0, 1600))
    est = SpectralRecovery(M=20, convention="abstract", rank_tol=1e-10, residual_tol=1e-6, cluster_tol=1e-3,
                           chain_tol=1e-6).fit(K)
    assert sorted(est.multiplicities_.tolist()) == [1, 2, 3]
    assert est.transform() is est.spectral_data_


def test_reconstructor_predict():
    rec = PotentialReconstructor(n_T=40).fit(free_spectral_data(30, 1.0, 1, 1.0))
    q = rec.predict([0.3, 0.5])
    assert q.shape == (2, 1, 1)
    assert np.allclose(q, 1.0, atol=0.05)
    with pytest.raises(ValidationError):
        rec.predict([1.5])


def test_inputs_validated():
    with pytest.raises(ValidationError):
        SpectralRecovery().fit(np.zeros((5, 5)))
    with pytest.raises(ValidationError):
        SpectralRecovery(convention="other").fit(response(jordan_testbed("dim6"), TimeGrid(1.0, 40)))
    with pytest.raises(ValidationError):
        PotentialReconstructor().fit("data")
