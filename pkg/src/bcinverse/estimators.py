"""scikit-learn style front end.

``SpectralRecovery`` learns spectral data from a response kernel and
``PotentialReconstructor`` learns the potential from spectral data.  Neither
accepts a potential: the inversion path sees measurements only.
"""

from __future__ import annotations

import numpy as np
from scipy.interpolate import CubicSpline
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .abstract_system import ResponseKernel, abstract_kernel, connecting_from_data
from .spectral_recovery import ControlBasis, RecoveryConfig, SpectralData, run_algorithm
from .validation import ValidationError
from .wave_reconstruction import ReconstructionConfig, recover_potential

__all__ = ["SpectralRecovery", "PotentialReconstructor", "check_kernel", "check_spectral_data"]


def check_kernel(kernel):
    """Accept a :class:`ResponseKernel` on ``[0, 2T]`` (even number of steps)."""
    if not isinstance(kernel, ResponseKernel):
        raise ValidationError(f"expected ResponseKernel, got {type(kernel).__name__}")
    if kernel.grid.n % 2:
        raise ValidationError("kernel grid must have an even number of steps (horizon 2T)")
    return kernel


def check_spectral_data(data):
    if not isinstance(data, SpectralData):
        raise ValidationError(f"expected SpectralData, got {type(data).__name__}")
    if len(data) == 0:
        raise ValidationError("spectral data is empty")
    return data


class SpectralRecovery(BaseEstimator):
    """Eigenvalues and boundary traces from a response kernel.

    Parameters
    ----------
    M : int
        Sine basis order per output coordinate.
    convention : {"schrodinger", "abstract"}
        ``"schrodinger"`` treats the kernel as measured Neumann traces of
        ``i u_t - u_xx + Q u = 0`` and maps it to the first-order form;
        ``"abstract"`` uses it as is.
    derivative, rank_tol, residual_tol, pair_tol, cluster_tol, null_tol, chain_tol, refine_check, refine_tol
        See :class:`RecoveryConfig`.

    Attributes
    ----------
    spectral_data_ : SpectralData
    eigenvalues_ : ndarray
    multiplicities_ : ndarray
    connecting_ : ConnectingMatrix
    """

    def __init__(self, M=300, convention="schrodinger", derivative="tustin", rank_tol=1e-12,
                 residual_tol=1e-5, pair_tol=1e-4, cluster_tol=1e-7, null_tol=1e-6, chain_tol=1e-4,
                 refine_check=True, refine_tol=1e-3):
        self.M = M
        self.convention = convention
        self.derivative = derivative
        self.rank_tol = rank_tol
        self.residual_tol = residual_tol
        self.pair_tol = pair_tol
        self.cluster_tol = cluster_tol
        self.null_tol = null_tol
        self.chain_tol = chain_tol
        self.refine_check = refine_check
        self.refine_tol = refine_tol

    def _config(self):
        return RecoveryConfig(M=self.M, derivative=self.derivative, rank_tol=self.rank_tol,
                              residual_tol=self.residual_tol, pair_tol=self.pair_tol,
                              cluster_tol=self.cluster_tol, null_tol=self.null_tol,
                              chain_tol=self.chain_tol, refine_check=self.refine_check,
                              refine_tol=self.refine_tol)

    def fit(self, kernel, y=None):
        kernel = check_kernel(kernel)
        if self.convention == "schrodinger":
            kernel = abstract_kernel(kernel)
        elif self.convention != "abstract":
            raise ValidationError(f"unknown convention {self.convention!r}")
        C = connecting_from_data(kernel)
        cfg = self._config()
        self.connecting_ = C
        self.spectral_data_ = run_algorithm(C, ControlBasis(C.grid, self.M, self.derivative), cfg)
        self.eigenvalues_ = self.spectral_data_.eigenvalues
        self.multiplicities_ = self.spectral_data_.multiplicities
        return self

    def transform(self, kernel=None):
        """Return the fitted :class:`SpectralData` (refitting when a kernel is given)."""
        if kernel is not None:
            self.fit(kernel)
        check_is_fitted(self, "spectral_data_")
        return self.spectral_data_

    def fit_transform(self, kernel, y=None):
        return self.fit(kernel).spectral_data_


class PotentialReconstructor(BaseEstimator):
    """Potential ``Q(x)`` on ``(0, ell)`` from spectral data.

    Parameters
    ----------
    ell : float
        Interval length.
    K : int
        Number of frequency levels used before the asymptotic tail.
    n_T : int
        Points of the reconstruction grid ``T_m = m ell / n_T``.
    steps_per_T, tail, tail_levels, stencil_len, sg_window, sg_degree, det_threshold, max_masked_fraction
        See :class:`ReconstructionConfig`.

    Attributes
    ----------
    recovered_ : RecoveredPotential
    x_ : ndarray
    potential_ : ndarray, shape (n_T, N, N)
    """

    def __init__(self, ell=1.0, K=30, n_T=200, steps_per_T=2, tail=True, tail_levels=None,
                 stencil_len=8, sg_window=9, sg_degree=4, det_threshold=1e-6, max_masked_fraction=0.2):
        self.ell = ell
        self.K = K
        self.n_T = n_T
        self.steps_per_T = steps_per_T
        self.tail = tail
        self.tail_levels = tail_levels
        self.stencil_len = stencil_len
        self.sg_window = sg_window
        self.sg_degree = sg_degree
        self.det_threshold = det_threshold
        self.max_masked_fraction = max_masked_fraction

    def fit(self, spectral_data, y=None):
        data = check_spectral_data(spectral_data)
        cfg = ReconstructionConfig(ell=self.ell, K=self.K, n_T=self.n_T, steps_per_T=self.steps_per_T,
                                   tail=self.tail, tail_levels=self.tail_levels, stencil_len=self.stencil_len,
                                   sg_window=self.sg_window, sg_degree=self.sg_degree,
                                   det_threshold=self.det_threshold,
                                   max_masked_fraction=self.max_masked_fraction)
        self.recovered_ = recover_potential(data, cfg)
        self.x_ = self.recovered_.x
        self.potential_ = self.recovered_.values
        return self

    def predict(self, x):
        """Spline interpolation of the reconstruction at ``x``; shape ``(len(x), N, N)``."""
        check_is_fitted(self, "recovered_")
        x = np.atleast_1d(np.asarray(x, float))
        if np.any((x < 0) | (x > self.ell)):
            raise ValidationError("prediction points must lie in [0, ell]")
        return CubicSpline(self.x_, self.potential_, axis=0, extrapolate=True)(x)
