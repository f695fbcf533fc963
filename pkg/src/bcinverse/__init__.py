"""Boundary-control recovery of nonsymmetric matrix potentials.

The inversion path (``abstract_system``, ``spectral_recovery``,
``wave_reconstruction`` and the estimators) works from boundary measurements
only.  ``schrodinger_forward`` synthesizes those measurements and is imported
lazily so that it never enters the inversion path.
"""

from .abstract_system import (ConnectingMatrix, ControlSignal, FiniteSystem, JordanSpec, ResponseKernel,
                              connecting_from_data, jordan_testbed, response)
from .config import RunConfig, default_config, load_config
from .estimators import PotentialReconstructor, SpectralRecovery
from .grids import SpaceGrid, TimeGrid
from .spectral_recovery import RecoveryConfig, SpectralData, SpectralRecord, run_algorithm
from .validation import ValidationError
from .wave_reconstruction import ReconstructionConfig, RecoveredPotential, recover_potential

__version__ = "0.1.0"

__all__ = [
    "ConnectingMatrix",
    "ControlSignal",
    "FiniteSystem",
    "JordanSpec",
    "PotentialReconstructor",
    "ReconstructionConfig",
    "RecoveredPotential",
    "RecoveryConfig",
    "ResponseKernel",
    "RunConfig",
    "SpaceGrid",
    "SpectralData",
    "SpectralRecord",
    "SpectralRecovery",
    "TimeGrid",
    "ValidationError",
    "connecting_from_data",
    "default_config",
    "jordan_testbed",
    "load_config",
    "recover_potential",
    "response",
    "run_algorithm",
]
