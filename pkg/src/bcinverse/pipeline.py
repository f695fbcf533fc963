"""Pipeline stages shared by the command line and the acceptance gate.

``simulate`` is the only stage that touches the potential; it imports the
forward simulator lazily so that the inversion stages (``recover_spectrum``
and ``reconstruct``) can run in a process where that module is unavailable.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .abstract_system import jordan_testbed, response
from .estimators import PotentialReconstructor, SpectralRecovery
from .grids import SpaceGrid, TimeGrid
from .validation import ValidationError

__all__ = ["HorizonError", "StageResult", "load_potential", "simulate", "recover_spectrum", "reconstruct"]


class HorizonError(ValidationError):
    """Kernel horizon shorter than the requested ``2T``."""


@dataclass
class StageResult:
    value: object
    meta: dict = field(default_factory=dict)
    runtime: float = 0.0


def _testbed_system(name):
    import numpy as np

    from .abstract_system import FiniteSystem

    if name in ("dim6", "dim5"):
        return jordan_testbed(name)
    if name == "diag3":
        return FiniteSystem(np.diag([1 + 1j, 2.0, 3 - 0.5j]), np.eye(3))
    raise ValidationError(f"unknown testbed {name!r} (dim6, dim5, diag3)")


def load_potential(cfg):
    """Potential from a preset name or a ``x,entry_..`` CSV file."""
    from .formats import read_potential_csv
    from .schrodinger_forward import MatrixPotential

    p = cfg["problem"]
    path = cfg.potential_path()
    if path is None:
        n_x = cfg["discretization"]["n_x"]
        return MatrixPotential.preset(p["potential"], SpaceGrid(p["ell"], n_x), N=p["N"])
    x, vals, _ = read_potential_csv(path)
    if not np.isclose(x[-1], p["ell"], rtol=1e-12):
        raise ValidationError(f"{path}: last node {x[-1]} differs from ell={p['ell']}")
    return MatrixPotential(SpaceGrid(float(x[-1]), x.size - 1), vals, None, str(path))


def simulate(cfg):
    """Measured kernel on ``[0, 2T]`` with ``n_t`` steps.

    Returns
    -------
    StageResult
        ``value`` is the :class:`ResponseKernel`; ``meta`` carries provenance
        (convention, preset, acausal mass, config hash).
    """
    t0 = time.perf_counter()
    d, p, s = cfg["discretization"], cfg["problem"], cfg["solver"]
    grid = TimeGrid(2.0 * d["T"], d["n_t"])
    if d["n_t"] % 2:
        raise ValidationError("n_t must be even (the kernel horizon is 2T)")
    if p["testbed"]:
        K = response(_testbed_system(p["testbed"]), grid)
        meta = {"convention": "abstract", "source": f"testbed:{p['testbed']}"}
    else:
        from .schrodinger_forward import synthesize_response_kernel

        Q = load_potential(cfg)
        K = synthesize_response_kernel(Q, grid, d["scheme"], d["n_x"], noise=s["noise"], seed=p["seed"])
        meta = {"convention": "schrodinger", "source": Q.name, "N": Q.N, "ell": repr(Q.ell)}
    meta.update({"acausal_mass": repr(K.acausal_mass()), "config_hash": cfg.hash})
    return StageResult(K, meta, time.perf_counter() - t0)


def recover_spectrum(kernel, cfg, convention="schrodinger"):
    """Connecting form on ``[0, T]`` and the spectral algorithm.

    Raises
    ------
    HorizonError
        When the kernel covers less than ``2T``.
    """
    t0 = time.perf_counter()
    d, s = cfg["discretization"], cfg["solver"]
    T = d["T"]
    if kernel.grid.T < 2.0 * T * (1 - 1e-12):
        raise HorizonError(f"kernel horizon {kernel.grid.T} is shorter than 2T = {2 * T}")
    if not np.isclose(kernel.grid.T, 2.0 * T, rtol=1e-12):
        from .abstract_system import ResponseKernel

        # restrict to [0, 2T] when the kernel carries a longer horizon
        n2 = int(round(2.0 * T / kernel.grid.dt))
        if not np.isclose(n2 * kernel.grid.dt, 2.0 * T, rtol=1e-9) or n2 % 2:
            raise HorizonError(f"2T = {2 * T} is not an even multiple of the kernel step {kernel.grid.dt}")
        sz = (n2 + 1) * kernel.dim_Y
        kernel = ResponseKernel(TimeGrid(2.0 * T, n2), kernel.matrix[:sz, :sz], kernel.dim_Y)
    est = SpectralRecovery(M=d["M"], convention=convention, derivative=d["derivative"],
                           rank_tol=s["rank_tol"], residual_tol=s["residual_tol"], pair_tol=s["pair_tol"],
                           cluster_tol=s["cluster_tol"], null_tol=s["null_tol"], chain_tol=s["chain_tol"],
                           refine_check=s["refine_check"], refine_tol=s["refine_tol"])
    if not np.any(kernel.matrix):
        from .spectral_recovery import SpectralData

        sd = SpectralData([], kernel.dim_Y, {"reason": "no spectrum recoverable"}, status="empty")
    else:
        sd = est.fit(kernel).spectral_data_
    return StageResult(sd, {"config_hash": cfg.hash}, time.perf_counter() - t0)


def reconstruct(data, cfg):
    """Wave-stage reconstruction from spectral data."""
    t0 = time.perf_counter()
    d, s, p = cfg["discretization"], cfg["solver"], cfg["problem"]
    est = PotentialReconstructor(ell=p["ell"], K=d["K"], n_T=d["n_T"], steps_per_T=d["steps_per_T"],
                                 tail=s["tail"], stencil_len=s["stencil_len"], sg_window=s["sg_window"],
                                 sg_degree=s["sg_degree"], det_threshold=s["det_threshold"],
                                 max_masked_fraction=s["max_masked_fraction"])
    rec = est.fit(data).recovered_
    return StageResult(rec, {"config_hash": cfg.hash}, time.perf_counter() - t0)
