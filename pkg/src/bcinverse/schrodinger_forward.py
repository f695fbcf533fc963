"""Forward simulator for ``i u_t - u_xx + Q(x) u = 0`` on ``(0, ell)``.

The boundary control enters at ``x = 0`` (``u(0, t) = f(t)``), ``u(ell, t) = 0``
and the measurement is the Neumann trace ``u_x(0, t)``.  Time stepping is
Crank-Nicolson; space is either Chebyshev collocation (default, spectrally
accurate in ``x``) or second-order central differences (``"fd2"``).

Nothing in the inversion path imports this module: it only produces the
response kernel bytes and, for tests, reference spectral data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sl
from scipy.interpolate import CubicSpline

from .abstract_system import ResponseKernel, abstract_kernel, toeplitz_kernel
from .grids import SpaceGrid, TimeGrid
from .spectral_recovery import SpectralData, SpectralRecord
from .validation import ValidationError, check_samples

__all__ = [
    "MatrixPotential",
    "SpatialOperator",
    "PDESolution",
    "solve_schrodinger",
    "solve_schrodinger_adjoint",
    "neumann_trace",
    "synthesize_response_kernel",
    "abstract_kernel",
    "dirichlet_spectrum_oracle",
    "free_spectral_data",
    "wave_final_states",
    "wave_connecting_direct",
]


# ---------------------------------------------------------------------------
# potentials
# ---------------------------------------------------------------------------


def _preset_function(name, N, ell):
    head, _, args = name.partition(":")
    vals = [float(a) for a in args.split(",")] if args else []
    if head == "zero":
        return (lambda x: np.zeros((np.size(x), N, N))), N
    if head == "shift":
        if len(vals) != 1:
            raise ValidationError("preset shift:c takes one value")
        c = vals[0]
        return (lambda x: np.broadcast_to(c * np.eye(N), (np.size(x), N, N)).copy()), N
    if head == "nonsym2x2":
        if len(vals) != 2:
            raise ValidationError("preset nonsym2x2:a,b takes two values")
        a, b = vals

        def q(x):
            x = np.atleast_1d(np.asarray(x, float))
            c, s = np.cos(np.pi * x / ell), np.sin(np.pi * x / ell)
            out = np.empty((x.size, 2, 2))
            out[:, 0, 0] = 0.5 * a * (1 + c)
            out[:, 0, 1] = b * s
            out[:, 1, 0] = -0.5 * b * np.sin(2 * np.pi * x / ell)
            out[:, 1, 1] = -0.5 * a * (1 - c)
            return out

        return q, 2
    raise ValidationError(f"unknown potential preset {name!r}")


@dataclass(frozen=True, eq=False)
class MatrixPotential:
    """Real ``N x N`` potential sampled on a uniform :class:`SpaceGrid`.

    ``func`` (vectorized ``x -> (len(x), N, N)``) is kept for analytic presets so
    that other discretizations can sample it exactly; tabulated potentials are
    evaluated with a cubic spline.
    """

    grid: SpaceGrid
    values: np.ndarray
    func: object = None
    name: str = "tabulated"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None, None]
        if v.ndim != 3 or v.shape[0] != self.grid.n_x + 1 or v.shape[1] != v.shape[2]:
            raise ValidationError(f"potential values must have shape (n_x+1, N, N), got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValidationError("potential contains non-finite values")
        object.__setattr__(self, "values", v)

    @property
    def ell(self):
        return self.grid.ell

    @property
    def N(self):
        return self.values.shape[1]

    @classmethod
    def from_function(cls, func, grid, name="function"):
        return cls(grid, func(grid.x), func, name)

    @classmethod
    def preset(cls, spec, grid, N=1):
        """``zero``, ``shift:c`` or ``nonsym2x2:a,b`` (the latter forces ``N = 2``)."""
        func, N = _preset_function(spec, N, grid.ell)
        return cls(grid, func(grid.x), func, spec)

    def __call__(self, x):
        x = np.atleast_1d(np.asarray(x, float))
        if self.func is not None:
            return np.asarray(self.func(x), float).reshape(x.size, self.N, self.N)
        return CubicSpline(self.grid.x, self.values, axis=0)(x)

    def transpose(self):
        f = None if self.func is None else (lambda x, g=self.func: np.swapaxes(g(x), 1, 2))
        return MatrixPotential(self.grid, np.swapaxes(self.values, 1, 2), f, self.name + "^T")

    def curvature(self):
        """Largest discrete second difference ``|Q_{i+1} - 2 Q_i + Q_{i-1}| / h^2``."""
        v = self.values
        if v.shape[0] < 3:
            return 0.0
        return float(np.max(np.abs(v[2:] - 2 * v[1:-1] + v[:-2])) / self.grid.h**2)

    def is_symmetric(self, tol=1e-14):
        return bool(np.max(np.abs(self.values - np.swapaxes(self.values, 1, 2))) <= tol)

    def max_norm(self):
        return float(np.max(np.abs(self.values)))


# ---------------------------------------------------------------------------
# spatial discretization
# ---------------------------------------------------------------------------


def clenshaw_curtis(n, ell):
    """Quadrature weights on the Gauss-Lobatto nodes returned by :func:`chebyshev`."""
    theta = np.pi * np.arange(n + 1) / n
    w = np.zeros(n + 1)
    v = np.ones(n - 1)
    inner = slice(1, n)
    if n % 2 == 0:
        w[0] = w[n] = 1.0 / (n * n - 1)
        for k in range(1, n // 2):
            v -= 2.0 * np.cos(2 * k * theta[inner]) / (4 * k * k - 1)
        v -= np.cos(n * theta[inner]) / (n * n - 1)
    else:
        w[0] = w[n] = 1.0 / (n * n)
        for k in range(1, (n - 1) // 2 + 1):
            v -= 2.0 * np.cos(2 * k * theta[inner]) / (4 * k * k - 1)
    w[inner] = 2.0 * v / n
    return 0.5 * ell * w


def chebyshev(n, ell):
    """Gauss-Lobatto nodes on ``[0, ell]`` (``x_0 = 0``) and the differentiation matrix."""
    j = np.arange(n + 1)
    xc = np.cos(np.pi * j / n)
    c = np.ones(n + 1)
    c[0] = c[-1] = 2.0
    c *= (-1.0) ** j
    dX = xc[:, None] - xc[None, :]
    D = np.outer(c, 1.0 / c) / (dX + np.eye(n + 1))
    D -= np.diag(D.sum(axis=1))
    return 0.5 * ell * (1.0 - xc), (-2.0 / ell) * D


@dataclass(frozen=True, eq=False)
class SpatialOperator:
    """Discrete ``-d^2/dx^2 + Q`` with the control column and trace row.

    Attributes
    ----------
    x : ndarray
        All nodes, ``x[0] = 0`` and ``x[-1] = ell``.
    A : ndarray
        Interior operator, shape ``(m N, m N)`` with node-major ordering.
    b : ndarray
        Column with which the boundary value ``u(0)`` enters ``-u_xx``
        (shape ``(m N, N)``).
    trace_row, trace_bnd : ndarray
        ``u_x(0) = trace_row @ u_int + trace_bnd * u(0)``.
    """

    scheme: str
    x: np.ndarray
    weights: np.ndarray
    A: np.ndarray
    b: np.ndarray
    trace_row: np.ndarray
    trace_bnd: float
    N: int

    @classmethod
    def build(cls, Q, scheme="chebyshev", n_x=None):
        n = Q.grid.n_x if n_x is None else int(n_x)
        if n < 3:
            raise ValidationError(f"need at least 3 spatial intervals, got {n}")
        N, I = Q.N, np.eye(Q.N)
        if scheme == "chebyshev":
            x, D = chebyshev(n, Q.ell)
            D2 = D @ D
            L = -D2[1:-1, 1:-1]
            bcol = -D2[1:-1, 0]
            trow, tb = D[0, 1:-1], D[0, 0]
            wq = clenshaw_curtis(n, Q.ell)
        elif scheme == "fd2":
            h = Q.ell / n
            x = np.arange(n + 1) * h
            m = n - 1
            L = (2.0 * np.eye(m) - np.eye(m, k=1) - np.eye(m, k=-1)) / h**2
            bcol = np.zeros(m)
            bcol[0] = -1.0 / h**2
            trow = np.zeros(m)
            trow[0], trow[1] = 4.0 / (2 * h), -1.0 / (2 * h)
            tb = -3.0 / (2 * h)
            wq = np.full(n + 1, h)
        else:
            raise ValidationError(f"unknown spatial scheme {scheme!r}")
        qv = Q(x[1:-1])
        A = np.kron(L, I) + sl.block_diag(*qv)
        return cls(scheme, x, np.repeat(wq[1:-1], N), A, np.kron(bcol[:, None], I), np.kron(trow[None, :], I), float(tb), N)


# ---------------------------------------------------------------------------
# time stepping
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class PDESolution:
    """Space-time samples ``u[k, i, :]`` at ``t_k`` and node ``x_i``."""

    u: np.ndarray
    x: np.ndarray
    tgrid: TimeGrid
    op: SpatialOperator = field(repr=False, default=None)


def _cn_maps(G, F, dt):
    I = np.eye(G.shape[0])
    lu = sl.lu_factor(I - 0.5 * dt * G)
    return sl.lu_solve(lu, I + 0.5 * dt * G), 0.5 * dt * sl.lu_solve(lu, F)


def _generator(op):
    # u_t = -i(u_xx - Q u) = i(A u + b f) on interior nodes
    return 1j * op.A, 1j * op.b


def _solve(op, f, tgrid, tol):
    fv = check_samples(f, tgrid.n + 1, op.N, "boundary control")
    if np.max(np.abs(fv[0])) > tol:
        raise ValidationError(f"control violates f(0)=0 (|f(0)|={np.max(np.abs(fv[0])):.3e})")
    G, F = _generator(op)
    E, Fd = _cn_maps(G, F, tgrid.dt)
    m = op.A.shape[0]
    ui = np.zeros((tgrid.n + 1, m), complex)
    for k in range(tgrid.n):
        ui[k + 1] = E @ ui[k] + Fd @ (fv[k] + fv[k + 1])
    n1 = op.x.size
    u = np.zeros((tgrid.n + 1, n1, op.N), complex)
    u[:, 0] = fv
    u[:, 1:-1] = ui.reshape(tgrid.n + 1, n1 - 2, op.N)
    return u


def _values(f):
    return f.values if hasattr(f, "values") else f


def solve_schrodinger(Q, f, tgrid, scheme="chebyshev", n_x=None, tol=1e-12):
    """Solve the controlled equation with zero initial state.

    Parameters
    ----------
    Q : MatrixPotential
    f : ControlSignal or array_like, shape (n_t+1, N)
        Boundary values at ``x = 0``; ``f(0)`` must vanish.
    tgrid : TimeGrid
    scheme : {"chebyshev", "fd2"}
    n_x : int, optional
        Spatial resolution (Chebyshev degree or interval count); defaults to
        ``Q.grid.n_x``.

    Returns
    -------
    PDESolution
    """
    op = SpatialOperator.build(Q, scheme, n_x)
    return PDESolution(_solve(op, _values(f), tgrid, tol), op.x, tgrid, op)


def solve_schrodinger_adjoint(Q, g, tgrid, scheme="chebyshev", n_x=None, tol=1e-12):
    """Same problem with the transposed potential ``Q^T``."""
    return solve_schrodinger(Q.transpose(), g, tgrid, scheme, n_x, tol)


def neumann_trace(sol):
    """``u_x(0, t)`` for every time sample, shape ``(n_t+1, N)``.

    Uniform grids use ``(-3 u_0 + 4 u_1 - u_2) / (2h)``; Chebyshev grids the
    first row of the collocation derivative.  Both are exact for quadratics.
    """
    u, x = sol.u, sol.x
    if x.size < 4:
        raise ValidationError("neumann_trace needs at least 3 intervals")
    h = np.diff(x)
    if np.allclose(h, h[0], rtol=1e-12, atol=0.0):
        return (-3.0 * u[:, 0] + 4.0 * u[:, 1] - u[:, 2]) / (2.0 * h[0])
    _, D = chebyshev(x.size - 1, x[-1])
    return np.einsum("j,kjn->kn", D[0], u)


def synthesize_response_kernel(Q, tgrid2T, scheme="chebyshev", n_x=None, noise=0.0, seed=None):
    """Sampled operator ``f -> u_x^f(0, .)`` on ``[0, 2T]``.

    Column ``j`` is the Neumann trace for a hat control centred at ``t_j`` in
    one coordinate.  The scheme is time invariant, so all columns ``j >= 1``
    are shifts of one impulse response; only ``2N`` solves are performed and
    the result equals the column-by-column construction to round-off.  Column 0
    (the hat at ``t = 0``) is computed even though admissible controls vanish
    there.

    Parameters
    ----------
    noise : float
        Optional additive complex Gaussian noise, relative to the kernel RMS.
    """
    op = SpatialOperator.build(Q, scheme, n_x)
    G, F = _generator(op)
    E, Fd = _cn_maps(G, F, tgrid2T.dt)
    n, N = tgrid2T.n, op.N
    first = np.zeros((n + 1, N, N), complex)
    imp = np.zeros((n + 1, N, N), complex)
    # hat at t_0: input f_0 = e_c only
    s = Fd.copy()
    first[0] = op.trace_bnd * np.eye(N)
    for m in range(1, n + 1):
        first[m] = op.trace_row @ s
        s = E @ s
    # hat at t_j (j>=1): contributes to steps j-1 -> j and j -> j+1
    s = Fd.copy()
    imp[0] = op.trace_row @ s + op.trace_bnd * np.eye(N)
    s = E @ Fd + Fd
    for m in range(1, n + 1):
        imp[m] = op.trace_row @ s
        s = E @ s
    K = toeplitz_kernel(first, imp, n, N)
    if noise:
        rng = np.random.default_rng(seed)
        rms = np.sqrt(np.mean(np.abs(K) ** 2))
        K = _causal_part(K + noise * rms * (rng.standard_normal(K.shape) + 1j * rng.standard_normal(K.shape)) / math.sqrt(2), n, N)
    return ResponseKernel(tgrid2T, K, N)


def _causal_part(K, n, N):
    blocks = K.reshape(n + 1, N, n + 1, N)
    mask = np.tril(np.ones((n + 1, n + 1)))
    return (blocks * mask[:, None, :, None]).reshape(K.shape)


# ---------------------------------------------------------------------------
# spectral oracle
# ---------------------------------------------------------------------------


def dirichlet_spectrum_oracle(Q, n_modes, scheme="chebyshev", n_x=None, cluster_tol=1e-7):
    """Reference spectral data of ``-d^2/dx^2 + Q`` with Dirichlet conditions.

    ``phi`` are eigenvectors of the discretized operator and ``psi`` those of
    the discretized adjoint (potential ``Q^T``), paired in the quadrature
    inner product so that ``(phi_k, psi_j) = delta``.  Collocation matrices are
    not self-adjoint in that inner product, so taking ``psi`` from the adjoint
    operator instead of the inverse eigenvector matrix keeps the traces
    spectrally accurate.  Clusters with numerically dependent eigenvectors are
    treated as Jordan chains grown by least squares; the eigenvector
    conditioning is reported in the diagnostics.

    Returns
    -------
    SpectralData
        Traces follow the recovery convention ``Phi = i phi'(0)``,
        ``Psi = -i psi'(0)`` (boundary observation ``-u_x(0)``).
    """
    op = SpatialOperator.build(Q, scheme, n_x)
    opT = SpatialOperator.build(Q.transpose(), scheme, n_x)
    w = op.weights
    lam, P = np.linalg.eig(op.A)
    mu, Pa = np.linalg.eig(opT.A)
    order = np.argsort(lam.real, kind="stable")
    lam, P = lam[order], P[:, order]
    records, k = [], 0
    while k < lam.size and len(records) < n_modes:
        j = k + 1
        while j < lam.size and abs(lam[j] - lam[k]) <= cluster_tol * max(1.0, abs(lam[k])):
            j += 1
        c = complex(lam[k:j].mean())
        Pk = P[:, k:j]
        cond = float(np.linalg.cond(Pk)) if j - k > 1 else 1.0
        if j - k > 1 and cond > 1e6:
            records.append(_oracle_chain(op, opT, c, j - k, cond))
        else:
            near = np.argsort(np.abs(mu - np.conj(c)))[: j - k]
            Ps = Pa[:, near]
            G = Ps.conj().T @ (w[:, None] * Pk)
            Pk = Pk @ np.linalg.inv(G)
            for a in range(j - k):
                records.append(_oracle_record(op, lam[k + a], [Pk[:, a]], [Ps[:, a]], {"cond": cond}))
        k = j
    return SpectralData(records[:n_modes], op.N, {"source": "oracle", "scheme": scheme})


def _oracle_record(op, lam, phis, psis, diag):
    Phi = np.array([1j * (op.trace_row @ p) for p in phis])
    Psi = np.array([-1j * (op.trace_row @ p) for p in psis])
    return SpectralRecord(complex(lam), len(phis), Phi, Psi, dict(diag))


def _oracle_chain(op, opT, lam, L, cond):
    w = op.weights
    I = np.eye(op.A.shape[0])
    Af, Aa = op.A - lam * I, opT.A - np.conj(lam) * I
    pair = lambda u, v: complex(np.vdot(v, w * u))
    psis = [np.linalg.svd(Aa)[2][-1].conj()]
    for _ in range(1, L):
        psis.insert(0, np.linalg.lstsq(Aa, psis[0], rcond=1e-10)[0])
    phi = np.linalg.svd(Af)[2][-1].conj()
    phis = [phi / pair(phi, psis[0])]
    for _ in range(1, L):
        nxt = np.linalg.lstsq(Af, phis[-1], rcond=1e-10)[0]
        phis.append(nxt - pair(nxt, psis[0]) * phis[0])
    G = np.array([[pair(f, g) for g in psis] for f in phis])
    return _oracle_record(op, lam, phis, psis, {"cond": cond, "defective": True,
                                                "biorth_error": float(np.max(np.abs(G - np.eye(L))))})


def free_spectral_data(n_levels, ell=1.0, N=1, shift=0.0):
    """Closed-form spectral data of ``-d^2/dx^2 + c I`` with Dirichlet conditions.

    ``lam_k = (k pi/ell)^2 + c`` with ``N`` records per level and
    ``phi'(0) = psi'(0) = sqrt(2/ell) k pi/ell e_a``.
    """
    records = []
    for k in range(1, n_levels + 1):
        d = math.sqrt(2.0 / ell) * k * math.pi / ell
        for a in range(N):
            e = np.zeros(N)
            e[a] = d
            records.append(SpectralRecord((k * math.pi / ell) ** 2 + shift, 1, (1j * e)[None], (-1j * e)[None], {}))
    return SpectralData(records, N, {"source": "analytic", "shift": shift})


# ---------------------------------------------------------------------------
# wave oracle
# ---------------------------------------------------------------------------


def wave_final_states(Q, controls, tgrid, n_x=None, adjoint=False):
    """Final states ``w^f(., T)`` of ``w_tt - w_xx + Q w = 0``, ``w(0, t) = f``.

    Independent of the spectral machinery: second-order differences in space
    and the trapezoidal rule (Crank-Nicolson) on the first-order system
    ``(w, w_t)`` in time.  All controls are propagated together.

    Parameters
    ----------
    Q : MatrixPotential
    controls : ndarray, shape (n_controls, n_t+1, N)
    adjoint : bool
        Use ``Q^T``.

    Returns
    -------
    x, weights, states : ndarrays
        Interior nodes, quadrature weights and states of shape
        ``(n_controls, m, N)``.
    """
    op = SpatialOperator.build(Q.transpose() if adjoint else Q, "fd2", n_x)
    m = op.A.shape[0]
    I = np.eye(m)
    Z = np.zeros((2 * m, 2 * m))
    Z[:m, m:] = I
    Z[m:, :m] = -op.A
    Fb = np.zeros((2 * m, op.N))
    Fb[m:] = -op.b
    E, Fd = _cn_maps(Z, Fb, tgrid.dt)
    c = np.asarray(controls, complex)
    if c.ndim != 3 or c.shape[1] != tgrid.n + 1 or c.shape[2] != op.N:
        raise ValidationError(f"controls must have shape (n_controls, {tgrid.n + 1}, {op.N}), got {c.shape}")
    nc = c.shape[0]
    z = np.zeros((2 * m, nc), complex)
    for k in range(tgrid.n):
        z = E @ z + Fd @ (c[:, k].T + c[:, k + 1].T)
    states = z[:m].T.reshape(nc, -1, op.N)
    return op.x[1:-1], op.weights.reshape(-1, op.N)[:, 0], states


def wave_connecting_direct(Q, controls, tgrid, n_x=None):
    """Definitional wave form ``G[b, a] = (w^{f_a}(T), w_#^{f_b}(T))_{L^2}``."""
    _, w, fw = wave_final_states(Q, controls, tgrid, n_x)
    _, _, bw = wave_final_states(Q, controls, tgrid, n_x, adjoint=True)
    return np.einsum("bxn,x,axn->ba", bw.conj(), w, fw)
