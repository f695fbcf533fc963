"""Finite-dimensional boundary-control systems.

The forward system is ``i u' - A u = B f`` and the adjoint system is
``i v' + A^* v = -B g``, both started from rest, with observation ``O = B^*``.
Everything downstream (pencils, traces, the data-side connecting form) is
checked first on these matrix systems, where ground truth is available in
closed form.

Time stepping is Crank-Nicolson on a uniform grid.  The response kernel is
assembled from hat-function controls and exploits time invariance: every
interior hat produces the same impulse response, shifted.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sl

from .grids import TimeGrid
from .validation import ValidationError, check_complex_matrix, check_samples

__all__ = [
    "FiniteSystem",
    "JordanSpec",
    "ControlSignal",
    "ResponseKernel",
    "ConnectingMatrix",
    "jordan_testbed",
    "solve_forward",
    "solve_adjoint",
    "response",
    "check_duality",
    "connecting_direct",
    "connecting_from_data",
    "abstract_kernel",
    "observe_reversed",
]


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class JordanSpec:
    """Prescribed Jordan structure for a synthetic operator ``A = P J P^{-1}``.

    Parameters
    ----------
    blocks : sequence of (complex, int)
        Eigenvalue and block size for each Jordan block.
    seed : int
        Seed for the random similarity ``P = I + eps*R``.
    cond_bound : float
        ``eps`` is halved from 0.5 until ``cond(P)`` drops below this bound.
    """

    blocks: tuple
    seed: int = 0
    cond_bound: float = 1e3

    def __post_init__(self):
        blocks = tuple((complex(lam), int(size)) for lam, size in self.blocks)
        if not blocks or any(size < 1 for _, size in blocks):
            raise ValidationError("Jordan blocks must be non-empty with positive sizes")
        object.__setattr__(self, "blocks", blocks)

    @property
    def dim(self):
        return sum(size for _, size in self.blocks)

    def jordan_matrix(self):
        J = np.zeros((self.dim, self.dim), complex)
        pos = 0
        for lam, size in self.blocks:
            for r in range(size):
                J[pos + r, pos + r] = lam
                if r + 1 < size:
                    J[pos + r, pos + r + 1] = 1.0
            pos += size
        return J

    def similarity(self):
        """Return ``P`` with ``cond(P)`` below ``cond_bound``, deterministically."""
        rng = np.random.default_rng(self.seed)
        R = rng.standard_normal((self.dim, self.dim))
        eps = 0.5
        while True:
            P = np.eye(self.dim) + eps * R
            if np.linalg.cond(P) < self.cond_bound:
                return P.astype(complex)
            eps *= 0.5


@dataclass(frozen=True)
class FiniteSystem:
    """Matrix realization of the abstract control system.

    Attributes
    ----------
    A : ndarray, shape (dim_H, dim_H)
    B : ndarray, shape (dim_H, dim_Y)
    structure : dict or None
        Present when built from a :class:`JordanSpec`; holds ``P``, ``P_inv``
        and ``J`` so that chains can be read off for oracle checks.
    """

    A: np.ndarray
    B: np.ndarray
    structure: dict | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        A = check_complex_matrix(self.A, "A", square=True)
        B = check_complex_matrix(self.B, "B", shape=(A.shape[0], None))
        if B.shape[1] > A.shape[0]:
            raise ValidationError("dim_Y must not exceed dim_H")
        if np.linalg.matrix_rank(B) < B.shape[1]:
            raise ValidationError("B must have full column rank")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def dim_H(self):
        return self.A.shape[0]

    @property
    def dim_Y(self):
        return self.B.shape[1]

    @property
    def O(self):
        """Observation operator ``B^*``."""
        return self.B.conj().T

    @classmethod
    def from_jordan(cls, spec, B=None, dim_Y=1, seed=None):
        """Build ``A = P J P^{-1}``; a random full-rank ``B`` is drawn if omitted."""
        J = spec.jordan_matrix()
        P = spec.similarity()
        P_inv = np.linalg.inv(P)
        A = P @ J @ P_inv
        if B is None:
            rng = np.random.default_rng(spec.seed + 1 if seed is None else seed)
            B = rng.standard_normal((spec.dim, dim_Y)) + 0j
        return cls(A, B, structure={"P": P, "P_inv": P_inv, "J": J, "spec": spec})

    def generator(self, adjoint=False):
        """Return ``(G, F)`` with ``u' = G u + F f`` for the chosen system."""
        if adjoint:
            return 1j * self.A.conj().T, 1j * self.B
        return -1j * self.A, -1j * self.B

    def chains(self):
        """Root-vector chains ``[(lam, phi[L, dim_H], psi[L, dim_H]), ...]``.

        ``phi`` satisfies ``(A - lam) phi^1 = 0``, ``(A - lam) phi^l = phi^{l-1}``;
        ``psi`` satisfies ``(A^* - conj(lam)) psi^L = 0``,
        ``(A^* - conj(lam)) psi^l = psi^{l+1}``; and ``(phi^l, psi^s) = delta``.
        """
        if self.structure is None:
            raise ValidationError("system carries no Jordan structure")
        P, P_inv = self.structure["P"], self.structure["P_inv"]
        out, pos = [], 0
        for lam, size in self.structure["spec"].blocks:
            cols = slice(pos, pos + size)
            out.append((lam, P[:, cols].T.copy(), P_inv[cols, :].conj()))
            pos += size
        return out


def jordan_testbed(kind="dim6", dim_Y=1):
    """Deterministic Jordan testbeds used throughout the tests.

    ``"dim6"`` has blocks of sizes 1, 2, 3 with complex eigenvalues,
    ``"dim5"`` has a 2-block and a 3-block.
    """
    if kind == "dim6":
        spec = JordanSpec(((0.5 + 0.3j, 1), (1.0 - 0.4j, 2), (1.6 + 0.2j, 3)), seed=0)
    elif kind == "dim5":
        spec = JordanSpec(((0.8 - 0.2j, 2), (1.5 + 0.3j, 3)), seed=3)
    else:
        raise ValidationError(f"unknown testbed {kind!r}")
    return FiniteSystem.from_jordan(spec, dim_Y=dim_Y)


@dataclass(frozen=True)
class ControlSignal:
    """``Y``-valued samples on a :class:`TimeGrid`; ``values`` has shape ``(n+1, dim_Y)``."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=complex)
        if vals.ndim == 1:
            vals = vals[:, None]
        object.__setattr__(self, "values", check_samples(vals, self.grid.n + 1, vals.shape[1], "control"))

    @property
    def dim_Y(self):
        return self.values.shape[1]

    @classmethod
    def from_function(cls, grid, func, dim_Y=1):
        vals = np.array([np.atleast_1d(func(t)) for t in grid.t], dtype=complex).reshape(grid.n + 1, dim_Y)
        return cls(grid, vals)

    def vanishes_at_ends(self, tol=0.0):
        return bool(np.all(np.abs(self.values[[0, -1]]) <= tol))


def _node_weights(grid, dim_Y):
    return np.repeat(grid.weights, dim_Y)


@dataclass(frozen=True)
class ResponseKernel:
    """Dense block matrix of a sampled response operator.

    Block ``(i, j)`` (size ``dim_Y x dim_Y``) maps the control sample at
    ``t_j`` to the observation at ``t_i``; the flattened index is
    ``node*dim_Y + coordinate``.
    """

    grid: TimeGrid
    matrix: np.ndarray
    dim_Y: int = 1

    def __post_init__(self):
        size = (self.grid.n + 1) * self.dim_Y
        object.__setattr__(self, "matrix", check_complex_matrix(self.matrix, "kernel", shape=(size, size)))

    @property
    def weights(self):
        return _node_weights(self.grid, self.dim_Y)

    def apply(self, f):
        """Apply to a :class:`ControlSignal` (or raw samples); returns ``(n+1, dim_Y)``."""
        vals = f.values if isinstance(f, ControlSignal) else check_samples(f, self.grid.n + 1, self.dim_Y, "control")
        return (self.matrix @ vals.reshape(-1)).reshape(self.grid.n + 1, self.dim_Y)

    def acausal_mass(self):
        """Relative Frobenius mass strictly above the block diagonal."""
        n1, d = self.grid.n + 1, self.dim_Y
        blocks = self.matrix.reshape(n1, d, n1, d)
        upper = np.triu(np.ones((n1, n1), bool), k=1)
        num = np.linalg.norm(blocks.transpose(0, 2, 1, 3)[upper])
        den = np.linalg.norm(self.matrix)
        return float(num / den) if den > 0 else 0.0

    def is_causal(self, tol=1e-10):
        return self.acausal_mass() <= tol


@dataclass(frozen=True)
class ConnectingMatrix:
    """Sesquilinear form of a connecting operator on sampled controls.

    ``(C f, g) = g^H @ matrix @ f`` with quadrature weights already folded in,
    so ``matrix / weights[:, None]`` is the operator acting on samples.
    """

    grid: TimeGrid
    matrix: np.ndarray
    dim_Y: int = 1

    def __post_init__(self):
        size = (self.grid.n + 1) * self.dim_Y
        object.__setattr__(self, "matrix", check_complex_matrix(self.matrix, "connecting form", shape=(size, size)))

    @property
    def weights(self):
        return _node_weights(self.grid, self.dim_Y)

    def form(self, f, g):
        fv = f.values if isinstance(f, ControlSignal) else np.asarray(f)
        gv = g.values if isinstance(g, ControlSignal) else np.asarray(g)
        return complex(np.vdot(gv.reshape(-1), self.matrix @ fv.reshape(-1)))

    def apply(self, f):
        """Samples of ``C f`` as a function of time, shape ``(n+1, dim_Y)``."""
        fv = f.values if isinstance(f, ControlSignal) else np.asarray(f)
        out = (self.matrix @ fv.reshape(-1)) / self.weights
        return out.reshape(self.grid.n + 1, self.dim_Y)

    def apply_adjoint(self, g):
        """Samples of ``C^* g`` with respect to the weighted pairing."""
        gv = g.values if isinstance(g, ControlSignal) else np.asarray(g)
        out = (self.matrix.conj().T @ gv.reshape(-1)) / self.weights
        return out.reshape(self.grid.n + 1, self.dim_Y)

    def scaled(self, c):
        return ConnectingMatrix(self.grid, c * self.matrix, self.dim_Y)


# ---------------------------------------------------------------------------
# time stepping
# ---------------------------------------------------------------------------


def _step_operators(G, F, dt, method):
    """One-step map ``u_{k+1} = E u_k + Fa f_k + Fb f_{k+1}``.

    ``"cn"`` is Crank-Nicolson with trapezoidal input.  ``"exact"`` integrates
    exactly for piecewise-linear controls (first-order hold via an augmented
    matrix exponential); it serves as an independent discretization.
    """
    n, m = F.shape
    if method == "cn":
        I = np.eye(n)
        lu = sl.lu_factor(I - 0.5 * dt * G)
        E = sl.lu_solve(lu, I + 0.5 * dt * G)
        Fd = 0.5 * dt * sl.lu_solve(lu, F)
        return E, Fd, Fd
    if method == "exact":
        aug = np.zeros((n + 2 * m, n + 2 * m), complex)
        aug[:n, :n] = G * dt
        aug[:n, n:n + m] = F * dt
        aug[n:n + m, n + m:] = np.eye(m)
        ex = sl.expm(aug)
        E, G1, G2 = ex[:n, :n], ex[:n, n:n + m], ex[:n, n + m:]
        return E, G1 - G2, G2
    raise ValidationError(f"unknown time-stepping method {method!r}")


def _propagate(E, Fa, Fb, fvals):
    n1 = fvals.shape[0]
    u = np.zeros((n1, E.shape[0]), complex)
    for k in range(n1 - 1):
        u[k + 1] = E @ u[k] + Fa @ fvals[k] + Fb @ fvals[k + 1]
    return u


def _check_signal(sys, f):
    if not isinstance(f, ControlSignal):
        raise ValidationError("expected a ControlSignal")
    if f.dim_Y != sys.dim_Y:
        raise ValidationError(f"control has dim_Y={f.dim_Y}, system expects {sys.dim_Y}")


def solve_forward(sys, f, method="cn"):
    """State trajectory ``u^f`` of ``i u' - A u = B f``, ``u(0)=0``; shape ``(n+1, dim_H)``."""
    _check_signal(sys, f)
    G, F = sys.generator(adjoint=False)
    return _propagate(*_step_operators(G, F, f.grid.dt, method), f.values)


def solve_adjoint(sys, g, method="cn"):
    """State trajectory ``v^g`` of ``i v' + A^* v = -B g``, ``v(0)=0``."""
    _check_signal(sys, g)
    G, F = sys.generator(adjoint=True)
    return _propagate(*_step_operators(G, F, g.grid.dt, method), g.values)


def toeplitz_kernel(first_column, impulse, n, dim_Y):
    """Assemble a block lower-triangular kernel from its impulse responses.

    Parameters
    ----------
    first_column : ndarray, shape (n+1, dim_Y, dim_Y)
        Output blocks for a unit control sample at ``t_0``.
    impulse : ndarray, shape (n+1, dim_Y, dim_Y)
        Output blocks ``h_m`` at ``t_{j+m}`` for a unit sample at any ``t_j``, ``j >= 1``.
    """
    n1, d = n + 1, dim_Y
    K = np.zeros((n1, d, n1, d), complex)
    K[:, :, 0, :] = first_column
    cols = np.arange(1, n1)
    for m in range(n1 - 1):
        j = cols[: n1 - 1 - m]
        K[j + m, :, j, :] = impulse[m]
    return K.reshape(n1 * d, n1 * d)


def response(sys, grid, adjoint=False, method="cn"):
    """Sampled response operator ``f -> B^* u^f`` on ``grid``.

    Parameters
    ----------
    sys : FiniteSystem
    grid : TimeGrid
        Horizon of the kernel (use ``2T`` when it feeds the connecting form).
    adjoint : bool
        Build ``R_#`` of the adjoint system instead.
    method : {"cn", "exact"}

    Returns
    -------
    ResponseKernel
    """
    G, F = sys.generator(adjoint=adjoint)
    E, Fa, Fb = _step_operators(G, F, grid.dt, method)
    O = sys.O
    n, d = grid.n, sys.dim_Y
    first = np.zeros((n + 1, d, d), complex)
    imp = np.zeros((n + 1, d, d), complex)
    s = Fa.copy()
    for m in range(1, n + 1):
        first[m] = O @ s
        s = E @ s
    s = Fb.copy()
    imp[0] = O @ s
    if n >= 1:
        s = E @ Fb + Fa
        for m in range(1, n + 1):
            imp[m] = O @ s
            s = E @ s
    return ResponseKernel(grid, toeplitz_kernel(first, imp, n, d), d)


def _reversal(n, d):
    return np.arange((n + 1) * d).reshape(n + 1, d)[::-1].reshape(-1)


def check_duality(sys, grid, adjoint_method="cn", restrict="interior", norm="operator"):
    """Relative deviation in the transposed duality identity ``(R_#)^* J = J R``.

    Parameters
    ----------
    sys : FiniteSystem
    grid : TimeGrid
    adjoint_method : {"cn", "exact"}
        Discretization of ``R_#``.  ``"cn"`` uses the same scheme as ``R`` and
        reproduces the identity to round-off on the interior block; ``"exact"``
        compares two independent discretizations and converges as ``dt**2``.
    restrict : {"interior", "full"}
        ``"interior"`` drops the endpoint nodes (controls in H^1_0).  The full
        matrix carries an O(dt) endpoint defect from the half-weight corner.
    norm : {"operator", "fro"}
        Induced weighted L^2 operator norm or plain Frobenius norm.

    Returns
    -------
    float
    """
    R = response(sys, grid).matrix
    Rs = response(sys, grid, adjoint=True, method=adjoint_method).matrix
    d = sys.dim_Y
    w = _node_weights(grid, d)
    rev = _reversal(grid.n, d)
    lhs = (Rs.conj().T * w[None, :] / w[:, None])[:, rev]
    rhs = R[rev, :]
    keep = slice(d, grid.n * d) if restrict == "interior" else slice(None)
    diff, ref = (lhs - rhs)[keep, keep], rhs[keep, keep]
    if norm == "operator":
        sw = np.sqrt(w[keep])
        scale = lambda X: sw[:, None] * X / sw[None, :]
        num, den = np.linalg.norm(scale(diff), 2), np.linalg.norm(scale(ref), 2)
    elif norm == "fro":
        num, den = np.linalg.norm(diff), np.linalg.norm(ref)
    else:
        raise ValidationError(f"unknown norm {norm!r}")
    return float(num / den)


# ---------------------------------------------------------------------------
# connecting operator
# ---------------------------------------------------------------------------


def connecting_direct(sys, f, g, method="cn"):
    """Definitional form ``(u^f(T), v^g(T))_H``, conjugate-linear in ``g``."""
    if f.grid != g.grid:
        raise ValidationError("f and g must share a grid")
    u = solve_forward(sys, f, method)[-1]
    v = solve_adjoint(sys, g, method)[-1]
    return complex(np.vdot(v, u))


def connecting_from_data(R2T, dim_Y=None):
    """Connecting form ``C^T = -i Z^* J^{2T} R^{2T} Z`` from a kernel on ``[0, 2T]``.

    Zero extension and time reversal are index operations: the form entry for
    test sample ``i`` and control sample ``j`` is ``-i w_i R^{2T}[2n-i, j]``.
    """
    d = R2T.dim_Y if dim_Y is None else dim_Y
    if R2T.grid.n % 2:
        raise ValidationError("kernel horizon must be 2T with an even number of steps")
    grid = R2T.grid.halved()
    n = grid.n
    blocks = R2T.matrix.reshape(2 * n + 1, d, 2 * n + 1, d)
    rows = 2 * n - np.arange(n + 1)
    sub = blocks[rows][:, :, : n + 1, :]
    w = grid.weights
    form = -1j * w[:, None, None, None] * sub
    return ConnectingMatrix(grid, form.reshape((n + 1) * d, (n + 1) * d), d)


def observe_reversed(sys, a, grid):
    """Output ``O w(t)`` of ``i w' + A w = 0`` with ``w(T) = a``; shape ``(n+1, dim_Y)``."""
    a = np.asarray(a, dtype=complex).reshape(sys.dim_H)
    back = sl.expm(-1j * sys.A * grid.dt)
    w = np.zeros((grid.n + 1, sys.dim_H), complex)
    w[-1] = a
    for k in range(grid.n, 0, -1):
        w[k - 1] = back @ w[k]
    return w @ sys.O.T


def abstract_kernel(R):
    """Map a measured Neumann-trace kernel to the first-order form ``i u' - A u = B f``.

    For ``i u_t - u_xx + Q u = 0`` with Dirichlet control at ``x = 0`` the
    conjugated solution solves the abstract equation with ``A = -d^2/dx^2 + Q``
    and the abstract observation is ``-u_x(0)``, so the abstract kernel is
    ``-conj(R)``.
    """
    return ResponseKernel(R.grid, -np.conj(R.matrix), R.dim_Y)
