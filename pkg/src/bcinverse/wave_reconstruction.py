"""Potential reconstruction from spectral data through the wave system.

The wave equation ``w_tt - w_xx + Q w = 0`` with boundary control ``f`` at
``x = 0`` has the connecting form ``(C_w f, g) = (w^f(T), w_#^g(T))`` in
``L^2(0, ell)``, where ``w_#`` solves the equation with ``Q^T``.  Expanding
both states in the biorthogonal root vectors gives

``(C_w f, g) = int g^H f + int int g(s)^H F(T - s, T - t) f(t) ds dt``

with the lag kernel

``F(a, b) = sum_k sum_{m, m'} s_k^{(m')}(a)/m'! s_k^{(m)}(b)/m! P_{k, m+m'} - free``,

``s_k(a) = sin(sqrt(lam_k) a)/sqrt(lam_k)``, derivatives taken in ``lam`` and
``P_{k,p} = sum_j phi_k^j'(0) psi_k^{j+p}'(0)^H``.  The free-operator modes
(``lam = (k pi/ell)^2``, ``P = 2 k^2 pi^2 / ell^3``) sum to the identity and
are subtracted explicitly; levels beyond the truncation are replaced by the
asymptotic model ``lam ~ (k pi/ell)^2 + Qbar``.

Solving ``C_w p_j = (T - t) e_j`` and reading ``mu_j(T) = p_j(0+)`` yields the
columns of ``M(T) = y(T)`` for ``y'' = Q y``, ``y(0) = 0``, ``y'(0) = I``,
hence ``Q(T) = M''(T) M(T)^{-1}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sl
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline
from scipy.signal import savgol_filter

from .grids import SpaceGrid, TimeGrid, trapezoid_weights
from .spectral_recovery import SpectralData
from .validation import ValidationError

__all__ = [
    "WaveConnecting",
    "LagKernel",
    "ControlSolution",
    "BoundaryTraceMatrix",
    "RecoveredPotential",
    "ReconstructionConfig",
    "chain_sines",
    "volterra_coefficients",
    "group_levels",
    "estimate_qbar",
    "assemble_Cw",
    "solve_control_equation",
    "extract_mu",
    "y_oracle",
    "recover_potential",
]


# ---------------------------------------------------------------------------
# sine functions of Jordan blocks
# ---------------------------------------------------------------------------


def _block_sine(X, h, n):
    """``s(i h; X)`` for stacked square matrices ``X`` (shape ``(B, d, d)``), ``i = 0..n``.

    ``s(a; X) = sin(sqrt(X) a) / sqrt(X)`` is the top-right block of
    ``exp(a [[0, I], [-X, 0]])``; powers of the one-step exponential are
    accumulated, so the result is exact up to round-off for any ``X``.
    Returns shape ``(n+1, B, d, d)``.
    """
    X = np.asarray(X, complex)
    B, d = X.shape[0], X.shape[1]
    Z = np.zeros((B, 2 * d, 2 * d), complex)
    Z[:, :d, d:] = np.eye(d)
    Z[:, d:, :d] = -X
    step = np.array([sl.expm(h * z) for z in Z])
    out = np.zeros((n + 1, B, d, d), complex)
    cur = np.broadcast_to(np.eye(2 * d), (B, 2 * d, 2 * d)).copy()
    for i in range(n + 1):
        out[i] = cur[:, :d, d:]
        if i < n:
            cur = cur @ step
    return out


def chain_sines(lam, L, h, n):
    """``(1/m!) d^m/dlam^m [sin(sqrt(lam) a)/sqrt(lam)]`` for ``m < L`` on ``a = i h``.

    Evaluated as the first row of the sine function of the Jordan matrix
    ``lam I + N``; the branch of the square root is immaterial because the
    function is entire in ``lam`` (``lam = 0`` gives ``a``).  Shape ``(n+1, L)``.
    """
    X = lam * np.eye(L, dtype=complex) + np.eye(L, k=1)
    return _block_sine(X[None], h, n)[:, 0, 0, :]


def volterra_coefficients(record, f, grid, side="forward"):
    """Modal coefficients of the wave state driven by ``f``.

    ``side="forward"``: ``a^l(t) = (w^f(t), psi^l)`` solving
    ``a^l'' + lam a^l + a^{l+1} = psi^l'(0)^H f`` (top of the chain first,
    ``a^{L+1} = 0``).  ``side="adjoint"``: ``c^l = (w_#^f(t), phi^l)`` with
    ``c^l'' + conj(lam) c^l + c^{l-1} = phi^l'(0)^H f`` (``c^0 = 0``).
    Each level is a trapezoid convolution with ``sin(sqrt(lam) t)/sqrt(lam)``.

    Parameters
    ----------
    record : SpectralRecord
    f : ndarray, shape (n+1, N)
    grid : TimeGrid

    Returns
    -------
    ndarray, shape (L, n+1)
    """
    f = np.asarray(f, complex).reshape(grid.n + 1, -1)
    L = record.L
    dphi = -1j * np.asarray(record.Phi)  # phi'(0)
    dpsi = 1j * np.asarray(record.Psi)  # psi'(0)
    lam = record.lam if side == "forward" else np.conj(record.lam)
    s = chain_sines(lam, 1, grid.dt, grid.n)[:, 0]
    n = grid.n
    w = grid.dt
    out = np.zeros((L, n + 1), complex)

    def conv(src):
        res = np.zeros(n + 1, complex)
        for i in range(1, n + 1):
            wt = np.full(i + 1, w)
            wt[0] = wt[-1] = 0.5 * w
            res[i] = np.sum(wt * s[i::-1] * src[: i + 1])
        return res

    if side == "forward":
        for l in range(L - 1, -1, -1):
            src = f @ dpsi[l].conj()
            if l + 1 < L:
                src = src - out[l + 1]
            out[l] = conv(src)
    elif side == "adjoint":
        for l in range(L):
            src = f @ dphi[l].conj()
            if l > 0:
                src = src - out[l - 1]
            out[l] = conv(src)
    else:
        raise ValidationError(f"unknown side {side!r}")
    return out


# ---------------------------------------------------------------------------
# levels and asymptotics
# ---------------------------------------------------------------------------


def group_levels(data, n_levels=None):
    """Split the sorted records into frequency levels of algebraic size ``N``."""
    N = data.dim_Y
    levels, cur, size = [], [], 0
    for r in data.records:
        cur.append(r)
        size += r.L
        if size >= N:
            levels.append(cur)
            cur, size = [], 0
        if n_levels is not None and len(levels) == n_levels:
            break
    return levels


def free_level(k, ell):
    """``((k pi/ell)^2, 2 k^2 pi^2 / ell^3)`` of the unperturbed Dirichlet problem."""
    mu = (k * math.pi / ell) ** 2
    return mu, 2.0 * (k * math.pi) ** 2 / ell**3


def estimate_qbar(levels, ell, n_top=5):
    """Mean potential ``Qbar`` from the top levels.

    For large ``k`` the level sums obey ``sum lam P_0 + P_1 ~ c_k (mu_k + Qbar)``
    and ``sum P_0 ~ c_k I``, so
    ``Qbar_k = (sum P_0)^{-1} sum (lam P_0 + P_1) - mu_k I``; the estimates of
    the ``n_top`` highest levels are averaged.
    """
    if not levels:
        return None
    ests = []
    for k in range(max(1, len(levels) - n_top + 1), len(levels) + 1):
        lev = levels[k - 1]
        mu, _ = free_level(k, ell)
        A = sum(r.products()[0] for r in lev)
        Bm = sum(r.lam * r.products()[0] + (r.products()[1] if r.L > 1 else 0.0) for r in lev)
        ests.append(np.linalg.solve(A, Bm) - mu * np.eye(A.shape[0]))
    return np.mean(ests, axis=0)


# ---------------------------------------------------------------------------
# connecting form
# ---------------------------------------------------------------------------


@dataclass
class LagKernel:
    """``F(a_i, a_j)`` on the lag grid ``a_i = i h``, shape ``(n+1, N, n+1, N)``."""

    h: float
    F: np.ndarray
    K: int
    qbar: np.ndarray | None
    tail_levels: int
    tail_norm: float = 0.0

    @property
    def n(self):
        return self.F.shape[0] - 1

    @property
    def N(self):
        return self.F.shape[1]

    def form_matrix(self, n):
        """Weighted form matrix for horizon ``T = n h``; lag of node ``t_i`` is ``T - t_i``."""
        if n > self.n:
            raise ValidationError(f"horizon index {n} exceeds lag grid {self.n}")
        N = self.N
        idx = np.arange(n, -1, -1)
        Fs = self.F[idx][:, :, idx, :]
        w = trapezoid_weights(n, self.h)
        G = w[:, None, None, None] * Fs * w[None, None, :, None]
        G = G.reshape((n + 1) * N, (n + 1) * N)
        G[np.diag_indices_from(G)] += np.repeat(w, N)
        return G


def build_lag_kernel(data, ell, h, n, K=None, tail=True, tail_levels=None, n_top=5):
    """Lag kernel from spectral data alone.

    Parameters
    ----------
    data : SpectralData
    ell : float
        Interval length.
    h, n : float, int
        Lag step and number of steps (``n h >= T_max``).
    K : int, optional
        Number of frequency levels used (default: all complete levels).
    tail : bool
        Add the shifted asymptotic model for levels ``K+1 .. tail_levels``.
    tail_levels : int, optional
        Defaults to ``1.5 ell / h``.
    """
    N = data.dim_Y
    levels = group_levels(data)
    if K is None:
        K = len(levels)
    if K > len(levels):
        raise ValidationError(f"K={K} exceeds the {len(levels)} complete levels available")
    levels = levels[:K]
    F = np.zeros((n + 1, N, n + 1, N), complex)
    for lev in levels:
        for r in lev:
            S = chain_sines(r.lam, r.L, h, n)
            P = r.products()
            for m in range(r.L):
                for mp in range(r.L - m):
                    F += np.einsum("a,b,ij->aibj", S[:, mp], S[:, m], P[m + mp])
    I = np.eye(N)
    if K:
        ks = np.arange(1, K + 1)
        lam0 = (ks * np.pi / ell) ** 2
        c0 = 2.0 * (ks * np.pi) ** 2 / ell**3
        S0 = chain_sines_batch(lam0, h, n)
        F -= np.einsum("ak,bk,k,ij->aibj", S0, S0, c0, I, optimize=True)
    qbar = estimate_qbar(levels, ell, n_top) if (tail and K) else None
    Kt = int(round(1.5 * ell / h)) if tail_levels is None else int(tail_levels)
    tail_norm = 0.0
    if qbar is not None and Kt > K:
        ks = np.arange(K + 1, Kt + 1)
        mu = (ks * np.pi / ell) ** 2
        c0 = 2.0 * (ks * np.pi) ** 2 / ell**3
        X = mu[:, None, None] * I[None] + qbar[None]
        St = _block_sine(X, h, n)  # (n+1, B, N, N)
        S0 = chain_sines_batch(mu, h, n)
        na, B = St.shape[0], St.shape[1]
        left = (St * c0[None, :, None, None]).transpose(0, 2, 1, 3).reshape(na * N, B * N)
        right = St.transpose(1, 2, 0, 3).reshape(B * N, na * N)
        Ft = (left @ right).reshape(na, N, na, N)
        Ft -= np.einsum("ak,bk,k,ij->aibj", S0, S0, c0, I, optimize=True)
        tail_norm = float(np.linalg.norm(Ft) * h)
        F += Ft
    return LagKernel(h, F, K, qbar, Kt, tail_norm)


def chain_sines_batch(lam, h, n):
    """Scalar ``sin(sqrt(lam) a)/sqrt(lam)`` for many ``lam``; shape ``(n+1, len(lam))``."""
    lam = np.asarray(lam, complex)
    a = np.arange(n + 1) * h
    z = np.sqrt(lam)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.sin(np.outer(a, z)) / z[None, :]
    out[:, np.abs(z) == 0] = a[:, None]
    return out


@dataclass
class WaveConnecting:
    """Wave connecting form on ``[0, T]``: ``(C_w f, g) = g^H matrix f``."""

    grid: TimeGrid
    matrix: np.ndarray
    K: int
    dim_Y: int
    tail_norm: float = 0.0

    def form(self, f, g):
        return complex(np.vdot(np.asarray(g).reshape(-1), self.matrix @ np.asarray(f).reshape(-1)))

    def form_adjoint(self, g, f):
        """``(C_w^* g, f)``; equals ``conj(form(f, g))`` exactly."""
        return complex(np.vdot(np.asarray(f).reshape(-1), self.matrix.conj().T @ np.asarray(g).reshape(-1)))

    def apply(self, f):
        w = np.repeat(self.grid.weights, self.dim_Y)
        return ((self.matrix @ np.asarray(f).reshape(-1)) / w).reshape(self.grid.n + 1, self.dim_Y)


def assemble_Cw(data, tgrid, K=None, ell=1.0, tail=True, tail_levels=None):
    """Wave connecting form on ``tgrid`` from spectral data only.

    Raises
    ------
    ValidationError
        If ``K`` exceeds the number of complete frequency levels.
    """
    N = data.dim_Y
    if len(data) == 0:
        n1 = (tgrid.n + 1) * N
        return WaveConnecting(tgrid, np.diag(np.repeat(tgrid.weights, N)).astype(complex), 0, N)
    lk = build_lag_kernel(data, ell, tgrid.dt, tgrid.n, K, tail, tail_levels)
    return WaveConnecting(tgrid, lk.form_matrix(tgrid.n), lk.K, N, lk.tail_norm)


# ---------------------------------------------------------------------------
# control equation
# ---------------------------------------------------------------------------


@dataclass
class ControlSolution:
    """Regularized solution of ``C_w p = (T - t) e_j``."""

    p: np.ndarray
    alpha: float
    residual: float
    reliable: bool
    alphas: np.ndarray = field(repr=False, default=None)
    residuals: np.ndarray = field(repr=False, default=None)
    norms: np.ndarray = field(repr=False, default=None)


def _menger(x, y):
    """Discrete curvature of a planar polyline at interior vertices."""
    k = np.zeros(len(x))
    for i in range(1, len(x) - 1):
        p, q, r = np.array([x[i - 1], y[i - 1]]), np.array([x[i], y[i]]), np.array([x[i + 1], y[i + 1]])
        a, b, c = np.linalg.norm(q - p), np.linalg.norm(r - q), np.linalg.norm(r - p)
        area2 = (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])
        k[i] = 2.0 * area2 / (a * b * c) if a * b * c > 0 else 0.0
    return k


def robust_svd(G):
    """SVD with a fallback to the QR-iteration driver when divide-and-conquer fails."""
    try:
        return np.linalg.svd(G)
    except np.linalg.LinAlgError:
        return sl.svd(G, lapack_driver="gesvd")


def tikhonov_lcurve(G, rhs, alphas=None, svd=None):
    """Tikhonov solutions on a fixed 12-point grid and the L-curve corner.

    The grid spans ``1e-14 .. 1e-3`` times the largest singular value.  When
    the norm of the solution varies by less than 1% across the grid (the
    well-posed regime, where the L-curve has no corner) the smallest
    parameter is used.

    Returns
    -------
    p, alpha, info : ndarray, float, dict
    """
    U, s, Vh = svd if svd is not None else robust_svd(G)
    if alphas is None:
        alphas = s[0] * np.logspace(-14, -3, 12)
    beta = U.conj().T @ rhs
    rn = np.linalg.norm(rhs)
    sols, res, nrm = [], [], []
    for a in alphas:
        filt = s / (s**2 + a**2)
        p = Vh.conj().T @ (filt * beta)
        sols.append(p)
        res.append(np.linalg.norm(G @ p - rhs))
        nrm.append(np.linalg.norm(p))
    res, nrm = np.array(res), np.array(nrm)
    if rn == 0:
        return np.zeros_like(rhs), float(alphas[0]), {"alphas": alphas, "residuals": res, "norms": nrm}
    if (nrm.max() - nrm.min()) <= 0.01 * nrm.max():
        i = 0
    else:
        kappa = _menger(np.log(np.maximum(res, 1e-300)), np.log(np.maximum(nrm, 1e-300)))
        i = int(np.argmax(np.abs(kappa)))
    return sols[i], float(alphas[i]), {"alphas": alphas, "residuals": res, "norms": nrm}


def solve_control_equation(Cw, j, T=None, svd=None, residual_tol=0.05):
    """Solve ``(C_w p_j)(t) = (T - t) e_j`` on the grid of ``Cw``.

    Parameters
    ----------
    Cw : WaveConnecting
    j : int
        Coordinate index (0-based); ``None`` gives the zero right-hand side.
    T : float, optional
        Defaults to the grid horizon.
    """
    grid, N = Cw.grid, Cw.dim_Y
    T = grid.T if T is None else T
    e = np.zeros(N)
    if j is not None:
        e[j] = 1.0
    rhs = (grid.weights * (T - grid.t))[:, None] * e[None, :]
    rhs = rhs.reshape(-1).astype(complex)
    p, alpha, info = tikhonov_lcurve(Cw.matrix, rhs, svd=svd)
    rn = np.linalg.norm(rhs)
    rel = float(np.linalg.norm(Cw.matrix @ p - rhs) / rn) if rn > 0 else 0.0
    return ControlSolution(p.reshape(grid.n + 1, N), alpha, rel, rel <= residual_tol,
                           info["alphas"], info["residuals"], info["norms"])


def extract_mu(p, t, stencil_len=8, fit_tol=0.1):
    """Boundary value ``mu = p(0+)`` from a degree-2 fit on the first samples.

    Parameters
    ----------
    p : ndarray, shape (n+1,) or (n+1, N)
    t : ndarray
        Sample times.

    Returns
    -------
    mu : ndarray, shape (N,)
    flagged : bool
        Fit residual larger than ``fit_tol * |mu|``.
    """
    p = np.asarray(p)
    if p.ndim == 1:
        p = p[:, None]
    if p.shape[0] < stencil_len or stencil_len < 3:
        raise ValidationError("need at least 3 samples and stencil_len >= 3")
    tt = np.asarray(t)[:stencil_len]
    V = np.vander(tt, 3)
    coef, *_ = np.linalg.lstsq(V, p[:stencil_len], rcond=None)
    mu = coef[-1]
    resid = np.linalg.norm(V @ coef - p[:stencil_len])
    return mu, bool(resid > fit_tol * max(np.linalg.norm(mu), 1e-300))


def y_oracle(Q, x, rtol=1e-12, atol=1e-14):
    """Fundamental solution ``y'' = Q y``, ``y(0) = 0``, ``y'(0) = I`` at points ``x``.

    ``Q`` is any callable ``x -> (len(x), N, N)``.  Returns shape ``(len(x), N, N)``
    whose column ``j`` is ``y_j``.
    """
    x = np.atleast_1d(np.asarray(x, float))
    N = np.asarray(Q(np.array([0.0]))).shape[-1]

    def rhs(s, z):
        Y = z[: N * N].reshape(N, N)
        dY = z[N * N:].reshape(N, N)
        q = np.asarray(Q(np.array([s])))[0]
        return np.concatenate([dY.ravel(), (q @ Y).ravel()])

    z0 = np.concatenate([np.zeros(N * N), np.eye(N).ravel()])
    sol = solve_ivp(rhs, (0.0, float(x.max())), z0, method="DOP853", t_eval=np.sort(x), rtol=rtol, atol=atol)
    order = np.argsort(np.argsort(x))
    Y = sol.y[: N * N].T.reshape(-1, N, N)
    return Y[order]


# ---------------------------------------------------------------------------
# reconstruction
# ---------------------------------------------------------------------------


@dataclass
class BoundaryTraceMatrix:
    """``M(T)`` on the reconstruction grid; column ``j`` is ``mu_j(T)``."""

    T: np.ndarray
    M: np.ndarray
    det: np.ndarray
    residual: np.ndarray
    alpha: np.ndarray


@dataclass
class RecoveredPotential:
    """Reconstructed potential on the T-grid (``x = T``)."""

    x: np.ndarray
    values: np.ndarray
    masked: np.ndarray
    det_M: np.ndarray
    residual: np.ndarray
    ell: float
    trace: BoundaryTraceMatrix = field(repr=False, default=None)
    reliable: bool = True
    report: dict = field(default_factory=dict)

    @property
    def N(self):
        return self.values.shape[1]

    def interior(self, lo=0.1, hi=0.9):
        return (self.x >= lo * self.ell - 1e-12) & (self.x <= hi * self.ell + 1e-12)

    def relative_l2_error(self, Q_true, lo=0.1, hi=0.9):
        """Interior relative L^2 error against a callable ``x -> (n, N, N)``."""
        m = self.interior(lo, hi)
        ref = np.asarray(Q_true(self.x[m]))
        den = np.sqrt(np.sum(np.abs(ref) ** 2))
        num = np.sqrt(np.sum(np.abs(self.values[m] - ref) ** 2))
        return float(num / den) if den > 0 else float(num)

    def max_abs(self, lo=0.1, hi=0.9):
        return float(np.max(np.abs(self.values[self.interior(lo, hi)])))


@dataclass
class ReconstructionConfig:
    """Wave-stage parameters."""

    ell: float = 1.0
    K: int = 30
    n_T: int = 200
    steps_per_T: int = 2
    tail: bool = True
    tail_levels: int | None = None
    stencil_len: int = 8
    sg_window: int = 9
    sg_degree: int = 4
    det_threshold: float = 1e-6
    max_masked_fraction: float = 0.2


def recover_potential(data, config=None):
    """Reconstruct ``Q`` on ``T_m = m ell / n_T`` from spectral data.

    Parameters
    ----------
    data : SpectralData
        The only input; the true potential is never consulted.
    config : ReconstructionConfig, optional

    Returns
    -------
    RecoveredPotential
        ``reliable`` is false when more than ``max_masked_fraction`` of the grid
        is masked or a control equation is unresolved.
    """
    cfg = config or ReconstructionConfig()
    if not isinstance(data, SpectralData):
        raise ValidationError("recover_potential accepts SpectralData only")
    if len(data) == 0:
        raise ValidationError("empty spectral data")
    N, ell = data.dim_Y, cfg.ell
    nT, sp = cfg.n_T, cfg.steps_per_T
    h = ell / (nT * sp)
    lk = build_lag_kernel(data, ell, h, nT * sp, cfg.K, cfg.tail, cfg.tail_levels)
    Ts = np.arange(1, nT + 1) * sp * h
    Ms = np.zeros((nT, N, N), complex)
    res = np.zeros(nT)
    alph = np.zeros(nT)
    for m in range(nT):
        n = (m + 1) * sp
        grid = TimeGrid(float(Ts[m]), n)
        Cw = WaveConnecting(grid, lk.form_matrix(n), lk.K, N)
        svd = robust_svd(Cw.matrix)
        worst, a_used = 0.0, 0.0
        for j in range(N):
            sol = solve_control_equation(Cw, j, svd=svd)
            mu, _ = extract_mu(sol.p, grid.t, min(cfg.stencil_len, n + 1))
            Ms[m, :, j] = mu
            worst, a_used = max(worst, sol.residual), max(a_used, sol.alpha)
        res[m], alph[m] = worst, a_used
    return _finish(Ts, Ms, res, alph, ell, cfg, lk)


def _finish(Ts, Ms, res, alph, ell, cfg, lk):
    nT, N = Ms.shape[0], Ms.shape[1]
    det = np.array([np.linalg.det(M) for M in Ms])
    thr = cfg.det_threshold * np.median(np.abs(det))
    masked = np.abs(det) < thr
    win = min(cfg.sg_window, nT - (1 - nT % 2))
    dT = Ts[1] - Ts[0] if nT > 1 else ell
    M2 = savgol_filter(Ms.real, win, cfg.sg_degree, deriv=2, delta=dT, axis=0) + 1j * savgol_filter(
        Ms.imag, win, cfg.sg_degree, deriv=2, delta=dT, axis=0)
    Qh = np.zeros_like(Ms)
    for m in range(nT):
        if not masked[m]:
            Qh[m] = M2[m] @ np.linalg.inv(Ms[m])
    good = ~masked
    if masked.any() and good.sum() >= 4:
        Qh[masked] = CubicSpline(Ts[good], Qh[good], axis=0)(Ts[masked])
    frac = float(masked.mean())
    trace = BoundaryTraceMatrix(Ts, Ms, det, res, alph)
    imag = float(np.max(np.abs(Qh.imag))) if Qh.size else 0.0
    values = Qh.real
    reliable = frac <= cfg.max_masked_fraction and bool(np.all(res <= 0.05))
    report = {
        "K": lk.K,
        "masked_fraction": frac,
        "max_control_residual": float(res.max()),
        "max_imag_part": imag,
        "qbar": None if lk.qbar is None else lk.qbar.real.tolist(),
        "tail_levels": lk.tail_levels,
        "tail_norm": lk.tail_norm,
        "status": "ok" if reliable else "unreliable",
    }
    return RecoveredPotential(Ts, values, masked, det, res, ell, trace, reliable, report)
