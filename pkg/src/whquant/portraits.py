"""Lower symbols, Wigner functions, POVM diagnostics and the duality check."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from ._accel import HAVE_NUMBA, njit, prange
from .fock import FockOperator, _disp_fill_numpy, _lgamma_table
from .quantizer import (
    DAMPING_SCHEDULE,
    DivergenceRiskError,
    _m_matrix,
    _richardson,
    build_m,
    quantize_grid,
    quantize_poly_qp,
)
from .sft import PhaseField, PhaseGrid, cartesian_grid
from .symbols import Poly2
from .weights import WeightSpec

# diagonal M entries below this fraction of the largest are dropped
_M_CUTOFF = 1e-18
# M is built at least this wide: far grid nodes of a low-lying A reach high k
_M_MIN_DIM = 64


class AccuracyWarning(UserWarning):
    pass


def l_safe(dim: int) -> float:
    """Radius |z| within which displaced operators of a dim-truncated A are trusted."""
    return math.sqrt(dim) / 2


def _check_radius(grid: PhaseGrid, dim: int):
    r = float(np.abs(grid.z).max())
    if r > l_safe(dim):
        warnings.warn(
            f"grid reaches |z|={r:.3g} beyond L_safe={l_safe(dim):.3g} for dim={dim}",
            AccuracyWarning,
            stacklevel=3,
        )


def _coo(A: FockOperator):
    r, c = np.nonzero(A.mat)
    # row-major order keeps every reduction in a fixed sequence
    return r.astype(np.int64), c.astype(np.int64), A.mat[r, c].astype(complex)


@njit(cache=True)
def _diag_seq(x, alpha, kmax, lg, out):
    """out[k] = sqrt(k!/(k+alpha)!) e^{-x/2} x^{alpha/2} L_k^{(alpha)}(x)."""
    if x == 0.0:
        g = 1.0 if alpha == 0 else 0.0
    else:
        g = math.exp(-0.5 * x + 0.5 * alpha * math.log(x) - 0.5 * lg[alpha])
    gm = 0.0
    for k in range(kmax):
        out[k] = g
        gn = ((2 * k + 1 + alpha - x) * g - math.sqrt(k * (k + alpha)) * gm) / math.sqrt((k + 1.0) * (k + 1.0 + alpha))
        gm, g = g, gn


@njit(cache=True, parallel=False)
def _wigner_kernel(zr, zi, rows, cols, vals, N, out):
    # W(z) = 2 sum_ij D(2z)_{ji} (-1)^i A_ij
    lg = _lgamma_table(N + 1)
    seq = np.empty(N)
    offs = cols - rows
    for k in prange(zr.size):
        x = 4.0 * (zr[k] * zr[k] + zi[k] * zi[k])
        th = math.atan2(zi[k], zr[k])
        acc = 0j
        last = -(N + 1)
        for e in range(rows.size):
            off = offs[e]
            a = abs(off)
            if a != last:
                _diag_seq(x, a, N - a, lg, seq)
                last = a
            i, j = rows[e], cols[e]
            # entry (j, i) of D(2z): below the diagonal when j > i
            if j >= i:
                d = seq[i] * complex(math.cos(a * th), math.sin(a * th))
            else:
                sg = -1.0 if a % 2 == 1 else 1.0
                d = sg * seq[j] * complex(math.cos(a * th), -math.sin(a * th))
            acc += d * vals[e] * (1.0 - 2.0 * (i % 2))
        out[k] = 2.0 * acc


def _wigner_numpy(z, rows, cols, vals, N):
    out = np.zeros(z.size, complex)
    sgn = 1.0 - 2.0 * (rows % 2)
    for k, zk in enumerate(z):
        D = np.zeros((N, N), complex)
        _disp_fill_numpy(2 * zk.real, 2 * zk.imag, N, N, D)
        out[k] = 2.0 * np.sum(D[cols, rows] * sgn * vals)
    return out


def _sort_by_offset(rows, cols, vals):
    o = np.lexsort((rows, np.abs(cols - rows)))
    return rows[o], cols[o], vals[o]


@njit(cache=True)
def _window(r, K, N):
    w = math.sqrt(K) + 8.0
    lo = int((r - w) ** 2) if r > w else 0
    return min(lo, N), min(N, int((r + w) ** 2) + 1)


@njit(cache=True)
def _displaced_columns(zr, zi, lo, hi, K, lg, V):
    """V[i - lo, k] = <e_i|D(z)|e_k> for lo <= i < hi, one Laguerre diagonal at a time."""
    x = zr * zr + zi * zi
    th = math.atan2(zi, zr)
    seq = np.empty(K)
    for off in range(lo - K + 1, hi):
        a = abs(off)
        _diag_seq(x, a, K, lg, seq)
        if off >= 0:
            ph = complex(math.cos(a * th), math.sin(a * th))
            for k in range(K):
                i = k + off
                if lo <= i < hi:
                    V[i - lo, k] = seq[k] * ph
        else:
            ph = complex(math.cos(a * th), -math.sin(a * th))
            if a % 2 == 1:
                ph = -ph
            for i in range(max(lo, 0), min(hi, K - a)):
                V[i - lo, i + a] = seq[i] * ph


@njit(cache=True, parallel=True)
def _lower_kernel(zr, zi, rows, cols, vals, Ms, diag, N, out):
    # out[m, node] = sum_kl Ms[m, k, l] (V^dagger A V)_lk with V = D(z) columns 0..K-1
    nm, K = Ms.shape[0], Ms.shape[1]
    lg = _lgamma_table(N + K + 1)
    for k in prange(zr.size):
        lo, hi = _window(math.sqrt(zr[k] * zr[k] + zi[k] * zi[k]), K, N)
        n = hi - lo
        if n <= 0:
            continue
        V = np.zeros((n, K), np.complex128)
        _displaced_columns(zr[k], zi[k], lo, hi, K, lg, V)
        T = np.zeros((n, K), np.complex128)
        for e in range(rows.size):
            i, j = rows[e] - lo, cols[e] - lo
            if 0 <= i < n and 0 <= j < n:
                T[i, :] += vals[e] * V[j, :]
        if diag:
            sc = np.zeros(K, np.complex128)
            for c in range(K):
                acc = 0j
                for i in range(n):
                    acc += V[i, c].conjugate() * T[i, c]
                sc[c] = acc
            for m in range(nm):
                acc = 0j
                for c in range(K):
                    acc += Ms[m, c, c] * sc[c]
                out[m, k] = acc
        else:
            Y = np.conj(V).T @ T
            for m in range(nm):
                acc = 0j
                for a in range(K):
                    for b in range(K):
                        acc += Ms[m, a, b] * Y[b, a]
                out[m, k] = acc


def _displaced_columns_numpy(zc, N, K):
    """<e_i|D(z)|e_k> for i < N, k < K, vectorized over nodes and diagonals."""
    amax = max(N, K)
    al = np.arange(amax, dtype=float)
    lg = np.array([math.lgamma(a + 1.0) for a in range(amax)])
    x = (np.abs(zc) ** 2)[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        g = np.where(x > 0, np.exp(-0.5 * x + 0.5 * al * np.log(np.where(x > 0, x, 1.0)) - 0.5 * lg), 0.0)
    g[:, 0] = np.where(x[:, 0] > 0, g[:, 0], 1.0)
    G = np.empty((zc.size, amax, K))
    gm = np.zeros_like(g)
    for k in range(K):
        G[:, :, k] = g
        gn = ((2 * k + 1 + al - x) * g - np.sqrt(k * (k + al)) * gm) / np.sqrt((k + 1.0) * (k + 1.0 + al))
        gm, g = g, gn
    ph = np.exp(1j * np.angle(zc)[:, None] * al)
    i, k = np.meshgrid(np.arange(N), np.arange(K), indexing="ij")
    off, m = np.abs(i - k), np.minimum(i, k)
    lower = i >= k
    sgn = np.where(lower, 1.0, np.where(off % 2 == 1, -1.0, 1.0))
    phase = np.where(lower, ph[:, off], ph[:, off].conj())
    return G[:, off, m] * phase * sgn


def _lower_numpy(z, A, Ms, diag, chunk=128):
    N, K = A.shape[0], Ms.shape[1]
    out = np.zeros((Ms.shape[0], z.size), complex)
    for s in range(0, z.size, chunk):
        V = _displaced_columns_numpy(z[s : s + chunk], N, K)
        n = V.shape[0]
        # one gemm for the whole chunk
        AV = (A @ V.transpose(1, 0, 2).reshape(N, n * K)).reshape(N, n, K).transpose(1, 0, 2)
        if diag:
            sc = np.sum(V.conj() * AV, axis=1)
            out[:, s : s + chunk] = np.diagonal(Ms, axis1=1, axis2=2) @ sc.T
        else:
            Y = np.matmul(V.conj().transpose(0, 2, 1), AV)
            out[:, s : s + chunk] = np.einsum("mkl,nlk->mn", Ms, Y, optimize=True)
    return out


def _parity_route(A: FockOperator, grid: PhaseGrid) -> np.ndarray:
    rows, cols, vals = _sort_by_offset(*_coo(A))
    if HAVE_NUMBA:
        out = np.zeros(grid.size, complex)
        _wigner_kernel(grid.z.real.copy(), grid.z.imag.copy(), rows, cols, vals, A.dim, out)
        return out
    return _wigner_numpy(grid.z, rows, cols, vals, A.dim)


def _trim(M: np.ndarray) -> np.ndarray:
    """Drop trailing rows and columns of M below _M_CUTOFF of its largest entry."""
    mag = np.abs(M)
    keep = np.nonzero((mag.max(axis=0) > _M_CUTOFF * mag.max()) | (mag.max(axis=1) > _M_CUTOFF * mag.max()))[0]
    K = int(keep.max()) + 1 if keep.size else 1
    return np.ascontiguousarray(M[:K, :K], dtype=complex)


def _m_route(Ms, A: FockOperator, grid: PhaseGrid) -> np.ndarray:
    """Lower symbols for a stack of M matrices sharing one set of displaced columns."""
    Ms = [_trim(M) for M in Ms]
    K = max(M.shape[0] for M in Ms)
    stack = np.zeros((len(Ms), K, K), complex)
    for m, M in enumerate(Ms):
        stack[m, : M.shape[0], : M.shape[0]] = M
    diag = all(np.count_nonzero(M - np.diag(np.diag(M))) == 0 for M in Ms)
    if HAVE_NUMBA:
        rows, cols, vals = _coo(A)
        out = np.zeros((len(Ms), grid.size), complex)
        _lower_kernel(grid.z.real.copy(), grid.z.imag.copy(), rows, cols, vals, stack, diag, A.dim, out)
        return out
    return _lower_numpy(grid.z, A.mat, stack, diag)


def lower_symbol(w: WeightSpec, A: FockOperator, grid: PhaseGrid, regularize: bool = False,
                 degree: int | None = None) -> PhaseField:
    """z -> tr(M(z) A) with M(z) = D(z) M D(z)^dagger.

    Decaying weights use their M directly, cut where its entries fall
    below 1e-18 of the largest.  The constant weight without
    ``regularize`` uses the parity form 2 tr(D(2z) P A), exact for the
    finite matrix A; that is the right portrait of a state but not of a
    truncated unbounded operator, whose cut edge spreads over the whole
    plane.  With ``regularize`` a non-decaying weight is damped by
    exp(-nu |z|^2) over the damping schedule and extrapolated to nu = 0,
    exact when A comes from a polynomial symbol of degree <= 12 (or
    ``degree`` if given, which also shortens the schedule).
    """
    parity = w.kind == "ww" or (w.kind == "cg" and w.s == 0)
    if parity and not regularize:
        _check_radius(grid, A.dim)
        return PhaseField(grid, _parity_route(A, grid), f"lower:{w.label}:parity")
    _check_radius(grid, A.dim)
    W = max(A.dim, _M_MIN_DIM)
    if w.decaying:
        return PhaseField(grid, _m_route([_m_matrix(w, W)], A, grid)[0], f"lower:{w.label}")
    if not regularize:
        raise DivergenceRiskError(f"weight {w.label} does not decay; pass regularize=True")
    npts = degree // 2 + 1 if degree is not None else len(DAMPING_SCHEDULE)
    nus = DAMPING_SCHEDULE[:npts]
    vals = list(_m_route([_m_matrix(w, W, nu) for nu in nus], A, grid))
    out = _richardson(nus, vals) if len(nus) > 1 else vals[0]
    return PhaseField(grid, out, f"lower:{w.label}:regularized")


def wigner_map(A: FockOperator, grid: PhaseGrid, regularize: bool = False, degree: int | None = None) -> PhaseField:
    """tr(D(z) 2P D(z)^dagger A) = 2 tr(D(2z) P A); see lower_symbol for ``regularize``."""
    fld = lower_symbol(WeightSpec.constant(), A, grid, regularize, degree)
    fld.label = "wigner" + (":regularized" if regularize else "")
    return fld


@dataclass
class PovmReport:
    min_eigenvalue: float
    resolution_residual: float
    positive: bool
    hermitian: bool

    def __str__(self):
        verdict = "positive" if self.positive else "not positive"
        return (f"min_eigenvalue={self.min_eigenvalue:.6g} resolution_residual={self.resolution_residual:.3g} "
                f"verdict={verdict}")


def povm_diagnostic(w: WeightSpec, dim: int, grid: PhaseGrid | None = None) -> PovmReport:
    """Smallest eigenvalue of the truncated M and the residual of int M(z) d^2z/pi = I."""
    M = build_m(w, dim, method="closed" if w.kind in ("ww", "cg") else "quad", regularize=True).mat
    H = (M + M.conj().T) / 2
    herm = bool(np.abs(M - M.conj().T).max() < 1e-12)
    lam = float(np.linalg.eigvalsh(H).min())
    one = quantize_grid(w, Poly2.const(1.0), dim, grid=grid, regularize=True).mat
    n = dim // 2
    res = float(np.abs(one[:n, :n] - np.eye(n)).max())
    return PovmReport(lam, res, lam >= -1e-10, herm)


def _moment_check(grid: PhaseGrid, deg: int, tol=1e-8):
    k = deg / 2
    exact = math.gamma(k + 1)
    got = grid.integrate(np.abs(grid.z) ** deg * np.exp(-np.abs(grid.z) ** 2)).real
    if abs(got - exact) > tol * exact:
        warnings.warn(f"grid misses the degree-{deg} moment by {abs(got - exact):.3g}", AccuracyWarning, stacklevel=3)


def duality_check(w: WeightSpec, f: Poly2, A: FockOperator, grid: PhaseGrid | None = None,
                  regularize: bool = False):
    """(lhs, rhs, residual) with lhs = int f W_A d^2z/pi and rhs = tr(A A_f)."""
    grid = grid or cartesian_grid(6.0, 128)
    _moment_check(grid, f.degree())
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AccuracyWarning)
        W = lower_symbol(w, A, grid, regularize=regularize)
    lhs = grid.integrate(f(grid.q, grid.p) * W.values)
    Af = quantize_poly_qp(w, f, A.dim).mat
    rhs = complex(np.trace(A.mat @ Af))
    return lhs, rhs, abs(lhs - rhs)
