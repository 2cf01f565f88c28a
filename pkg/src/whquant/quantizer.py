"""The quantization map f -> A_f and the operator M.

Pipelines:

* ``quad``: A_f = int D(z) M D(z)^dagger f(z) d^2z/pi on a Gauss-Hermite grid.
* ``poly-z`` / ``poly-qp``: monomial recurrences plus the separation formula.
* ``weyl``: the Weyl symbol sum_kl c_kl i^k (-i)^l d_p^k d_q^l F, then Weyl ordering.
* ``kernel``: the position-representation kernel projected on Hermite functions.
* separable closed forms for L(q) p^m (Gaussian and Weyl-Wigner weights).
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import special

from ._accel import HAVE_NUMBA, njit, prange
from .coeffs import Tables, ratio_coeffs, star_coeffs, tables_for
from .fock import (
    FockOperator,
    _check_dim,
    _disp_fill,
    _disp_fill_numpy,
    as_z,
    displacement_block,
    ladder_ops,
    quadrature_ops,
)
from .sft import DistributionalKindError, PhaseField, PhaseGrid, gauss_hermite_grid, partial_ft_p
from .symbols import R2, Poly2, Sampled, SeparableLqPm
from .weights import CoeffTable2, UnsupportedWeightError, WeightSpec, evaluate, invert_series

MAX_POLY_DEGREE = 12
MAX_SEPARABLE_M = 8
MAX_WW_M = 6
# damping exp(-nu |z|^2) used when a weight does not decay; A_f is polynomial in nu
DAMPING_SCHEDULE = (0.25, 0.35, 0.45, 0.55, 0.65, 0.75, 0.85)
_CHUNKS = 16  # fixed reduction tree, independent of the thread count


class DivergenceRiskError(ValueError):
    pass


class DegreeCapError(ValueError):
    pass


class GridMismatchError(ValueError):
    pass


# ---------------------------------------------------------------- symbols


def _as_symbol(f):
    """Normalize a symbol to ('poly', Poly2) | ('func', callable) | ('field', PhaseField)."""
    if isinstance(f, Poly2):
        return "poly", f
    if isinstance(f, SeparableLqPm):
        if isinstance(f.L, Poly2):
            return "poly", f.as_poly()
        L, m = f.L, f.m
        return "func", lambda q, p: np.asarray(L(q), dtype=complex) * np.asarray(p, dtype=complex) ** m
    if isinstance(f, PhaseField):
        return "field", f
    if isinstance(f, Sampled):
        if f.field is not None:
            return "field", f.field
        return "func", f.func
    if isinstance(f, (int, float, complex)):
        return "poly", Poly2.const(f)
    if callable(f):
        return "func", f
    raise TypeError(f"unsupported symbol type {type(f).__name__}")


def _check_degree(poly: Poly2, cap=MAX_POLY_DEGREE):
    if poly.degree() > cap:
        raise DegreeCapError(f"polynomial degree {poly.degree()} exceeds cap {cap}")


def _working_dim(dim, extra=0):
    return max(2 * dim, dim + extra + 2)


def _crop(A: np.ndarray, dim: int, meta=None) -> FockOperator:
    band = np.linalg.norm(A[dim:, :dim]) if A.shape[0] > dim else 0.0
    return FockOperator(A[:dim, :dim].copy(), band, meta)


# ------------------------------------------------------------------ M^varpi


def _cg_diag(s, n):
    s = complex(s)
    k = np.arange(n)
    if s.imag == 0:
        s = s.real
        return (2 / (1 - s) * ((s + 1) / (s - 1)) ** k).astype(complex)
    return 2 / (1 - s) * ((s + 1) / (s - 1)) ** k


def _quad_rates(w: WeightSpec, damp=0.0):
    r = w.gaussian_rates
    if r is None:
        r = (0.0, 0.0)
    return (r[0] + 0.5 + damp, r[1] + 0.5 + damp)


@njit(cache=True)
def _acc_d_kernel(zr, zi, coef, nrows, ncols, out):
    """out += sum_k coef_k D(z_k)[:nrows, :ncols], chunked for a fixed summation order."""
    n = zr.size
    per = (n + out.shape[0] - 1) // out.shape[0]
    for c in prange(out.shape[0]):
        buf = np.zeros((nrows, ncols), np.complex128)
        for k in range(c * per, min(n, (c + 1) * per)):
            if coef[k] == 0:
                continue
            buf[:, :] = 0
            _disp_fill(zr[k], zi[k], nrows, ncols, buf)
            out[c] += coef[k] * buf


def _acc_d(z, coef, nrows, ncols):
    out = np.zeros((_CHUNKS, nrows, ncols), complex)
    if HAVE_NUMBA:
        _acc_d_kernel(z.real.copy(), z.imag.copy(), np.asarray(coef, complex), nrows, ncols, out)
    else:
        per = (z.size + _CHUNKS - 1) // _CHUNKS
        for k in range(z.size):
            if coef[k] != 0:
                buf = np.zeros((nrows, ncols), complex)
                _disp_fill_numpy(z[k].real, z[k].imag, nrows, ncols, buf)
                out[k // per] += coef[k] * buf
    return out.sum(axis=0)


def _m_on_grid(w: WeightSpec, dim, grid: PhaseGrid, damp=0.0):
    vals = evaluate(w, grid.q, grid.p) * np.exp(-damp * np.abs(grid.z) ** 2)
    return _acc_d(grid.z, vals * grid.qweights, dim, dim)


def _m_radial(w: WeightSpec, dim, order):
    """Isotropic weights: M_nn = int_0^inf varpi(t) e^{-t/2} L_n(t) dt with t = |z|^2."""
    cut = 1.0 / w.params[0] if w.kind == "heavi-e" and w.params[0] > 0 else None
    xs, ws = special.roots_legendre(order)
    tl, wl = special.roots_laguerre(order)
    pieces = []
    if cut is not None:
        pieces.append((cut / 2 * (xs + 1), cut / 2 * ws))
        t_tail = cut + 2 * tl
    else:
        t_tail = 2 * tl
    # tail rule: int_c^inf g(t) dt with t = c + 2u picks up e^{-u}
    pieces.append((t_tail, 2 * wl * np.exp(tl)))
    diag = np.zeros(dim, complex)
    for t, wt in pieces:
        phi = evaluate(w, np.sqrt(2 * t), np.zeros_like(t))
        lag = np.empty((dim, t.size))
        lag[0] = 1.0
        if dim > 1:
            lag[1] = 1.0 - t
        for n in range(1, dim - 1):
            lag[n + 1] = ((2 * n + 1 - t) * lag[n] - n * lag[n - 1]) / (n + 1)
        diag += (lag * (phi * wt * np.exp(-t / 2))).sum(axis=1)
    return np.diag(diag)


def _m_hyperbolic_heaviside(w: WeightSpec, dim, order):
    """varpi = 1 - 2 theta(alpha q p - 1): M = 2P - 2 (X + X^dagger) over the q, p > 0 branch."""
    alpha = w.params[0]
    par = np.diag(np.where(np.arange(dim) % 2 == 0, 2.0, -2.0)).astype(complex)
    if alpha == 0:
        return par
    R = 2.0 * math.sqrt(dim + 40.0)
    xs, ws = special.roots_legendre(order)
    qn, qw = R / 2 * (xs + 1), R / 2 * ws
    zs, cs = [], []
    for q, wq in zip(qn, qw):
        lo = 1.0 / (alpha * q)
        if lo >= R:
            continue
        pn, pw = (R - lo) / 2 * (xs + 1) + lo, (R - lo) / 2 * ws
        zs.append((q + 1j * pn) / R2)
        cs.append(wq * pw / (2 * math.pi))
    X = _acc_d(np.concatenate(zs), np.concatenate(cs), dim, dim)
    return par - 2 * (X + X.conj().T)


def build_m(w: WeightSpec, dim: int, grid: PhaseGrid | None = None, method: str = "auto",
            regularize: bool = False, order: int | None = None) -> FockOperator:
    """M = int D(z) varpi(z) d^2z/pi in the number basis.

    ``method='closed'`` uses 2P (constant weight) or the Cahill-Glauber
    diagonal; ``'quad'`` integrates.  Non-decaying weights need
    ``regularize=True`` on the quadrature path and come back labelled.
    """
    dim = _check_dim(dim)
    if method == "auto":
        method = "closed" if grid is None and w.kind in ("ww", "cg") else "quad"
    if method == "closed":
        if w.kind == "ww" or (w.kind == "cg" and w.s == 0):
            mat = np.diag(np.where(np.arange(dim) % 2 == 0, 2.0, -2.0)).astype(complex)
            return FockOperator(mat, meta={"path": "closed"})
        if w.kind == "cg":
            return FockOperator(np.diag(_cg_diag(w.s, dim)), meta={"path": "closed"})
        raise UnsupportedWeightError(f"no closed form of M for weight {w.label}")
    if method != "quad":
        raise ValueError(f"unknown method {method!r}")
    if not w.decaying and not regularize:
        raise DivergenceRiskError(
            f"weight {w.label} does not decay; pass regularize=True to accept the regularized quadrature"
        )
    meta = {"path": "quad", "regularized": not w.decaying}
    if grid is not None:
        return FockOperator(_m_on_grid(w, dim, grid), meta=meta)
    n = order or dim + 8
    if w.gaussian_rates is not None:
        g = gauss_hermite_grid(_quad_rates(w), (n, n), check=False)
        mat = _m_on_grid(w, dim, g)
    elif w.kind == "heavi-e":
        mat = _m_radial(w, dim, order or 2 * dim + 60)
    elif w.kind == "heavi-h":
        mat = _m_hyperbolic_heaviside(w, dim, order or 2 * dim + 80)
    else:
        # smooth bounded weights: the e^{-|z|^2/2} of D sets the rate
        mat, err = _m_bounded(w, dim, order=order)
        meta["order_change"] = err
    return FockOperator(mat, meta=meta)


def _m_bounded(w: WeightSpec, dim, damp=0.0, order=None, tol=1e-12, max_order=640):
    """Smooth bounded weights, damped by exp(-damp |z|^2): Gauss-Hermite at rate 1/2 + damp.

    The order grows until two successive rules agree to ``tol`` (relative).
    """
    rate = 0.5 + damp
    n = order or 2 * dim + 60
    prev = None
    while True:
        g = gauss_hermite_grid((rate, rate), (n, n), check=False)
        mat = _m_on_grid(w, dim, g, damp)
        if order is not None:
            return mat, float("nan")
        if prev is not None:
            err = float(np.abs(mat - prev).max())
            if err <= tol * max(1.0, float(np.abs(mat).max())) or n >= max_order:
                return mat, err
        prev = mat
        n = int(n * 1.4) + 8


def _m_matrix(w: WeightSpec, W: int, damp: float = 0.0) -> np.ndarray:
    """M of the weight varpi(z) exp(-damp |z|^2) at dimension W."""
    if w.kind == "ww" or w.kind == "cg":
        s = (w.s if w.kind == "cg" else 0.0) - 2 * damp
        return build_m(WeightSpec.cahill_glauber(s), W, method="closed").mat
    if w.kind == "custom":
        return _m_any(w, W, damp)
    return _m_cached(w, W, damp)


def _m_any(w, W, damp):
    if damp == 0:
        return build_m(w, W, regularize=True).mat
    if w.gaussian_rates is not None:
        g = gauss_hermite_grid(_quad_rates(w, damp), (W + 8, W + 8), check=False)
        return _m_on_grid(w, W, g, damp)
    return _m_bounded(w, W, damp)[0]


@lru_cache(maxsize=32)
def _m_cached(w, W, damp):
    return _m_any(w, W, damp)


def displaced_m(w: WeightSpec, z, dim: int, regularize: bool = False) -> FockOperator:
    """M(z) = D(z) M D(z)^dagger, built at working dimension 2 dim and cropped."""
    dim = _check_dim(dim)
    if not w.decaying and w.kind not in ("ww", "cg") and not regularize:
        raise DivergenceRiskError(f"weight {w.label} does not decay; pass regularize=True")
    W = 2 * dim
    M = _m_matrix(w, W)
    D = displacement_block(as_z(z), dim, W)
    out = D @ M @ D.conj().T
    # tail: weight of M beyond what the dim x W block of D can see
    tail = float(np.abs(np.diag(M)[-dim:]).max())
    return FockOperator(out, tail, {"path": "displaced"})


# ------------------------------------------------------------ quadrature path


@njit(cache=True)
def _acc_dmd_kernel(zr, zi, coef, M, diag, nrows, ncols, out):
    n = zr.size
    per = (n + out.shape[0] - 1) // out.shape[0]
    for c in prange(out.shape[0]):
        D = np.zeros((nrows, ncols), np.complex128)
        md = np.empty(ncols, np.complex128)
        for j in range(ncols):
            md[j] = M[j, j]
        for k in range(c * per, min(n, (c + 1) * per)):
            if coef[k] == 0:
                continue
            D[:, :] = 0
            _disp_fill(zr[k], zi[k], nrows, ncols, D)
            if diag:
                T = D * md
            else:
                T = D @ M
            out[c] += coef[k] * (T @ np.conj(D).T)


def _acc_dmd(z, coef, M, nrows):
    ncols = M.shape[0]
    diag = bool(np.all(M == np.diag(np.diag(M))))
    out = np.zeros((_CHUNKS, nrows, nrows), complex)
    if HAVE_NUMBA:
        _acc_dmd_kernel(z.real.copy(), z.imag.copy(), np.asarray(coef, complex),
                        np.ascontiguousarray(M), diag, nrows, ncols, out)
    else:
        per = (z.size + _CHUNKS - 1) // _CHUNKS
        D = np.zeros((nrows, ncols), complex)
        for k in range(z.size):
            if coef[k] == 0:
                continue
            D[:] = 0
            _disp_fill_numpy(z[k].real, z[k].imag, nrows, ncols, D)
            T = D * np.diag(M) if diag else D @ M
            out[k // per] += coef[k] * (T @ D.conj().T)
    return out.sum(axis=0)


def _richardson(nus, values):
    """Polynomial extrapolation of values(nu) to nu = 0."""
    nus = np.asarray(nus, float)
    out = 0
    for i, v in enumerate(values):
        others = np.delete(nus, i)
        out = out + v * np.prod(others / (others - nus[i]))
    return out


def _symbol_on_grid(kind, f, grid):
    if kind == "poly":
        return f(grid.q, grid.p)
    if kind == "func":
        return np.asarray(f(grid.q, grid.p), dtype=complex) * np.ones(grid.size)
    if f.grid is not grid:
        raise GridMismatchError("field grid differs from the quadrature grid")
    return f.values


def quantize_grid(w: WeightSpec, f, dim: int, grid: PhaseGrid | None = None,
                  regularize: bool = False, order: int | None = None,
                  work_dim: int | None = None) -> FockOperator:
    """A_f = int D(z) M D(z)^dagger f(z) d^2z/pi by quadrature.

    With a polynomial symbol and the default grid the rule is exact: the
    integrand is exp(-|z|^2) times a polynomial.  Non-decaying weights are
    damped by exp(-nu |z|^2) over ``DAMPING_SCHEDULE`` and extrapolated to
    nu = 0 (exact for polynomial symbols); the result is labelled.
    """
    dim = _check_dim(dim)
    kind, fx = _as_symbol(f)
    if kind == "field":
        if grid is not None and grid is not fx.grid:
            raise GridMismatchError("field grid differs from the requested grid")
        grid = fx.grid
    deg = fx.degree() if kind == "poly" else 0
    if kind == "poly":
        _check_degree(fx)
    W = work_dim or 2 * dim
    if grid is None:
        n = order or dim + W + deg // 2 + 2
        grid = gauss_hermite_grid((1.0, 1.0), (n, n), check=False)
    fv = _symbol_on_grid(kind, fx, grid)
    coef = fv * grid.qweights
    if w.decaying:
        A = _acc_dmd(grid.z, coef, _m_matrix(w, W), dim)
        return FockOperator(A, 0.0, {"path": "quad", "nodes": grid.size})
    if not regularize:
        raise DivergenceRiskError(
            f"weight {w.label} does not decay; pass regularize=True for the damped schedule"
        )
    npts = deg // 2 + 1 if kind == "poly" else len(DAMPING_SCHEDULE)
    nus = DAMPING_SCHEDULE[:npts]
    vals = [_acc_dmd(grid.z, coef, _m_matrix(w, W, nu), dim) for nu in nus]
    A = _richardson(nus, vals) if len(nus) > 1 else vals[0]
    trend = float(np.abs(vals[0] - A).max())
    return FockOperator(A, 0.0, {"path": "quad", "regularized": True, "schedule": nus, "damping_trend": trend})


# ---------------------------------------------------------- recurrence paths


def _tables(src, K: int, rep: str) -> Tables:
    if isinstance(src, WeightSpec):
        return tables_for(src, K, rep)
    if isinstance(src, Tables):
        return src
    if isinstance(src, CoeffTable2):
        c = src.truncate(K).to(rep)
        ct = invert_series(c, K)
        d = ratio_coeffs(c, ct, K, "d")
        dt = ratio_coeffs(c, ct, K, "dtilde")
        return Tables(c, ct, d, dt, star_coeffs(d, K, "a"), star_coeffs(dt, K, "atilde"))
    raise TypeError("expected WeightSpec, Tables or CoeffTable2")


def _ffrac(n, k):
    return math.perm(n, k)


def z_power_ops(tab: Tables, nmax: int, W: int):
    """[A_{z^n}] and [A_{zbar^n}] for n <= nmax by their recurrences."""
    a = np.diag(np.sqrt(np.arange(1, W, dtype=float)), 1).astype(complex)
    ad = a.T.copy()
    I = np.eye(W, dtype=complex)
    c01, c10 = tab.c[(0, 1)], tab.c[(1, 0)]
    Az, Abz = [I], [I]
    for n in range(1, nmax + 1):
        A = (a - c01 * I) @ Az[n - 1]
        B = (ad + c10 * I) @ Abz[n - 1]
        for j in range(1, n):
            A = A - (-1) ** j * tab.a[(0, 1, 0, j)] * _ffrac(n - 1, j) * Az[n - 1 - j]
            B = B + tab.a[(1, 0, j, 0)] * _ffrac(n - 1, j) * Abz[n - 1 - j]
        Az.append(A)
        Abz.append(B)
    return Az, Abz


def quantize_poly_z(src, f: Poly2, dim: int) -> FockOperator:
    """A_f for a polynomial f by the z-form recurrences and separation formula."""
    dim = _check_dim(dim)
    f = f.to("z")
    _check_degree(f)
    deg = f.degree()
    K = max(deg, 2)
    tab = _tables(src, K, "z")
    W = _working_dim(dim, deg)
    nmax = max((n for n, _ in f.terms), default=0)
    nbmax = max((nb for _, nb in f.terms), default=0)
    Az, Abz = z_power_ops(tab, max(nmax, nbmax), W)
    out = np.zeros((W, W), complex)
    for (n, nb), coef in f.sorted_items():
        acc = np.zeros((W, W), complex)
        for ib in range(n + 1):
            for j in range(nb + 1):
                av = 1.0 if ib == j == 0 else tab.a[(0, ib, j, 0)]
                if av == 0:
                    continue
                acc += (-1) ** ib * av * _ffrac(n, ib) * _ffrac(nb, j) * (Az[n - ib] @ Abz[nb - j])
        out += coef * acc
    return _crop(out, dim, {"path": "poly-z"})


def qp_power_ops(tab: Tables, nmax: int, W: int):
    """[A_{q^n}] and [A_{p^n}] for n <= nmax by their recurrences."""
    Q, P = (x.mat for x in quadrature_ops(W))
    I = np.eye(W, dtype=complex)
    c01, c10 = tab.c[(0, 1)], tab.c[(1, 0)]
    Aq, Ap = [I], [I]
    for n in range(1, nmax + 1):
        A = (Q - 1j * c01 * I) @ Aq[n - 1]
        B = (P + 1j * c10 * I) @ Ap[n - 1]
        for l in range(1, n):
            A = A + (-1j) ** (l + 1) * tab.a[(0, 1, 0, l)] * _ffrac(n - 1, l) * Aq[n - 1 - l]
            B = B + 1j ** (l + 1) * tab.a[(1, 0, l, 0)] * _ffrac(n - 1, l) * Ap[n - 1 - l]
        Aq.append(A)
        Ap.append(B)
    return Aq, Ap


def quantize_poly_qp(src, f: Poly2, dim: int) -> FockOperator:
    """A_F for a polynomial F(q, p) by the canonical-variable recurrences."""
    dim = _check_dim(dim)
    f = f.to("qp")
    _check_degree(f)
    deg = f.degree()
    K = max(deg, 2)
    tab = _tables(src, K, "qp")
    W = _working_dim(dim, deg)
    mmax = max((m for m, _ in f.terms), default=0)
    nmax = max((n for _, n in f.terms), default=0)
    Aq, Ap = qp_power_ops(tab, max(mmax, nmax), W)
    out = np.zeros((W, W), complex)
    for (m, n), coef in f.sorted_items():
        acc = np.zeros((W, W), complex)
        for l in range(m + 1):
            for kp in range(n + 1):
                av = 1.0 if l == kp == 0 else tab.a[(0, l, kp, 0)]
                if av == 0:
                    continue
                acc += 1j ** (kp - l) * av * _ffrac(m, l) * _ffrac(n, kp) * (Aq[m - l] @ Ap[n - kp])
        out += coef * acc
    return _crop(out, dim, {"path": "poly-qp"})


# ---------------------------------------------------------- Weyl-symbol route


def weyl_symbol(src, f: Poly2) -> Poly2:
    """Weyl symbol G = sum_kl c_kl i^k (-i)^l d_p^k d_q^l F of the operator A_F."""
    F = f.to("qp")
    K = max(F.degree(), 2)
    c = _tables(src, K, "qp").c
    out = Poly2({}, "qp")
    for (k, l), v in c.items():
        term = F.deriv(l, k)
        if not term.is_zero():
            out = out + term * (v * 1j**k * (-1j) ** l)
    return out


def weyl_ordered(poly: Poly2, dim: int) -> FockOperator:
    """Weyl-ordered operator of a (q, p) polynomial: q^m p^n -> 2^-m sum_k C(m,k) Q^k P^n Q^(m-k)."""
    dim = _check_dim(dim)
    poly = poly.to("qp")
    W = _working_dim(dim, poly.degree())
    Q, P = (x.mat for x in quadrature_ops(W))
    mp = np.linalg.matrix_power
    out = np.zeros((W, W), complex)
    for (m, n), v in poly.sorted_items():
        Pn = mp(P, n)
        acc = sum(math.comb(m, k) * (mp(Q, k) @ Pn @ mp(Q, m - k)) for k in range(m + 1))
        out += v * acc / 2**m
    return _crop(out, dim, {"path": "weyl-ordered"})


def quantize_weyl_route(src, f: Poly2, dim: int) -> FockOperator:
    op = weyl_ordered(weyl_symbol(src, f), dim)
    op.meta["path"] = "weyl"
    return op


# ------------------------------------------------------ separable quantization


def _poly_q_coeffs(L) -> np.ndarray:
    """Coefficient vector (ascending) of a polynomial in q."""
    if isinstance(L, (int, float, complex)):
        return np.array([complex(L)])
    L = L.to("qp")
    if any(n != 0 for _, n in L.terms):
        raise ValueError("L must depend on q only")
    deg = max((m for m, _ in L.terms), default=0)
    out = np.zeros(deg + 1, complex)
    for (m, _), v in L.terms.items():
        out[m] = v
    return out


def _dfact(n: int) -> int:
    """Double factorial with (-1)!! = 0!! = 1."""
    return math.prod(range(n, 0, -2)) if n > 0 else 1


def gauss_convolve_coeffs(coef: np.ndarray, sigma: float) -> np.ndarray:
    """Coefficients of x -> E[L(x + sigma Z)] for Z standard normal."""
    out = np.zeros_like(coef)
    for k, ck in enumerate(coef):
        for j in range(0, k + 1, 2):
            out[k - j] += ck * math.comb(k, j) * sigma**j * _dfact(j - 1)
    return out


def _poly_deriv(coef, s):
    for _ in range(s):
        coef = coef[1:] * np.arange(1, len(coef)) if len(coef) > 1 else np.zeros(1, complex)
    return coef


def _matpoly(coef, X):
    out = np.zeros_like(X)
    I = np.eye(X.shape[0], dtype=complex)
    for c in coef[::-1]:
        out = out @ X + c * I
    return out


def _gauss_conv_matrix_fn(L, sigma, s, Q):
    """G^{(s)}(Q) for callable L with G = E[L(. + sigma Z)], via eigh of Q."""
    lam, V = np.linalg.eigh(Q)
    x, wx = special.roots_hermitenorm(96)
    wx = wx / math.sqrt(2 * math.pi)
    if sigma == 0:
        if s:
            raise ValueError("derivatives of a callable L need a positive smoothing width")
        vals = np.asarray(L(lam), dtype=complex)
    else:
        he = special.eval_hermitenorm(s, x)
        vals = np.array([np.sum(wx * np.asarray(L(l + sigma * x), dtype=complex) * he) for l in lam]) / sigma**s
    return (V * vals) @ V.conj().T


def quantize_separable_gauss(sigma_l: float, sigma_d: float, L, m: int, dim: int,
                             fast: bool = True) -> FockOperator:
    """A_{L(q) p^m} for the separable Gaussian weight exp(-q^2/2sl^2 - p^2/2sd^2)."""
    dim = _check_dim(dim)
    if m > MAX_SEPARABLE_M:
        raise DegreeCapError(f"m={m} exceeds {MAX_SEPARABLE_M}: factorial growth loses precision")
    sig = 1.0 / sigma_d
    poly = not callable(L) or isinstance(L, Poly2)
    coef = _poly_q_coeffs(L) if poly else None
    degL = len(coef) - 1 if poly else 0
    if poly and degL + m > MAX_POLY_DEGREE:
        raise DegreeCapError("total degree exceeds cap")
    W = _working_dim(dim, degL + m)
    Q, P = (x.mat for x in quadrature_ops(W))
    mp = np.linalg.matrix_power
    nz = np.nonzero(coef)[0] if poly else []
    if fast and poly and len(nz) == 1 and (nz[0] == 0 or m == 0):
        c0, k = coef[nz[0]], int(nz[0])
        if k == 0:
            # pure power of p, Hermite form
            acc = sum(math.factorial(m) / (math.factorial(u) * math.factorial(m - 2 * u))
                      / (2 * sigma_l**2) ** u * mp(P, m - 2 * u) for u in range(m // 2 + 1))
        else:
            acc = sum(math.factorial(k) / (math.factorial(u) * math.factorial(k - 2 * u))
                      / (2 * sigma_d**2) ** u * mp(Q, k - 2 * u) for u in range(k // 2 + 1))
        return _crop(c0 * acc, dim, {"path": "separable-gauss-hermite"})
    out = np.zeros((W, W), complex)
    G = gauss_convolve_coeffs(coef, sig) if poly else None
    for u in range(m // 2 + 1):
        for s in range(m - 2 * u + 1):
            t = m - 2 * u - s
            mult = math.factorial(m) // (math.factorial(2 * u) * math.factorial(s) * math.factorial(t))
            pref = 2.0 ** (u - s) * mult * sigma_l ** (-2 * u) * special.gamma(u + 0.5) / math.sqrt(math.pi) * (-1j) ** s
            Gs = _matpoly(_poly_deriv(G, s), Q) if poly else _gauss_conv_matrix_fn(L, sig, s, Q)
            out += pref * Gs @ mp(P, t)
    return _crop(out, dim, {"path": "separable-gauss"})


def quantize_ww_separable(L, m: int, dim: int) -> FockOperator:
    """Weyl-Wigner A_{L(q) p^m} = sum_t 2^(t-m) C(m,t) (-i)^(m-t) L^(m-t)(Q) P^t."""
    dim = _check_dim(dim)
    coef = _poly_q_coeffs(L)
    if len(coef) - 1 > MAX_POLY_DEGREE or m > MAX_WW_M:
        raise DegreeCapError(f"Weyl-Wigner separable path caps deg L <= {MAX_POLY_DEGREE}, m <= {MAX_WW_M}")
    W = _working_dim(dim, len(coef) - 1 + m)
    Q, P = (x.mat for x in quadrature_ops(W))
    out = np.zeros((W, W), complex)
    for t in range(m + 1):
        out += 2.0 ** (t - m) * math.comb(m, t) * (-1j) ** (m - t) * _matpoly(_poly_deriv(coef, m - t), Q) @ np.linalg.matrix_power(P, t)
    return _crop(out, dim, {"path": "separable-ww"})


def sym_weyl(A: np.ndarray, B: np.ndarray, m: int, n: int) -> np.ndarray:
    """Average of all distinct words with m copies of A and n copies of B."""
    I = np.eye(A.shape[0], dtype=complex)
    words = list(itertools.combinations(range(m + n), m))
    out = np.zeros_like(I)
    for pos in words:
        X = I
        sp = set(pos)
        for k in range(m + n):
            X = X @ (A if k in sp else B)
        out += X
    return out / len(words)


# ------------------------------------------------------------ position kernel


@dataclass
class PositionKernel:
    x: np.ndarray
    values: np.ndarray | None  # None when the kernel is distributional
    op: FockOperator
    kind: str  # "sampled" | "distributional"
    coefficients: dict = field(default_factory=dict)


def hermite_functions(nmax: int, x) -> np.ndarray:
    """h_0..h_{nmax-1} at x, seeded by pi^{-1/4} exp(-x^2/2)."""
    x = np.asarray(x, float)
    h = np.zeros((nmax, x.size))
    h[0] = math.pi**-0.25 * np.exp(-x * x / 2)
    if nmax > 1:
        h[1] = math.sqrt(2.0) * x * h[0]
    for n in range(1, nmax - 1):
        h[n + 1] = math.sqrt(2.0 / (n + 1)) * x * h[n] - math.sqrt(n / (n + 1)) * h[n - 1]
    return h


def _hermite_deriv(h):
    """h_k' = sqrt(k/2) h_{k-1} - sqrt((k+1)/2) h_{k+1}; the top row becomes invalid."""
    n = h.shape[0]
    out = np.zeros_like(h)
    k = np.arange(n)[:, None]
    out[1:] += np.sqrt(k[1:] / 2) * h[:-1]
    out[:-1] -= np.sqrt((k[:-1] + 1) / 2) * h[1:]
    return out


def _gauss_widths(w: WeightSpec):
    """(sigma_l, sigma_d) with Pi = exp(-q^2/2sl^2 - p^2/2sd^2); inf for a flat factor."""
    if w.kind == "ww" or (w.kind == "cg" and w.s == 0):
        return math.inf, math.inf
    if w.kind == "gauss":
        return w.params
    if w.kind == "cg" and w.s.imag == 0 and w.s.real < 0:
        s = math.sqrt(-2 / w.s.real)
        return s, s
    return None


def _p_expansion(F: Poly2):
    """F(q, p) = sum_b L_b(q) p^b as {b: coefficient vector of L_b}."""
    F = F.to("qp")
    out = {}
    for (a, b), v in F.terms.items():
        vec = out.setdefault(b, np.zeros(F.degree() + 1, complex))
        vec[a] += v
    return out


def _kernel_poly(w, F: Poly2, dim):
    widths = _gauss_widths(w)
    if widths is None:
        raise DistributionalKindError(
            f"no analytic kernel path for weight {w.label} with a polynomial symbol"
        )
    sl, sd = widths
    parts = _p_expansion(F)
    bmax = max(parts)
    deg = F.degree()
    n = dim + deg + bmax + 8
    x, wx = special.roots_hermite(n)
    wx = np.exp(np.log(wx) + x * x)
    h = hermite_functions(dim + bmax + 2, x)
    dh = [h]
    for _ in range(bmax):
        dh.append(_hermite_deriv(dh[-1]))
    sig = 0.0 if math.isinf(sd) else 1.0 / sd
    A = np.zeros((dim, dim), complex)
    for b, Lc in parts.items():
        G = gauss_convolve_coeffs(Lc, sig)
        for r1 in range(0, b + 1, 2):
            lam = 1.0 if r1 == 0 else (0.0 if math.isinf(sl) else
                                       (-1) ** (r1 // 2) * _dfact(r1 - 1) / sl**r1)
            if lam == 0:
                continue
            for r2 in range(b - r1 + 1):
                r3 = b - r1 - r2
                mult = math.factorial(b) // (math.factorial(r1) * math.factorial(r2) * math.factorial(r3))
                g = np.polyval(_poly_deriv(G, r2)[::-1], x) / 2**r2
                coef = (-1j) ** b * mult * lam
                # (A h_j)(x) contribution, projected on h_i
                A += coef * (h[:dim] * wx) @ (g[:, None] * dh[r3][:dim].T)
    return A


def _pi_hat(w: WeightSpec, q, y):
    q, y = np.broadcast_arrays(np.asarray(q, float), np.asarray(y, float))
    widths = _gauss_widths(w)
    if widths is not None and not math.isinf(widths[0]):
        sl, sd = widths
        return sd * np.exp(-q * q / (2 * sl * sl) - sd * sd * y * y / 2) + 0j
    return np.vectorize(lambda a, b: partial_ft_p(w, float(a), float(b)))(q, y).astype(complex)


def m_kernel(w: WeightSpec, x, xp):
    """Position kernel of M: (1/sqrt(2 pi)) Pi_hat_p(x - x', -(x + x')/2)."""
    x, xp = np.broadcast_arrays(np.asarray(x, float), np.asarray(xp, float))
    return _pi_hat(w, x - xp, -(x + xp) / 2) / math.sqrt(2 * math.pi)


def _uniform_step(x):
    d = np.diff(x)
    if x.size < 4 or not np.allclose(d, d[0], rtol=1e-9, atol=0):
        raise ValueError("x_grid must be uniform with at least 4 points")
    return d[0]


def _kernel_numeric(w, F, x, p_half=None, n_p=None):
    """A(x, x') = (1/2 pi) int dq F_hat_p(q, x'-x) Pi_hat_p(x - x', q - (x + x')/2)."""
    dx = _uniform_step(x)
    ph = p_half or 12.0
    npts = n_p or 481
    pgrid = np.linspace(-ph, ph, npts)
    dp = pgrid[1] - pgrid[0]
    qh = max(abs(x[0]), abs(x[-1])) + 10.0
    qgrid = np.linspace(-qh, qh, int(2 * qh / dx * 2) | 1)
    dq = qgrid[1] - qgrid[0]
    X, XP = np.meshgrid(x, x, indexing="ij")
    Y = XP - X
    # F_hat_p on (q, y) for every distinct y = k dx
    ks = np.rint(Y / dx).astype(int)
    kvals = np.arange(ks.min(), ks.max() + 1)
    Fqp = np.asarray(F(qgrid[:, None], pgrid[None, :]), dtype=complex)
    Fhat = Fqp @ np.exp(-1j * np.outer(pgrid, kvals * dx)) * dp / math.sqrt(2 * math.pi)
    out = np.zeros(X.shape, complex)
    for i in range(x.size):
        for j in range(x.size):
            col = Fhat[:, ks[i, j] - kvals[0]]
            pi = _pi_hat(w, np.full(qgrid.size, x[i] - x[j]), qgrid - (x[i] + x[j]) / 2)
            out[i, j] = np.sum(col * pi) * dq / (2 * math.pi)
    return out


def project_kernel(x, K: np.ndarray, dim: int) -> np.ndarray:
    """<e_i|A|e_j> = sum h_i(x) K(x, x') h_j(x') dx dx' on a uniform grid."""
    dx = _uniform_step(x)
    h = hermite_functions(dim, x)
    return (h @ K @ h.T) * dx * dx


def position_kernel(w: WeightSpec, F, x_grid, dim: int | None = None) -> PositionKernel:
    """Position kernel of A_F and its Hermite-function projection.

    Polynomial symbols give a distributional kernel (derivatives of delta);
    those are applied analytically and only the projected operator is
    returned.  Smooth decaying symbols are sampled on ``x_grid``.
    """
    x = np.asarray(x_grid, float)
    kind, fx = _as_symbol(F)
    if kind == "poly":
        if dim is None:
            raise ValueError("dim is required for polynomial symbols")
        _check_degree(fx)
        A = _kernel_poly(w, fx, _check_dim(dim))
        return PositionKernel(x, None, FockOperator(A, 0.0, {"path": "kernel"}), "distributional",
                              {b: c for b, c in _p_expansion(fx).items()})
    if kind != "func":
        raise TypeError("position_kernel needs a polynomial or a callable symbol")
    if w.kind in ("ww", "heavi-e", "heavi-h") or (w.kind == "cg" and w.s.real >= 0):
        raise DistributionalKindError(f"weight {w.label} has no sampled kernel path")
    K = _kernel_numeric(w, fx, x)
    op = None
    if dim is not None:
        op = FockOperator(project_kernel(x, K, _check_dim(dim)), 0.0, {"path": "kernel"})
    return PositionKernel(x, K, op, "sampled")


def kernel_pipeline(w: WeightSpec, f, dim: int) -> FockOperator:
    kind, fx = _as_symbol(f)
    if kind != "poly":
        raise TypeError("kernel pipeline dispatch needs a polynomial symbol")
    return position_kernel(w, fx, np.linspace(-1, 1, 5), dim).op


# ------------------------------------------------------------------ dispatch

PIPELINES = ("auto", "quad", "poly", "poly-z", "poly-qp", "weyl", "kernel", "separable")


def quantize(w: WeightSpec, f, dim: int, pipeline: str = "auto", regularize: bool = False) -> FockOperator:
    """Quantize ``f`` choosing a pipeline; ``auto`` prefers closed forms, then quadrature."""
    if pipeline not in PIPELINES:
        raise ValueError(f"unknown pipeline {pipeline!r}; expected one of {PIPELINES}")
    if pipeline == "separable" or (pipeline == "auto" and isinstance(f, SeparableLqPm)):
        if not isinstance(f, SeparableLqPm):
            raise TypeError("separable pipeline needs an L(q):...*p^m symbol")
        if w.kind == "gauss":
            return quantize_separable_gauss(*w.params, f.L, f.m, dim)
        if w.kind == "ww" or (w.kind == "cg" and w.s == 0):
            return quantize_ww_separable(f.L, f.m, dim)
        if pipeline == "separable":
            raise UnsupportedWeightError(f"no separable closed form for weight {w.label}")
    kind, fx = _as_symbol(f)
    if pipeline == "auto":
        pipeline = "poly-qp" if kind == "poly" and w.analytic else "quad"
    if pipeline == "poly":
        pipeline = "poly-z" if kind == "poly" and fx.rep == "z" else "poly-qp"
    if pipeline in ("poly-z", "poly-qp", "weyl", "kernel") and kind != "poly":
        raise TypeError(f"pipeline {pipeline} needs a polynomial symbol")
    if pipeline == "poly-z":
        return quantize_poly_z(w, fx, dim)
    if pipeline == "poly-qp":
        return quantize_poly_qp(w, fx, dim)
    if pipeline == "weyl":
        return quantize_weyl_route(w, fx, dim)
    if pipeline == "kernel":
        return kernel_pipeline(w, fx, dim)
    return quantize_grid(w, f, dim, regularize=regularize)
