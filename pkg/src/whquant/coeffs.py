"""Ratio (d, dtilde) and star-ordering (a, atilde) coefficient families.

Both variable sets share one code path.  With varpi written as a series in
two variables (u, v) = (z, zbar) or (q, p):

    varpi(x + x') / (varpi(x) varpi(x'))      = sum d  u^i v^ib u'^j v'^jb
    exp(al u v' + be v u') * (same ratio)     = sum a  ...

where (al, be) = (-1/2, +1/2) in z-form and (i/2, -i/2) in qp-form; the
tilde variants flip both signs and invert the ratio.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .weights import MAX_K, CoeffTable2, WeightSpec, invert_series, weight_taylor

_EPS = np.finfo(float).eps
_PHASES = {"z": (-0.5, 0.5), "qp": (0.5j, -0.5j)}


class RepresentationError(ValueError):
    pass


class CoeffTable4:
    def __init__(self, K: int, rep: str, data: dict):
        self.K = int(K)
        self.rep = rep
        self.data = {k: complex(v) for k, v in data.items() if v != 0}

    def __getitem__(self, key) -> complex:
        return self.data.get(tuple(key), 0j)

    def items(self):
        return sorted(self.data.items())

    def dense(self) -> np.ndarray:
        out = np.zeros((self.K + 1,) * 4, complex)
        for k, v in self.data.items():
            out[k] = v
        return out

    @classmethod
    def from_dense(cls, arr, rep, absarr=None, K=None):
        K = arr.shape[0] - 1 if K is None else K
        data = {}
        for idx in zip(*np.nonzero(arr)):
            if sum(idx) > K:
                continue
            v = arr[idx]
            if absarr is not None and abs(v) <= 64 * _EPS * absarr[idx]:
                continue  # zero up to rounding
            data[tuple(int(i) for i in idx)] = v
        return cls(K, rep, data)

    def __repr__(self):
        return f"CoeffTable4(K={self.K}, rep={self.rep}, n={len(self.data)})"


def _dense2(c: CoeffTable2, K):
    out = np.zeros((K + 1, K + 1), complex)
    for (i, j), v in c.data.items():
        if i + j <= K:
            out[i, j] = v
    return out


def _degree_mask(K):
    idx = np.indices((K + 1,) * 4).sum(axis=0)
    return idx <= K


def _shift_add(out, src, shift, coef):
    """out[idx + shift] += coef * src[idx], truncated to the array."""
    K1 = out.shape[0]
    sl_out = tuple(slice(s, K1) for s in shift)
    sl_src = tuple(slice(0, K1 - s) for s in shift)
    out[sl_out] += coef * src[sl_src]


def ratio_coeffs(c: CoeffTable2, c_inv: CoeffTable2, K: int, direction: str = "sum-over-product") -> CoeffTable4:
    if c.rep != c_inv.rep:
        raise RepresentationError(f"representation mismatch {c.rep} vs {c_inv.rep}")
    if K > MAX_K:
        raise ValueError(f"K={K} exceeds {MAX_K}")
    if direction in ("sum-over-product", "d"):
        num, den = c, c_inv
    elif direction in ("product-over-sum", "dtilde"):
        num, den = c_inv, c
    else:
        raise ValueError(direction)
    n2 = _dense2(num, K)
    # numerator varpi(x + x'): c_{A,B} binom(A, i) binom(B, ib) u^i v^ib u'^(A-i) v'^(B-ib)
    N = np.zeros((K + 1,) * 4, complex)
    for A in range(K + 1):
        for B in range(K + 1 - A):
            if n2[A, B] == 0:
                continue
            for i in range(A + 1):
                for ib in range(B + 1):
                    N[i, ib, A - i, B - ib] = n2[A, B] * math.comb(A, i) * math.comb(B, ib)
    mask = _degree_mask(K)
    val, mag = N, np.abs(N)
    for pair in ((0, 1), (2, 3)):
        nv, nm = np.zeros_like(val), np.zeros_like(mag)
        for (x, y), t in den.data.items():
            if x + y > K:
                continue
            sh = [0, 0, 0, 0]
            sh[pair[0]], sh[pair[1]] = x, y
            _shift_add(nv, val, sh, t)
            _shift_add(nm, mag, sh, abs(t))
        val, mag = nv * mask, nm * mask
    # varpi(x + 0) / (varpi(x) varpi(0)) = 1: only the unit survives with an empty pair
    val[:, :, 0, 0] = 0
    val[0, 0, :, :] = 0
    val[0, 0, 0, 0] = 1
    return CoeffTable4.from_dense(val, c.rep, mag, K)


def star_coeffs(d: CoeffTable4, K: int | None = None, variant: str = "a") -> CoeffTable4:
    K = d.K if K is None else min(K, d.K)
    al, be = _PHASES[d.rep]
    if variant in ("atilde", "a-tilde"):
        al, be = -al, -be
    elif variant != "a":
        raise ValueError(variant)
    D = d.dense()[: K + 1, : K + 1, : K + 1, : K + 1]
    M = np.abs(D)
    out = np.zeros_like(D)
    mag = np.zeros_like(M)
    for k in range(K // 2 + 1):
        for l in range(K // 2 + 1 - k):
            coef = al**k * be**l / (math.factorial(k) * math.factorial(l))
            _shift_add(out, D, (k, l, l, k), coef)
            _shift_add(mag, M, (k, l, l, k), abs(coef))
    out *= _degree_mask(K)
    return CoeffTable4.from_dense(out, d.rep, mag, K)


def cg_star_coeffs(s, K: int, variant: str = "a") -> CoeffTable4:
    s = complex(s)
    if s.real >= 1:
        raise ValueError("requires Re s < 1")
    data = {}
    for i in range(K // 2 + 1):
        for j in range(K // 2 + 1 - i):
            v = ((s - 1) / 2) ** i * ((s + 1) / 2) ** j / (math.factorial(i) * math.factorial(j))
            if variant in ("atilde", "a-tilde"):
                v *= (-1) ** (i + j)
            data[(i, j, j, i)] = v
    return CoeffTable4(K, "z", data)


def convolve4(x: CoeffTable4, y: CoeffTable4, K: int) -> CoeffTable4:
    """Product of two 4-variable series truncated at total degree K."""
    out = {}
    for kx, vx in x.data.items():
        for ky, vy in y.data.items():
            k = tuple(a + b for a, b in zip(kx, ky))
            if sum(k) <= K:
                out[k] = out.get(k, 0j) + vx * vy
    return CoeffTable4(K, x.rep, out)


def convolve2(x: CoeffTable2, y: CoeffTable2, K: int) -> CoeffTable2:
    out = {}
    for (a, b), u in x.data.items():
        for (c, d), v in y.data.items():
            if a + b + c + d <= K:
                out[(a + c, b + d)] = out.get((a + c, b + d), 0j) + u * v
    return CoeffTable2(K, x.rep, out)


@dataclass
class Tables:
    c: CoeffTable2
    ct: CoeffTable2
    d: CoeffTable4
    dt: CoeffTable4
    a: CoeffTable4
    at: CoeffTable4


@lru_cache(maxsize=64)
def _tables_cached(w: WeightSpec, K: int, rep: str) -> Tables:
    return _tables(w, K, rep)


def _tables(w, K, rep):
    c = weight_taylor(w, K, rep)
    ct = invert_series(c, K)
    d = ratio_coeffs(c, ct, K, "d")
    dt = ratio_coeffs(c, ct, K, "dtilde")
    return Tables(c, ct, d, dt, star_coeffs(d, K, "a"), star_coeffs(dt, K, "atilde"))


def tables_for(w: WeightSpec, K: int, rep: str = "z") -> Tables:
    if w.kind == "custom":
        return _tables(w, K, rep)
    return _tables_cached(w, K, rep)


# ------------------------------------------------------------ Born-Jordan


def bernoulli(n: int) -> float:
    """Bernoulli numbers B_n (B_1 = -1/2) from the standard recurrence."""
    B = [1.0]
    for m in range(1, n + 1):
        B.append(-sum(math.comb(m + 1, k) * B[k] for k in range(m)) / (m + 1))
    return B[n]


def bell(n: int) -> int:
    B = [1]
    for m in range(n):
        B.append(sum(math.comb(m, k) * B[k] for k in range(m + 1)))
    return B[n]


def bj_inverse_candidate(K: int, numbers: str = "bernoulli") -> CoeffTable2:
    """qp csc(qp) coefficients, with B_2r read as Bernoulli or as Bell numbers."""
    f = bernoulli if numbers == "bernoulli" else bell
    data = {}
    for r in range(K // 4 + 1):
        data[(2 * r, 2 * r)] = (-1) ** (r + 1) * 2 * (2.0 ** (2 * r - 1) - 1) / math.factorial(2 * r) * f(2 * r)
    return CoeffTable2(K, "qp", data)


def bj_d_closed(c: CoeffTable2, ct: CoeffTable2, K: int) -> CoeffTable4:
    """Parity-restricted closed sum for Born-Jordan d, second binomial read as binom(2u, l' - 2v)."""
    data = {}
    for k in range(K + 1):
        for l in range(K + 1 - k):
            for kp in range(K + 1 - k - l):
                for lp in range(K + 1 - k - l - kp):
                    if k + kp != l + lp or (k + kp) % 2:
                        continue
                    acc = 0j
                    for u in range((k + kp) // 2 + 1):
                        for v in range((k + kp) // 2 + 1 - u):
                            w = k + kp - 2 * (u + v)
                            if kp - 2 * v < 0 or lp - 2 * v < 0:
                                continue
                            acc += (
                                math.comb(2 * u, kp - 2 * v)
                                * math.comb(2 * u, lp - 2 * v)
                                * c[(2 * u, 2 * u)]
                                * ct[(2 * v, 2 * v)]
                                * ct[(w, w)]
                            )
                    if abs(acc) > 1e-15:
                        data[(k, l, kp, lp)] = acc
    return CoeffTable4(K, "qp", data)


def bj_tables(K: int):
    if K > 12:
        raise ValueError("Born-Jordan tables are capped at K=12")
    c = weight_taylor(WeightSpec.born_jordan(), K, "qp")
    ct = invert_series(c, K)
    return c, ct, bj_d_closed(c, ct, K)


def table_max_diff(x, y) -> float:
    keys = set(x.data) | set(y.data)
    return max((abs(x[k] - y[k]) for k in keys), default=0.0)
