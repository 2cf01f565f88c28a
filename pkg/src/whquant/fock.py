"""Truncated number-basis matrix calculus.

Conventions: hbar = 1, z = (q + i p)/sqrt(2), a|n> = sqrt(n)|n-1>.
"""
from __future__ import annotations

import cmath
import io
import math
from dataclasses import dataclass

import numpy as np

from ._accel import HAVE_NUMBA, njit

# e^{-|z|^2/2} underflows double precision near |z|^2 = 1490.
MAX_ABS_Z2 = 1400.0


class DimensionError(ValueError):
    pass


class DomainError(ValueError):
    pass


class MagnitudeOverflowError(ArithmeticError):
    pass


@dataclass(frozen=True)
class PhasePoint:
    q: float
    p: float

    @property
    def z(self) -> complex:
        return complex(self.q, self.p) / math.sqrt(2.0)

    @classmethod
    def from_z(cls, z) -> "PhasePoint":
        z = complex(z)
        return cls(math.sqrt(2.0) * z.real, math.sqrt(2.0) * z.imag)


def as_z(pt) -> complex:
    """Accept a PhasePoint or a complex number and return z."""
    if isinstance(pt, PhasePoint):
        return pt.z
    return complex(pt)


class FockOperator:
    """Dense truncated operator; ``tail`` bounds the discarded boundary coupling."""

    __slots__ = ("mat", "tail", "meta")

    def __init__(self, mat, tail: float = 0.0, meta=None):
        mat = np.asarray(mat, dtype=complex)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise DimensionError(f"operator must be square, got shape {mat.shape}")
        if mat.shape[0] < 2:
            raise DimensionError("dim must be >= 2")
        if not np.all(np.isfinite(mat)):
            raise FloatingPointError("non-finite operator entries")
        self.mat = mat
        self.tail = float(tail)
        self.meta = dict(meta or {})

    @property
    def dim(self) -> int:
        return self.mat.shape[0]

    def _check(self, other):
        if other.dim != self.dim:
            raise DimensionError(f"dim mismatch {self.dim} vs {other.dim}")

    def __add__(self, other):
        if isinstance(other, FockOperator):
            self._check(other)
            return FockOperator(self.mat + other.mat, max(self.tail, other.tail))
        return FockOperator(self.mat + other * np.eye(self.dim), self.tail)

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __neg__(self):
        return FockOperator(-self.mat, self.tail)

    def __mul__(self, c):
        return FockOperator(complex(c) * self.mat, self.tail)

    __rmul__ = __mul__

    def __truediv__(self, c):
        return FockOperator(self.mat / complex(c), self.tail)

    def __matmul__(self, other):
        if isinstance(other, FockVector):
            if other.dim != self.dim:
                raise DimensionError("dim mismatch")
            return FockVector(self.mat @ other.vec, max(self.tail, other.tail))
        self._check(other)
        return FockOperator(self.mat @ other.mat, max(self.tail, other.tail))

    def dag(self):
        return FockOperator(self.mat.conj().T, self.tail, self.meta)

    def comm(self, other):
        return self @ other - other @ self

    def crop(self, n: int):
        return FockOperator(self.mat[:n, :n].copy(), self.tail, self.meta)

    def block(self, n: int) -> np.ndarray:
        return self.mat[:n, :n]

    def __repr__(self):
        return f"FockOperator(dim={self.dim}, tail={self.tail:.3g})"


class FockVector:
    __slots__ = ("vec", "tail", "warning")

    def __init__(self, vec, tail: float = 0.0, warning: bool = False):
        vec = np.asarray(vec, dtype=complex)
        if vec.ndim != 1 or vec.size < 2:
            raise DimensionError("vector must be 1-d with dim >= 2")
        if not np.all(np.isfinite(vec)):
            raise FloatingPointError("non-finite vector entries")
        self.vec = vec
        self.tail = float(tail)
        self.warning = bool(warning)

    @property
    def dim(self) -> int:
        return self.vec.size

    def norm(self) -> float:
        return float(np.linalg.norm(self.vec))

    def inner(self, other) -> complex:
        return complex(np.vdot(self.vec, other.vec))

    def projector(self) -> FockOperator:
        return FockOperator(np.outer(self.vec, self.vec.conj()), self.tail)


def _check_dim(dim):
    if int(dim) != dim or dim < 2:
        raise DimensionError(f"dim must be an integer >= 2, got {dim}")
    return int(dim)


def basis(n: int, dim: int) -> FockVector:
    dim = _check_dim(dim)
    v = np.zeros(dim, complex)
    v[n] = 1.0
    return FockVector(v)


def identity(dim: int) -> FockOperator:
    return FockOperator(np.eye(_check_dim(dim), dtype=complex))


def ladder_ops(dim: int):
    dim = _check_dim(dim)
    lower = np.diag(np.sqrt(np.arange(1, dim, dtype=float)), 1).astype(complex)
    return FockOperator(lower), FockOperator(lower.T.copy())


def number_op(dim: int) -> FockOperator:
    return FockOperator(np.diag(np.arange(_check_dim(dim), dtype=float)).astype(complex))


def quadrature_ops(dim: int):
    a, ad = ladder_ops(dim)
    r2 = math.sqrt(2.0)
    return (a + ad) / r2, (a - ad) / (1j * r2)


def rotation(theta: float, nu: float, dim: int) -> FockOperator:
    n = np.arange(_check_dim(dim), dtype=float)
    ph = np.exp(1j * (n + nu) * theta)
    if nu == 0 and theta == math.pi:
        # keep parity exact instead of carrying 1e-16 imaginary parts
        ph = np.where(np.arange(dim) % 2 == 0, 1.0, -1.0).astype(complex)
    return FockOperator(np.diag(ph))


def parity(dim: int) -> FockOperator:
    return rotation(math.pi, 0.0, dim)


def time_reverse(x):
    """Time reversal in the number basis: entrywise conjugation."""
    if isinstance(x, FockOperator):
        return FockOperator(x.mat.conj(), x.tail)
    if isinstance(x, FockVector):
        return FockVector(x.vec.conj(), x.tail, x.warning)
    return np.conj(x)


def assoc_laguerre(n: int, alpha: int, t: float) -> float:
    """L_n^{(alpha)}(t) by upward recurrence; alpha >= -n handled by reflection."""
    if int(n) != n or n < 0 or int(alpha) != alpha:
        raise DomainError(f"unsupported (n, alpha) = ({n}, {alpha})")
    n, alpha = int(n), int(alpha)
    if alpha < 0:
        k = -alpha
        if k > n:
            raise DomainError(f"alpha={alpha} < -n={-n} not supported")
        # L_n^{(-k)}(t) = (-t)^k (n-k)!/n! L_{n-k}^{(k)}(t)
        pref = math.exp(math.lgamma(n - k + 1) - math.lgamma(n + 1))
        return (-t) ** k * pref * assoc_laguerre(n - k, k, t)
    l0, l1 = 1.0, 1.0 + alpha - t
    if n == 0:
        return l0
    for k in range(1, n):
        l0, l1 = l1, ((2 * k + 1 + alpha - t) * l1 - (k + alpha) * l0) / (k + 1)
    return l1


@njit(cache=True)
def _lgamma_table(n):
    out = np.empty(n)
    for k in range(n):
        out[k] = math.lgamma(k + 1.0)
    return out


@njit(cache=True)
def _disp_fill(zr, zi, nrows, ncols, out):
    # normalized Laguerre recurrence along each diagonal offset alpha:
    # g_k = sqrt(k!/(k+alpha)!) e^{-x/2} x^{alpha/2} L_k^{(alpha)}(x)
    x = zr * zr + zi * zi
    theta = math.atan2(zi, zr)
    amax = max(nrows, ncols)
    lg = _lgamma_table(amax + 1)
    logx = math.log(x) if x > 0.0 else 0.0
    for alpha in range(amax):
        klo = min(ncols, nrows - alpha) if alpha < nrows else 0
        kup = min(nrows, ncols - alpha) if alpha < ncols else 0
        kmax = max(klo, kup)
        if kmax <= 0:
            continue
        if x == 0.0:
            g0 = 1.0 if alpha == 0 else 0.0
        else:
            g0 = math.exp(-0.5 * x + 0.5 * alpha * logx - 0.5 * lg[alpha])
        ph = complex(math.cos(alpha * theta), math.sin(alpha * theta))
        sgn = -1.0 if alpha % 2 == 1 else 1.0
        gm, g = 0.0, g0
        for k in range(kmax):
            if k < klo:
                out[k + alpha, k] = g * ph
            if alpha > 0 and k < kup:
                out[k, k + alpha] = sgn * g * ph.conjugate()
            gn = ((2 * k + 1 + alpha - x) * g - math.sqrt(k * (k + alpha)) * gm) / math.sqrt(
                (k + 1.0) * (k + 1.0 + alpha)
            )
            gm, g = g, gn


def _disp_fill_numpy(zr, zi, nrows, ncols, out):
    # same recurrence, vectorized over the diagonal offset
    x = zr * zr + zi * zi
    theta = math.atan2(zi, zr)
    amax = max(nrows, ncols)
    alpha = np.arange(amax, dtype=float)
    lg = np.array([math.lgamma(a + 1.0) for a in range(amax)])
    if x == 0.0:
        g = (alpha == 0).astype(float)
    else:
        g = np.exp(-0.5 * x + 0.5 * alpha * math.log(x) - 0.5 * lg)
    gm = np.zeros(amax)
    ph = np.exp(1j * alpha * theta)
    sgn = np.where(np.arange(amax) % 2 == 1, -1.0, 1.0)
    ia = np.arange(amax)
    for k in range(max(nrows, ncols)):
        if k < ncols:
            lo = ia[ia + k < nrows]
            out[lo + k, k] = g[lo] * ph[lo]
        if k < nrows:
            up = ia[(ia > 0) & (ia + k < ncols)]
            out[k, up + k] = sgn[up] * g[up] * ph[up].conj()
        gn = ((2 * k + 1 + alpha - x) * g - np.sqrt(k * (k + alpha)) * gm) / np.sqrt(
            (k + 1.0) * (k + 1.0 + alpha)
        )
        gm, g = g, gn


def displacement_block(z, nrows: int, ncols: int) -> np.ndarray:
    """Rows < nrows, cols < ncols of the exact D(z); no truncation error in entries."""
    z = as_z(z)
    if not (math.isfinite(z.real) and math.isfinite(z.imag)):
        raise MagnitudeOverflowError("non-finite z")
    if abs(z) ** 2 > MAX_ABS_Z2:
        raise MagnitudeOverflowError(f"|z|^2={abs(z) ** 2:.1f} exceeds {MAX_ABS_Z2}")
    out = np.zeros((nrows, ncols), complex)
    if HAVE_NUMBA:
        _disp_fill(z.real, z.imag, nrows, ncols, out)
    else:
        _disp_fill_numpy(z.real, z.imag, nrows, ncols, out)
    return out


def displacement(z, dim: int) -> FockOperator:
    dim = _check_dim(dim)
    d = displacement_block(z, dim, dim)
    half = max(1, dim // 2)
    deficit = 1.0 - np.sum(np.abs(d[:, :half]) ** 2, axis=0)
    return FockOperator(d, math.sqrt(max(0.0, float(deficit.max()))))


def coherent(z, dim: int) -> FockVector:
    dim = _check_dim(dim)
    z = as_z(z)
    n = np.arange(dim)
    r2 = abs(z) ** 2
    if z == 0:
        v = np.zeros(dim, complex)
        v[0] = 1.0
        return FockVector(v)
    lg = np.array([math.lgamma(k + 1.0) for k in range(dim + 1)])
    mag = np.exp(-0.5 * r2 + n * math.log(abs(z)) - 0.5 * lg[:dim])
    v = mag * np.exp(1j * n * cmath.phase(z))
    edge = math.exp(-0.5 * r2 + dim * math.log(abs(z)) - 0.5 * lg[dim])
    tail = math.sqrt(max(0.0, 1.0 - float(np.sum(mag**2))))
    return FockVector(v, tail, warning=edge >= 1e-12)


def trace_pair(A: FockOperator, B: FockOperator) -> complex:
    """tr(A^dagger B)."""
    if A.dim != B.dim:
        raise DimensionError(f"dim mismatch {A.dim} vs {B.dim}")
    return complex(np.sum(A.mat.conj() * B.mat))


def _fmt(x: float) -> str:
    return format(float(x) + 0.0, ".17g")


def operator_to_csv(op: FockOperator, nonzero_only: bool = True) -> str:
    buf = io.StringIO()
    buf.write(f"# fock dim={op.dim}\n")
    rows, cols = (np.nonzero(op.mat) if nonzero_only else np.indices(op.mat.shape).reshape(2, -1))
    for r, c in zip(rows, cols):
        v = op.mat[r, c]
        buf.write(f"{r},{c},{_fmt(v.real)},{_fmt(v.imag)}\n")
    return buf.getvalue()


def vector_to_csv(vec: FockVector) -> str:
    buf = io.StringIO()
    buf.write(f"# fock dim={vec.dim}\n")
    for i, v in enumerate(vec.vec):
        buf.write(f"{i},{_fmt(v.real)},{_fmt(v.imag)}\n")
    return buf.getvalue()


def _parse_header(line):
    line = line.strip()
    if not line.startswith("# fock dim="):
        raise ValueError(f"bad header {line!r}, expected '# fock dim=<N>'")
    return int(line.split("=", 1)[1])


def operator_from_csv(text: str) -> FockOperator:
    lines = [l for l in text.splitlines() if l.strip()]
    dim = _parse_header(lines[0])
    mat = np.zeros((dim, dim), complex)
    for ln, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != 4:
            raise ValueError(f"line {ln}: expected row,col,re,im")
        r, c = int(parts[0]), int(parts[1])
        mat[r, c] = complex(float(parts[2]), float(parts[3]))
    return FockOperator(mat)


def vector_from_csv(text: str) -> FockVector:
    lines = [l for l in text.splitlines() if l.strip()]
    dim = _parse_header(lines[0])
    v = np.zeros(dim, complex)
    for ln, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != 3:
            raise ValueError(f"line {ln}: expected index,re,im")
        v[int(parts[0])] = complex(float(parts[1]), float(parts[2]))
    return FockVector(v)
