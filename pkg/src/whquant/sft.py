"""Phase-space grids, the symplectic Fourier transform and partial Fourier transforms.

Cartesian grids live on the z-plane: Re z and Im z run over [-L, L) with M
points each (so q = sqrt(2) Re z).  Node k is (ix, iy) = divmod(k, M).
"""
from __future__ import annotations

import io
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from .symbols import R2
from .weights import WeightSpec, evaluate

CALIBRATION_TOL = 1e-8


class GridError(ValueError):
    pass


class UnsupportedGridError(ValueError):
    pass


class DistributionalKindError(ValueError):
    pass


class LeakageWarning(UserWarning):
    pass


@dataclass(eq=False)
class PhaseGrid:
    scheme: str
    params: dict
    z: np.ndarray  # complex node positions
    qweights: np.ndarray  # measure d^2z/pi folded in
    calibration_error: float = 0.0

    @property
    def q(self):
        return R2 * self.z.real

    @property
    def p(self):
        return R2 * self.z.imag

    @property
    def size(self):
        return self.z.size

    @property
    def M(self):
        return self.params.get("M")

    @property
    def L(self):
        return self.params.get("L")

    def integrate(self, values) -> complex:
        # fixed-order pairwise summation (numpy sum) keeps results reproducible
        return complex(np.sum(np.asarray(values) * self.qweights))

    def header(self) -> str:
        parts = " ".join(f"{k}={_fmt(v)}" for k, v in self.params.items())
        return f"# grid scheme={self.scheme} {parts}"


@dataclass(eq=False)
class PhaseField:
    grid: PhaseGrid
    values: np.ndarray
    label: str = ""
    leakage: bool = False

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex).ravel()
        if self.values.size != self.grid.size:
            raise ValueError(f"field has {self.values.size} values for {self.grid.size} nodes")

    def as_array(self):
        if self.grid.scheme != "cartesian":
            raise UnsupportedGridError("only cartesian fields have an array view")
        M = self.grid.M
        return self.values.reshape(M, M)

    def integrate(self) -> complex:
        return self.grid.integrate(self.values)


def _fmt(x):
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x) + 0.0, ".17g")


def _calibrate(grid: PhaseGrid, check=True):
    err = abs(grid.integrate(np.exp(-np.abs(grid.z) ** 2)) - 1)
    grid.calibration_error = err
    if check and err > CALIBRATION_TOL:
        raise GridError(f"{grid.scheme} grid fails Gaussian calibration: error {err:.3g}")
    return grid


def cartesian_grid(L: float, M: int, check: bool = True) -> PhaseGrid:
    if L <= 0 or M <= 2 or M % 2:
        raise GridError(f"cartesian grid needs L > 0 and even M > 2 (got L={L}, M={M})")
    h = 2 * L / M
    x = -L + h * np.arange(M)
    X, Y = np.meshgrid(x, x, indexing="ij")
    z = (X + 1j * Y).ravel()
    w = np.full(z.size, h * h / math.pi)
    return _calibrate(PhaseGrid("cartesian", {"L": float(L), "M": int(M)}, z, w), check)


def polar_grid(R: int, A: int, check: bool = True) -> PhaseGrid:
    """Gauss-Laguerre in t = |z|^2 times a uniform angle rule."""
    if R < 2 or A < 2:
        raise GridError("polar grid needs R >= 2 and A >= 2")
    t, wt = special.roots_laguerre(R)
    wt = np.exp(np.log(wt) + t)  # weight for a plain dt integral
    th = 2 * math.pi * np.arange(A) / A
    T, TH = np.meshgrid(t, th, indexing="ij")
    z = (np.sqrt(T) * np.exp(1j * TH)).ravel()
    w = np.repeat(wt / A, A)
    return _calibrate(PhaseGrid("polar", {"R": int(R), "A": int(A)}, z, w), check)


def gauss_hermite_grid(rates=(1.0, 1.0), orders=(40, 40), check: bool = True) -> PhaseGrid:
    """Tensor Gauss-Hermite rule matched to exp(-bx Re(z)^2 - by Im(z)^2)."""
    (bx, by), (nx, ny) = rates, orders
    if bx <= 0 or by <= 0 or nx < 2 or ny < 2:
        raise GridError("Gauss-Hermite grid needs positive rates and orders >= 2")
    xs, wx = _gh(nx, bx)
    ys, wy = _gh(ny, by)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    z = (X + 1j * Y).ravel()
    w = np.outer(wx, wy).ravel() / math.pi
    g = PhaseGrid("gauss-hermite", {"bx": float(bx), "by": float(by), "nx": int(nx), "ny": int(ny)}, z, w)
    return _calibrate(g, check)


def _gh(n, b):
    x, w = special.roots_hermite(n)
    with np.errstate(divide="ignore"):  # underflowed outer weights stay zero
        return x / math.sqrt(b), np.exp(np.log(w) + x * x) / math.sqrt(b)


def make_grid(scheme: str, **params) -> PhaseGrid:
    if scheme == "cartesian":
        return cartesian_grid(params["L"], params["M"], params.get("check", True))
    if scheme == "polar":
        return polar_grid(params["R"], params["A"], params.get("check", True))
    if scheme in ("gauss-hermite", "tensor-gauss-hermite"):
        return gauss_hermite_grid(params.get("rates", (1.0, 1.0)), params["orders"], params.get("check", True))
    raise GridError(f"unknown grid scheme {scheme!r}")


def field_from_function(grid: PhaseGrid, f, label="") -> PhaseField:
    """Sample f(q, p) on the grid nodes."""
    return PhaseField(grid, np.asarray(f(grid.q, grid.p), dtype=complex) * np.ones(grid.size), label)


def _dual_grid(grid: PhaseGrid) -> PhaseGrid:
    L, M = grid.L, grid.M
    return cartesian_grid(math.pi * M / (4 * L), M, check=False)


def _axis_transform(a, axis, sign, M):
    """sum_j a_j exp(sign 2i z_k xi_j) along ``axis`` on self-dual index sets."""
    alt = np.where(np.arange(M) % 2 == 0, 1.0, -1.0)
    shape = [1, 1]
    shape[axis] = M
    alt = alt.reshape(shape)
    if sign > 0:
        core = M * np.fft.ifft(a * alt, axis=axis)
    else:
        core = np.fft.fft(a * alt, axis=axis)
    return np.exp(sign * 1j * math.pi * M / 2) * alt * core


def sft(fld: PhaseField, direction: str = "forward") -> PhaseField:
    """Symplectic Fourier transform f_s[f](z) = int e^{z o xi} f(xi) d^2xi/pi.

    z o xi = z conj(xi) - conj(z) xi = 2i (Im z Re xi - Re z Im xi).  The
    output lives on the dual grid with L' = pi M / (4 L); applying the
    transform twice returns to the original grid.  ``reflected`` uses
    e^{-z o xi}.
    """
    g = fld.grid
    if g.scheme != "cartesian":
        raise UnsupportedGridError("sft needs a cartesian-uniform grid")
    if direction not in ("forward", "reflected"):
        raise ValueError(direction)
    M, L = g.M, g.L
    h = 2 * L / M
    f = fld.values.reshape(M, M)  # axis0: Re xi, axis1: Im xi
    peak = np.abs(f).max()
    edge = max(np.abs(f[0]).max(), np.abs(f[-1]).max(), np.abs(f[:, 0]).max(), np.abs(f[:, -1]).max())
    leak = bool(peak > 0 and edge > 1e-6 * peak)
    if leak:
        warnings.warn("field does not vanish on the grid boundary; transform may alias", LeakageWarning, stacklevel=2)
    sg = 1 if direction == "forward" else -1
    # Im z pairs with Re xi (kernel e^{+2i..}); Re z pairs with Im xi (kernel e^{-2i..})
    t = _axis_transform(f, 0, sg, M)  # axis0 now indexes Im z
    t = _axis_transform(t, 1, -sg, M)  # axis1 now indexes Re z
    out = (h * h / math.pi) * t.T
    return PhaseField(_dual_grid(g), out.ravel(), fld.label, leak)


def parity_reflect(fld: PhaseField) -> PhaseField:
    """f(-z) on a cartesian grid (periodic identification of -L and L)."""
    M = fld.grid.M
    idx = (-np.arange(M)) % M
    a = fld.as_array()[np.ix_(idx, idx)]
    return PhaseField(fld.grid, a.ravel(), fld.label)


# --------------------------------------------------------- partial transforms


def _bj_sine_integral(omega):
    """int_0^inf sin(omega p)/p dp by quadrature (split at p = 1)."""
    if omega == 0:
        return 0.0
    head, _ = integrate.quad(lambda p: np.sinc(omega * p / np.pi) * omega, 0.0, 1.0, epsabs=1e-13, epsrel=1e-13)
    with warnings.catch_warnings():
        # QAWF reports slow convergence of the 1/p envelope; the value is still accurate
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        tail, _ = integrate.quad(lambda p: 1.0 / p, 1.0, np.inf, weight="sin", wvar=omega, epsabs=1e-13)
    return head + tail


def bj_partial_ft_exact(q, y):
    aq, ay = abs(q), abs(y)
    if aq == 0:
        raise DistributionalKindError("Born-Jordan partial transform at q=0 is a delta")
    ind = 1.0 if ay < aq else (0.5 if ay == aq else 0.0)
    return math.pi / aq * ind / math.sqrt(2 * math.pi)


def partial_ft_p(Pi, q: float, y: float) -> complex:
    """Pi_hat_p(q, y) = (1/sqrt(2 pi)) int e^{-i y p} Pi(q, p) dp."""
    if isinstance(Pi, PhaseField):
        return _partial_ft_field(Pi, q, y)
    w = Pi
    if w.kind == "gauss":
        sl, sd = w.params
        return complex(sd * math.exp(-q * q / (2 * sl * sl) - sd * sd * y * y / 2))
    if w.kind == "cg":
        s = w.s
        if s.real >= 0:
            raise DistributionalKindError("Cahill-Glauber with Re s >= 0 is not integrable in p")
        return complex(np.exp(s * q * q / 4) * np.sqrt(2 / -s) * np.exp(y * y / s))
    if w.kind == "bj":
        if q == 0:
            raise DistributionalKindError("Born-Jordan partial transform at q=0 is a delta")
        val = (_bj_sine_integral(q + y) + _bj_sine_integral(q - y)) / q
        return complex(val / math.sqrt(2 * math.pi))
    if w.kind in ("ww", "heavi-e", "heavi-h"):
        raise DistributionalKindError(
            f"weight {w.label} is not integrable in p; use the closed-form kernel path"
        )
    return _partial_ft_numeric(lambda p: complex(evaluate(w, q, p)), y)


def _partial_ft_numeric(f, y):
    even = lambda p: (f(p) + f(-p))
    odd = lambda p: (f(p) - f(-p))
    parts = []
    for g, kind in ((even, "cos"), (odd, "sin")):
        if y == 0 and kind == "sin":
            parts.append(0j)
            continue
        vals = []
        for comp in (lambda p: g(p).real, lambda p: g(p).imag):
            if y == 0:
                v, _ = integrate.quad(comp, 0, np.inf, limit=400)
            else:
                v, _ = integrate.quad(comp, 0, np.inf, weight=kind, wvar=abs(y))
                if kind == "sin" and y < 0:
                    v = -v
            vals.append(v)
        parts.append(complex(vals[0], vals[1]))
    return (parts[0] - 1j * parts[1]) / math.sqrt(2 * math.pi)


def _partial_ft_field(fld, q, y):
    g = fld.grid
    if g.scheme != "cartesian":
        raise UnsupportedGridError("field partial transform needs a cartesian grid")
    M, L = g.M, g.L
    h = 2 * L / M
    xs = -L + h * np.arange(M)
    a = fld.as_array()
    xq = q / R2
    j = int(np.clip(np.floor((xq + L) / h), 0, M - 2))
    t = (xq - xs[j]) / h
    row = (1 - t) * a[j] + t * a[j + 1]
    p = R2 * xs
    dp = R2 * h
    return complex(np.sum(np.exp(-1j * y * p) * row) * dp / math.sqrt(2 * math.pi))


# -------------------------------------------------------------- field I/O


def field_to_csv(fld: PhaseField) -> str:
    buf = io.StringIO()
    buf.write(fld.grid.header() + "\n")
    for q, p, v in zip(fld.grid.q, fld.grid.p, fld.values):
        buf.write(f"{_fmt(q)},{_fmt(p)},{_fmt(v.real)},{_fmt(v.imag)}\n")
    return buf.getvalue()


def field_from_csv(text: str) -> PhaseField:
    lines = [l for l in text.splitlines() if l.strip()]
    head = lines[0]
    if not head.startswith("# grid scheme="):
        raise ValueError("bad field header")
    toks = dict(t.split("=", 1) for t in head[2:].split()[1:])
    if toks["scheme"] != "cartesian":
        raise UnsupportedGridError("only cartesian fields can be read back")
    grid = cartesian_grid(float(toks["L"]), int(toks["M"]), check=False)
    vals = np.array([complex(float(r.split(",")[2]), float(r.split(",")[3])) for r in lines[1:]])
    return PhaseField(grid, vals)
