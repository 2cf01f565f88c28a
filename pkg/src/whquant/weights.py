"""Weight functions varpi(z) = Pi(q, p): evaluation, Taylor tables, classification."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .fock import PhasePoint
from .symbols import R2, Poly2

MAX_K = 16

KINDS = ("ww", "cg", "bj", "gauss", "heavi-e", "heavi-h", "custom")


class UnsupportedWeightError(ValueError):
    pass


class MissingTaylorError(ValueError):
    pass


class NormalizationError(ValueError):
    pass


@dataclass(frozen=True)
class Flags:
    regular: bool
    isotropic: bool
    hyperbolic: bool
    isometric: bool


@dataclass(frozen=True)
class WeightSpec:
    kind: str
    params: tuple = ()
    evaluator: Callable | None = field(default=None, compare=False)
    taylor: object = field(default=None, compare=False)  # CoeffTable2 for custom kinds
    label: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise UnsupportedWeightError(f"unknown weight kind {self.kind!r}")
        if self.kind == "cg" and complex(self.params[0]).real >= 1:
            raise UnsupportedWeightError("Cahill-Glauber weight requires Re s < 1")
        if self.kind == "gauss" and min(self.params) <= 0:
            raise UnsupportedWeightError("Gaussian widths must be positive")
        if self.kind in ("heavi-e", "heavi-h") and self.params[0] < 0:
            raise UnsupportedWeightError("Heaviside alpha must be nonnegative")

    # constructors
    @classmethod
    def constant(cls):
        return cls("ww", (), label="ww")

    @classmethod
    def cahill_glauber(cls, s):
        s = complex(s)
        lab = f"cg:{s.real:g}" + (f",{s.imag:g}" if s.imag else "")
        return cls("cg", (s,), label=lab)

    @classmethod
    def born_jordan(cls):
        return cls("bj", (), label="bj")

    @classmethod
    def separable_gaussian(cls, sigma_l, sigma_d):
        return cls("gauss", (float(sigma_l), float(sigma_d)), label=f"gauss:{sigma_l:g},{sigma_d:g}")

    @classmethod
    def heaviside_elliptic(cls, alpha):
        return cls("heavi-e", (float(alpha),), label=f"heavi-e:{alpha:g}")

    @classmethod
    def heaviside_hyperbolic(cls, alpha):
        return cls("heavi-h", (float(alpha),), label=f"heavi-h:{alpha:g}")

    @classmethod
    def custom(cls, evaluator, taylor=None, label="custom"):
        return cls("custom", (), evaluator=evaluator, taylor=taylor, label=label)

    @property
    def s(self) -> complex:
        return self.params[0]

    def __call__(self, q, p):
        return evaluate(self, q, p)

    @property
    def flags(self) -> Flags:
        return classify_weight(self)

    @property
    def analytic(self) -> bool:
        return self.kind in ("ww", "cg", "bj", "gauss") or (self.kind == "custom" and self.taylor is not None)

    @property
    def decaying(self) -> bool:
        """Integrable against D(z) without regularization."""
        if self.kind == "cg":
            return self.s.real < 0
        return self.kind == "gauss"

    @property
    def gaussian_rates(self):
        """(bx, by) with varpi = exp(-bx Re(z)^2 - by Im(z)^2) for Gaussian kinds, else None."""
        if self.kind == "cg" and self.s.imag == 0:
            return (-self.s.real / 2, -self.s.real / 2)
        if self.kind == "gauss":
            sl, sd = self.params
            return (1 / sl**2, 1 / sd**2)
        if self.kind == "ww":
            return (0.0, 0.0)
        return None


def parse_weight(text: str) -> WeightSpec:
    t = text.strip()
    head, _, rest = t.partition(":")
    try:
        vals = [float(x) for x in rest.split(",")] if rest else []
    except ValueError:
        raise UnsupportedWeightError(f"bad numeric parameter in weight {text!r}") from None
    if head == "ww" and not vals:
        return WeightSpec.constant()
    if head == "bj" and not vals:
        return WeightSpec.born_jordan()
    if head == "cg" and len(vals) in (1, 2):
        return WeightSpec.cahill_glauber(complex(vals[0], vals[1] if len(vals) == 2 else 0.0))
    if head == "gauss" and len(vals) == 2:
        return WeightSpec.separable_gaussian(*vals)
    if head == "heavi-e" and len(vals) == 1:
        return WeightSpec.heaviside_elliptic(vals[0])
    if head == "heavi-h" and len(vals) == 1:
        return WeightSpec.heaviside_hyperbolic(vals[0])
    raise UnsupportedWeightError(
        f"unknown weight {text!r}; expected ww | cg:<re>[,<im>] | bj | gauss:<sl>,<sd> | heavi-e:<a> | heavi-h:<a>"
    )


def _heaviside(x):
    return np.where(x > 0, 1.0, np.where(x < 0, 0.0, 0.5))


def evaluate(w: WeightSpec, q, p):
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    r2 = (q * q + p * p) / 2  # |z|^2
    k = w.kind
    if k == "ww":
        return np.ones(np.broadcast(q, p).shape, complex)
    if k == "cg":
        return np.exp(w.s * r2 / 2)
    if k == "bj":
        # np.sinc(x) = sin(pi x)/(pi x), fills 1 at 0
        return np.sinc(q * p / np.pi) + 0j
    if k == "gauss":
        sl, sd = w.params
        return np.exp(-q * q / (2 * sl**2) - p * p / (2 * sd**2)) + 0j
    if k == "heavi-e":
        return 2 * _heaviside(1 - w.params[0] * r2) - 1 + 0j
    if k == "heavi-h":
        return 2 * _heaviside(1 - w.params[0] * q * p) - 1 + 0j
    return np.asarray(w.evaluator(q, p), dtype=complex)


def eval_weight(w: WeightSpec, pt) -> complex:
    if not isinstance(pt, PhasePoint):
        pt = PhasePoint.from_z(pt)
    return complex(evaluate(w, pt.q, pt.p))


class CoeffTable2:
    """Taylor-type table: key (i, ibar) in z-form, (k, l) in qp-form."""

    def __init__(self, K: int, rep: str, data: dict):
        if rep not in ("z", "qp"):
            raise ValueError(rep)
        self.K = int(K)
        self.rep = rep
        self.data = {k: complex(v) for k, v in data.items() if v != 0 and k[0] + k[1] <= self.K}

    def __getitem__(self, key) -> complex:
        return self.data.get(key, 0j)

    def items(self):
        return sorted(self.data.items())

    def as_poly(self) -> Poly2:
        return Poly2(self.data, self.rep)

    def to(self, rep: str) -> "CoeffTable2":
        if rep == self.rep:
            return self
        return CoeffTable2(self.K, rep, self.as_poly().to(rep).cleaned(1e-15).terms)

    def truncate(self, K):
        return CoeffTable2(min(K, self.K), self.rep, self.data)

    def __repr__(self):
        return f"CoeffTable2(K={self.K}, rep={self.rep}, {self.items()})"


def weight_taylor(w: WeightSpec, K: int, rep: str = "z") -> CoeffTable2:
    if K > MAX_K:
        raise ValueError(f"degree cap K={K} exceeds {MAX_K}")
    k = w.kind
    if k in ("heavi-e", "heavi-h"):
        raise UnsupportedWeightError("Heaviside weights are not analytic at the origin")
    if k == "custom":
        if w.taylor is None:
            raise MissingTaylorError("custom weight carries no Taylor table")
        return w.taylor.truncate(K).to(rep)
    data = {}
    if k == "ww":
        data[(0, 0)] = 1.0
        return CoeffTable2(K, rep, data)
    if k == "cg":
        s = w.s
        if rep == "z":
            for i in range(K // 2 + 1):
                data[(i, i)] = (s / 2) ** i / math.factorial(i)
        else:
            # e^{s(q^2+p^2)/4}
            for a in range(K // 2 + 1):
                for b in range(K // 2 + 1 - a):
                    data[(2 * a, 2 * b)] = (s / 4) ** (a + b) / (math.factorial(a) * math.factorial(b))
        return CoeffTable2(K, rep, data)
    if k == "bj":
        for r in range(K // 4 + 1):
            data[(2 * r, 2 * r)] = (-1) ** r / math.factorial(2 * r + 1)
        return CoeffTable2(K, "qp", data).to(rep)
    if k == "gauss":
        sl, sd = w.params
        al, ad = -1 / (2 * sl**2), -1 / (2 * sd**2)
        for a in range(K // 2 + 1):
            for b in range(K // 2 + 1 - a):
                data[(2 * a, 2 * b)] = al**a / math.factorial(a) * ad**b / math.factorial(b)
        return CoeffTable2(K, "qp", data).to(rep)
    raise UnsupportedWeightError(k)


def invert_series(c: CoeffTable2, K: int | None = None) -> CoeffTable2:
    """Coefficients of 1/varpi, degree by degree from sum c_{n-i} ct_i = 0."""
    K = c.K if K is None else K
    if abs(c[(0, 0)] - 1) > 1e-14:
        raise NormalizationError(f"c(0,0) = {c[(0, 0)]} != 1")
    ct = {(0, 0): 1.0 + 0j}
    cd = c.data
    for n in range(1, K + 1):
        for a in range(n + 1):
            b = n - a
            acc = 0j
            for (i, ib), v in ct.items():
                if i <= a and ib <= b and (i, ib) != (a, b):
                    cc = cd.get((a - i, b - ib))
                    if cc is not None:
                        acc += cc * v
            if acc != 0:
                ct[(a, b)] = -acc
    return CoeffTable2(K, c.rep, ct)


# sample set used to classify custom weights
_RADII = (0.3, 0.7, 1.1, 1.6)
_ANGLES = tuple(k * math.pi / 8 for k in range(16))
_TOL = 1e-10


def classify_weight(w: WeightSpec) -> Flags:
    k = w.kind
    if k == "ww":
        return Flags(True, True, True, True)
    if k == "cg":
        s = w.s
        if s == 0:
            return Flags(True, True, True, True)
        return Flags(s.imag == 0, True, False, s.real == 0)
    if k == "bj":
        return Flags(True, False, True, False)
    if k == "gauss":
        return Flags(True, w.params[0] == w.params[1], False, False)
    if k == "heavi-e":
        return Flags(True, True, w.params[0] == 0, True)
    if k == "heavi-h":
        return Flags(True, w.params[0] == 0, True, True)
    # custom: decide on the documented sample set
    r = np.array(_RADII)[:, None]
    th = np.array(_ANGLES)[None, :]
    q = (R2 * r * np.cos(th)).ravel()
    p = (R2 * r * np.sin(th)).ravel()
    v = evaluate(w, q, p)
    vm = evaluate(w, -q, -p)
    regular = bool(np.all(np.abs(v - vm) < _TOL) and np.all(np.abs(v.imag) < _TOL))
    grid = v.reshape(len(_RADII), len(_ANGLES))
    isotropic = bool(np.all(np.abs(grid - grid[:, :1]) < _TOL))
    hyper = True
    for t in (0.5, 2.0):
        hyper &= bool(np.all(np.abs(evaluate(w, t * q, p / t) - v) < _TOL))
    isometric = bool(np.all(np.abs(np.abs(v) - 1) < _TOL))
    return Flags(regular, isotropic, hyper, isometric)
