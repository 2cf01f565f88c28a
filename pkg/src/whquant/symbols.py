"""Bivariate polynomials in (q, p) or (z, zbar) and the symbol-expression grammar."""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

R2 = math.sqrt(2.0)

# u = A x + B y, v = C x + D y for the two changes of variables
_Z_TO_QP = (1 / R2, 1j / R2, 1 / R2, -1j / R2)  # z, zbar in terms of q, p
_QP_TO_Z = (1 / R2, 1 / R2, -1j / R2, 1j / R2)  # q, p in terms of z, zbar

MAX_DEGREE = 16


class Poly2:
    """Sparse bivariate polynomial.

    ``rep='qp'``: key (m, n) is the coefficient of q^m p^n.
    ``rep='z'``: key (n, nbar) is the coefficient of z^n zbar^nbar.
    """

    __slots__ = ("rep", "terms")

    def __init__(self, terms=None, rep: str = "qp"):
        if rep not in ("qp", "z"):
            raise ValueError(f"unknown representation {rep!r}")
        self.rep = rep
        self.terms = {}
        for k, v in (terms or {}).items():
            v = complex(v)
            if v != 0:
                self.terms[(int(k[0]), int(k[1]))] = v

    @classmethod
    def const(cls, c, rep="qp"):
        return cls({(0, 0): c}, rep)

    @classmethod
    def mono(cls, m, n, c=1.0, rep="qp"):
        return cls({(m, n): c}, rep)

    def copy(self):
        return Poly2(dict(self.terms), self.rep)

    def degree(self) -> int:
        return max((m + n for m, n in self.terms), default=0)

    def is_zero(self, tol=0.0) -> bool:
        return all(abs(v) <= tol for v in self.terms.values())

    def __getitem__(self, key):
        return self.terms.get(key, 0j)

    def _coerce(self, other):
        if isinstance(other, Poly2):
            return other.to(self.rep)
        return Poly2.const(other, self.rep)

    def __add__(self, other):
        other = self._coerce(other)
        t = dict(self.terms)
        for k, v in other.terms.items():
            t[k] = t.get(k, 0j) + v
        return Poly2(t, self.rep)

    __radd__ = __add__

    def __neg__(self):
        return Poly2({k: -v for k, v in self.terms.items()}, self.rep)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Poly2):
            return Poly2({k: v * complex(other) for k, v in self.terms.items()}, self.rep)
        other = other.to(self.rep)
        t = {}
        for (a, b), u in self.terms.items():
            for (c, d), v in other.terms.items():
                k = (a + c, b + d)
                t[k] = t.get(k, 0j) + u * v
        return Poly2(t, self.rep)

    __rmul__ = __mul__

    def __pow__(self, n: int):
        out = Poly2.const(1.0, self.rep)
        for _ in range(n):
            out = out * self
        return out

    def deriv(self, i: int = 0, j: int = 0):
        """d^i/d(first var)^i d^j/d(second var)^j."""
        t = {}
        for (a, b), v in self.terms.items():
            if a >= i and b >= j:
                f = math.perm(a, i) * math.perm(b, j)
                t[(a - i, b - j)] = v * f
        return Poly2(t, self.rep)

    def to(self, rep: str):
        if rep == self.rep:
            return self
        return Poly2(linear_substitute(self.terms, _QP_TO_Z if rep == "z" else _Z_TO_QP), rep)

    def conj(self):
        """Complex conjugate of the function (real phase-space variables)."""
        if self.rep == "qp":
            return Poly2({k: v.conjugate() for k, v in self.terms.items()}, "qp")
        return Poly2({(b, a): v.conjugate() for (a, b), v in self.terms.items()}, "z")

    def __call__(self, q, p):
        """Evaluate at phase-space coordinates (arrays allowed)."""
        q = np.asarray(q, dtype=float)
        p = np.asarray(p, dtype=float)
        if self.rep == "qp":
            x, y = q + 0j, p + 0j
        else:
            x = (q + 1j * p) / R2
            y = x.conj()
        out = np.zeros(np.broadcast(x, y).shape, complex)
        for (a, b), v in sorted(self.terms.items()):
            out = out + v * x**a * y**b
        return out

    def cleaned(self, tol=1e-14):
        scale = max((abs(v) for v in self.terms.values()), default=0.0)
        return Poly2({k: v for k, v in self.terms.items() if abs(v) > tol * max(scale, 1.0)}, self.rep)

    def allclose(self, other, tol=1e-12) -> bool:
        diff = self - other
        return diff.is_zero(tol)

    def sorted_items(self):
        return sorted(self.terms.items())

    def __repr__(self):
        return f"Poly2({self.sorted_items()}, rep={self.rep!r})"


def linear_substitute(terms: dict, coeffs) -> dict:
    """Rewrite sum c_ab u^a v^b with u = A x + B y, v = C x + D y."""
    A, B, C, D = coeffs
    deg = max((a + b for a, b in terms), default=0)
    upow = [{(0, 0): 1.0 + 0j}]
    vpow = [{(0, 0): 1.0 + 0j}]
    for k in range(deg):
        upow.append(_mul_dict(upow[-1], {(1, 0): A, (0, 1): B}))
        vpow.append(_mul_dict(vpow[-1], {(1, 0): C, (0, 1): D}))
    out = {}
    for (a, b), c in terms.items():
        for k, v in _mul_dict(upow[a], vpow[b]).items():
            out[k] = out.get(k, 0j) + c * v
    return {k: v for k, v in out.items() if v != 0}


def _mul_dict(x, y):
    out = {}
    for (a, b), u in x.items():
        if u == 0:
            continue
        for (c, d), v in y.items():
            if v == 0:
                continue
            k = (a + c, b + d)
            out[k] = out.get(k, 0j) + u * v
    return out


@dataclass
class SeparableLqPm:
    """Symbol L(q) p^m; L is a Poly2 in q only or a callable."""

    L: object
    m: int

    def as_poly(self) -> Poly2:
        if not isinstance(self.L, Poly2):
            raise TypeError("callable L has no polynomial form")
        return self.L.to("qp") * Poly2.mono(0, self.m)


@dataclass
class Sampled:
    """Symbol given as a callable f(q, p) or by values on a grid."""

    func: Callable | None = None
    field: object = None

    def __call__(self, q, p):
        if self.func is None:
            raise ValueError("sampled symbol has no evaluator")
        return np.asarray(self.func(q, p), dtype=complex)


# ---------------------------------------------------------------- grammar


class SymbolSyntaxError(ValueError):
    def __init__(self, text, pos, msg):
        self.text, self.pos = text, pos
        super().__init__(f"{msg} at column {pos + 1}\n  {text}\n  {' ' * pos}^")


_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<var>zbar|q|p|z|i)|(?P<op>[-+*^()]))"
)
_VARS = {
    "q": Poly2.mono(1, 0, rep="qp"),
    "p": Poly2.mono(0, 1, rep="qp"),
    "z": Poly2.mono(1, 0, rep="z"),
    "zbar": Poly2.mono(0, 1, rep="z"),
    "i": Poly2.const(1j, rep="qp"),
}


def _tokenize(text):
    pos, toks = 0, []
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m:
            start = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise SymbolSyntaxError(text, start, "unexpected character")
        kind = m.lastgroup
        start = m.start(kind)
        toks.append((kind, m.group(kind), start))
        pos = m.end()
    toks.append(("end", "", len(text)))
    return toks


class _Parser:
    def __init__(self, text, rep):
        self.text, self.toks, self.i, self.rep = text, _tokenize(text), 0, rep
        self.used = set()

    def peek(self):
        return self.toks[self.i]

    def take(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def error(self, msg, tok=None):
        tok = tok or self.peek()
        raise SymbolSyntaxError(self.text, tok[2], msg)

    def parse(self):
        if self.peek()[0] == "end":
            self.error("empty expression")
        out = self.expr()
        if self.peek()[0] != "end":
            self.error("unexpected token")
        return out

    def expr(self):
        sign = 1
        if self.peek()[1] in "+-" and self.peek()[0] == "op":
            sign = -1 if self.take()[1] == "-" else 1
        out = self.term() * sign
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            s = self.take()[1]
            t = self.term()
            out = out + t if s == "+" else out - t
        return out

    def term(self):
        out = self.power()
        while self.peek()[0] == "op" and self.peek()[1] in "*(" or self.peek()[0] in ("var",):
            if self.peek()[1] == "*":
                self.take()
            out = out * self.power()
        return out

    def power(self):
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            t = self.peek()
            if t[0] != "num" or not re.fullmatch(r"\d+", t[1]):
                self.error("exponent must be a nonnegative integer")
            self.take()
            n = int(t[1])
            if n > MAX_DEGREE:
                self.error(f"exponent exceeds cap {MAX_DEGREE}", t)
            return base**n
        return base

    def atom(self):
        t = self.peek()
        if t[0] == "num":
            self.take()
            return Poly2.const(float(t[1]), self.rep)
        if t[0] == "var":
            self.take()
            if t[1] != "i":
                self.used.add("qp" if t[1] in "qp" else "z")
            return _VARS[t[1]].to(self.rep)
        if t[0] == "op" and t[1] == "(":
            self.take()
            out = self.expr()
            if self.peek()[1] != ")":
                self.error("expected ')'")
            self.take()
            return out
        if t[0] == "op" and t[1] == "-":
            self.take()
            return -self.power()
        self.error("expected number, variable or '('")


def parse_poly(text: str, rep: str | None = None) -> Poly2:
    """Parse a polynomial in q, p, z, zbar.

    The result uses ``rep`` if given, else 'z' when only z/zbar occur and
    'qp' otherwise.
    """
    probe = _Parser(text, "qp")
    poly = probe.parse()
    if rep is None:
        rep = "z" if probe.used == {"z"} else "qp"
    out = _Parser(text, rep).parse()
    return out.cleaned(1e-15)


def parse_symbol(text: str):
    """Parse the CLI symbol grammar; ``L(q):<poly>*p^m`` gives SeparableLqPm."""
    s = text.strip()
    if s.startswith("L(q):"):
        body = s[5:]
        m = re.fullmatch(r"(.*)\*\s*p\s*\^\s*(\d+)\s*", body)
        if m:
            lpart, mm = m.group(1), int(m.group(2))
        else:
            lpart, mm = body, 0
        off = 5
        try:
            L = parse_poly(lpart, "qp")
        except SymbolSyntaxError as e:
            raise SymbolSyntaxError(text, e.pos + off, str(e).split(" at column")[0]) from None
        if any(n != 0 for _, n in L.terms):
            raise SymbolSyntaxError(text, off, "L(q) must not contain p")
        return SeparableLqPm(L, mm)
    return parse_poly(s)
