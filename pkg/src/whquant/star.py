"""Truncated varpi-Moyal star products on polynomial symbols."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .coeffs import CoeffTable4, cg_star_coeffs, tables_for
from .quantizer import DegreeCapError, quantize_poly_qp, quantize_poly_z
from .symbols import Poly2
from .weights import MAX_K, WeightSpec


@dataclass
class StarExpansion:
    K: int
    result: Poly2
    residual_order: int

    def __repr__(self):
        return f"StarExpansion(K={self.K}, {self.result!r})"


def _atilde(src, K: int, rep: str) -> CoeffTable4:
    if isinstance(src, CoeffTable4):
        if src.K < K:
            raise DegreeCapError(f"order K={K} exceeds the table cap {src.K}")
        return src
    if isinstance(src, WeightSpec):
        if K > MAX_K:
            raise DegreeCapError(f"order K={K} exceeds {MAX_K}")
        return tables_for(src, K, rep).at
    raise TypeError("expected an a-tilde table or a WeightSpec")


def star(a_tilde, f: Poly2, g: Poly2, K: int | None = None) -> StarExpansion:
    """f * g = sum (-1)^(ib+jb) at_{i ib j jb} (d_zbar^i d_z^ib f)(d_zbar^j d_z^jb g) in z-form,
    or sum i^(k-l+m-n) at_{klmn} (d_q^l d_p^k F)(d_q^n d_p^m G) in qp-form.

    Terms are kept while i + ib + j + jb <= K; the result is exact once
    K >= deg f + deg g.
    """
    rep = a_tilde.rep if isinstance(a_tilde, CoeffTable4) else ("z" if f.rep == "z" else "qp")
    if K is None:
        K = f.degree() + g.degree()
    at = _atilde(a_tilde, K, rep)
    F, G = f.to(rep), g.to(rep)
    out = Poly2({}, rep)
    df = {}
    for (i, ib, j, jb), v in at.items():
        if i + ib + j + jb > K:
            continue
        # Poly2 derivative keys are (first variable, second variable): (z, zbar) or (q, p)
        key_f, key_g = (ib, i), (jb, j)
        ph = (-1) ** (ib + jb) if rep == "z" else 1j ** (i - ib + j - jb)
        if key_f not in df:
            df[key_f] = F.deriv(*key_f)
        a = df[key_f]
        if a.is_zero():
            continue
        b = G.deriv(*key_g)
        if b.is_zero():
            continue
        out = out + (a * b) * (ph * v)
    return StarExpansion(K, out.cleaned(1e-15), K + 1)


def star_commutator(a_tilde, f: Poly2, g: Poly2, K: int | None = None) -> StarExpansion:
    fg = star(a_tilde, f, g, K)
    gf = star(a_tilde, g, f, K)
    return StarExpansion(fg.K, (fg.result - gf.result).cleaned(1e-15), fg.residual_order)


def poisson(f: Poly2, g: Poly2) -> Poly2:
    """{f, g} = d_q f d_p g - d_p f d_q g."""
    F, G = f.to("qp"), g.to("qp")
    return F.deriv(1, 0) * G.deriv(0, 1) - F.deriv(0, 1) * G.deriv(1, 0)


def cg_commutator_closed(s, f: Poly2, g: Poly2) -> Poly2:
    """Closed sign-structured sum for the Cahill-Glauber star commutator."""
    F, G = f.to("z"), g.to("z")
    n = F.degree() + G.degree()
    out = Poly2({}, "z")
    for i in range(n + 1):
        for j in range(n + 1 - i):
            if i == j:
                continue
            d = abs(i - j)
            coef = np.sign(j - i) * (s * s - 1) ** min(i, j) * ((s + 1) ** d - (s - 1) ** d)
            coef /= 2 ** (i + j) * math.factorial(i) * math.factorial(j)
            a, b = F.deriv(j, i), G.deriv(i, j)
            if not a.is_zero() and not b.is_zero():
                out = out + a * b * coef
    return out.cleaned(1e-15)


def operator_product_check(w: WeightSpec, f: Poly2, g: Poly2, dim: int, block: int | None = None) -> float:
    """max |A_f A_g - A_{f * g}| over the leading block (default dim // 2), closed pipelines."""
    rep = "z" if f.rep == "z" and g.rep == "z" else "qp"
    quant = quantize_poly_z if rep == "z" else quantize_poly_qp
    fg = star(w, f.to(rep), g.to(rep)).result
    Wd = dim + f.degree() + g.degree() + 2
    A = quant(w, f, Wd).mat @ quant(w, g, Wd).mat
    B = quant(w, fg, Wd).mat
    n = block or dim // 2
    return float(np.abs(A[:n, :n] - B[:n, :n]).max())


def symbol_from_operator(w: WeightSpec, A: np.ndarray, deg: int, rep: str = "qp", block: int | None = None) -> Poly2:
    """Polynomial symbol f of degree <= deg with A_f = A, by least squares on the monomial basis.

    A test utility: the operator must come from a polynomial of that degree.
    """
    dim = A.shape[0]
    n = block or max(2, dim - deg - 1)
    keys = [(m, k - m) for k in range(deg + 1) for m in range(k + 1)]
    quant = quantize_poly_z if rep == "z" else quantize_poly_qp
    cols = [quant(w, Poly2.mono(a, b, rep=rep), dim).mat[:n, :n].ravel() for a, b in keys]
    X = np.stack(cols, axis=1)
    sol, *_ = np.linalg.lstsq(X, A[:n, :n].ravel(), rcond=None)
    return Poly2(dict(zip(keys, sol)), rep).cleaned(1e-11)
