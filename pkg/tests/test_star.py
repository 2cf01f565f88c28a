import numpy as np
import pytest
import sympy as sp
from hypothesis import given
from hypothesis import strategies as st

from whquant import Poly2, parse_poly, parse_weight, poisson, quantize_poly_qp, star, star_commutator
from whquant.star import cg_commutator_closed, operator_product_check, symbol_from_operator

from conftest import maxabs

WEIGHTS = ["ww", "cg:-1", "cg:-0.5", "cg:0.5", "bj", "gauss:1,2"]
q_, p_ = sp.symbols("q p")


def poly(text):
    return parse_poly(text, "qp")


def to_sympy(f: Poly2):
    return sum(complex(v) * q_**m * p_**n for (m, n), v in f.to("qp").terms.items())


def from_sympy(expr) -> Poly2:
    P = sp.Poly(sp.expand(expr), q_, p_)
    return Poly2({k: complex(v) for k, v in P.terms()})


def moyal(f, g):
    """Weyl-Wigner product from the exponential bidifferential series, done in sympy."""
    F, G = to_sympy(f), to_sympy(g)
    N = f.degree() + g.degree()
    out = 0
    for n in range(N + 1):
        for k in range(n + 1):
            a = sp.diff(F, q_, n - k, p_, k)
            b = sp.diff(G, p_, n - k, q_, k)
            out += sp.Rational(1, 2**n) * sp.I**n / sp.factorial(n) * sp.binomial(n, k) * (-1) ** k * a * b
    return from_sympy(out)


def homogeneous_part(f: Poly2, d):
    return Poly2({k: v for k, v in f.to("qp").terms.items() if sum(k) == d})


real_polys = st.dictionaries(
    st.tuples(st.integers(0, 2), st.integers(0, 2)),
    st.floats(-2, 2, allow_nan=False).map(lambda x: round(x, 3)),
    min_size=1,
    max_size=3,
)


@pytest.mark.parametrize("text", WEIGHTS)
def test_unit_is_neutral(text):
    w = parse_weight(text)
    f = poly("q^3*p - 2*p^2 + q")
    assert star(w, f, Poly2.const(1)).result.allclose(f)
    assert star(w, Poly2.const(1), f).result.allclose(f)


def test_z_zbar_products():
    z, zb = parse_poly("z"), parse_poly("zbar")
    ww = star(parse_weight("ww"), z, zb).result
    assert ww.allclose(parse_poly("z*zbar") + 0.5)
    for s in (-1.0, -0.5, 0.3):
        # a a^dagger = A_{|z|^2} + (1 + s)/2 in s-ordering
        res = star(parse_weight(f"cg:{s}"), z, zb).result
        assert res.to("z").allclose(parse_poly("z*zbar") + (1 + s) / 2)


@pytest.mark.parametrize("text", WEIGHTS)
def test_canonical_commutator_is_exact(text):
    res = star_commutator(parse_weight(text), poly("q"), poly("p")).result
    assert res.terms == {(0, 0): 1j}


@pytest.mark.parametrize("text", WEIGHTS)
def test_squares_commutator(text):
    res = star_commutator(parse_weight(text), poly("q^2"), poly("p^2")).result
    assert abs(res[(1, 1)] - 4j) < 1e-14
    assert res.degree() <= 2


@pytest.mark.parametrize("s", [-1.0, -0.5, 0.0, 0.5])
@pytest.mark.parametrize("f,g", [("z^2", "zbar^2"), ("z^2*zbar", "z*zbar^3"), ("z^3", "zbar")])
def test_cg_commutator_closed_form(s, f, g):
    F, G = parse_poly(f), parse_poly(g)
    generic = star_commutator(parse_weight(f"cg:{s}"), F, G).result.to("z")
    assert cg_commutator_closed(s, F, G).allclose(generic, 1e-12)


@pytest.mark.parametrize("f,g", [("q^2", "p^3"), ("q*p^2", "q^2*p"), ("q^3 + p", "q*p - p^2"), ("q^4", "p^4")])
def test_moyal_product(f, g):
    res = star(parse_weight("ww"), poly(f), poly(g)).result
    assert res.allclose(moyal(poly(f), poly(g)), 1e-12)


@given(real_polys, real_polys, real_polys, st.sampled_from(WEIGHTS))
def test_associativity(a, b, c, text):
    w = parse_weight(text)
    f, g, h = Poly2(a), Poly2(b), Poly2(c)
    left = star(w, star(w, f, g).result, h).result
    right = star(w, f, star(w, g, h).result).result
    scale = max([1.0] + [abs(v) for v in left.terms.values()])
    assert (left - right).is_zero(1e-10 * scale)


@given(real_polys, real_polys, st.sampled_from(WEIGHTS))
def test_poisson_leading_order(a, b, text):
    # keep only the top-degree piece of each factor
    f, g = Poly2(a), Poly2(b)
    f, g = homogeneous_part(f, f.degree()), homogeneous_part(g, g.degree())
    top = f.degree() + g.degree() - 2
    res = star_commutator(parse_weight(text), f, g).result
    assert homogeneous_part(res, top).allclose(homogeneous_part(poisson(f, g) * 1j, top), 1e-10)


@pytest.mark.parametrize("text", ["cg:-1", "cg:0", "cg:0.5", "bj"])
def test_operator_products(text):
    w = parse_weight(text)
    pairs = [("q", "p"), ("q^2", "p^2"), ("q*p", "q^3"), ("p^2 + q", "q^2*p")]
    for f, g in pairs:
        assert operator_product_check(w, poly(f), poly(g), 24) < 1e-8
    assert operator_product_check(w, parse_poly("z^2*zbar"), parse_poly("zbar^2"), 24) < 1e-8


def test_symbol_from_operator():
    Q, P = [quantize_poly_qp(parse_weight("ww"), poly(t), 20).mat for t in ("q", "p")]
    sym = symbol_from_operator(parse_weight("ww"), Q @ P, 2)
    assert sym.allclose(poly("q*p") + 0.5j, 1e-10)
    A = quantize_poly_qp(parse_weight("bj"), poly("q^2*p"), 20).mat
    assert symbol_from_operator(parse_weight("bj"), A, 3).allclose(poly("q^2*p"), 1e-10)


def test_star_matches_matrix_product_entrywise():
    w = parse_weight("gauss:1,2")
    f, g = poly("q^2 - p"), poly("q*p^2")
    A = quantize_poly_qp(w, f, 30).mat @ quantize_poly_qp(w, g, 30).mat
    B = quantize_poly_qp(w, star(w, f, g).result, 30).mat
    assert maxabs(A[:20, :20] - B[:20, :20]) < 1e-9
