import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from whquant import (
    CoeffTable2,
    PhasePoint,
    WeightSpec,
    cg_star_coeffs,
    classify_weight,
    convolve2,
    convolve4,
    invert_series,
    parse_weight,
    ratio_coeffs,
    star_coeffs,
    tables_for,
    weight_taylor,
)
from whquant.coeffs import bell, bernoulli, bj_inverse_candidate, bj_tables, table_max_diff
from whquant.weights import MissingTaylorError, UnsupportedWeightError, eval_weight

ANALYTIC = ["ww", "cg:-1", "cg:-0.5", "cg:0.4", "cg:0.3,0.2", "bj", "gauss:1,2", "gauss:0.7,0.7"]
ALL_KINDS = ANALYTIC + ["heavi-e:0.5", "heavi-h:1"]


def is_delta(table, tol):
    return all(abs(v - (1 if sum(k) == 0 else 0)) < tol for k, v in table.data.items())


# ------------------------------------------------------------------ weights


@pytest.mark.parametrize("text", ALL_KINDS)
def test_weight_is_one_at_origin(text):
    assert eval_weight(parse_weight(text), 0) == 1


def test_weight_values():
    assert math.isclose(eval_weight(parse_weight("cg:-1"), PhasePoint.from_z(math.sqrt(2))).real, math.exp(-1), rel_tol=1e-15)
    assert abs(eval_weight(parse_weight("bj"), PhasePoint(1.0, math.pi))) < 1e-15
    g = parse_weight("gauss:1,2")
    assert math.isclose(g(1.0, 2.0).real, math.exp(-0.5 - 0.5), rel_tol=1e-15)


def test_parse_errors():
    for bad in ["", "cg", "cg:1.5", "gauss:1", "gauss:-1,1", "foo:1", "cg:x", "heavi-e:-1"]:
        with pytest.raises(UnsupportedWeightError):
            parse_weight(bad)


def test_taylor_examples():
    assert weight_taylor(WeightSpec.constant(), 8).items() == [((0, 0), 1)]
    bj = weight_taylor(WeightSpec.born_jordan(), 6, "qp")
    assert bj[(2, 2)] == pytest.approx(-1 / 6, abs=1e-16)
    assert bj[(1, 1)] == 0 and bj[(0, 0)] == 1
    cg = weight_taylor(parse_weight("cg:0.4"), 4)
    assert cg[(1, 1)] == pytest.approx(0.2, abs=1e-16)
    assert cg[(1, 0)] == 0 and cg[(0, 1)] == 0


@pytest.mark.parametrize("text", ANALYTIC)
@pytest.mark.parametrize("rep", ["z", "qp"])
def test_taylor_table_reproduces_weight(text, rep):
    # truncation oracle: error of a degree-12 table at radius 0.15 is far below 1e-10
    w = parse_weight(text)
    poly = weight_taylor(w, 12, rep).as_poly().to("qp")
    rng = np.random.default_rng(1)
    q, p = rng.uniform(-0.15, 0.15, (2, 50))
    assert np.max(np.abs(poly(q, p) - w(q, p))) < 1e-10


def test_taylor_rejects_non_analytic():
    with pytest.raises(UnsupportedWeightError):
        weight_taylor(parse_weight("heavi-e:1"), 4)
    with pytest.raises(MissingTaylorError):
        weight_taylor(WeightSpec.custom(lambda q, p: np.ones_like(q)), 4)


def generic_table():
    data = {(0, 0): 1.0, (1, 0): 0.3, (0, 1): -0.2j, (1, 1): 0.7, (2, 0): -0.4, (0, 2): 0.15, (2, 1): 0.05}
    return CoeffTable2(6, "z", data)


def test_inverse_low_orders():
    c = generic_table()
    ct = invert_series(c)
    assert ct[(1, 0)] == pytest.approx(-c[(1, 0)])
    assert ct[(0, 1)] == pytest.approx(-c[(0, 1)])
    assert ct[(1, 1)] == pytest.approx(-c[(1, 1)] + 2 * c[(1, 0)] * c[(0, 1)])
    assert ct[(2, 0)] == pytest.approx(-c[(2, 0)] + c[(1, 0)] ** 2)
    assert ct[(0, 2)] == pytest.approx(-c[(0, 2)] + c[(0, 1)] ** 2)
    assert invert_series(weight_taylor(WeightSpec.constant(), 6)).items() == [((0, 0), 1)]


coef = st.complex_numbers(max_magnitude=1.0, allow_nan=False, allow_infinity=False)


@given(st.dictionaries(st.tuples(st.integers(0, 4), st.integers(0, 4)), coef, max_size=8))
def test_inverse_is_convolution_inverse_and_involution(raw):
    data = {k: v for k, v in raw.items() if k != (0, 0)}
    data[(0, 0)] = 1.0
    c = CoeffTable2(8, "z", data)
    ct = invert_series(c)
    assert is_delta(convolve2(c, ct, 8), 1e-10)
    back = invert_series(ct)
    keys = set(back.data) | set(c.data)
    assert max(abs(back[k] - c[k]) for k in keys) < 1e-9 * max(1.0, max(abs(v) for v in ct.data.values()))


def test_inverse_against_mpmath_series():
    # 1/varpi for cg:s is exp(-s|z|^2/2); its diagonal coefficients are (-s/2)^i/i!
    s = -0.7
    ct = invert_series(weight_taylor(WeightSpec.cahill_glauber(s), 8))
    for i in range(5):
        assert abs(ct[(i, i)] - float((-s / 2) ** i / mpmath.factorial(i))) < 1e-15


def test_classification_examples():
    F = classify_weight
    ww = F(WeightSpec.constant())
    assert ww.regular and ww.isotropic and ww.hyperbolic and ww.isometric
    cg = F(parse_weight("cg:-1"))
    assert cg.regular and cg.isotropic and not cg.hyperbolic and not cg.isometric
    bj = F(parse_weight("bj"))
    assert bj.regular and bj.hyperbolic and not bj.isotropic
    assert F(parse_weight("gauss:1,1")).isotropic
    assert not F(parse_weight("gauss:1,2")).isotropic


def test_classification_of_custom_weights():
    iso = WeightSpec.custom(lambda q, p: np.exp(-(q * q + p * p) / 4))
    f = classify_weight(iso)
    assert f.regular and f.isotropic and not f.hyperbolic
    hyp = WeightSpec.custom(lambda q, p: np.cos(q * p))
    f = classify_weight(hyp)
    assert f.regular and f.hyperbolic and not f.isotropic
    iso_phase = WeightSpec.custom(lambda q, p: np.exp(0.3j * (q * q + p * p)))
    f = classify_weight(iso_phase)
    assert f.isometric and not f.regular
    odd = WeightSpec.custom(lambda q, p: 1 + 0.1 * q)
    assert not classify_weight(odd).regular


# ------------------------------------------------------------------ coefficient engine


@pytest.mark.parametrize("text", ANALYTIC)
@pytest.mark.parametrize("rep", ["z", "qp"])
def test_convolution_duals(text, rep):
    t = tables_for(parse_weight(text), 8, rep)
    assert is_delta(convolve2(t.c, t.ct, 8), 1e-10)
    assert is_delta(convolve4(t.d, t.dt, 8), 1e-10)
    assert is_delta(convolve4(t.a, t.at, 8), 1e-10)


@pytest.mark.parametrize("text", ANALYTIC)
@pytest.mark.parametrize("rep", ["z", "qp"])
def test_vanishing_patterns(text, rep):
    t = tables_for(parse_weight(text), 6, rep)
    for tab in (t.d, t.dt, t.a, t.at):
        assert tab[(0, 0, 0, 0)] == pytest.approx(1)
        for k in tab.data:
            if sum(k) > 0:
                assert sum(k[:2]) >= 1 and sum(k[2:]) >= 1, k


def weight_for(text):
    if text == "custom":
        # non-regular table so the c10 c01 terms are exercised
        return WeightSpec.custom(lambda q, p: np.ones_like(q), taylor=generic_table())
    return parse_weight(text)


@pytest.mark.parametrize("text", ["cg:-0.5", "cg:0.4", "bj", "gauss:1,2", "ww", "custom"])
def test_low_order_tables(text):
    w = weight_for(text)
    t = tables_for(w, 6, "z")
    c, d, a = t.c, t.d, t.a
    g = c[(1, 1)] - c[(1, 0)] * c[(0, 1)]
    for k in [(1, 0, 0, 0), (0, 1, 0, 0), (0, 0, 1, 0), (0, 0, 0, 1), (2, 0, 0, 0), (0, 2, 0, 0), (0, 0, 2, 0), (0, 0, 0, 2)]:
        assert d[k] == 0 and a[k] == 0
    assert d[(1, 1, 0, 0)] == 0 and d[(0, 0, 1, 1)] == 0
    assert abs(d[(1, 0, 0, 1)] - g) < 1e-14 and abs(d[(0, 1, 1, 0)] - g) < 1e-14
    assert abs(a[(1, 0, 0, 1)] - (g - 0.5)) < 1e-14
    assert abs(a[(0, 1, 1, 0)] - (g + 0.5)) < 1e-14
    assert abs(a[(1, 0, 1, 0)] - (2 * c[(2, 0)] - c[(1, 0)] ** 2)) < 1e-14
    assert abs(a[(0, 1, 0, 1)] - (2 * c[(0, 2)] - c[(0, 1)] ** 2)) < 1e-14
    for i in range(4):
        for j in range(4 - i):
            assert a[(i, 0, j, 0)] == d[(i, 0, j, 0)]
    tq = tables_for(w, 6, "qp")
    cq = tq.c
    gq = cq[(1, 1)] - cq[(1, 0)] * cq[(0, 1)]
    assert abs(tq.a[(1, 0, 0, 1)] - (gq + 0.5j)) < 1e-14
    assert abs(tq.a[(0, 1, 1, 0)] - (gq - 0.5j)) < 1e-14
    assert abs(tq.a[(1, 0, 1, 0)] - (2 * cq[(2, 0)] - cq[(1, 0)] ** 2)) < 1e-14
    assert abs(tq.a[(0, 1, 0, 1)] - (2 * cq[(0, 2)] - cq[(0, 1)] ** 2)) < 1e-14


def brute_d(w, K):
    """d from a direct 4-variable Taylor expansion of varpi(z+z')/(varpi(z)varpi(z')) in mpmath.

    The weight is written through its c table as an exact polynomial; the ratio
    is expanded by nested one-variable Taylor series at high precision.
    """
    c = weight_taylor(w, K + 2, "z")

    def W(x, xb):
        return mpmath.fsum(complex(v) * x**i * xb**j for (i, j), v in c.data.items())

    out = {}
    with mpmath.workdps(30):
        f = lambda z, zb, u, ub: W(z + u, zb + ub) / (W(z, zb) * W(u, ub))
        for key in [(1, 0, 0, 1), (0, 1, 1, 0), (1, 0, 1, 0), (0, 1, 0, 1), (2, 0, 0, 2), (1, 1, 1, 1), (2, 0, 2, 0)]:
            der = mpmath.diff(f, (0, 0, 0, 0), key)
            out[key] = complex(der) / np.prod([math.factorial(k) for k in key])
    return out


@pytest.mark.parametrize("text", ["cg:-0.5", "gauss:1,2"])
def test_d_against_direct_expansion(text):
    w = parse_weight(text)
    d = tables_for(w, 6, "z").d
    for key, val in brute_d(w, 6).items():
        assert abs(d[key] - val) < 1e-10, key


@pytest.mark.parametrize("s", [-1.0, -0.5, 0.0, 0.5])
def test_cg_closed_forms(s):
    w = WeightSpec.cahill_glauber(s)
    for K in (2, 4, 6):
        t = tables_for(w, K, "z")
        assert table_max_diff(cg_star_coeffs(s, K, "a"), t.a) < 1e-10
        assert table_max_diff(cg_star_coeffs(s, K, "atilde"), t.at) < 1e-10
        assert table_max_diff(star_coeffs(ratio_coeffs(t.c, t.ct, K, "d"), K, "a"), t.a) < 1e-15


def test_cg_special_values():
    a = cg_star_coeffs(-1.0, 6)
    assert all(k[2] == 0 for k in a.data)
    a0 = cg_star_coeffs(0.0, 6)
    assert a0[(1, 0, 0, 1)] == -0.5 and a0[(0, 1, 1, 0)] == 0.5
    assert cg_star_coeffs(0.3, 4)[(0, 0, 0, 0)] == 1


# ------------------------------------------------------------------ Born-Jordan


def test_bj_coefficients():
    c, ct, d = bj_tables(8)
    assert c[(0, 0)] == 1 and c[(1, 1)] == 0
    assert c[(2, 2)] == pytest.approx(-1 / 6)
    assert ct[(2, 2)] == pytest.approx(1 / 6, abs=1e-15)
    assert all(sum(k) % 2 == 0 for k in d.data)
    generic = ratio_coeffs(c, ct, 8, "d")
    assert table_max_diff(d, generic) < 1e-12


def test_bj_inverse_matches_bernoulli_and_mpmath():
    ct = invert_series(weight_taylor(WeightSpec.born_jordan(), 8, "qp"), 8)
    bern = bj_inverse_candidate(8, "bernoulli")
    assert table_max_diff(ct, bern) < 1e-12
    with mpmath.workdps(30):
        ser = mpmath.taylor(lambda x: x / mpmath.sin(x) if x != 0 else mpmath.mpf(1), 0, 8)
    for r in range(3):
        assert abs(ct[(2 * r, 2 * r)] - float(ser[2 * r])) < 1e-15


def test_bj_bell_reading_does_not_match():
    ct = invert_series(weight_taylor(WeightSpec.born_jordan(), 8, "qp"), 8)
    assert table_max_diff(ct, bj_inverse_candidate(8, "bell")) > 1.0


def test_number_sequences():
    assert [bell(n) for n in range(7)] == [1, 1, 2, 5, 15, 52, 203]
    assert bernoulli(2) == pytest.approx(1 / 6)
    assert bernoulli(4) == pytest.approx(-1 / 30)
    assert bernoulli(6) == pytest.approx(1 / 42)
