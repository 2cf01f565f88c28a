import math
import warnings

import numpy as np
import pytest

from whquant import (
    AccuracyWarning,
    DivergenceRiskError,
    FockOperator,
    basis,
    cartesian_grid,
    coherent,
    duality_check,
    gauss_hermite_grid,
    identity,
    l_safe,
    lower_symbol,
    parse_poly,
    parse_weight,
    povm_diagnostic,
    quantize_poly_qp,
    wigner_map,
)

from conftest import maxabs


def proj(v, dim=None):
    v = np.asarray(v.vec if hasattr(v, "vec") else v, complex)
    if dim and dim > v.size:
        v = np.concatenate([v, np.zeros(dim - v.size)])
    return FockOperator(np.outer(v, v.conj()))


def small_grid(L=1.5, M=8):
    return cartesian_grid(L, M, check=False)


def parity_oracle(n, z, dim=80):
    """2 sum_k (-1)^k |<e_k|D(-z)|e_n>|^2."""
    from whquant import displacement_block

    col = displacement_block(-z, dim, n + 1)[:, n]
    return 2 * float(np.sum((-1.0) ** np.arange(dim) * np.abs(col) ** 2))


def test_identity_portrait_is_one():
    g = small_grid()
    for text in ["cg:-1", "cg:-0.5", "gauss:1,2"]:
        fld = lower_symbol(parse_weight(text), identity(40), g)
        assert maxabs(fld.values - 1) < 1e-8


def test_vacuum_portraits():
    g = small_grid(2.0, 16)
    e0 = proj(basis(0, 30))
    r2 = np.abs(g.z) ** 2
    W = wigner_map(e0, g)
    assert maxabs(W.values - 2 * np.exp(-2 * r2)) < 1e-12
    assert W.values.real.min() > 0
    H = lower_symbol(parse_weight("cg:-1"), e0, g)
    assert maxabs(H.values - np.exp(-r2)) < 1e-12
    for z in g.z[::37]:
        assert abs(wigner_map(e0, type(g)("points", {}, np.array([z]), np.ones(1))).values[0] - parity_oracle(0, z)) < 1e-12


def test_cg_family_vacuum_portrait():
    # sum_n M_nn |<e_n|z>|^2 with M_nn = 2/(1-s) ((s+1)/(s-1))^n
    g = small_grid(1.5, 12)
    r2 = np.abs(g.z) ** 2
    e0 = proj(basis(0, 40))
    for s in (-0.5, -2.0, -3.0):
        fld = lower_symbol(parse_weight(f"cg:{s}"), e0, g)
        assert maxabs(fld.values - 2 / (1 - s) * np.exp(-2 * r2 / (1 - s))) < 1e-10


def test_first_excited_wigner_is_negative_at_origin():
    g = small_grid(1.0, 8)
    e1 = proj(basis(1, 20))
    W = wigner_map(e1, g)
    origin = np.argmin(np.abs(g.z))
    assert abs(g.z[origin]) < 1e-15
    assert W.values[origin].real == pytest.approx(-2.0, abs=1e-14)
    for k in (3, 17, 40):
        assert abs(W.values[k] - parity_oracle(1, g.z[k])) < 1e-12


@pytest.mark.parametrize("f", ["q", "p", "q^2", "p^2", "q*p"])
def test_regularized_wigner_recovers_symbol(f):
    dim = 64
    F = parse_poly(f, "qp")
    A = quantize_poly_qp(parse_weight("ww"), F, dim)
    g = small_grid(2.5, 16)
    fld = wigner_map(A, g, regularize=True, degree=2)
    assert "regularized" in fld.label
    assert maxabs(fld.values - F(g.q, g.p)) < 1e-4


def test_unregularized_wigner_of_truncated_operator_is_not_the_symbol():
    # the parity route sees the cut edge of a truncated unbounded operator
    A = quantize_poly_qp(parse_weight("ww"), parse_poly("q^2", "qp"), 24)
    g = small_grid(1.0, 8)
    assert maxabs(wigner_map(A, g).values - g.q**2) > 1e-2


def test_non_decaying_weight_needs_consent():
    with pytest.raises(DivergenceRiskError):
        lower_symbol(parse_weight("bj"), identity(8), small_grid())


@pytest.mark.parametrize("text", ["ww", "cg:-1", "cg:-0.5", "gauss:1,2"])
def test_normalization_flow(text):
    g = cartesian_grid(6.0, 128)
    w = parse_weight(text)
    for rho in (proj(basis(0, 32)), proj(basis(1, 32)), proj(coherent(0.8 + 0.3j, 32))):
        fld = lower_symbol(w, rho, g)
        assert abs(fld.integrate() - np.trace(rho.mat)) < 1e-5


@pytest.mark.parametrize("s", [-1.0, -2.0])
@pytest.mark.parametrize("f", ["q^2", "q*p^2 + p", "q^3 - 2*q*p"])
def test_convolution_structure(s, f):
    # lower(A_f) = f smoothed by (-1/s) exp(|u|^2/s) d^2u/pi
    w = parse_weight(f"cg:{s}")
    F = parse_poly(f, "qp")
    A = quantize_poly_qp(w, F, 60)
    g = small_grid(1.2, 6)
    fld = lower_symbol(w, A, g)
    b = -1 / s
    gh = gauss_hermite_grid((b, b), (12, 12), check=False)
    ker = np.exp(-b * np.abs(gh.z) ** 2) * b
    ref = np.array([gh.integrate(F(math.sqrt(2) * (z + gh.z).real, math.sqrt(2) * (z + gh.z).imag) * ker) for z in g.z])
    assert maxabs(fld.values - ref) < 1e-8


@pytest.mark.parametrize("text", ["cg:-1", "cg:-2", "gauss:1,1"])
def test_positivity_inheritance(text):
    rng = np.random.default_rng(7)
    X = rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8))
    rho = np.zeros((32, 32), complex)
    rho[:8, :8] = X @ X.conj().T
    w = parse_weight(text)
    assert povm_diagnostic(w, 16).positive
    fld = lower_symbol(w, FockOperator(rho), cartesian_grid(2.5, 24, check=False))
    assert fld.values.real.min() > -1e-8


def test_positivity_fails_for_wigner():
    e1 = proj(basis(1, 12))
    assert wigner_map(e1, small_grid()).values.real.min() < -1


def test_povm_verdicts():
    r = povm_diagnostic(parse_weight("cg:-1"), 16)
    assert r.positive and r.hermitian
    assert abs(r.min_eigenvalue) < 1e-12
    assert r.resolution_residual < 1e-8
    r = povm_diagnostic(parse_weight("ww"), 16)
    assert not r.positive
    assert r.min_eigenvalue == pytest.approx(-2.0)
    r = povm_diagnostic(parse_weight("cg:-2"), 16)
    assert r.positive
    assert r.min_eigenvalue == pytest.approx((2 / 3) * (1 / 3) ** 15, rel=1e-10)
    assert not povm_diagnostic(parse_weight("cg:-0.5"), 16).positive
    assert "not positive" in str(povm_diagnostic(parse_weight("ww"), 8))


def test_duality_examples():
    rng = np.random.default_rng(3)
    X = np.zeros((24, 24), complex)
    X[:6, :6] = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
    A = FockOperator(X)
    lhs, rhs, res = duality_check(parse_weight("cg:-0.5"), parse_poly("1"), A)
    assert res < 1e-5 and abs(rhs - np.trace(X)) < 1e-12
    lhs, rhs, res = duality_check(parse_weight("ww"), parse_poly("q^2", "qp"), proj(basis(0, 24)))
    assert res < 1e-5 and abs(rhs - 0.5) < 1e-12
    lhs, rhs, res = duality_check(parse_weight("cg:-1"), parse_poly("z*zbar"), proj(basis(0, 24)))
    assert res < 1e-5 and abs(rhs - 1) < 1e-12


@pytest.mark.parametrize("text", ["gauss:1,2", "cg:-0.5"])
def test_duality_general(text):
    rng = np.random.default_rng(11)
    X = np.zeros((32, 32), complex)
    X[:5, :5] = rng.normal(size=(5, 5))
    _, _, res = duality_check(parse_weight(text), parse_poly("q^2*p - p + 1", "qp"), FockOperator(X))
    assert res < 1e-5


def test_duality_moment_warning():
    with pytest.warns(AccuracyWarning):
        duality_check(parse_weight("cg:-1"), parse_poly("q^12", "qp"), proj(basis(0, 8)), grid=cartesian_grid(2.0, 16, check=False))


def test_safe_radius_warning():
    assert l_safe(16) == 2.0
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always", AccuracyWarning)
        lower_symbol(parse_weight("cg:-1"), identity(8), cartesian_grid(3.0, 8, check=False))
    assert any(issubclass(r.category, AccuracyWarning) for r in rec)
