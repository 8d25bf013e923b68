from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from loopvir.errors import JetOrderError, NonlocalInputError, SolvabilityError
from loopvir.jet import (A, DiffPoly, F, evaluate, ibp_normal_form, integrate_functional,
                         total_derivative, var, variational_derivative)
from loopvir.spectral import (AREA, MEAN_FREE, PAPER_CONSTANT, SpectralField, derive, grid_coords,
                              inner, norm, random_field)

N = 16


def sin_x(n=N):
    return SpectralField.from_function(lambda x, y: np.sin(x), n)


def test_total_derivative_examples():
    assert total_derivative(F, "x") == var("F", 1, 0)
    fa_x = F * var("A", 1, 0)
    assert total_derivative(fa_x, "x") == var("F", 1, 0) * var("A", 1, 0) + F * var("A", 2, 0)
    assert total_derivative(var("F", -1, 0), "y") == var("F", -1, 1)


def test_order_cap_names_monomial():
    p = var("F", 7, 0, cap=8)
    with pytest.raises(JetOrderError) as info:
        total_derivative(total_derivative(p, "x"), "y")
    assert info.value.cap == 8


def test_variational_derivative_examples():
    h0 = A - F
    assert variational_derivative(h0, "A") == DiffPoly.constant(1)
    assert variational_derivative(h0, "F") == DiffPoly.constant(-1)
    assert variational_derivative(F * F, "F") == 2 * F
    assert variational_derivative(F * var("A", 1, 0), "A") == -var("F", 1, 0)


def test_variational_derivative_matches_finite_differences():
    h = F * var("A", 1, 0)
    f, a = random_field(N, 1, 2), random_field(N, 2, 2)
    grad = evaluate(variational_derivative(h, "A"), {"F": f, "A": a})
    eps = 1e-5
    for s in range(3):
        phi = random_field(N, 10 + s, 2)
        plus = integrate_functional(h, {"F": f, "A": a + phi * eps})
        minus = integrate_functional(h, {"F": f, "A": a - phi * eps})
        fd = (plus - minus) / (2 * eps)
        assert fd == pytest.approx(inner(grad, phi), rel=1e-7, abs=1e-9)


def test_ibp_normal_form_examples():
    f_x, a_x = var("F", 1, 0), var("A", 1, 0)
    assert ibp_normal_form(f_x * A + F * a_x).is_zero()
    assert ibp_normal_form(F * f_x).is_zero()
    left, right = F * var("A", 2, 0), var("F", 2, 0) * A
    assert ibp_normal_form(left) == ibp_normal_form(right)
    for s in range(10):
        f, a = random_field(N, s, 2), random_field(N, s + 100, 2)
        assert abs(integrate_functional(left - right, {"F": f, "A": a})) < 1e-10


def test_ibp_rejects_nonlocal():
    with pytest.raises(NonlocalInputError):
        ibp_normal_form(var("F", -1, 0) * A)


def test_evaluate_examples():
    s = sin_x()
    x, y = grid_coords(N)
    assert np.allclose(evaluate(F, {"F": s}).to_grid(), np.sin(x), atol=1e-14)
    assert np.allclose(evaluate(F * var("F", 1, 0), {"F": s}).to_grid(),
                       np.sin(x) * np.cos(x), atol=1e-14)
    f = SpectralField.from_function(lambda x, y: np.sin(x) * np.sin(y), N)
    got = evaluate(var("F", -1, 1), {"F": f}, PAPER_CONSTANT).to_grid()
    assert np.max(np.abs(got - (1 - np.cos(x)) * np.cos(y))) < 1e-12


def test_evaluate_nonzero_mean_antiderivative_raises():
    g = SpectralField.from_function(lambda x, y: np.cos(y), N)
    with pytest.raises(SolvabilityError):
        evaluate(var("F", -1, 0), {"F": g})


def test_integrate_functional_examples():
    one = SpectralField.constant(1.0, N)
    assert integrate_functional(A - F, {"F": one, "A": one}) == 0.0
    assert integrate_functional(F * F, {"F": sin_x()}) == pytest.approx(2 * np.pi**2, rel=1e-14)
    assert abs(integrate_functional(F, {"F": random_field(N, 5, 3)})) < 1e-14


def test_text_form_round_trip():
    p = Fraction(3, 2) * F * var("A", 2, 1) - var("F", -1, 1) * var("F", 0, 1) + 7
    text = str(p)
    assert DiffPoly.parse(text) == p
    assert str(DiffPoly.parse(text)) == text
    assert str(DiffPoly()) == "0"


def test_canonical_representation():
    p = F * A + A * F
    q = 2 * (A * F)
    assert p == q and hash(p) == hash(q) and str(p) == str(q)
    assert (p - q).is_zero()


# random local polynomials ----------------------------------------------------------

_vars = st.builds(lambda fld, x, y: var(fld, x, y),
                  st.sampled_from(["F", "A"]), st.integers(0, 2), st.integers(0, 2))
_monos = st.builds(lambda c, vs: Fraction(c) * np.prod(vs, initial=DiffPoly.constant(1)),
                   st.integers(-3, 3), st.lists(_vars, min_size=1, max_size=3))
_polys = st.builds(lambda ms: sum(ms, DiffPoly()), st.lists(_monos, min_size=1, max_size=3))


@settings(max_examples=40, deadline=None)
@given(p=_polys, axis=st.sampled_from(["x", "y"]), fld=st.sampled_from(["F", "A"]))
def test_euler_operator_kills_divergences(p, axis, fld):
    assert variational_derivative(total_derivative(p, axis), fld).is_zero()


@settings(max_examples=40, deadline=None)
@given(p=_polys)
def test_text_round_trip_property(p):
    assert DiffPoly.parse(str(p)) == p


@settings(max_examples=25, deadline=None)
@given(p=_polys, seed=st.integers(0, 2**16))
def test_normal_form_is_sound(p, seed):
    assign = {"F": random_field(N, seed, 1, stream=(0,)), "A": random_field(N, seed, 1, stream=(1,))}
    diff = integrate_functional(p - ibp_normal_form(p), assign)
    scale = 1.0 + abs(integrate_functional(p, assign))
    assert abs(diff) < 1e-10 * scale


@settings(max_examples=25, deadline=None)
@given(p=_polys, seed=st.integers(0, 2**16), axis=st.sampled_from(["x", "y"]))
def test_evaluate_commutes_with_derivative(p, seed, axis):
    assign = {"F": random_field(N, seed, 1, stream=(0,)), "A": random_field(N, seed, 1, stream=(1,))}
    lhs = evaluate(total_derivative(p, axis), assign)
    rhs = derive(evaluate(p, assign), axis)
    assert norm(lhs - rhs) < 1e-11 * (1.0 + norm(rhs))


@settings(max_examples=15, deadline=None)
@given(p=_polys, seed=st.integers(0, 2**16))
def test_gradient_pairing_identity(p, seed):
    f, a = random_field(N, seed, 1, stream=(0,)), random_field(N, seed, 1, stream=(1,))
    dF = evaluate(variational_derivative(p, "F"), {"F": f, "A": a}, MEAN_FREE)
    eps = 1e-6
    for s in range(5):
        phi = random_field(N, seed, 1, stream=(2, s))
        fd = (integrate_functional(p, {"F": f + phi * eps, "A": a})
              - integrate_functional(p, {"F": f - phi * eps, "A": a})) / (2 * eps)
        exact = inner(dF, phi)
        assert abs(fd - exact) <= 1e-6 * (1.0 + abs(exact))


def test_area_constant():
    assert AREA == pytest.approx(4 * np.pi**2)
