import math
from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cel.errors import DomainError, OrderExhausted, SingularPoint
from cel.jets import (Jet, extract_partial, jet_einsum, jet_elementary, jet_inv, layout,
                      lift_variable)
from cel.metric_dsl import coordinate_jets, evaluate_jet, parse_expression

from oracles import mp_partial

coords = st.lists(st.floats(-1.0, 1.0, allow_nan=False), min_size=2, max_size=3)


def multi_indices(n, order):
    return [a for a in product(range(order + 1), repeat=n) if sum(a) <= order]


def test_layout_orders_by_degree():
    lay = layout(3, 2)
    assert lay.index[(0, 0, 0)] == 0
    assert [lay.index[a] for a in ((1, 0, 0), (0, 1, 0), (0, 0, 1))] == [1, 2, 3]
    assert lay.size == math.comb(3 + 2, 2)


def test_lift_variable_and_truncate():
    x = lift_variable([0.3, -0.2], 1, 4)
    assert x.value == pytest.approx(-0.2)
    assert extract_partial(x, (0, 1)) == 1.0
    assert extract_partial(x, (1, 0)) == 0.0
    assert x.truncate(2).order == 2


def test_polynomial_partials_exact():
    x, y = coordinate_jets([0.5, 2.0], 4)
    f = x * x * x * y + 3.0 * y * y
    assert extract_partial(f, (0, 0)) == pytest.approx(0.125 * 2 + 12)
    assert extract_partial(f, (3, 0)) == pytest.approx(6 * 2.0)
    assert extract_partial(f, (2, 1)) == pytest.approx(6 * 0.5)
    assert extract_partial(f, (0, 2)) == pytest.approx(6.0)
    assert extract_partial(f, (4, 0)) == pytest.approx(0.0)


def test_order_exhausted():
    x = lift_variable([0.0], 0, 1)
    with pytest.raises(OrderExhausted):
        extract_partial(x, (2,))
    with pytest.raises(OrderExhausted):
        x.gradient().gradient()


def test_domain_and_singular_errors():
    x = lift_variable([-1.0], 0, 3)
    with pytest.raises(DomainError):
        jet_elementary("ln", x)
    with pytest.raises(DomainError):
        jet_elementary("sqrt", x)
    z = lift_variable([0.0], 0, 3)
    with pytest.raises(SingularPoint):
        1.0 / z


@pytest.mark.parametrize("fn", ["sin", "cos", "exp", "ln", "sqrt"])
def test_elementary_against_mpmath(fn):
    pt = [0.7, 1.3]
    e = parse_expression(f"{fn}(x*y + 0.5)", ["x", "y"])
    J = evaluate_jet(e, coordinate_jets(pt, 4))
    for a in multi_indices(2, 4):
        ref = mp_partial(e, pt, a)
        assert extract_partial(J, a) == pytest.approx(ref, rel=1e-10, abs=1e-10)


@settings(max_examples=40, deadline=None)
@given(coords)
def test_leibniz_rule(pt):
    xs = coordinate_jets(pt, 4)
    f = jet_elementary("sin", xs[0] + 0.5 * xs[-1])
    g = jet_elementary("exp", xs[1] * xs[0])
    fg = f * g
    for i in range(len(pt)):
        lhs = fg.derivative(i)
        rhs = f.derivative(i) * g.truncate(3) + f.truncate(3) * g.derivative(i)
        assert np.allclose(lhs.coeffs, rhs.coeffs, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(coords)
def test_division_round_trip(pt):
    xs = coordinate_jets(pt, 4)
    a = jet_elementary("cos", xs[0]) + xs[1] * xs[1]
    b = 2.0 + jet_elementary("sin", xs[1] - xs[0])
    q = a / b
    assert np.allclose((q * b).coeffs, a.coeffs, atol=1e-12)
    assert np.allclose((b * (1.0 / b)).coeffs, Jet.constant(1.0, len(pt), 4).coeffs, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(coords)
def test_exp_ln_inverse(pt):
    xs = coordinate_jets(pt, 4)
    a = 1.5 + jet_elementary("sin", xs[0] * xs[1])
    back = jet_elementary("exp", jet_elementary("ln", a))
    assert np.allclose(back.coeffs, a.coeffs, atol=1e-12)
    r = jet_elementary("sqrt", a)
    assert np.allclose((r * r).coeffs, a.coeffs, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(coords, st.floats(-2.5, 2.5))
def test_power_rules(pt, p):
    xs = coordinate_jets(pt, 4)
    a = 2.0 + xs[0] * xs[1]
    lhs = (a ** p) * (a ** 2)
    rhs = a ** (p + 2)
    assert np.allclose(lhs.coeffs, rhs.coeffs, rtol=1e-10, atol=1e-10)


def test_integer_power_of_negative_base():
    x = lift_variable([-2.0], 0, 4)
    c = x ** 3
    assert extract_partial(c, (0,)) == pytest.approx(-8.0)
    assert extract_partial(c, (1,)) == pytest.approx(12.0)
    with pytest.raises(DomainError):
        x ** 0.5


def test_matrix_inverse_jet():
    pt = [0.2, -0.4]
    x, y = coordinate_jets(pt, 4)
    one = Jet.constant(1.0, 2, 4)
    A = Jet.stack([Jet.stack([2.0 + x * x, 0.3 * y]), Jet.stack([0.3 * y, one + jet_elementary("exp", x)])])
    Ai = jet_inv(A)
    prod = jet_einsum("ij,jk->ik", A, Ai)
    eye = np.zeros_like(prod.coeffs)
    eye[0, 0, 0] = eye[1, 1, 0] = 1.0
    assert np.allclose(prod.coeffs, eye, atol=1e-12)


def test_einsum_matches_numpy_on_values():
    rng = np.random.default_rng(3)
    a = Jet(rng.standard_normal((3, 4, layout(2, 2).size)), 2, 2)
    b = rng.standard_normal((4, 5))
    out = jet_einsum("ij,jk->ik", a, b)
    assert np.allclose(out.value, a.value @ b)
    with pytest.raises(ValueError):
        jet_einsum("ij,jk->ik", a)
