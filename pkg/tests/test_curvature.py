import numpy as np
import pytest

from cel.catalog import catalog_get, random_metric_document
from cel.curvature import (covariant_derivative, curvature_stack, kulkarni_nomizu,
                           riemann_symmetry_residuals, tensor_norm, weyl_trace_residual)
from cel.metric_dsl import eval_metric_at, parse_metric_document

from conftest import points_for
from oracles import curvature_oracle


def stack(spec, p, order=4):
    g, gi = eval_metric_at(spec, p, order=order)
    return curvature_stack(g, gi, p)


@pytest.mark.parametrize("name", ["sphere4", "schwarzschild4", "perturbed_s2xs2_005", "hyperbolic5"])
def test_matches_coordinate_formula_oracle(name):
    spec = catalog_get(name).spec
    for p in points_for(name, 3, seed=11):
        pk = stack(spec, p)
        o = curvature_oracle(spec, p)
        scale = 1.0 + np.abs(o["R"]).max()
        assert np.abs(pk.gamma.value - o["gamma"]).max() < 1e-10
        assert np.abs(pk.riemann.value - o["R"]).max() < 1e-9 * scale
        assert np.abs(pk.ricci.value - o["ricci"]).max() < 1e-9 * scale
        assert pk.scalar.value == pytest.approx(o["S"], abs=1e-9 * scale)
        assert np.abs(pk.weyl.value - o["W"]).max() < 1e-9 * scale


def test_random_metric_against_oracle():
    spec = parse_metric_document(random_metric_document(5, 3))
    p = np.array([0.1, -0.4, 0.3, 0.8, -0.2])
    pk = stack(spec, p)
    o = curvature_oracle(spec, p)
    assert np.abs(pk.riemann.value - o["R"]).max() < 1e-10
    assert np.abs(pk.weyl.value - o["W"]).max() < 1e-10


def test_sign_conventions_on_sphere():
    spec = catalog_get("sphere4").spec
    p = points_for("sphere4", 1, seed=2)[0]
    pk = stack(spec, p)
    g = pk.g.value
    assert np.allclose(pk.ricci.value, 3.0 * g, atol=1e-10)
    # positive sectional curvature: R(X,Y,Y,X) = +|X ^ Y|^2
    R = pk.riemann.value
    X, Y = np.eye(4)[0], np.eye(4)[1]
    sec = np.einsum("i,j,k,l,ijkl->", X, Y, Y, X, R)
    area = (X @ g @ X) * (Y @ g @ Y) - (X @ g @ Y) ** 2
    assert sec == pytest.approx(area, rel=1e-10)


@pytest.mark.parametrize("n, seed", [(4, 1), (5, 2), (6, 3)])
def test_algebraic_identities(n, seed):
    spec = parse_metric_document(random_metric_document(n, seed))
    p = np.random.default_rng(seed).uniform(-0.9, 0.9, n)
    pk = stack(spec, p)
    res = riemann_symmetry_residuals(pk.riemann)
    assert max(res.values()) < 1e-10
    assert weyl_trace_residual(pk) < 1e-10
    # R = W + g (.) k
    g = pk.g.truncate(pk.weyl.order)
    back = pk.weyl + kulkarni_nomizu(g, pk.schouten)
    assert np.abs((back - pk.riemann).coeffs).max() < 1e-12


def test_metric_is_parallel():
    spec = catalog_get("schwarzschild4").spec
    p = points_for("schwarzschild4", 1, seed=5)[0]
    pk = stack(spec, p)
    ng = covariant_derivative(pk.g, pk.gamma)
    assert np.abs(ng.coeffs).max() < 1e-12


def test_contracted_bianchi():
    spec = parse_metric_document(random_metric_document(4, 9))
    pk = stack(spec, np.array([0.2, 0.1, -0.3, 0.5]))
    # div Ric = dS / 2
    nric = covariant_derivative(pk.ricci, pk.gamma)
    div = np.einsum("ab,abj->j", pk.g_inv.value, nric.value)
    dS = pk.scalar.gradient().value
    assert np.allclose(div, 0.5 * dS, atol=1e-10)


def test_order_two_stops_at_riemann():
    spec = catalog_get("s2xs2").spec
    pk = stack(spec, points_for("s2xs2", 1)[0], order=2)
    assert pk.weyl.order == 0
    assert tensor_norm(pk.weyl, pk.g_inv) > 0.1
