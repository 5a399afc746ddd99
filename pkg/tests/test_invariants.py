import json

import numpy as np
import pytest

from cel.catalog import catalog_get, random_metric_document
from cel.conformal_lab import rescale_spec
from cel.errors import SpecError
from cel.invariants import (CONFORMALLY_FLAT, INDETERMINATE, OBSTRUCTED, PASS, Tolerances,
                            Verdict, bach_hat_and_wsymE, classical_bach, classify,
                            conformal_ricci_E, delta3_residual, evaluate_point, fd_T_jet,
                            report_point, worst, xi_covector)
from cel.curvature import covariant_derivative, tensor_norm
from cel.jets import Jet, jet_einsum, layout
from cel.metric_dsl import (coordinate_jets, evaluate_jet, parse_conformal_factor,
                            parse_metric_document)
from cel.weyl_algebra import curv_apply

from conftest import points_for


def random_spec(n, seed):
    return parse_metric_document(random_metric_document(n, seed))


def random_point(n, seed):
    return np.random.default_rng(seed).uniform(-0.8, 0.8, n)


def test_verdict_ordering():
    a = Verdict(PASS)
    b = Verdict(OBSTRUCTED, ("E_T",))
    c = Verdict(OBSTRUCTED, ("C_T", "E_T"))
    assert worst([Verdict(CONFORMALLY_FLAT), a]) == a
    assert worst([a, Verdict(INDETERMINATE, reason="x")]).kind == INDETERMINATE
    assert worst([a, b, c]) == Verdict(OBSTRUCTED, ("E_T", "C_T"))
    assert worst([]).kind == INDETERMINATE
    with pytest.raises(ValueError):
        Verdict("Maybe")


def test_tolerances_validated():
    with pytest.raises(ValueError):
        Tolerances(tol=0.0)
    with pytest.raises(ValueError):
        Tolerances(order=5)


def test_four_dimensional_T_formula():
    # in dimension 4, w = 1/2 tr(W^2) Id, so T* = xi / (1/2 tr(W^2))
    spec = random_spec(4, 21)
    ev = evaluate_point(spec, random_point(4, 21))
    M = ev.wpack.curv.value
    half_tr = 0.5 * np.trace(M @ M)
    assert np.allclose(ev.wpack.w.value, half_tr * np.eye(4), atol=1e-12 * half_tr)
    xi = xi_covector(ev.pack).value
    assert np.allclose(ev.T.covector.value, xi / half_tr, rtol=1e-10, atol=1e-14)


@pytest.mark.parametrize("n, seed", [(4, 1), (5, 2), (6, 3)])
def test_cotton_matches_delta_weyl(n, seed):
    ev = evaluate_point(random_spec(n, seed), random_point(n, seed))
    dW = ev.pack.delta_weyl()
    T = ev.T.vector
    WT = np.einsum("xyzt,t->xyz", ev.pack.weyl.value, T.value)
    assert np.allclose(ev.C.value, dW.value / (n - 3) - WT, atol=1e-12)


@pytest.mark.parametrize("n", [4, 5, 6])
def test_E_is_trace_free_for_any_field(n):
    ev = evaluate_point(random_spec(n, 40 + n), random_point(n, 40 + n))
    rng = np.random.default_rng(n)
    V = Jet(rng.standard_normal((n, layout(n, 3).size)), n, 3)
    E = conformal_ricci_E(ev.pack, V)
    assert abs(np.einsum("ij,ij->", ev.pack.g_inv.value, E.value)) < 1e-10
    # the skew part is (n-2)/2 d V*; for a gradient field E would be symmetric
    Vc = jet_einsum("ij,j->i", ev.pack.g.truncate(3), V)
    nV = covariant_derivative(Vc, ev.pack.gamma).value
    assert np.allclose(E.value - E.value.T, (n - 2) * (nV - nV.T), atol=1e-10)


def test_E_vanishes_for_gradient_of_einstein_rescaling():
    # g = exp(2 phi) * round S^4 metric with V = grad phi gives E_V = 0
    base = catalog_get("sphere4").spec
    phi = parse_conformal_factor("0.3*cos(x1) + 0.1*x4", base.coord_names)
    neg = parse_conformal_factor("-(0.3*cos(x1) + 0.1*x4)", base.coord_names)
    g = rescale_spec(base, neg)  # exp(2 phi) g_round
    p = points_for("sphere4", 1, seed=3)[0]
    ev = evaluate_point(g, p)
    dphi = evaluate_jet(phi.phi, coordinate_jets(p, 4)).gradient()
    V = jet_einsum("ij,j->i", ev.pack.g_inv.truncate(3), dphi)
    E = conformal_ricci_E(ev.pack, V)
    assert tensor_norm(E, ev.pack.g_inv) < 1e-10


@pytest.mark.parametrize("name", ["s2xs2", "schwarzschild4", "perturbed_s2xs2_005",
                                  "rescaled_s2xs2_a"])
def test_four_dimensional_bach_collapse(name):
    spec = catalog_get(name).spec
    for p in points_for(name, 3, seed=1):
        ev = evaluate_point(spec, p)
        assert np.allclose(ev.B.value, classical_bach(ev.pack).value, atol=1e-10)


@pytest.mark.parametrize("n, seed", [(5, 7), (6, 8)])
def test_bach_hat_rearrangement(n, seed):
    ev = evaluate_point(random_spec(n, seed), random_point(n, seed))
    pk, T, gi = ev.pack, ev.T.vector, ev.pack.g_inv
    W = pk.weyl.truncate(0)
    Tc = np.einsum("ij,j->i", pk.g.value, T.value)
    symE = ev.E.value + ev.E.value.T
    CT = np.einsum("txy,t->xy", ev.C.value, T.value)
    rhs = (ev.B.value + (n - 4) / (n - 2) * curv_apply(W, symE, gi.truncate(0)).value
           + (n - 3) * (n - 4) * (CT + CT.T))
    assert np.allclose(ev.B_hat.value, rhs, atol=1e-10)
    # W(T* (x) T*) is the same as W(T, ., ., T)
    WTT = curv_apply(W, np.outer(Tc, Tc), gi.truncate(0)).value
    assert np.allclose(WTT, np.einsum("txys,t,s->xy", W.value, T.value, T.value), atol=1e-12)
    B_hat, wse = bach_hat_and_wsymE(pk, T, ev.E)
    assert np.allclose(B_hat.value, ev.B_hat.value)


@pytest.mark.parametrize("n, seed", [(4, 5), (5, 5), (6, 5)])
def test_delta3_identity(n, seed):
    ev = evaluate_point(random_spec(n, seed), random_point(n, seed))
    assert ev.wpack.rank_E == 0
    assert delta3_residual(ev.pack, ev.C, ev.T.vector) < 1e-10
    literal = delta3_residual(ev.pack, ev.C, ev.T.vector, weight=1)
    if n == 4:
        assert literal < 1e-10
    else:
        # with unit weight the identity fails off dimension 4
        assert literal > 1e-5


def test_fd_T_agrees_with_jet_T():
    spec = random_spec(5, 31)
    p = random_point(5, 31)
    ev = evaluate_point(spec, p)
    fd = fd_T_jet(spec, p, Tolerances(), rank_E=0)
    assert np.allclose(fd.value, ev.T.vector.value, atol=1e-12)
    assert np.allclose(fd.gradient().value, ev.T.vector.gradient().value, rtol=1e-5, atol=1e-6)


def test_intermediate_rank_uses_difference_quotients():
    rep = report_point(catalog_get("schwarzschild4_x_line").spec,
                       points_for("schwarzschild4_x_line", 1)[0])
    assert rep.rank_E == 1 and rep.fd_fallback
    assert rep.verdict.kind == INDETERMINATE
    assert rep.norms["T"] < 1e-8


def test_reports_are_serialisable():
    rep = report_point(catalog_get("s2xs2").spec, points_for("s2xs2", 1)[0])
    rec = json.loads(json.dumps(rep.to_record()))
    assert rec["verdict"]["kind"] == PASS and rec["rank_E"] == 0


def test_numeric_failure_becomes_indeterminate():
    spec = parse_metric_document("dim = 4\ncoords = a, b, c, d\ng[1][1] = a\ng[2][2] = 1\n"
                                 "g[3][3] = 1\ng[4][4] = 1\n")
    rep = report_point(spec, [-1.0, 0.0, 0.0, 0.0])
    assert rep.verdict.kind == INDETERMINATE and rep.error_kind == "SingularMetric"


def test_classify_rejects_points_outside_region():
    spec = catalog_get("s2xs2").spec
    with pytest.raises(SpecError):
        classify(spec, [[0.0, 0.0, 0.0, 0.0]])


@pytest.mark.parametrize("tag", ["a", "b"])
def test_verdict_invariant_under_rescaling(tag, no_parallel):
    base = catalog_get("s2xs2").spec
    phi = parse_conformal_factor({"a": "0.1*x1*x3", "b": "0.2*sin(x2)"}[tag], base.coord_names)
    pts = points_for("s2xs2", 4, seed=8)
    assert classify(base, pts).aggregate.kind == classify(rescale_spec(base, phi), pts).aggregate.kind == PASS
    pert = catalog_get("perturbed_s2xs2_005").spec
    assert classify(rescale_spec(pert, phi), pts).aggregate.kind == OBSTRUCTED


def test_lower_order_marks_unavailable():
    rep = report_point(catalog_get("s2xs2").spec, points_for("s2xs2", 1)[0], Tolerances(order=3))
    assert rep.availability["B_T"] is False
    assert rep.verdict.kind == INDETERMINATE
