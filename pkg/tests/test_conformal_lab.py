import numpy as np
import pytest

from cel.catalog import catalog_get
from cel.conformal_lab import (EXTRA_LAWS, FAIL, LAW_NAMES, NOT_APPLICABLE, PASS,
                               check_transformation_laws, rescale_spec)
from cel.curvature import curvature_stack
from cel.metric_dsl import eval_metric_at, parse_conformal_factor

from conftest import points_for
from oracles import curvature_oracle


def phi_for(name, text):
    return parse_conformal_factor(text, catalog_get(name).spec.coord_names)


def test_zero_phi_returns_same_metric():
    spec = catalog_get("s2xs2").spec
    assert rescale_spec(spec, phi_for("s2xs2", "0")) is spec
    rep = check_transformation_laws(spec, phi_for("s2xs2", "0"), points_for("s2xs2", 2))
    assert rep.passed and rep.max_residual < 1e-14


def test_constant_phi_is_a_homothety():
    spec = catalog_get("schwarzschild4").spec
    c = 0.7
    bar = rescale_spec(spec, phi_for("schwarzschild4", str(c)))
    for p in points_for("schwarzschild4", 3, seed=2):
        a = curvature_stack(*eval_metric_at(spec, p), p)
        b = curvature_stack(*eval_metric_at(bar, p), p)
        assert np.abs(a.gamma.value - b.gamma.value).max() < 1e-12
        assert np.allclose(b.weyl.value, np.exp(-2 * c) * a.weyl.value, atol=1e-12)
        assert np.allclose(b.ricci.value, a.ricci.value, atol=1e-12)


def test_rescale_round_trip():
    spec = catalog_get("perturbed_s2xs2_005").spec
    text = "0.2*sin(x1)*cos(x3) + 0.1*x2"
    there = rescale_spec(spec, phi_for("s2xs2", text))
    back = rescale_spec(there, phi_for("s2xs2", f"-({text})"))
    for p in points_for("s2xs2", 10, seed=6):
        g0, _ = eval_metric_at(spec, p, order=2)
        g1, _ = eval_metric_at(back, p, order=2)
        assert np.abs(g0.coeffs - g1.coeffs).max() < 1e-12


def test_rescaled_curvature_against_oracle():
    # flat space with phi = x1: the rescaled metric's curvature from the coordinate oracle
    spec = catalog_get("flat4").spec
    phi = phi_for("flat4", "x1")
    bar = rescale_spec(spec, phi)
    pts = points_for("flat4", 3, seed=4)
    rep = check_transformation_laws(spec, phi, pts)
    assert rep.laws["ricci"].passed and rep.laws["connection"].passed
    for p in pts:
        o = curvature_oracle(bar, p)
        # Ric_bar = (n-2)(Hess phi + dphi dphi) + (lap phi - (n-2)|dphi|^2) g with phi = x1
        expect = 2.0 * np.diag([1.0, 0, 0, 0]) - 2.0 * np.eye(4)
        assert np.allclose(o["ricci"], expect, atol=1e-12)
        assert abs(o["S"] - np.exp(2 * p[0]) * -6.0) < 1e-9


@pytest.mark.parametrize("name, text", [("hyperbolic5", "0.1*x1*x5 + 0.2*sin(x3)"),
                                        ("s2xs2", "0.3*cos(x1 + x2) + 0.05*x4^2")])
def test_laws_hold(name, text):
    rep = check_transformation_laws(catalog_get(name).spec, phi_for(name, text),
                                    points_for(name, 3, seed=7))
    assert rep.passed, rep.failing()
    assert rep.max_residual < 1e-9
    statuses = {s for law in rep.laws.values() for s in law.status}
    assert FAIL not in statuses and PASS in statuses


@pytest.mark.parametrize("law", LAW_NAMES + EXTRA_LAWS)
def test_corrupt_hook_breaks_exactly_one_law(law):
    # schwarzschild is Ricci flat with harmonic Weyl tensor and C_T = 0: every law applies
    spec = catalog_get("schwarzschild4").spec
    phi = phi_for("schwarzschild4", "0.2*sin(th)*cos(t) + 0.01*r")
    rep = check_transformation_laws(spec, phi, points_for("schwarzschild4", 2), corrupt=law)
    assert rep.failing() == [law]
    assert NOT_APPLICABLE not in rep.laws[law].status


def test_unknown_law_rejected():
    with pytest.raises(ValueError):
        check_transformation_laws(catalog_get("flat4").spec, phi_for("flat4", "x1"),
                                  points_for("flat4", 1), corrupt="nonsense")


def test_report_record_shape():
    rep = check_transformation_laws(catalog_get("s2xs2").spec, phi_for("s2xs2", "0.1*x1"),
                                    points_for("s2xs2", 2))
    rec = rep.to_record()
    assert set(rec["laws"]) == set(LAW_NAMES + EXTRA_LAWS)
    assert len(rec["laws"]["T"]["residuals"]) == 2
    assert rec["passed"] is True
