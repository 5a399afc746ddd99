"""Conformal rescaling ``g -> exp(-2 phi) g`` and checks of the transformation laws.

Every law is checked two-sidedly: the left side comes from running the full
pipeline on the rescaled metric document, the right side from the original
metric's pipeline combined with jets of ``phi``.  Residuals are relative,
``|L - R| / (max(|L|, |R|) + 1)``, with tensor norms taken in the original
metric.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .curvature import covariant_derivative, tensor_norm, trace, vector_norm
from .errors import NumericError
from .invariants import PointEvaluation, Tolerances, evaluate_point
from .jets import Jet, jet_einsum
from .metric_dsl import (Binary, Const, ConformalFactorSpec, MetricSpec, Unary,
                         coordinate_jets, evaluate_jet, is_zero)
from .weyl_algebra import curv_apply

LAW_NAMES = ("connection", "weyl", "delta_weyl", "ricci", "T", "C_T", "E_T", "B_T",
             "B_hat_T", "W_symE")
EXTRA_LAWS = ("harmonic_weyl_potential",)
NORMALIZATION = "|L - R| / (max(|L|, |R|) + 1), dimension-normalized norms in g"

PASS, FAIL, UNAVAILABLE, NOT_APPLICABLE = "pass", "fail", "unavailable", "not_applicable"


def rescale_spec(spec: MetricSpec, phi: ConformalFactorSpec) -> MetricSpec:
    """Entry-wise ``exp(-2 phi) g_ij``; zero entries stay zero and ``phi = 0``
    returns ``spec`` itself."""
    phi.check_against(spec)
    if is_zero(phi.phi):
        return spec
    factor = Unary("exp", Binary("mul", Const(-2.0), phi.phi))
    rows = tuple(tuple(e if is_zero(e) else Binary("mul", factor, e) for e in row)
                 for row in spec.entries)
    name = f"{spec.name}_rescaled" if spec.name else ""
    return MetricSpec(spec.dim, spec.coord_names, rows, name=name, notes=spec.notes,
                      region=spec.region)


# -- report types -----------------------------------------------------------------

@dataclass
class LawResult:
    name: str
    residuals: list = field(default_factory=list)  # float or None per point
    status: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    @property
    def max_residual(self) -> float | None:
        vals = [r for r in self.residuals if r is not None]
        return max(vals) if vals else None

    @property
    def passed(self) -> bool:
        return FAIL not in self.status

    def to_record(self) -> dict:
        return {"residuals": self.residuals, "status": self.status,
                "max_residual": self.max_residual, "passed": self.passed,
                "notes": [n for n in self.notes if n]}


@dataclass
class TransformationLawReport:
    points: list
    tol: float
    laws: dict
    normalization: str = NORMALIZATION

    @property
    def max_residual(self) -> float:
        vals = [law.max_residual for law in self.laws.values() if law.max_residual is not None]
        return max(vals) if vals else 0.0

    @property
    def passed(self) -> bool:
        return all(law.passed for law in self.laws.values())

    def failing(self) -> list:
        return [name for name, law in self.laws.items() if not law.passed]

    def to_record(self) -> dict:
        return {"points": self.points, "tol": self.tol, "normalization": self.normalization,
                "laws": {k: v.to_record() for k, v in self.laws.items()},
                "max_residual": self.max_residual, "passed": self.passed,
                "failing": self.failing()}


# -- helpers ----------------------------------------------------------------------

def _rel(L, R, norm) -> float:
    nl, nr, nd = norm(L), norm(R), norm(L - R)
    return nd / (max(nl, nr) + 1.0)


def _val(T):
    return T.value if isinstance(T, Jet) else np.asarray(T, float)


@dataclass
class _PhiJets:
    phi: Jet  # scalar
    dphi: Jet  # covector
    grad: Jet  # vector, g^{-1} d phi
    hess: Jet  # nabla^2 phi
    psi: float


def _phi_jets(phi: ConformalFactorSpec, ev: PointEvaluation, order: int) -> _PhiJets:
    p = evaluate_jet(phi.phi, coordinate_jets(ev.point, order))
    dphi = p.gradient()
    gi = ev.pack.g_inv.truncate(dphi.order)
    grad = jet_einsum("ij,j->i", gi, dphi)
    hess = covariant_derivative(dphi, ev.pack.gamma)
    return _PhiJets(p, dphi, grad, hess, float(np.exp(p.value)))


def _projection_E(ev: PointEvaluation):
    """Projection onto ``E`` as a matrix ``P[i, j]`` acting on vectors, or ``None``
    when it is not available as a jet (intermediate rank)."""
    wp = ev.wpack
    n = ev.pack.n
    if wp.kernel.conformally_flat:
        return np.eye(n)
    if wp.rank_E == 0:
        return np.zeros((n, n))
    return None


def _F(ev: PointEvaluation, X: Jet) -> Jet:
    """``F_X = nabla X* + X* (x) X* - (div X + |X|^2) g / n``."""
    n = ev.pack.n
    g = ev.pack.g
    Xc = jet_einsum("ij,j->i", g.truncate(X.order), X)
    nX = covariant_derivative(Xc, ev.pack.gamma)
    o = nX.order
    gi = ev.pack.g_inv.truncate(o)
    Xc0, X0 = Xc.truncate(o), X.truncate(o)
    return (nX + jet_einsum("i,j->ij", Xc0, Xc0)
            - (trace(nX, gi, 0, 1) + jet_einsum("i,i->", Xc0, X0)) * g.truncate(o) * (1.0 / n))


# -- the suite --------------------------------------------------------------------

def _point_laws(spec: MetricSpec, bar_spec: MetricSpec, phi: ConformalFactorSpec, point,
                tols: Tolerances, law_tol: float, corrupt: str | None):
    """Return ``{law: (residual | None, status, note)}`` for one point."""
    ev = evaluate_point(spec, point, tols)
    eb = evaluate_point(bar_spec, point, tols)
    n = spec.dim
    pj = _phi_jets(phi, ev, tols.order)
    psi = pj.psi
    g, gi = ev.pack.g, ev.pack.g_inv
    tn = lambda T: tensor_norm(_val(T), gi.value)  # noqa: E731
    vn = lambda V: vector_norm(_val(V), g.value)  # noqa: E731
    out = {}

    def bump(name, R):
        # test hook: perturb one right-hand side so that its law must fail
        if corrupt == name:
            R = _val(R)
            return R + 1e-3 * (1.0 + np.abs(R).max()) * np.ones_like(R)
        return R

    def put(name, L, R, norm=tn, note=""):
        if L is None or R is None:
            out[name] = (None, UNAVAILABLE, note or "not computable at this point")
            return
        res = _rel(_val(L), _val(bump(name, R)), norm)
        out[name] = (res, PASS if res < law_tol else FAIL, note)

    # connection: Gamma_bar = Gamma - dphi(X)Y - dphi(Y)X + <X,Y> grad phi
    G = ev.pack.gamma.value
    dphi, grad = pj.dphi.value, pj.grad.value
    eye = np.eye(n)
    rhs = (G - np.einsum("i,kj->kij", dphi, eye) - np.einsum("j,ki->kij", dphi, eye)
           + np.einsum("ij,k->kij", g.value, grad))
    put("connection", eb.pack.gamma.value, rhs,
        norm=lambda A: float(np.linalg.norm(A)) / np.sqrt(A.size))

    put("weyl", eb.pack.weyl.value, psi ** -2 * ev.pack.weyl.value)

    dW = ev.pack.delta_weyl().value
    rhs = dW - (n - 3) * np.einsum("xyzt,t->xyz", ev.pack.weyl.value, grad)
    put("delta_weyl", eb.pack.delta_weyl().value, rhs)

    o = pj.hess.order
    lap = trace(pj.hess, gi.truncate(o), 0, 1).value
    sq = float(dphi @ grad)
    rhs = (ev.pack.ricci.value + (n - 2) * (pj.hess.value + np.outer(dphi, dphi))
           + (lap - (n - 2) * sq) * g.value)
    put("ricci", eb.pack.ricci.value, rhs)

    # laws involving T need T on both sides and the same rank of E
    if ev.T is None or eb.T is None:
        for name in LAW_NAMES[4:]:
            put(name, None, None, note="T unavailable: " + "; ".join(
                {**ev.notes, **eb.notes}.values()))
    elif ev.wpack.rank_E != eb.wpack.rank_E:
        msg = f"rank_E differs: {ev.wpack.rank_E} vs {eb.wpack.rank_E}"
        for name in LAW_NAMES[4:]:
            out[name] = (None, FAIL, msg)
    else:
        P = _projection_E(ev)
        T0 = ev.T.vector.value
        if P is None:
            wp = ev.wpack
            Pv = sum(np.outer(v, v) for v in wp.E_basis) @ g.value
        else:
            Pv = P
        Y = grad - Pv @ grad
        put("T", eb.T.vector.value, psi ** 2 * (T0 - Y), norm=vn)
        put("C_T", eb.C, ev.C)

        if P is None:
            put("E_T", None, None, note="projection onto E has no jet at intermediate rank")
        elif ev.E is None or eb.E is None:
            put("E_T", None, None)
        else:
            X = jet_einsum("ij,j->i", Jet.constant(P, g.dim, pj.grad.order), pj.grad)
            T = ev.T.vector
            o = min(X.order, T.order)
            Tc = jet_einsum("ij,j->i", g.truncate(o), T.truncate(o)).value
            Xc = g.value @ X.value
            corr = (_F(ev, X).value + np.outer(Xc, Tc) + np.outer(Tc, Xc)
                    - (2.0 / n) * float(Xc @ T0) * g.value)
            put("E_T", eb.E, ev.E.value + (n - 2) * corr)

        put("B_T", eb.B, None if ev.B is None else psi ** 2 * ev.B.value)

        c_small = ev.C is not None and tn(ev.C) < tols.tol
        if c_small:
            put("B_hat_T", eb.B_hat, None if ev.B_hat is None else psi ** 2 * ev.B_hat.value)
        else:
            out["B_hat_T"] = (None, NOT_APPLICABLE, "C_T does not vanish")
        if c_small or (P is not None and not P.any()):
            put("W_symE", eb.W_symE, None if ev.W_symE is None else psi ** 2 * ev.W_symE.value)
        else:
            out["W_symE"] = (None, NOT_APPLICABLE, "C_T does not vanish and E is nontrivial")

    # potential equation on the rescaled metric: when g has harmonic Weyl tensor,
    # deltaW_bar_Z = (n-3) W_bar(Z* ^ d(-phi)) with everything taken in g_bar
    if tn(dW) < tols.tol:
        gb, gbi = eb.pack.g.value, eb.pack.g_inv
        Wb = eb.pack.weyl.truncate(0)
        theta = -dphi
        rhs = np.empty((n, n, n))
        for z in range(n):
            b = np.outer(gb[z], theta) - np.outer(theta, gb[z])
            rhs[:, :, z] = (n - 3) * curv_apply(Wb, Jet.constant(b, g.dim, 0), gbi.truncate(0)).value
        put("harmonic_weyl_potential", eb.pack.delta_weyl().value, rhs)
    else:
        out["harmonic_weyl_potential"] = (None, NOT_APPLICABLE, "g does not have harmonic Weyl tensor")
    return out


def check_transformation_laws(spec: MetricSpec, phi: ConformalFactorSpec, points,
                              tols: Tolerances = Tolerances(), law_tol: float = 1e-6,
                              corrupt: str | None = None) -> TransformationLawReport:
    """Compare every transformation law at each point; see the module docstring."""
    names = LAW_NAMES + EXTRA_LAWS
    if corrupt is not None and corrupt not in names:
        raise ValueError(f"unknown law {corrupt!r}; choose from {', '.join(names)}")
    bar = rescale_spec(spec, phi)
    laws = {name: LawResult(name) for name in names}
    pts = []
    for p in points:
        p = np.asarray(p, float)
        pts.append(p.tolist())
        try:
            res = _point_laws(spec, bar, phi, p, tols, law_tol, corrupt)
        except NumericError as exc:
            res = {name: (None, UNAVAILABLE, f"{type(exc).__name__}: {exc}") for name in names}
        for name in names:
            r, st, note = res[name]
            laws[name].residuals.append(None if r is None else float(r))
            laws[name].status.append(st)
            laws[name].notes.append(note)
    return TransformationLawReport(pts, law_tol, laws)


__all__ = ["rescale_spec", "check_transformation_laws", "TransformationLawReport", "LawResult",
           "LAW_NAMES", "EXTRA_LAWS"]
