"""The vector field T, the tensors built from it, and per-point classification.

With ``xi = sum_i e_i -| W(deltaW_{e_i})`` the covector
``T* = w^# xi / (n - 3)`` is the candidate for ``d phi`` of a conformal
change to a metric with harmonic Weyl tensor.  When ``w`` is invertible at
a point the inverse is taken in the jet ring, so ``T`` carries one
derivative.  When ``E`` has intermediate rank only a pointwise pseudoinverse
is available, and first derivatives of ``T`` come from central differences.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .curvature import (CurvaturePack, covariant_derivative, curvature_stack, divergence,
                        tensor_norm, trace, vector_norm)
from .errors import (InternalCheckFailed, NearRankBoundary, NumericError,
                     OrderExhausted, SpecError, Unavailable)
from .jets import Jet, jet_einsum, layout
from .metric_dsl import MetricSpec, eval_metric_at
from .weyl_algebra import WeylAlgebraPack, build_weyl_pack, curv_apply

CONFORMALLY_FLAT = "ConformallyFlat"
PASS = "NecessaryConditionsPass"
OBSTRUCTED = "Obstructed"
INDETERMINATE = "Indeterminate"
_SEVERITY = {CONFORMALLY_FLAT: 0, PASS: 1, INDETERMINATE: 2, OBSTRUCTED: 3}

# tensors whose vanishing is tested for the verdict, keyed by report name
VERDICT_TENSORS = ("E_T", "dT", "C_T", "B_T")
NORM_NAMES = ("W", "T", "dT", "C_T", "E_T", "B_T", "B_hat_T", "W_symE", "delta3_residual")
NORM_KIND = "dimension-normalized Frobenius (metric norm / sqrt(n**rank))"


@dataclass(frozen=True)
class Tolerances:
    tol: float = 1e-6
    rank_tol: float = 1e-8
    margin_factor: float = 1e3
    fd_step: float = 1e-4
    order: int = 4

    def __post_init__(self):
        if not (self.tol > 0 and self.rank_tol > 0 and self.fd_step > 0 and self.margin_factor > 0):
            raise ValueError("tolerances must be positive")
        if self.order not in (2, 3, 4):
            raise ValueError("jet order must be 2, 3 or 4")

    def to_record(self) -> dict:
        return {"tol": self.tol, "rank_tol": self.rank_tol, "margin_factor": self.margin_factor,
                "fd_step": self.fd_step, "order": self.order, "norm": NORM_KIND}


@dataclass(frozen=True)
class Verdict:
    kind: str
    failing: tuple = ()
    reason: str = ""

    def __post_init__(self):
        if self.kind not in _SEVERITY:
            raise ValueError(f"unknown verdict {self.kind!r}")

    @property
    def severity(self) -> int:
        return _SEVERITY[self.kind]

    def __str__(self):
        if self.failing:
            return f"{self.kind}({', '.join(self.failing)})"
        if self.reason:
            return f"{self.kind}({self.reason})"
        return self.kind

    def to_record(self) -> dict:
        return {"kind": self.kind, "failing": list(self.failing), "reason": self.reason}


def worst(verdicts) -> Verdict:
    verdicts = list(verdicts)
    if not verdicts:
        return Verdict(INDETERMINATE, reason="no points evaluated")
    top = max(v.severity for v in verdicts)
    same = [v for v in verdicts if v.severity == top]
    if same[0].kind == OBSTRUCTED:
        names = tuple(n for n in VERDICT_TENSORS if any(n in v.failing for v in same))
        return Verdict(OBSTRUCTED, names)
    return same[0]


# -- building blocks ----------------------------------------------------------------

def _sym(b: Jet) -> Jet:
    return b + b.swap(0, 1)


def _exterior(theta_nabla: Jet) -> Jet:
    """``d theta(X,Y) = (nabla_X theta)(Y) - (nabla_Y theta)(X)``."""
    return theta_nabla - theta_nabla.swap(0, 1)


def _lower(V: Jet, g: Jet) -> Jet:
    return jet_einsum("ij,j->i", g.truncate(min(g.order, V.order)), V.truncate(min(g.order, V.order)))


def xi_covector(pack: CurvaturePack) -> Jet:
    """``xi_x = 1/2 g^{ab} W^{cd}_{bx} deltaW_{cda}``."""
    dW = pack.delta_weyl()
    order = dW.order
    gi = pack.g_inv.truncate(order)
    dWup = jet_einsum("cda,ce,df->efa", dW, gi, gi)
    return 0.5 * jet_einsum("efa,ab,efbx->x", dWup, gi, pack.weyl.truncate(order))


@dataclass
class TField:
    vector: Jet
    covector: Jet
    fd_fallback: bool = False


def field_T(pack: CurvaturePack, wpack: WeylAlgebraPack) -> TField:
    """The vector field ``T``; jet-valued of order 1 (with order-4 metric jets)
    when ``rank_E = 0``, pointwise when ``0 < rank_E < n``, zero where ``W``
    vanishes."""
    n = pack.n
    if n < 4:
        raise SpecError("T needs dimension >= 4")
    if wpack.kernel.conformally_flat:
        order = max(0, pack.weyl.order - 1)
        z = Jet.zeros((n,), pack.g.dim, order)
        return TField(z, z)
    if not wpack.regular:
        raise NearRankBoundary("spectrum of w is too close to a rank change")
    xi = xi_covector(pack)
    if wpack.rank_E == 0:
        inv = wpack.w_sharp.truncate(min(xi.order, wpack.w_sharp.order))
        cov = jet_einsum("xm,m->x", inv, xi.truncate(inv.order)) * (1.0 / (n - 3))
    else:
        val = np.asarray(wpack.w_sharp) @ xi.value / (n - 3)
        cov = Jet.constant(val, pack.g.dim, 0)
    vec = jet_einsum("ij,j->i", pack.g_inv.truncate(cov.order), cov)
    return TField(vec, cov)


def cotton_T(pack: CurvaturePack, T: Jet) -> Jet:
    """``C_T = d^nabla k - W(.,.,.,T)``, cross-checked against ``deltaW/(n-3) - W(.,.,.,T)``."""
    n = pack.n
    dk = pack.dnabla_schouten()
    dW = pack.delta_weyl()
    order = min(dk.order, T.order)
    WT = jet_einsum("xyzt,t->xyz", pack.weyl.truncate(order), T.truncate(order))
    C = dk.truncate(order) - WT
    C_alt = dW.truncate(order) * (1.0 / (n - 3)) - WT
    scale = max(1.0, float(np.max(np.abs(C_alt.coeffs))))
    gap = float(np.max(np.abs((C - C_alt).coeffs)))
    if gap > 1e-8 * scale:
        raise InternalCheckFailed(f"two forms of C_T disagree by {gap:.3g}")
    return C


def conformal_ricci_E(pack: CurvaturePack, V: Jet) -> Jet:
    """``E_V = Ric0 + (n-2)(nabla V* + V* (x) V* - (div V + |V|^2) g / n)``."""
    if V.order < 1:
        raise OrderExhausted("E_V needs V with jet order >= 1")
    n = pack.n
    Vc = _lower(V, pack.g)
    nV = covariant_derivative(Vc, pack.gamma)
    order = nV.order
    g = pack.g.truncate(order)
    gi = pack.g_inv.truncate(order)
    Vc0, V0 = Vc.truncate(order), V.truncate(order)
    div = trace(nV, gi, 0, 1)
    sq = jet_einsum("i,i->", Vc0, V0)
    ric0 = pack.ricci.truncate(order) - pack.scalar.truncate(order) * g * (1.0 / n)
    F = nV + jet_einsum("i,j->ij", Vc0, Vc0) - (div + sq) * g * (1.0 / n)
    E = ric0 + (n - 2) * F
    tr = abs(float(trace(E, gi, 0, 1).value))
    # E cancels by design, so measure against the terms rather than E
    terms = max(np.max(np.abs(ric0.value)), (n - 2) * np.max(np.abs(F.value)))
    scale = max(1.0, float(terms * np.max(np.abs(gi.value))) * n)
    if tr > 1e-9 * scale:
        raise InternalCheckFailed(f"E_V is not trace-free (trace {tr:.3g})")
    return E


def d_covector(pack: CurvaturePack, T: Jet) -> Jet:
    """``d T*`` for the vector field ``T``."""
    if T.order < 1:
        raise OrderExhausted("d T* needs T with jet order >= 1")
    return _exterior(covariant_derivative(_lower(T, pack.g), pack.gamma))


def _bach_common(pack: CurvaturePack):
    ddW = pack.delta1_delta4_weyl()
    order = ddW.order
    gi = pack.g_inv.truncate(order)
    W = pack.weyl.truncate(order)
    return ddW, order, gi, W


def _check_sym_tracefree(B: Jet, gi: Jet, what: str, scale: float):
    asym = float(np.max(np.abs((B - B.swap(0, 1)).value)))
    tr = abs(float(trace(B, gi, 0, 1).value)) / max(1.0, float(np.max(np.abs(gi.value))) * B.shape[0])
    if max(asym, tr) > 1e-8 * max(1.0, scale):
        raise InternalCheckFailed(f"{what} is not symmetric and trace-free "
                                  f"(asym {asym:.3g}, trace {tr:.3g})")


def bach_T(pack: CurvaturePack, T: Jet, C: Jet, E: Jet | None) -> Jet:
    """The generalized Bach tensor at jet order 0."""
    if E is None:
        raise Unavailable("B_T needs E_T")
    n = pack.n
    ddW, order, gi, W = _bach_common(pack)
    T0 = T.truncate(order)
    Tc = _lower(T0, pack.g)
    CT = jet_einsum("txy,t->xy", C.truncate(order), T0)
    terms = [ddW,
             (n - 3) / (n - 2) * curv_apply(W, pack.ricci.truncate(order), gi),
             -(n - 4) / (n - 2) * curv_apply(W, _sym(E.truncate(order)), gi),
             -(n - 3) * (n - 4) * (curv_apply(W, jet_einsum("i,j->ij", Tc, Tc), gi) + _sym(CT))]
    B = terms[0] + terms[1] + terms[2] + terms[3]
    _check_sym_tracefree(B, gi, "B_T", max(float(np.max(np.abs(t.value))) for t in terms))
    return B


def classical_bach(pack: CurvaturePack) -> Jet:
    """``delta1 delta4 W + 1/2 W(Ric)``."""
    ddW, order, gi, W = _bach_common(pack)
    return ddW + 0.5 * curv_apply(W, pack.ricci.truncate(order), gi)


def bach_hat_and_wsymE(pack: CurvaturePack, T: Jet, E: Jet | None) -> tuple[Jet, Jet]:
    """``(B_hat_T, W(sym E_T))``."""
    if E is None:
        raise Unavailable("B_hat_T needs E_T")
    n = pack.n
    ddW, order, gi, W = _bach_common(pack)
    T0 = T.truncate(order)
    WTT = jet_einsum("txys,t,s->xy", W, T0, T0)
    B_hat = (ddW + (n - 3) / (n - 2) * curv_apply(W, pack.ricci.truncate(order), gi)
             - (n - 3) * (n - 4) * WTT)
    wse = curv_apply(W, _sym(E.truncate(order)), gi)
    return B_hat, wse


def delta3_terms(pack: CurvaturePack, C: Jet, T: Jet) -> tuple[Jet, Jet, Jet]:
    """``(delta_3 C_T, C_T(.,.,T), W(d T*))`` at order 0."""
    if C.order < 1 or T.order < 1:
        raise Unavailable("delta_3 residual needs C_T and T at jet order >= 1")
    d3C = divergence(C, pack.g_inv, pack.gamma, 3)
    order = d3C.order
    CT = jet_einsum("xyt,t->xy", C.truncate(order), T.truncate(order))
    dT = d_covector(pack, T).truncate(order)
    return d3C, CT, curv_apply(pack.weyl.truncate(order), dT, pack.g_inv.truncate(order))


def delta3_residual(pack: CurvaturePack, C: Jet, T: Jet, weight: float | None = None) -> float:
    """Normalized norm of ``delta_3 C_T - weight * C_T(.,.,T) + W(d T*)``.

    The identity holds with ``weight = n - 3`` (the default); with
    ``weight = 1`` it agrees with that only in dimension 4.
    """
    d3C, CT, WdT = delta3_terms(pack, C, T)
    w = pack.n - 3 if weight is None else weight
    return tensor_norm(d3C - w * CT + WdT, pack.g_inv)


# -- finite-difference fallback -----------------------------------------------------

def _pointwise_T(spec: MetricSpec, point, tols: Tolerances) -> tuple[np.ndarray, int]:
    g, gi = eval_metric_at(spec, point, order=3)
    pack = curvature_stack(g, gi, point)
    wpack = build_weyl_pack(pack, tols.rank_tol, tols.tol, tols.margin_factor)
    if not wpack.regular:
        raise NearRankBoundary("finite-difference stencil touches a rank change")
    return field_T(pack, wpack).vector.value, wpack.rank_E


def fd_T_jet(spec: MetricSpec, point, tols: Tolerances, rank_E: int) -> Jet:
    """Order-1 jet of ``T`` from central differences of its pointwise values."""
    point = np.asarray(point, float)
    n = spec.dim
    lay = layout(n, 1)
    base, r0 = _pointwise_T(spec, point, tols)
    if r0 != rank_E:
        raise NearRankBoundary("rank_E differs between jet and pointwise evaluation")
    coeffs = np.zeros((n, lay.size))
    coeffs[:, 0] = base
    h = tols.fd_step
    for k in range(n):
        step = np.zeros(n)
        step[k] = h
        plus, rp = _pointwise_T(spec, point + step, tols)
        minus, rm = _pointwise_T(spec, point - step, tols)
        if rp != rank_E or rm != rank_E:
            raise NearRankBoundary("rank_E is not constant across the difference stencil")
        alpha = tuple(int(i == k) for i in range(n))
        coeffs[:, lay.index[alpha]] = (plus - minus) / (2 * h)
    return Jet(coeffs, n, 1)


# -- per-point pipeline -------------------------------------------------------------

@dataclass
class InvariantReport:
    point: list
    rank_E: int | None
    regular: bool | None
    T: list | None
    norms: dict
    availability: dict
    verdict: Verdict
    fd_fallback: bool = False
    ker_W_dim: int | None = None
    error: str | None = None
    error_kind: str | None = None

    def to_record(self) -> dict:
        return {
            "point": [float(x) for x in self.point],
            "rank_E": self.rank_E,
            "regular": self.regular,
            "T": self.T,
            "norms": {k: (None if v is None else float(v)) for k, v in self.norms.items()},
            "availability": dict(self.availability),
            "verdict": self.verdict.to_record(),
            "fd_fallback": self.fd_fallback,
            "ker_W_dim": self.ker_W_dim,
            "error": self.error,
            "error_kind": self.error_kind,
        }


@dataclass
class PointEvaluation:
    """Every intermediate of the per-point pipeline; ``None`` marks unavailable."""
    point: np.ndarray
    pack: CurvaturePack
    wpack: WeylAlgebraPack
    T: TField | None = None
    C: Jet | None = None
    E: Jet | None = None
    dT: Jet | None = None
    B: Jet | None = None
    B_hat: Jet | None = None
    W_symE: Jet | None = None
    delta3: float | None = None
    notes: dict = field(default_factory=dict)


def _attempt(ev: PointEvaluation, name: str, fn):
    try:
        return fn()
    except (OrderExhausted, Unavailable, NearRankBoundary) as exc:
        ev.notes[name] = str(exc)
        return None


def evaluate_point(spec: MetricSpec, point, tols: Tolerances = Tolerances()) -> PointEvaluation:
    point = np.asarray(point, float)
    if spec.dim < 4:
        raise SpecError("invariants need dimension >= 4")
    g, gi = eval_metric_at(spec, point, order=tols.order)
    pack = curvature_stack(g, gi, point)
    wpack = build_weyl_pack(pack, tols.rank_tol, tols.tol, tols.margin_factor)
    ev = PointEvaluation(point, pack, wpack)
    n = spec.dim
    T = _attempt(ev, "T", lambda: field_T(pack, wpack))
    if T is not None and 0 < wpack.rank_E < n:
        vec = _attempt(ev, "T", lambda: fd_T_jet(spec, point, tols, wpack.rank_E))
        if vec is None:
            T = None
        else:
            T = TField(vec, _lower(vec, g), fd_fallback=True)
    ev.T = T
    if T is None:
        return ev
    ev.C = _attempt(ev, "C_T", lambda: cotton_T(pack, T.vector))
    ev.E = _attempt(ev, "E_T", lambda: conformal_ricci_E(pack, T.vector))
    ev.dT = _attempt(ev, "dT", lambda: d_covector(pack, T.vector))
    if ev.C is not None:
        ev.B = _attempt(ev, "B_T", lambda: bach_T(pack, T.vector, ev.C, ev.E))
        ev.delta3 = _attempt(ev, "delta3_residual", lambda: delta3_residual(pack, ev.C, T.vector))
    hat = _attempt(ev, "B_hat_T", lambda: bach_hat_and_wsymE(pack, T.vector, ev.E))
    if hat is not None:
        ev.B_hat, ev.W_symE = hat
    return ev


def _norms(ev: PointEvaluation) -> tuple[dict, dict]:
    gi = ev.pack.g_inv
    vals = {
        "W": tensor_norm(ev.pack.weyl, gi),
        "T": None if ev.T is None else vector_norm(ev.T.vector, ev.pack.g),
        "dT": ev.dT, "C_T": ev.C, "E_T": ev.E, "B_T": ev.B,
        "B_hat_T": ev.B_hat, "W_symE": ev.W_symE,
        "delta3_residual": ev.delta3,
    }
    norms = {}
    for k in NORM_NAMES:
        v = vals[k]
        norms[k] = tensor_norm(v, gi) if isinstance(v, Jet) else v
    avail = {k: norms[k] is not None for k in NORM_NAMES}
    for k, v in norms.items():
        if v is not None and not (math.isfinite(v) and v >= 0):
            raise InternalCheckFailed(f"norm of {k} is not a finite non-negative number")
    return norms, avail


def _verdict(ev: PointEvaluation, norms: dict, tols: Tolerances) -> Verdict:
    wp = ev.wpack
    if norms["W"] < tols.tol:
        return Verdict(CONFORMALLY_FLAT)
    if not wp.regular:
        return Verdict(INDETERMINATE, reason="near rank boundary")
    if wp.rank_E > 0:
        return Verdict(INDETERMINATE,
                       reason="rank_E > 0: E_T = 0 is sufficient but no longer necessary")
    missing = [k for k in VERDICT_TENSORS if norms[k] is None]
    if missing:
        return Verdict(INDETERMINATE, reason="unavailable at this jet order: " + ", ".join(missing))
    failing = tuple(k for k in VERDICT_TENSORS if norms[k] >= tols.tol)
    return Verdict(OBSTRUCTED, failing) if failing else Verdict(PASS)


def report_point(spec: MetricSpec, point, tols: Tolerances = Tolerances()) -> InvariantReport:
    """Evaluate one point; numeric failures become an Indeterminate record."""
    point = np.asarray(point, float)
    try:
        ev = evaluate_point(spec, point, tols)
        norms, avail = _norms(ev)
    except NumericError as exc:
        return InvariantReport(point.tolist(), None, None, None,
                               {k: None for k in NORM_NAMES}, {k: False for k in NORM_NAMES},
                               Verdict(INDETERMINATE, reason=f"numeric failure: {exc}"),
                               error=str(exc), error_kind=type(exc).__name__)
    wp = ev.wpack
    return InvariantReport(
        point.tolist(), wp.rank_E, wp.regular,
        None if ev.T is None else [float(x) for x in ev.T.vector.value],
        norms, avail, _verdict(ev, norms, tols),
        fd_fallback=bool(ev.T is not None and ev.T.fd_fallback),
        ker_W_dim=wp.ker_W_dim)


def _report_star(args):
    return report_point(*args)


def _use_parallel(parallel, count: int) -> bool:
    if os.environ.get("CEL_NO_PARALLEL") == "1":
        return False
    if parallel is None:
        return count >= 32 and (os.cpu_count() or 1) > 1
    return bool(parallel)


@dataclass
class Classification:
    reports: list
    aggregate: Verdict
    tolerances: Tolerances

    @property
    def any_numeric_failure(self) -> bool:
        return any(r.error is not None for r in self.reports)


def classify(spec: MetricSpec, points, tols: Tolerances = Tolerances(),
             parallel: bool | None = None) -> Classification:
    """Per-point reports and the worst verdict over all points."""
    pts = [np.asarray(p, float) for p in points]
    if spec.region is not None:
        lo = np.array([r[0] for r in spec.region])
        hi = np.array([r[1] for r in spec.region])
        for p in pts:
            if p.shape != (spec.dim,) or np.any(p < lo) or np.any(p > hi):
                raise SpecError(f"point {p.tolist()} is outside the declared region")
    jobs = [(spec, p, tols) for p in pts]
    if _use_parallel(parallel, len(jobs)):
        workers = min(len(jobs), os.cpu_count() or 1)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(_report_star, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        reports = [report_point(*j) for j in jobs]
    return Classification(reports, worst(r.verdict for r in reports), tols)


__all__ = [
    "CONFORMALLY_FLAT", "PASS", "OBSTRUCTED", "INDETERMINATE", "Tolerances", "Verdict", "worst",
    "xi_covector", "TField", "field_T", "cotton_T", "conformal_ricci_E", "d_covector",
    "bach_T", "classical_bach", "bach_hat_and_wsymE", "delta3_terms", "delta3_residual",
    "fd_T_jet", "InvariantReport", "PointEvaluation", "evaluate_point", "report_point",
    "Classification", "classify",
]
