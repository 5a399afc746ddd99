"""Curvature stack and first-order operators on jet-valued tensors.

Conventions (all components in the coordinate frame, covariant slots):

* ``R(X,Y,Z,T) = g(nabla_X nabla_Y Z - nabla_Y nabla_X Z - nabla_[X,Y] Z, T)``
* ``Ric(X,Y) = trace(V -> R_{V,X} Y)``, so the unit sphere has ``Ric = (n-1) g``
* ``W = R - g (.) k`` with the Schouten tensor ``k = (Ric - S g / (2(n-1))) / (n-2)``
* ``(nabla T)[k, i1..is]``: the differentiation slot comes first
* ``d^nabla b(X,Y,Z) = (nabla_X b)(Y,Z) - (nabla_Y b)(X,Z)``

Every derivative consumes one jet order.  Contractions always go through
``g^{ij}``; no orthonormal frames are built.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import OrderExhausted, SpecError, SymmetryCheckFailed
from .jets import Jet, jet_einsum

_LETTERS = "abcdefghijklmnopqrstuvwxy"


def _require(T: Jet, order: int, what: str):
    if T.order < order:
        raise OrderExhausted(f"{what} needs jet order >= {order}, have {T.order}")


# -- basic building blocks -------------------------------------------------------

def christoffel(g: Jet, g_inv: Jet) -> Jet:
    """``gamma[k, i, j] = Gamma^k_{ij}``; one order below ``g``."""
    _require(g, 1, "christoffel")
    dg = g.gradient()  # dg[a, i, j] = d_a g_ij
    lower = 0.5 * (dg.transpose(2, 0, 1) + dg.transpose(2, 1, 0) - dg)  # [l, i, j]
    return jet_einsum("kl,lij->kij", g_inv, lower)


def riemann_tensor(g: Jet, gamma: Jet) -> tuple[Jet, Jet]:
    """Return ``(R, Rm)`` with ``R[i,j,k,t]`` covariant and
    ``Rm[l,i,j,k]`` the components of ``R_{d_i, d_j} d_k`` along ``d_l``."""
    _require(gamma, 1, "riemann")
    dG = gamma.gradient()  # dG[a, l, j, k] = d_a Gamma^l_jk
    order = dG.order
    G = gamma.truncate(order)
    d_part = dG.transpose(1, 0, 2, 3) - dG.transpose(1, 2, 0, 3)  # [l, i, j, k]
    quad = jet_einsum("mjk,lim->lijk", G, G)
    Rm = d_part + quad - quad.swap(1, 2)
    R = jet_einsum("lijk,lt->ijkt", Rm, g.truncate(order))
    return R, Rm


def kulkarni_nomizu(a: Jet, b: Jet) -> Jet:
    """``(a (.) b)(X,Y,Z,T) = a(X,T)b(Y,Z) + a(Y,Z)b(X,T) - a(X,Z)b(Y,T) - a(Y,T)b(X,Z)``."""
    if a.shape != b.shape or a.ndim != 2:
        raise ValueError("kulkarni_nomizu needs two (0,2) tensors of equal shape")
    p1 = jet_einsum("xt,yz->xyzt", a, b)
    p2 = jet_einsum("yz,xt->xyzt", a, b)
    p3 = jet_einsum("xz,yt->xyzt", a, b)
    p4 = jet_einsum("yt,xz->xyzt", a, b)
    return p1 + p2 - p3 - p4


def covariant_derivative(T: Jet, gamma: Jet) -> Jet:
    """``(nabla T)[k, i1..is] = d_k T - sum_m Gamma^l_{k i_m} T[..l..]`` for a (0,s) tensor."""
    _require(T, 1, "covariant_derivative")
    dT = T.gradient()
    order = dT.order
    G = gamma.truncate(min(order, gamma.order))
    s = T.ndim
    if s == 0:
        return dT
    idx = _LETTERS[:s]
    out = dT
    for m in range(s):
        t_sub = idx[:m] + "z" + idx[m + 1:]
        out = out - jet_einsum(f"zk{idx[m]},{t_sub}->k{idx}", G, T.truncate(order))
    return out


def divergence(T: Jet, g_inv: Jet, gamma: Jet, r: int) -> Jet:
    """``delta_r T``: trace of ``nabla T`` between the derivative slot and slot ``r`` (1-based)."""
    s1 = T.ndim
    if not 1 <= r <= s1:
        raise IndexError(f"divergence slot {r} out of range 1..{s1}")
    nT = covariant_derivative(T, gamma)
    idx = _LETTERS[:s1]
    sub = idx[: r - 1] + "z" + idx[r:]
    out = idx[: r - 1] + idx[r:]
    return jet_einsum(f"{'y' + sub},yz->{out}", nT, g_inv)


def dnabla_sym2(b: Jet, gamma: Jet) -> Jet:
    """``d^nabla b(X,Y,Z) = (nabla_X b)(Y,Z) - (nabla_Y b)(X,Z)``."""
    nb = covariant_derivative(b, gamma)
    return nb - nb.swap(0, 1)


def raise_index(T: Jet, g_inv, axis: int) -> Jet:
    """Contract slot ``axis`` of ``T`` with ``g^{..}``."""
    idx = _LETTERS[: T.ndim]
    sub_out = idx[:axis] + "z" + idx[axis + 1:]
    return jet_einsum(f"{idx},{idx[axis]}z->{sub_out}", T, g_inv)


def trace(T: Jet, g_inv, a: int, b: int) -> Jet:
    """Metric trace over slots ``a`` and ``b``."""
    idx = list(_LETTERS[: T.ndim])
    idx[a], idx[b] = "y", "z"
    out = "".join(ch for k, ch in enumerate(idx) if k not in (a, b))
    return jet_einsum(f"{''.join(idx)},yz->{out}", T, g_inv)


# -- norms (values only) -----------------------------------------------------------

def tensor_norm(T, g_inv, normalized: bool = True) -> float:
    """Metric norm of a covariant tensor's value.

    With ``normalized`` the norm is divided by ``sqrt(n**rank)``.
    """
    t = T.value if isinstance(T, Jet) else np.asarray(T, float)
    gi = g_inv.value if isinstance(g_inv, Jet) else np.asarray(g_inv, float)
    if t.ndim == 0:
        return float(abs(t))
    raised = t
    for ax in range(t.ndim):
        raised = np.moveaxis(np.tensordot(gi, raised, axes=([1], [ax])), 0, ax)
    sq = float(np.sum(t * raised))
    n = gi.shape[0]
    val = np.sqrt(max(sq, 0.0))
    return float(val / np.sqrt(n ** t.ndim)) if normalized else float(val)


def vector_norm(V, g, normalized: bool = True) -> float:
    v = V.value if isinstance(V, Jet) else np.asarray(V, float)
    gv = g.value if isinstance(g, Jet) else np.asarray(g, float)
    val = float(np.sqrt(max(v @ gv @ v, 0.0)))
    return val / np.sqrt(len(v)) if normalized else val


# -- the pack ----------------------------------------------------------------------

@dataclass
class CurvaturePack:
    point: np.ndarray
    g: Jet
    g_inv: Jet
    gamma: Jet
    riemann: Jet
    ricci: Jet
    scalar: Jet
    schouten: Jet | None = None
    weyl: Jet | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n(self) -> int:
        return self.g.shape[0]

    # cached derived operators -------------------------------------------------
    def delta_weyl(self) -> Jet:
        """``delta W = delta_4 W``."""
        if "dW" not in self._cache:
            self._cache["dW"] = divergence(self.weyl, self.g_inv, self.gamma, 4)
        return self._cache["dW"]

    def dnabla_schouten(self) -> Jet:
        if "dk" not in self._cache:
            self._cache["dk"] = dnabla_sym2(self.schouten, self.gamma)
        return self._cache["dk"]

    def delta1_delta4_weyl(self) -> Jet:
        if "ddW" not in self._cache:
            self._cache["ddW"] = divergence(self.delta_weyl(), self.g_inv, self.gamma, 1)
        return self._cache["ddW"]


def riemann_pack(g: Jet, g_inv: Jet, gamma: Jet, point=None, check: bool = True) -> CurvaturePack:
    """Riemann, Ricci and scalar curvature from ``g`` and its Christoffel symbols."""
    R, Rm = riemann_tensor(g, gamma)
    ric = jet_einsum("iijk->jk", Rm)
    ric = 0.5 * (ric + ric.swap(0, 1))  # symmetric up to rounding; make it exact
    order = ric.order
    S = jet_einsum("jk,jk->", ric, g_inv.truncate(order))
    pack = CurvaturePack(np.asarray(point, float) if point is not None else None,
                         g, g_inv, gamma, R, ric, S)
    if check:
        res = riemann_symmetry_residuals(R)
        scale = max(1.0, float(np.max(np.abs(R.coeffs))))
        bad = {k: v for k, v in res.items() if v > 1e-8 * scale}
        if bad:
            raise SymmetryCheckFailed(f"Riemann tensor symmetries violated: {bad}")
    return pack


def schouten_weyl(pack: CurvaturePack) -> CurvaturePack:
    """Add the Schouten tensor and the Weyl tensor to ``pack``."""
    n = pack.n
    if n < 3:
        raise SpecError("the Schouten tensor needs dimension >= 3")
    order = pack.ricci.order
    g = pack.g.truncate(order)
    k = (pack.ricci - pack.scalar * g * (1.0 / (2 * (n - 1)))) * (1.0 / (n - 2))
    pack.schouten = k
    pack.weyl = pack.riemann - kulkarni_nomizu(g, k)
    return pack


def curvature_stack(g: Jet, g_inv: Jet, point=None, check: bool = True) -> CurvaturePack:
    gamma = christoffel(g, g_inv)
    pack = riemann_pack(g, g_inv, gamma, point, check=check)
    return schouten_weyl(pack)


# -- identity residuals ------------------------------------------------------------

def _maxabs(T: Jet | np.ndarray) -> float:
    a = T.coeffs if isinstance(T, Jet) else np.asarray(T)
    return float(np.max(np.abs(a))) if a.size else 0.0


def riemann_symmetry_residuals(R: Jet) -> dict:
    """Max-coefficient residuals of the algebraic curvature symmetries."""
    return {
        "antisym_12": _maxabs(R + R.transpose(1, 0, 2, 3)),
        "antisym_34": _maxabs(R + R.transpose(0, 1, 3, 2)),
        "pair": _maxabs(R - R.transpose(2, 3, 0, 1)),
        "bianchi": _maxabs(R + R.transpose(1, 2, 0, 3) + R.transpose(2, 0, 1, 3)),
    }


def weyl_trace_residual(pack: CurvaturePack) -> float:
    """Largest coefficient of any metric trace of ``W``."""
    W = pack.weyl
    gi = pack.g_inv.truncate(W.order)
    return max(_maxabs(trace(W, gi, a, b)) for a in range(4) for b in range(a + 1, 4))
