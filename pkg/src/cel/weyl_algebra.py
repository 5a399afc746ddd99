"""The Weyl tensor as an operator on 2-forms and the kernel bundle E.

Two-forms are expanded in the coordinate basis ``dx^i ^ dx^j`` (``i < j``,
lexicographic), with the inner product for which ``|e1* ^ e2*| = 1`` on an
orthonormal coframe.  In that basis the Weyl operator has matrix
``M[(z,t),(i,j)] = W^{ij}_{zt}`` (first two slots raised).

The covector operator ``w`` (negative Ricci contraction of the squared Weyl
operator) is stored as a matrix ``A[x, m]`` acting by ``(w theta)_x =
A[x, m] theta_m``; it is self-adjoint for the inner product ``g^{-1}``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations

import numpy as np

from .curvature import CurvaturePack, raise_index, tensor_norm
from .errors import IsomorphismViolation, SymmetryCheckFailed
from .jets import Jet, jet_einsum, jet_inv

DEFAULT_RANK_TOL = 1e-8
DEFAULT_MARGIN_FACTOR = 1e3


@dataclass(frozen=True)
class TwoFormBasis:
    n: int
    pairs: tuple

    @property
    def size(self) -> int:
        return len(self.pairs)

    @property
    def expand(self) -> np.ndarray:
        """``E[p, z, t]``: +1 at the pair ``p = (z, t)``, -1 at ``(t, z)``."""
        return _expand_matrix(self.n)

    def gram(self, g_inv):
        """Induced inner product ``g^{ik} g^{jl} - g^{il} g^{jk}``."""
        i = np.array([p[0] for p in self.pairs])
        j = np.array([p[1] for p in self.pairs])
        if isinstance(g_inv, Jet):
            full = jet_einsum("ik,jl->ijkl", g_inv, g_inv)
            full = full - full.swap(2, 3)
            return Jet(_pick(full.coeffs, i, j), g_inv.dim, g_inv.order)
        gi = np.asarray(g_inv, float)
        full = np.einsum("ik,jl->ijkl", gi, gi)
        return _pick(full - full.swapaxes(2, 3), i, j)


def _pick(arr, i, j):
    return arr[i[:, None], j[:, None], i[None, :], j[None, :]]


def two_form_basis(n: int) -> TwoFormBasis:
    return TwoFormBasis(n, tuple(combinations(range(n), 2)))


@lru_cache(maxsize=None)
def _expand_matrix(n: int) -> np.ndarray:
    pairs = list(combinations(range(n), 2))
    E = np.zeros((len(pairs), n, n))
    for p, (z, t) in enumerate(pairs):
        E[p, z, t] = 1.0
        E[p, t, z] = -1.0
    return E


# -- operators ------------------------------------------------------------------------

def weyl_endomorphism(W: Jet, g_inv: Jet, basis: TwoFormBasis | None = None,
                      check: bool = True) -> Jet:
    """Matrix of the Weyl operator on 2-forms, ``M[(z,t),(i,j)] = W^{ij}_{zt}``."""
    n = W.shape[0]
    basis = basis or two_form_basis(n)
    gi = g_inv.truncate(min(W.order, g_inv.order))
    Wup = raise_index(raise_index(W, gi, 0), gi, 1)  # W^{ij}_{zt}
    i = np.array([p[0] for p in basis.pairs])
    j = np.array([p[1] for p in basis.pairs])
    M = Jet(Wup.coeffs[i[None, :], j[None, :], i[:, None], j[:, None]], W.dim, W.order)
    if check:
        G = basis.gram(gi.value)
        GM = G @ M.value
        scale = max(1.0, float(np.max(np.abs(GM))))
        if np.max(np.abs(GM - GM.T)) > 1e-10 * scale:
            raise SymmetryCheckFailed("Weyl operator is not symmetric on 2-forms; "
                                      "input lacks curvature symmetries")
    return M


def curv_apply(A: Jet, b, g_inv: Jet) -> Jet:
    """``A(b)(Z,T) = A(Y,Z,T,X) b(X',Y') g^{XX'} g^{YY'}`` for a (0,2) tensor ``b``."""
    if A.ndim != 4 or getattr(b, "ndim", np.ndim(b)) != 2:
        raise ValueError("curv_apply needs a (0,4) and a (0,2) tensor")
    bup = jet_einsum("ab,ac,bd->cd", b, g_inv, g_inv)  # b^{cd}
    return jet_einsum("cd,dztc->zt", bup, A)


def ricci_contraction_sq(M: Jet, basis: TwoFormBasis | None = None) -> Jet:
    """``w(theta) = sum_i d_i -| W^2(dx^i ^ theta)`` as a covector-operator matrix ``A[x, m]``."""
    N = M.shape[0]
    n = int(round((1 + np.sqrt(1 + 8 * N)) / 2))
    basis = basis or two_form_basis(n)
    E = basis.expand
    M2 = jet_einsum("pq,qr->pr", M, M)
    # Q[a,b,z,t] = W^2(dx^a ^ dx^b)(d_z, d_t)
    Q = jet_einsum("pr,rab,pzt->abzt", M2, E, E)
    return jet_einsum("imix->xm", Q)


def w_from_weyl(W: Jet, g_inv: Jet) -> Jet:
    """Direct index form ``A[x, m] = 1/2 W^{im}_{cd} W^{cd}_{ix}`` (cross-check of
    :func:`ricci_contraction_sq`)."""
    gi = g_inv.truncate(min(W.order, g_inv.order))
    Wup = raise_index(raise_index(W, gi, 0), gi, 1)
    return 0.5 * jet_einsum("imcd,cdix->xm", Wup, Wup)


# -- pseudoinverse --------------------------------------------------------------------

def moore_penrose(A, rel_tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Moore-Penrose inverse of a symmetric matrix by eigendecomposition.

    Eigenvalues with ``|lambda| <= rel_tol * max|lambda|`` are treated as zero.
    """
    A = np.asarray(A, float)
    A = 0.5 * (A + A.T)
    w, V = np.linalg.eigh(A)
    top = np.max(np.abs(w)) if w.size else 0.0
    if top == 0.0:
        return np.zeros_like(A)
    keep = np.abs(w) > rel_tol * top
    inv = np.zeros_like(w)
    inv[keep] = 1.0 / w[keep]
    return (V * inv) @ V.T


def _symmetric_form(A, H):
    """``L^T A L^{-T}`` with ``H = L L^T``: the matrix of an ``H``-self-adjoint
    operator in an ``H``-orthonormal basis."""
    L = np.linalg.cholesky(H)
    At = L.T @ A @ np.linalg.inv(L.T)
    return 0.5 * (At + At.T), L


def moore_penrose_metric(A, H, rel_tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Moore-Penrose inverse of an operator that is self-adjoint w.r.t. ``H``."""
    At, L = _symmetric_form(np.asarray(A, float), np.asarray(H, float))
    return np.linalg.inv(L.T) @ moore_penrose(At, rel_tol) @ L.T


# -- the kernel bundle ----------------------------------------------------------------

@dataclass
class KernelInfo:
    rank_E: int
    E_basis: np.ndarray  # (rank_E, n) vectors, g-orthonormal
    regular: bool
    eigenvalues: np.ndarray  # of w, ascending
    conformally_flat: bool
    iso_residual: float = 0.0


def kernel_rank_E(w_values, W: Jet, g: Jet, g_inv: Jet,
                  rel_tol: float = DEFAULT_RANK_TOL,
                  zero_tol: float = 1e-6,
                  margin_factor: float = DEFAULT_MARGIN_FACTOR) -> KernelInfo:
    """Rank of ``E = {v : W(v,.,.,.) = 0}`` read off the kernel of ``w``.

    A point where the normalized ``|W|`` is below ``zero_tol`` counts as
    conformally flat (``rank_E = n``); it is regular only when the first
    and second derivatives of ``W`` vanish as well.
    """
    n = g.shape[0]
    gv, giv = g.value, g_inv.value
    At, L = _symmetric_form(np.asarray(w_values, float), giv)
    lam, U = np.linalg.eigh(At)
    frame_cov = np.linalg.inv(L.T) @ U  # columns: covectors, g^{-1}-orthonormal
    vecs = (giv @ frame_cov).T  # rows: vectors

    wnorm = tensor_norm(W, giv)
    if wnorm < zero_tol:
        deriv_scale = float(np.max(np.abs(W.coeffs))) if W.order else wnorm
        return KernelInfo(n, vecs, deriv_scale < zero_tol, lam, True)

    top = float(lam[-1])
    kernel = lam <= rel_tol * top
    rank = int(np.count_nonzero(kernel))
    retained = lam[~kernel]
    regular = bool(retained.size and retained[0] / top > margin_factor * rel_tol)
    basis = vecs[kernel]
    iso = 0.0
    if rank:
        tol_iso = 10.0 * np.sqrt(2.0 * rel_tol * top) + 1e-10 * (1.0 + wnorm)
        Wv = W.value
        for v in basis:
            iso = max(iso, tensor_norm(np.einsum("a,abcd->bcd", v, Wv), giv, normalized=False))
        if iso > tol_iso:
            raise IsomorphismViolation(
                f"kernel vector of w has |W(v,.,.,.)| = {iso:.3g} > {tol_iso:.3g}; "
                "rank tolerance is misconfigured")
    return KernelInfo(rank, basis, regular, lam, False, iso)


def kernel_dim_weyl_operator(M_values, g_inv_values, rel_tol: float = DEFAULT_RANK_TOL,
                             zero_tol: float = 1e-6) -> int:
    """``dim Ker`` of the Weyl operator on 2-forms at a point.

    Eigenvalues of the operator are compared against ``sqrt(rel_tol)`` times the
    largest one, matching the squared scale that ``rel_tol`` applies to ``w``.
    """
    M_values = np.asarray(M_values, float)
    N = M_values.shape[0]
    n = int(round((1 + np.sqrt(1 + 8 * N)) / 2))
    G = two_form_basis(n).gram(g_inv_values)
    # the operator is self-adjoint for G
    At, _ = _symmetric_form(M_values, G)
    mu = np.linalg.eigvalsh(At)
    top = float(np.max(np.abs(mu)))
    if top < zero_tol:
        return N
    return int(np.count_nonzero(np.abs(mu) <= np.sqrt(rel_tol) * top))


@dataclass
class WeylAlgebraPack:
    curv: Jet  # Weyl operator on 2-forms, N x N
    w: Jet  # covector operator A[x, m]
    w_sharp: Jet | np.ndarray | None  # jet inverse when rank_E = 0, else pointwise pseudoinverse
    kernel: KernelInfo
    ker_W_dim: int
    basis: TwoFormBasis = field(repr=False, default=None)

    @property
    def rank_E(self) -> int:
        return self.kernel.rank_E

    @property
    def regular(self) -> bool:
        return self.kernel.regular

    @property
    def E_basis(self) -> np.ndarray:
        return self.kernel.E_basis


def build_weyl_pack(pack: CurvaturePack, rel_tol: float = DEFAULT_RANK_TOL,
                    zero_tol: float = 1e-6,
                    margin_factor: float = DEFAULT_MARGIN_FACTOR) -> WeylAlgebraPack:
    basis = two_form_basis(pack.n)
    M = weyl_endomorphism(pack.weyl, pack.g_inv, basis)
    w = ricci_contraction_sq(M, basis)
    info = kernel_rank_E(w.value, pack.weyl, pack.g, pack.g_inv, rel_tol, zero_tol, margin_factor)
    if info.rank_E == 0 and info.regular:
        w_sharp = jet_inv(w)
    elif info.conformally_flat:
        w_sharp = np.zeros((pack.n, pack.n))
    else:
        w_sharp = moore_penrose_metric(w.value, pack.g_inv.value, rel_tol)
    kdim = kernel_dim_weyl_operator(M.value, pack.g_inv.value, rel_tol, zero_tol)
    return WeylAlgebraPack(M, w, w_sharp, info, kdim, basis)


def ker_weyl_lower_bound(rank_E: int, n: int) -> float:
    """Lower bound on ``dim Ker`` of the Weyl operator implied by ``rank_E``."""
    return rank_E * (n - (rank_E + 1) / 2)
