"""Truncated multivariate Taylor series ("jets") of total degree <= 4.

A :class:`Jet` stores, for every entry of a tensor of arbitrary shape, the
Taylor coefficients ``d^alpha f / alpha!`` of a function of ``dim`` variables
at a fixed base point.  Coefficients live on the last axis of a numpy array,
graded by total degree, so truncating to a lower order is a prefix slice.
Arithmetic between jets of different order truncates to the smaller one.
"""
from __future__ import annotations

import math
import re
from functools import lru_cache
from itertools import combinations_with_replacement, product

import numpy as np

from .errors import DomainError, OrderExhausted, SingularPoint

MAX_ORDER = 4

__all__ = [
    "Jet",
    "MAX_ORDER",
    "lift_variable",
    "jet_binary",
    "jet_elementary",
    "extract_partial",
    "jet_einsum",
    "jet_inv",
    "layout",
]


class Layout:
    """Multi-index bookkeeping for ``dim`` variables up to ``order``."""

    def __init__(self, dim: int, order: int):
        self.dim = dim
        self.order = order
        multis = []
        for d in range(order + 1):
            for combo in combinations_with_replacement(range(dim), d):
                alpha = [0] * dim
                for v in combo:
                    alpha[v] += 1
                multis.append(tuple(alpha))
        self.multis = multis
        self.index = {a: i for i, a in enumerate(multis)}
        self.size = len(multis)
        # bounds[d] = first position of degree d; bounds[order+1] = size
        self.bounds = [0] + [math.comb(dim + d, d) for d in range(order + 1)]
        self.factorials = np.array(
            [math.prod(math.factorial(k) for k in a) for a in multis], dtype=float
        )
        self._build_mul()
        self._build_diff()

    def _build_mul(self):
        ia, ib, ic = [], [], []
        for c_pos, c in enumerate(self.multis):
            for a in product(*(range(k + 1) for k in c)):
                b = tuple(ci - ai for ci, ai in zip(c, a))
                ia.append(self.index[a])
                ib.append(self.index[b])
                ic.append(c_pos)
        # generated grouped by ic already
        self.mul_a = np.array(ia, dtype=np.intp)
        self.mul_b = np.array(ib, dtype=np.intp)
        ic = np.array(ic, dtype=np.intp)
        self.mul_starts = np.flatnonzero(np.r_[True, ic[1:] != ic[:-1]])

    def _build_diff(self):
        self.diff_src = []
        self.diff_fac = []
        if self.order == 0:
            return
        lower = self.multis[: self.bounds[self.order]]
        for i in range(self.dim):
            src, fac = [], []
            for beta in lower:
                up = list(beta)
                up[i] += 1
                src.append(self.index[tuple(up)])
                fac.append(beta[i] + 1)
            self.diff_src.append(np.array(src, dtype=np.intp))
            self.diff_fac.append(np.array(fac, dtype=float))


@lru_cache(maxsize=None)
def layout(dim: int, order: int) -> Layout:
    if not 0 <= order <= MAX_ORDER:
        raise ValueError(f"jet order must be in 0..{MAX_ORDER}, got {order}")
    if dim < 1:
        raise ValueError("jet dimension must be positive")
    return Layout(dim, order)


def _mul_raw(a: np.ndarray, b: np.ndarray, lay: Layout) -> np.ndarray:
    prod_ = a[..., lay.mul_a] * b[..., lay.mul_b]
    return np.add.reduceat(prod_, lay.mul_starts, axis=-1)


def _div_raw(a: np.ndarray, b: np.ndarray, lay: Layout) -> np.ndarray:
    """Solve ``b * q = a`` degree by degree."""
    b0 = b[..., 0]
    if np.any(b0 == 0.0) or not np.all(np.isfinite(b0)):
        raise SingularPoint("division by a jet with zero constant term")
    shape = np.broadcast_shapes(a.shape, b.shape)
    q = np.zeros(shape)
    q[..., 0] = a[..., 0] / b0
    for d in range(1, lay.order + 1):
        lo, hi = lay.bounds[d], lay.bounds[d + 1]
        # q has zero coefficients from degree d on, so the degree-d part of
        # b*q collects exactly the lower-degree contributions.
        bq = _mul_raw(b, q, lay)
        q[..., lo:hi] = (a[..., lo:hi] - bq[..., lo:hi]) / b0[..., None]
    return q


class Jet:
    """Tensor of truncated Taylor expansions sharing one base point.

    ``coeffs`` has shape ``shape + (M,)`` where ``M = C(dim + order, order)``.
    """

    __slots__ = ("coeffs", "dim", "order")
    __array_priority__ = 100

    def __init__(self, coeffs, dim: int, order: int):
        coeffs = np.asarray(coeffs, dtype=float)
        lay = layout(dim, order)
        if coeffs.shape[-1:] != (lay.size,):
            raise ValueError(
                f"coefficient axis has length {coeffs.shape[-1:]}, expected {lay.size}"
            )
        self.coeffs = coeffs
        self.dim = dim
        self.order = order

    # -- construction ---------------------------------------------------------
    @classmethod
    def constant(cls, value, dim: int, order: int) -> "Jet":
        value = np.asarray(value, dtype=float)
        lay = layout(dim, order)
        c = np.zeros(value.shape + (lay.size,))
        c[..., 0] = value
        return cls(c, dim, order)

    @classmethod
    def zeros(cls, shape, dim: int, order: int) -> "Jet":
        return cls(np.zeros(tuple(shape) + (layout(dim, order).size,)), dim, order)

    @classmethod
    def stack(cls, jets, axis: int = 0) -> "Jet":
        jets = list(jets)
        order = min(j.order for j in jets)
        dim = jets[0].dim
        arrs = [j.truncate(order).coeffs for j in jets]
        if axis < 0:
            axis -= 1
        return cls(np.stack(arrs, axis=axis), dim, order)

    # -- basic properties -----------------------------------------------------
    @property
    def layout(self) -> Layout:
        return layout(self.dim, self.order)

    @property
    def shape(self) -> tuple:
        return self.coeffs.shape[:-1]

    @property
    def ndim(self) -> int:
        return self.coeffs.ndim - 1

    @property
    def value(self) -> np.ndarray:
        """Constant term (the plain value at the base point)."""
        return self.coeffs[..., 0]

    def truncate(self, order: int) -> "Jet":
        if order == self.order:
            return self
        if order > self.order:
            raise OrderExhausted(f"cannot raise jet order {self.order} to {order}")
        return Jet(self.coeffs[..., : layout(self.dim, order).size], self.dim, order)

    def coeff(self, alpha) -> np.ndarray:
        alpha = tuple(alpha)
        if sum(alpha) > self.order:
            raise OrderExhausted(f"|alpha|={sum(alpha)} exceeds jet order {self.order}")
        return self.coeffs[..., self.layout.index[alpha]]

    def coeffs_dict(self) -> dict:
        """Scalar jets only: ``{alpha: coefficient}``."""
        if self.shape:
            raise ValueError("coeffs_dict() needs a scalar jet")
        return {a: float(c) for a, c in zip(self.layout.multis, self.coeffs)}

    def __repr__(self):
        return f"Jet(shape={self.shape}, dim={self.dim}, order={self.order})"

    # -- tensor-axis manipulation ----------------------------------------------
    def __getitem__(self, key) -> "Jet":
        if not isinstance(key, tuple):
            key = (key,)
        if any(k is Ellipsis for k in key):
            raise IndexError("Ellipsis indexing is not supported on jets")
        return Jet(self.coeffs[key + (slice(None),)], self.dim, self.order)

    def transpose(self, *axes) -> "Jet":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        if not axes:
            axes = tuple(reversed(range(self.ndim)))
        return Jet(np.transpose(self.coeffs, tuple(axes) + (self.ndim,)), self.dim, self.order)

    def swap(self, a: int, b: int) -> "Jet":
        return Jet(np.swapaxes(self.coeffs, a, b), self.dim, self.order)

    def moveaxis(self, source: int, dest: int) -> "Jet":
        return Jet(np.moveaxis(self.coeffs, source, dest if dest >= 0 else dest - 1),
                   self.dim, self.order)

    def sum(self, axis=None) -> "Jet":
        if axis is None:
            axis = tuple(range(self.ndim))
        return Jet(self.coeffs.sum(axis=axis), self.dim, self.order)

    def reshape(self, *shape) -> "Jet":
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        return Jet(self.coeffs.reshape(tuple(shape) + (self.coeffs.shape[-1],)), self.dim, self.order)

    # -- arithmetic ------------------------------------------------------------
    def _coerce(self, other):
        if isinstance(other, Jet):
            if other.dim != self.dim:
                raise ValueError("jets over different numbers of variables")
            order = min(self.order, other.order)
            return self.truncate(order).coeffs, other.truncate(order).coeffs, order
        return None

    def __add__(self, other):
        c = self._coerce(other)
        if c is not None:
            a, b, order = c
            return Jet(a + b, self.dim, order)
        other = np.asarray(other, dtype=float)
        out = np.array(np.broadcast_to(self.coeffs, np.broadcast_shapes(self.coeffs.shape, other.shape + (1,))))
        out[..., 0] = out[..., 0] + other
        return Jet(out, self.dim, self.order)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.coeffs, self.dim, self.order)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        c = self._coerce(other)
        if c is not None:
            a, b, order = c
            return Jet(_mul_raw(a, b, layout(self.dim, order)), self.dim, order)
        other = np.asarray(other, dtype=float)
        return Jet(self.coeffs * other[..., None], self.dim, self.order)

    __rmul__ = __mul__

    def __truediv__(self, other):
        c = self._coerce(other)
        if c is not None:
            a, b, order = c
            return Jet(_div_raw(a, b, layout(self.dim, order)), self.dim, order)
        other = np.asarray(other, dtype=float)
        if np.any(other == 0):
            raise SingularPoint("division by zero")
        return Jet(self.coeffs / other[..., None], self.dim, self.order)

    def __rtruediv__(self, other):
        return Jet.constant(np.asarray(other, dtype=float), self.dim, self.order) / self

    def __pow__(self, exponent):
        return jet_pow(self, exponent)

    # -- calculus --------------------------------------------------------------
    def derivative(self, i: int) -> "Jet":
        """Jet of the partial derivative along variable ``i`` (order drops by one)."""
        if self.order < 1:
            raise OrderExhausted("cannot differentiate an order-0 jet")
        lay = self.layout
        c = self.coeffs[..., lay.diff_src[i]] * lay.diff_fac[i]
        return Jet(c, self.dim, self.order - 1)

    def gradient(self) -> "Jet":
        """Partial derivatives stacked on a new leading axis."""
        if self.order < 1:
            raise OrderExhausted("cannot differentiate an order-0 jet")
        lay = self.layout
        c = np.stack([self.coeffs[..., s] * f for s, f in zip(lay.diff_src, lay.diff_fac)])
        return Jet(c, self.dim, self.order - 1)

    def partials(self) -> np.ndarray:
        """All partial derivatives ``d^alpha`` (coefficients times alpha!)."""
        return self.coeffs * self.layout.factorials


# -- free-function API --------------------------------------------------------

def lift_variable(point, i: int, order: int) -> Jet:
    """Jet of the coordinate function ``x_i`` at ``point``."""
    point = np.asarray(point, dtype=float).ravel()
    n = point.size
    if not 0 <= i < n:
        raise IndexError(f"variable index {i} out of range for dimension {n}")
    lay = layout(n, order)
    c = np.zeros(lay.size)
    c[0] = point[i]
    if order >= 1:
        e = [0] * n
        e[i] = 1
        c[lay.index[tuple(e)]] = 1.0
    return Jet(c, n, order)


def jet_binary(a: Jet, b: Jet, op: str) -> Jet:
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    if op == "mul":
        return a * b
    if op == "div":
        return a / b
    raise ValueError(f"unknown binary op {op!r}")


def _series_coeffs(f: str, a0: np.ndarray, order: int, p: float | None = None):
    """Taylor coefficients ``f^(m)(a0)/m!`` for m = 0..order."""
    out = []
    if f == "exp":
        e = np.exp(a0)
        out = [e / math.factorial(m) for m in range(order + 1)]
    elif f in ("sin", "cos"):
        s, c = np.sin(a0), np.cos(a0)
        cycle = [s, c, -s, -c] if f == "sin" else [c, -s, -c, s]
        out = [cycle[m % 4] / math.factorial(m) for m in range(order + 1)]
    elif f == "ln":
        if np.any(a0 <= 0):
            raise DomainError("ln of a non-positive value")
        out = [np.log(a0)] + [(-1.0) ** (m + 1) / (m * a0**m) for m in range(1, order + 1)]
    elif f in ("sqrt", "pow_const"):
        if f == "sqrt":
            p = 0.5
        if np.any(a0 <= 0):
            raise DomainError(f"{f} of a non-positive value")
        binom = 1.0
        for m in range(order + 1):
            out.append(binom * a0 ** (p - m))
            binom *= (p - m) / (m + 1)
    else:
        raise ValueError(f"unknown elementary function {f!r}")
    return out


def _compose(a: Jet, coeffs) -> Jet:
    """sum_m coeffs[m] * (a - a0)^m."""
    h = a.coeffs.copy()
    h[..., 0] = 0.0
    lay = a.layout
    result = np.zeros_like(h)
    result[..., 0] = coeffs[0]
    power = h
    for m in range(1, a.order + 1):
        result += coeffs[m][..., None] * power
        if m < a.order:
            power = _mul_raw(power, h, lay)
    return Jet(result, a.dim, a.order)


def jet_elementary(f: str, a: Jet, p: float | None = None) -> Jet:
    """Apply ``f`` in {sin, cos, exp, ln, sqrt, pow_const} to a jet."""
    if f == "pow_const":
        return jet_pow(a, p)
    a0 = a.coeffs[..., 0]
    return _compose(a, _series_coeffs(f, a0, a.order))


def _is_integer(p) -> bool:
    return float(p).is_integer() and abs(p) < 2**31


def jet_pow(a: Jet, p) -> Jet:
    """``a**p`` for a constant exponent ``p``.

    Integer exponents use repeated multiplication (and one division when
    negative), so they stay valid for non-positive bases.
    """
    p = float(p)
    if _is_integer(p):
        k = int(abs(p))
        result = Jet.constant(np.ones(a.shape), a.dim, a.order)
        base = a
        while k:
            if k & 1:
                result = result * base
            k >>= 1
            if k:
                base = base * base
        if p < 0:
            result = 1.0 / result
        return result
    if np.any(a.value <= 0):
        raise DomainError("non-integer power of a non-positive value")
    return jet_elementary("exp", jet_elementary("ln", a) * p)


def extract_partial(a: Jet, alpha) -> float | np.ndarray:
    """The partial derivative ``d^alpha`` at the base point."""
    alpha = tuple(int(k) for k in alpha)
    if len(alpha) != a.dim:
        raise ValueError(f"multi-index has length {len(alpha)}, expected {a.dim}")
    if sum(alpha) > a.order:
        raise OrderExhausted(f"|alpha|={sum(alpha)} exceeds jet order {a.order}")
    fac = math.prod(math.factorial(k) for k in alpha)
    v = a.coeff(alpha) * fac
    return float(v) if np.ndim(v) == 0 else v


_EINSUM_RE = re.compile(r"^([a-zA-Y,]*)->([a-zA-Y]*)$")


def jet_einsum(subscripts: str, *operands) -> Jet:
    """Einstein summation over tensor axes with jet multiplication.

    Operands may be jets or plain arrays (treated as constants).  Index
    letters must not include ``Z``, which is reserved for the coefficient
    axis.  Operands are contracted left to right.
    """
    subscripts = subscripts.replace(" ", "")
    m = _EINSUM_RE.match(subscripts)
    if not m:
        raise ValueError(f"bad einsum subscripts {subscripts!r}")
    ins = m.group(1).split(",")
    out = m.group(2)
    if len(ins) != len(operands):
        raise ValueError("operand count does not match subscripts")
    cur, cur_sub = operands[0], ins[0]
    for k in range(1, len(operands)):
        later = out + "".join(ins[k + 1:])
        cur, cur_sub = _pair(cur, cur_sub, operands[k], ins[k], later)
    if cur_sub != out:
        if isinstance(cur, Jet):
            cur = Jet(np.einsum(cur_sub + "Z->" + out + "Z", cur.coeffs), cur.dim, cur.order)
        else:
            cur = np.einsum(cur_sub + "->" + out, cur)
    if not isinstance(cur, Jet):
        raise ValueError("jet_einsum needs at least one jet operand")
    return cur


def _pair(a, sa, b, sb, later):
    keep = "".join(ch for ch in dict.fromkeys(sa + sb) if ch in later)
    ja, jb = isinstance(a, Jet), isinstance(b, Jet)
    if ja and jb:
        if a.dim != b.dim:
            raise ValueError("jets over different numbers of variables")
        order = min(a.order, b.order)
        lay = layout(a.dim, order)
        ga = a.truncate(order).coeffs[..., lay.mul_a]
        gb = b.truncate(order).coeffs[..., lay.mul_b]
        r = np.einsum(f"{sa}Z,{sb}Z->{keep}Z", ga, gb, optimize=True)
        return Jet(np.add.reduceat(r, lay.mul_starts, axis=-1), a.dim, order), keep
    if ja:
        r = np.einsum(f"{sa}Z,{sb}->{keep}Z", a.coeffs, np.asarray(b, float), optimize=True)
        return Jet(r, a.dim, a.order), keep
    if jb:
        r = np.einsum(f"{sa},{sb}Z->{keep}Z", np.asarray(a, float), b.coeffs, optimize=True)
        return Jet(r, b.dim, b.order), keep
    return np.einsum(f"{sa},{sb}->{keep}", a, b), keep


def jet_inv(a: Jet) -> Jet:
    """Inverse of a square jet-valued matrix by Gauss-Jordan elimination.

    Pivots are chosen on the constant terms, which must form an invertible
    matrix.
    """
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("jet_inv needs a square matrix")
    n = a.shape[0]
    lay = a.layout
    aug = np.zeros((n, 2 * n, lay.size))
    aug[:, :n] = a.coeffs
    aug[np.arange(n), n + np.arange(n), 0] = 1.0
    scale = np.max(np.abs(a.value)) if n else 1.0
    for col in range(n):
        piv = col + int(np.argmax(np.abs(aug[col:, col, 0])))
        if abs(aug[piv, col, 0]) <= 1e-14 * max(scale, 1e-300):
            raise SingularPoint("jet matrix has a singular constant term")
        if piv != col:
            aug[[col, piv]] = aug[[piv, col]]
        pivot = aug[col, col]
        aug[col] = _div_raw(aug[col], pivot, lay)
        factors = aug[:, col].copy()
        factors[col] = 0.0
        aug -= _mul_raw(factors[:, None, :], aug[col][None, :, :], lay)
    return Jet(aug[:, n:], a.dim, a.order)
