"""Closed-form metric descriptions: expression parser and document format.

Expressions use ``+ - * / ^`` (``**`` is accepted for ``^``), parentheses,
decimal literals, coordinate names and the functions ``sin cos exp ln sqrt``.
Precedence from tightest: ``^`` (right associative, constant exponent),
unary minus, ``* /``, ``+ -``.  So ``-x^2`` is ``-(x^2)``.

Metric documents are line based::

    # comment
    dim = 4
    coords = r, theta, phi, t
    region = r: 3 .. 10, theta: 0.5 .. 2.6, phi: 0 .. 6, t: 0 .. 1
    g[1][1] = 1/(1 - 1/r)
    g[2][2] = r^2

Only upper-triangle entries (``i <= j``, 1-based) may be assigned; omitted
entries are zero.  ``name = ...`` and ``note = ...`` lines carry free-form
metadata.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from .errors import (
    CoordinateMismatch,
    DomainError,
    DSLSyntaxError,
    DuplicateEntry,
    IndexOutOfRange,
    MissingDimension,
    NonConstantExponent,
    SingularMetric,
    SingularPoint,
    SpecError,
    UnknownIdentifier,
)
from .jets import Jet, jet_elementary, jet_inv, jet_pow, lift_variable

FUNCTIONS = ("sin", "cos", "exp", "ln", "sqrt")


# -- AST -------------------------------------------------------------------------

@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Coord:
    index: int


@dataclass(frozen=True)
class Unary:
    op: str  # "neg" or one of FUNCTIONS
    arg: "Expr"


@dataclass(frozen=True)
class Binary:
    op: str  # add, sub, mul, div, pow
    left: "Expr"
    right: "Expr"

    def __post_init__(self):
        if self.op == "pow" and not isinstance(self.right, Const):
            raise NonConstantExponent("exponent must be a constant")


Expr = Union[Const, Coord, Unary, Binary]

ZERO = Const(0.0)


def is_zero(e: Expr) -> bool:
    return isinstance(e, Const) and e.value == 0.0


def max_coord(e: Expr) -> int:
    """Largest coordinate index used by ``e`` (-1 when constant)."""
    if isinstance(e, Coord):
        return e.index
    if isinstance(e, Unary):
        return max_coord(e.arg)
    if isinstance(e, Binary):
        return max(max_coord(e.left), max_coord(e.right))
    return -1


# -- tokenizer / parser ----------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+\.\d*|\.\d+|\d+)|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>\*\*|[-+*/^(),]))"
)


def _tokenize(text: str):
    tokens = []
    pos = 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            bad = pos + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise DSLSyntaxError(f"unexpected character {text[bad]!r}",
                                 offset=len(text[:bad].encode()))
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), len(text[:start].encode())))
        pos = m.end()
    tokens.append(("end", "", len(text.encode())))
    return tokens


class _Parser:
    def __init__(self, text: str, coord_names: Sequence[str]):
        self.tokens = _tokenize(text)
        self.i = 0
        self.coords = {name: k for k, name in enumerate(coord_names)}

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, val, off = self.take()
        if val != value:
            what = "end of input" if kind == "end" else repr(val)
            raise DSLSyntaxError(f"expected {value!r}, found {what}", offset=off)

    def parse(self) -> Expr:
        e = self.expr()
        kind, val, off = self.peek()
        if kind != "end":
            raise DSLSyntaxError(f"unexpected {val!r}", offset=off)
        return e

    def expr(self):
        left = self.term()
        while self.peek()[1] in ("+", "-"):
            op = "add" if self.take()[1] == "+" else "sub"
            left = Binary(op, left, self.term())
        return left

    def term(self):
        left = self.unary()
        while self.peek()[1] in ("*", "/"):
            op = "mul" if self.take()[1] == "*" else "div"
            left = Binary(op, left, self.unary())
        return left

    def unary(self):
        tok = self.peek()
        if tok[1] == "-":
            self.take()
            return Unary("neg", self.unary())
        if tok[1] == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[1] in ("^", "**"):
            off = self.take()[2]
            exponent = self.unary()
            if max_coord(exponent) >= 0:
                raise NonConstantExponent("exponent depends on a coordinate", offset=off)
            return Binary("pow", base, Const(evaluate_float(exponent, ())))
        return base

    def atom(self):
        kind, val, off = self.take()
        if kind == "num":
            return Const(float(val))
        if kind == "ident":
            if self.peek()[1] == "(":
                if val not in FUNCTIONS:
                    raise UnknownIdentifier(f"unknown function {val!r}", offset=off)
                self.take()
                arg = self.expr()
                self.expect(")")
                return Unary(val, arg)
            if val in self.coords:
                return Coord(self.coords[val])
            raise UnknownIdentifier(f"unknown identifier {val!r}", offset=off)
        if val == "(":
            e = self.expr()
            self.expect(")")
            return e
        what = "end of input" if kind == "end" else repr(val)
        raise DSLSyntaxError(f"unexpected {what}", offset=off)


def parse_expression(text: str, coord_names: Sequence[str]) -> Expr:
    """Parse ``text`` into an expression tree over ``coord_names``."""
    return _Parser(text, coord_names).parse()


def _fmt_const(v: float) -> str:
    return np.format_float_positional(v, trim="-")


_BIN_SYM = {"add": "+", "sub": "-", "mul": "*", "div": "/"}


def to_text(e: Expr, coord_names: Sequence[str]) -> str:
    """Render an expression so that parsing it gives back the same tree."""
    if isinstance(e, Const):
        s = _fmt_const(e.value)
        return f"({s})" if e.value < 0 else s
    if isinstance(e, Coord):
        return coord_names[e.index]
    if isinstance(e, Unary):
        inner = to_text(e.arg, coord_names)
        if e.op == "neg":
            return f"-({inner})"
        return f"{e.op}({inner})"
    if e.op == "pow":
        return f"({to_text(e.left, coord_names)})^({_fmt_const(e.right.value)})"
    return f"({to_text(e.left, coord_names)} {_BIN_SYM[e.op]} {to_text(e.right, coord_names)})"


# -- evaluation ----------------------------------------------------------------

def _evaluate(e: Expr, coords, const: Callable, fns: dict, pow_: Callable):
    if isinstance(e, Const):
        return const(e.value)
    if isinstance(e, Coord):
        return coords[e.index]
    if isinstance(e, Unary):
        a = _evaluate(e.arg, coords, const, fns, pow_)
        if e.op == "neg":
            return -a
        return fns[e.op](a)
    a = _evaluate(e.left, coords, const, fns, pow_)
    if e.op == "pow":
        return pow_(a, e.right.value)
    b = _evaluate(e.right, coords, const, fns, pow_)
    if e.op == "add":
        return a + b
    if e.op == "sub":
        return a - b
    if e.op == "mul":
        return a * b
    return a / b


def _positive_only(fn, name):
    def wrapped(x):
        if not x > 0:
            raise DomainError(f"{name}({x}) is undefined")
        return fn(x)
    return wrapped


_FLOAT_FNS = {
    "sin": math.sin,
    "cos": math.cos,
    "exp": math.exp,
    "ln": _positive_only(math.log, "ln"),
    "sqrt": _positive_only(math.sqrt, "sqrt"),
}


def _float_pow(a, p):
    if not float(p).is_integer() and a <= 0:
        raise DomainError(f"{a}^{p} is undefined")
    try:
        return a ** (int(p) if float(p).is_integer() else p)
    except ZeroDivisionError as exc:
        raise SingularPoint(f"{a}^{p} is undefined") from exc


def evaluate_float(e: Expr, point: Sequence[float]) -> float:
    """Plain double-precision evaluation (no derivatives)."""
    try:
        return float(_evaluate(e, [float(x) for x in point], float, _FLOAT_FNS, _float_pow))
    except ZeroDivisionError as exc:
        raise SingularPoint("division by zero") from exc


def evaluate_with(e: Expr, point, module) -> object:
    """Evaluate with the elementary functions of ``module`` (e.g. ``mpmath``)."""
    fns = {"sin": module.sin, "cos": module.cos, "exp": module.exp,
           "ln": module.log, "sqrt": module.sqrt}
    conv = getattr(module, "mpf", float)
    return _evaluate(e, list(point), conv, fns, lambda a, p: a ** (int(p) if float(p).is_integer() else conv(p)))


_JET_FNS = {name: (lambda f: lambda a: jet_elementary(f, a))(name) for name in FUNCTIONS}


def evaluate_jet(e: Expr, coord_jets: Sequence[Jet]) -> Jet:
    """Evaluate to a jet given the jets of the coordinate functions."""
    proto = coord_jets[0]
    return _evaluate(
        e, coord_jets, lambda v: Jet.constant(v, proto.dim, proto.order), _JET_FNS, jet_pow
    )


# -- metric documents -------------------------------------------------------------

@dataclass(frozen=True)
class MetricSpec:
    dim: int
    coord_names: tuple
    entries: tuple  # dim x dim tuple of Expr, symmetric
    name: str = ""
    notes: tuple = ()
    region: tuple | None = None  # ((lo, hi), ...) per coordinate

    def __post_init__(self):
        if len(self.coord_names) != self.dim:
            raise SpecError("coords must list exactly dim names")
        if len(self.entries) != self.dim or any(len(r) != self.dim for r in self.entries):
            raise SpecError("entry array shape does not match dim")
        for i in range(self.dim):
            for j in range(i):
                if self.entries[i][j] != self.entries[j][i]:
                    raise SpecError("metric entries must be symmetric")
            for j in range(self.dim):
                if max_coord(self.entries[i][j]) >= self.dim:
                    raise SpecError("coordinate index out of range in entry")
        if self.region is not None and len(self.region) != self.dim:
            raise SpecError("region must give an interval for every coordinate")

    @classmethod
    def from_upper(cls, coord_names, upper: dict, **kw) -> "MetricSpec":
        """Build from ``{(i, j): Expr}`` with 0-based ``i <= j``."""
        n = len(coord_names)
        rows = [[ZERO] * n for _ in range(n)]
        for (i, j), e in upper.items():
            rows[i][j] = rows[j][i] = e
        return cls(n, tuple(coord_names), tuple(tuple(r) for r in rows), **kw)

    def to_document(self) -> str:
        lines = []
        if self.name:
            lines.append(f"name = {self.name}")
        for note in self.notes:
            lines.append(f"note = {note}")
        lines.append(f"dim = {self.dim}")
        lines.append(f"coords = {', '.join(self.coord_names)}")
        if self.region is not None:
            parts = [f"{c}: {_fmt_const(lo)} .. {_fmt_const(hi)}"
                     for c, (lo, hi) in zip(self.coord_names, self.region)]
            lines.append(f"region = {', '.join(parts)}")
        for i in range(self.dim):
            for j in range(i, self.dim):
                e = self.entries[i][j]
                if not is_zero(e):
                    lines.append(f"g[{i + 1}][{j + 1}] = {to_text(e, self.coord_names)}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class ConformalFactorSpec:
    """A conformal factor ``phi``; the rescaled metric is ``exp(-2 phi) g``."""

    phi: Expr
    coord_names: tuple = field(default=())

    def check_against(self, spec: MetricSpec):
        if self.coord_names and tuple(self.coord_names) != tuple(spec.coord_names):
            raise CoordinateMismatch(
                f"phi is over {self.coord_names}, metric over {spec.coord_names}")
        if max_coord(self.phi) >= spec.dim:
            raise CoordinateMismatch("phi uses a coordinate the metric does not have")


def parse_conformal_factor(text: str, coord_names: Sequence[str]) -> ConformalFactorSpec:
    return ConformalFactorSpec(parse_expression(text, coord_names), tuple(coord_names))


_ENTRY_RE = re.compile(r"^g\s*\[\s*(\d+)\s*\]\s*\[\s*(\d+)\s*\]\s*=(.*)$")
_KEY_RE = re.compile(r"^([A-Za-z_]+)\s*=(.*)$")
_IDENT_RE = re.compile(r"^[A-Za-z_][A-Za-z_0-9]*$")
_NUM = r"[-+]?(?:\d+\.\d*|\.\d+|\d+)"
_REGION_RE = re.compile(rf"^\s*([A-Za-z_][A-Za-z_0-9]*)\s*:\s*({_NUM})\s*\.\.\s*({_NUM})\s*$")


def parse_metric_document(text: str) -> MetricSpec:
    """Parse the line-based metric document format (see module docstring)."""
    header = {}
    header_lines = {}
    notes = []
    entry_lines = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _ENTRY_RE.match(line)
        if m:
            entry_lines.append((lineno, int(m.group(1)), int(m.group(2)), m.group(3)))
            continue
        m = _KEY_RE.match(line)
        if not m:
            raise DSLSyntaxError(f"cannot parse line {raw.strip()!r}", line=lineno)
        key, val = m.group(1), m.group(2).strip()
        if key == "note":
            notes.append(val)
            continue
        if key not in ("dim", "coords", "region", "name"):
            raise DSLSyntaxError(f"unknown key {key!r}", line=lineno)
        if key in header:
            raise DuplicateEntry(f"{key} given twice", line=lineno)
        header[key] = val
        header_lines[key] = lineno

    if "dim" not in header:
        raise MissingDimension("document does not declare dim")
    try:
        dim = int(header["dim"])
    except ValueError:
        raise DSLSyntaxError("dim must be an integer", line=header_lines["dim"]) from None
    if dim < 2:
        raise SpecError("dim must be at least 2", line=header_lines["dim"])
    if "coords" not in header:
        raise SpecError("document does not declare coords")
    coords = tuple(c.strip() for c in header["coords"].split(","))
    for c in coords:
        if not _IDENT_RE.match(c) or c in FUNCTIONS:
            raise DSLSyntaxError(f"invalid coordinate name {c!r}", line=header_lines["coords"])
    if len(set(coords)) != len(coords):
        raise DuplicateEntry("coordinate names repeat", line=header_lines["coords"])
    if len(coords) != dim:
        raise SpecError(f"coords lists {len(coords)} names but dim = {dim}",
                        line=header_lines["coords"])

    region = None
    if "region" in header:
        lineno = header_lines["region"]
        intervals = {}
        for part in header["region"].split(","):
            m = _REGION_RE.match(part)
            if not m:
                raise DSLSyntaxError(f"bad region item {part.strip()!r}", line=lineno)
            name, lo, hi = m.group(1), float(m.group(2)), float(m.group(3))
            if name not in coords:
                raise UnknownIdentifier(f"region names unknown coordinate {name!r}", line=lineno)
            if name in intervals:
                raise DuplicateEntry(f"region repeats {name!r}", line=lineno)
            if not lo < hi:
                raise SpecError(f"empty interval for {name!r}", line=lineno)
            intervals[name] = (lo, hi)
        missing = [c for c in coords if c not in intervals]
        if missing:
            raise SpecError(f"region omits {', '.join(missing)}", line=lineno)
        region = tuple(intervals[c] for c in coords)

    upper = {}
    for lineno, i, j, expr_text in entry_lines:
        if not (1 <= i <= dim and 1 <= j <= dim) or i > j:
            raise IndexOutOfRange(
                f"g[{i}][{j}] is not an upper-triangle entry of a {dim}x{dim} metric",
                line=lineno)
        key = (i - 1, j - 1)
        if key in upper:
            raise DuplicateEntry(f"g[{i}][{j}] assigned twice", line=lineno)
        try:
            upper[key] = parse_expression(expr_text, coords)
        except SpecError as exc:
            raise type(exc)(exc.raw, offset=exc.offset, line=lineno) from None
    return MetricSpec.from_upper(coords, upper, name=header.get("name", ""),
                                 notes=tuple(notes), region=region)


# -- evaluation of a whole metric ----------------------------------------------------

def coordinate_jets(point, order: int):
    return [lift_variable(point, i, order) for i in range(len(point))]


def eval_metric_at(spec: MetricSpec, point, order: int = 4):
    """Jets of ``g_ij`` and ``g^ij`` at ``point``.

    Raises :class:`SingularMetric` when the value of ``g`` is not positive
    definite there.
    """
    point = np.asarray(point, dtype=float)
    if point.shape != (spec.dim,):
        raise ValueError(f"point must have {spec.dim} coordinates")
    xs = coordinate_jets(point, order)
    n = spec.dim
    cache = {}
    rows = []
    for i in range(n):
        row = []
        for j in range(n):
            e = spec.entries[i][j]
            if e not in cache:
                cache[e] = evaluate_jet(e, xs)
            row.append(cache[e])
        rows.append(Jet.stack(row))
    g = Jet.stack(rows)
    g0 = g.value
    if not np.all(np.isfinite(g.coeffs)):
        raise DomainError(f"metric is not finite at {point.tolist()}")
    eig = np.linalg.eigvalsh(g0)
    if eig[0] <= 1e-14 * max(abs(eig[-1]), 1.0):
        raise SingularMetric(
            f"metric is not positive definite at {point.tolist()} "
            f"(smallest eigenvalue {eig[0]:.3g})", smallest_eigenvalue=float(eig[0]))
    return g, jet_inv(g)
