"""Built-in metric fixtures with known properties.

Each entry is a metric document under ``cel/data`` plus a record of the
properties it is expected to have.  The documents are produced by the
generators in this module; :func:`write_data` rewrites them and the test
suite checks that the shipped files match.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import UnknownEntry
from .metric_dsl import MetricSpec, parse_conformal_factor, parse_metric_document

HALF_PI_MARGIN = 0.5  # keep polar angles this far from the coordinate singularities


@dataclass(frozen=True)
class Expected:
    einstein: bool | None = None
    einstein_constant: float | None = None  # lambda with Ric = lambda g
    conformally_flat: bool | None = None
    conformally_einstein: bool | None = None
    expected_S: float | None = None  # scalar curvature, constant over the region
    expected_rank_E: int | None = None


@dataclass(frozen=True)
class CatalogEntry:
    name: str
    document: str
    expected: Expected
    provenance: str

    @property
    def spec(self) -> MetricSpec:
        return parse_metric_document(self.document)

    @property
    def region(self):
        return self.spec.region


# -- document generators -------------------------------------------------------------

def _fmt(x: float) -> str:
    return np.format_float_positional(float(x), trim="-")


def _doc(name, coords, region, entries, notes=()) -> str:
    lines = [f"name = {name}"]
    lines += [f"note = {n}" for n in notes]
    lines.append(f"dim = {len(coords)}")
    lines.append(f"coords = {', '.join(coords)}")
    lines.append("region = " + ", ".join(f"{c}: {_fmt(lo)} .. {_fmt(hi)}"
                                         for c, (lo, hi) in zip(coords, region)))
    for (i, j), e in sorted(entries.items()):
        lines.append(f"g[{i + 1}][{j + 1}] = {e}")
    return "\n".join(lines) + "\n"


def _xs(n):
    return [f"x{i + 1}" for i in range(n)]


def flat_document(n: int) -> str:
    return _doc(f"flat{n}", _xs(n), [(-1.0, 1.0)] * n, {(i, i): "1" for i in range(n)},
                ["Euclidean space in Cartesian coordinates"])


def sphere_document(n: int) -> str:
    """Unit sphere in polar coordinates: the k-th angle's metric factor is the
    product of the squared sines of the previous angles."""
    xs = _xs(n)
    entries = {}
    for k in range(n):
        factors = [f"sin({xs[j]})^2" for j in range(k)]
        entries[(k, k)] = "*".join(factors) if factors else "1"
    lo, hi = HALF_PI_MARGIN, math.pi - HALF_PI_MARGIN
    region = [(lo, round(hi, 4))] * (n - 1) + [(0.0, 6.2)]
    return _doc(f"sphere{n}", xs, region, entries, ["unit round sphere, polar chart"])


def hyperbolic_document(n: int) -> str:
    xs = _xs(n)
    entries = {(k, k): f"1/{xs[-1]}^2" for k in range(n)}
    region = [(-2.0, 2.0)] * (n - 1) + [(0.5, 3.0)]
    return _doc(f"hyperbolic{n}", xs, region, entries,
                ["hyperbolic space of curvature -1, upper half-space chart"])


_S2XS2 = {(0, 0): "1", (1, 1): "sin(x1)^2", (2, 2): "1", (3, 3): "sin(x3)^2"}
_S2XS2_REGION = [(0.5, 2.6), (0.0, 6.2), (0.5, 2.6), (0.0, 6.2)]


def s2xs2_document() -> str:
    return _doc("s2xs2", _xs(4), _S2XS2_REGION, _S2XS2, ["product of two unit 2-spheres"])


def s2xh2_document() -> str:
    entries = {(0, 0): "1", (1, 1): "sin(x1)^2", (2, 2): "1/x4^2", (3, 3): "1/x4^2"}
    region = [(0.5, 2.6), (0.0, 6.2), (-2.0, 2.0), (0.5, 3.0)]
    return _doc("s2xh2", _xs(4), region, entries,
                ["unit 2-sphere times hyperbolic plane (upper half-plane chart)"])


def schwarzschild_document() -> str:
    coords = ["r", "th", "ph", "t"]
    entries = {(0, 0): "1/(1 - 1/r)", (1, 1): "r^2", (2, 2): "r^2*sin(th)^2", (3, 3): "1 - 1/r"}
    region = [(3.0, 10.0), (0.5, 2.6), (0.0, 6.2), (0.0, 6.2)]
    return _doc("schwarzschild4", coords, region, entries,
                ["Riemannian Schwarzschild metric with mass m = 1/2 (2m = 1)"])


def schwarzschild_line_document() -> str:
    """Schwarzschild times a line: Ricci-flat, ``E`` spanned by the line."""
    coords = ["r", "th", "ph", "t", "s"]
    entries = {(0, 0): "1/(1 - 1/r)", (1, 1): "r^2", (2, 2): "r^2*sin(th)^2",
               (3, 3): "1 - 1/r", (4, 4): "1"}
    region = [(3.0, 10.0), (0.5, 2.6), (0.0, 6.2), (0.0, 6.2), (-1.0, 1.0)]
    return _doc("schwarzschild4_x_line", coords, region, entries,
                ["Riemannian Schwarzschild (m = 1/2) times a Euclidean line"])


RESCALE_PHIS = {
    "a": "0.2*sin(x1)*cos(x3) + 0.1*x2",
    "b": "0.3*cos(x1 + x2) + 0.05*x4^2",
}


def rescaled_s2xs2_document(tag: str) -> str:
    from .conformal_lab import rescale_spec

    base = parse_metric_document(s2xs2_document())
    phi = parse_conformal_factor(RESCALE_PHIS[tag], base.coord_names)
    spec = rescale_spec(base, phi)
    text = spec.to_document().splitlines()
    body = [ln for ln in text if not ln.startswith(("name", "note"))]
    head = [f"name = rescaled_s2xs2_{tag}",
            f"note = exp(-2 phi) times s2xs2 with phi = {RESCALE_PHIS[tag]}"]
    return "\n".join(head + body) + "\n"


def perturbation_document(seed: int, eps: float, name: str | None = None) -> str:
    """``s2xs2 + eps * h`` with a fixed smooth symmetric ``h`` drawn from ``seed``.

    Every entry of ``h`` is ``a sin(b x_k + c x_l + d)`` with ``|a|`` in
    ``[0.5, 1]`` and frequencies in ``[1.5, 3]``; the numbers are rounded to
    four decimals so the document is exact.
    """
    rng = np.random.default_rng(seed)
    xs = _xs(4)
    entries = {}
    for i in range(4):
        for j in range(i, 4):
            k, l = rng.integers(0, 4, size=2)
            a = rng.uniform(0.5, 1.0) * rng.choice([-1.0, 1.0])
            b, c = rng.uniform(1.5, 3.0, size=2)
            d = rng.uniform(0.0, 2 * math.pi)
            term = (f"{_fmt(eps)}*({_fmt(round(a, 4))})*sin({_fmt(round(b, 4))}*{xs[k]}"
                    f" + {_fmt(round(c, 4))}*{xs[l]} + {_fmt(round(d, 4))})")
            base = _S2XS2.get((i, j))
            entries[(i, j)] = f"{base} + {term}" if base else term
    tag = name or f"perturbed_s2xs2_{_fmt(eps).replace('.', '')}"
    return _doc(tag, xs, _S2XS2_REGION, entries,
                [f"seed = {seed}", f"eps = {_fmt(eps)}",
                 "s2xs2 plus eps times a fixed random smooth symmetric tensor"])


def random_metric_document(n: int, seed: int, eps: float = 0.2) -> str:
    """A generic metric near the identity on ``[-1, 1]^n``:
    ``g_ij = delta_ij + eps * a_ij sin(b_ij x_k + c_ij x_l)``."""
    rng = np.random.default_rng(seed)
    xs = _xs(n)
    entries = {}
    for i in range(n):
        for j in range(i, n):
            k, l = rng.integers(0, n, size=2)
            a, b, c = (round(float(v), 4) for v in rng.uniform(-1.0, 1.0, size=3))
            term = f"{_fmt(eps * a)}*sin({_fmt(b)}*{xs[k]} + {_fmt(c)}*{xs[l]})"
            entries[(i, j)] = f"1 + {term}" if i == j else term
    return _doc(f"random{n}_{seed}", xs, [(-1.0, 1.0)] * n, entries,
                [f"seed = {seed}", f"eps = {_fmt(eps)}"])


PERTURBATION_SEEDS = {"perturbed_s2xs2_001": (20240601, 0.01),
                      "perturbed_s2xs2_005": (20240605, 0.05)}


# -- the table ------------------------------------------------------------------------

def _entries() -> dict:
    e = {}
    for n in (4, 5, 6):
        e[f"flat{n}"] = (flat_document(n), Expected(True, 0.0, True, True, 0.0, n),
                         "Euclidean metric; all curvature vanishes")
        e[f"sphere{n}"] = (sphere_document(n),
                           Expected(True, n - 1.0, True, True, n * (n - 1.0), n),
                           "constant curvature +1: Ric = (n-1) g, S = n(n-1), W = 0")
        e[f"hyperbolic{n}"] = (hyperbolic_document(n),
                               Expected(True, -(n - 1.0), True, True, -n * (n - 1.0), n),
                               "constant curvature -1: Ric = -(n-1) g, W = 0")
    e["s2xs2"] = (s2xs2_document(), Expected(True, 1.0, False, True, 4.0, 0),
                  "product of unit spheres: Ric = g on each factor, W != 0")
    e["s2xh2"] = (s2xh2_document(), Expected(False, None, True, None, 0.0, 4),
                  "product of curvatures +1 and -1: conformally flat, not Einstein, S = 0")
    e["schwarzschild4"] = (schwarzschild_document(), Expected(True, 0.0, False, True, 0.0, 0),
                           "Ricci-flat, W != 0")
    e["schwarzschild4_x_line"] = (schwarzschild_line_document(),
                                  Expected(True, 0.0, False, True, 0.0, 1),
                                  "Ricci-flat product with a line; E is spanned by the line")
    for tag in RESCALE_PHIS:
        e[f"rescaled_s2xs2_{tag}"] = (rescaled_s2xs2_document(tag),
                                      Expected(None, None, False, True, None, 0),
                                      "conformal to an Einstein metric by construction")
    for name, (seed, eps) in PERTURBATION_SEEDS.items():
        e[name] = (perturbation_document(seed, eps, name), Expected(False, None, False, False, None, 0),
                   f"s2xs2 + {_fmt(eps)} h, h drawn from seed {seed}")
    return e


_ENTRIES = None


def _table() -> dict:
    global _ENTRIES
    if _ENTRIES is None:
        data = resources.files("cel") / "data"
        meta = json.loads((data / "catalog.json").read_text(encoding="utf-8"))
        _ENTRIES = {
            name: CatalogEntry(name, (data / f"{name}.metric").read_text(encoding="utf-8"),
                               Expected(**rec["expected"]), rec["provenance"])
            for name, rec in meta.items()
        }
    return _ENTRIES


def catalog_list() -> list:
    return sorted(_table())


def catalog_get(name: str) -> CatalogEntry:
    try:
        return _table()[name]
    except KeyError:
        raise UnknownEntry(f"no catalog entry named {name!r}") from None


def generated_files() -> dict:
    """``{filename: text}`` for everything under the data directory."""
    files, meta = {}, {}
    for name, (doc, exp, prov) in _entries().items():
        files[f"{name}.metric"] = doc
        meta[name] = {"expected": asdict(exp), "provenance": prov}
    files["catalog.json"] = json.dumps(meta, indent=2, sort_keys=True) + "\n"
    return files


def write_data(directory: Path | None = None) -> list:
    directory = Path(directory or Path(__file__).parent / "data")
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for fname, text in generated_files().items():
        (directory / fname).write_text(text, encoding="utf-8")
        written.append(fname)
    return written

