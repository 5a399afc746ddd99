"""Command-line front end.

Exit codes: 0 success, 1 parse or configuration error, 2 numeric failure,
3 internal consistency failure (including a transformation law that does not
hold).
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .catalog import catalog_get, catalog_list
from .conformal_lab import EXTRA_LAWS, LAW_NAMES, check_transformation_laws
from .errors import CelError, InternalCheckFailed, NumericError, SpecError, UnknownEntry
from .invariants import Tolerances, classify
from .metric_dsl import MetricSpec, parse_conformal_factor, parse_metric_document

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_INTERNAL = 0, 1, 2, 3


class ConfigError(CelError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


@dataclass(frozen=True)
class RunConfig:
    metric: str
    points: int = 20
    seed: int = 0
    order: int = 4
    tol: float = 1e-6
    rank_tol: float = 1e-8
    phi: str | None = None
    out: str | None = None

    def __post_init__(self):
        if self.points < 1:
            raise ConfigError("--points must be at least 1")
        if self.order not in (2, 3, 4):
            raise ConfigError("--order must be 2, 3 or 4")
        if not (self.tol > 0 and self.rank_tol > 0):
            raise ConfigError("tolerances must be positive")
        if self.seed < 0:
            raise ConfigError("--seed must be non-negative")

    @property
    def tolerances(self) -> Tolerances:
        return Tolerances(tol=self.tol, rank_tol=self.rank_tol, order=self.order)


def load_metric(source: str) -> MetricSpec:
    """``catalog:NAME`` or a path to a metric document."""
    if source.startswith("catalog:"):
        return catalog_get(source[len("catalog:"):]).spec
    path = Path(source)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {source}: {exc.strerror or exc}") from None
    return parse_metric_document(text)


def load_phi_text(source: str) -> str:
    path = Path(source)
    if path.is_file():
        lines = [ln.split("#", 1)[0].strip() for ln in path.read_text(encoding="utf-8").splitlines()]
        return " ".join(ln for ln in lines if ln)
    return source


def sample_points(spec: MetricSpec, count: int, seed: int) -> np.ndarray:
    """Uniform points in the region box from a counter-based generator keyed by ``seed``."""
    if spec.region is None:
        raise ConfigError("the metric document declares no region to sample from")
    lo = np.array([r[0] for r in spec.region])
    hi = np.array([r[1] for r in spec.region])
    gen = np.random.Generator(np.random.Philox(key=seed))
    return lo + (hi - lo) * gen.random((count, spec.dim))


def _dumps(obj) -> str:
    return json.dumps(obj, ensure_ascii=False, allow_nan=False)


def _writer(out: str | None):
    if out is None:
        return sys.stdout, sys.stderr, False
    try:
        fh = open(out, "w", encoding="utf-8", newline="\n")
    except OSError as exc:
        raise ConfigError(f"cannot write {out}: {exc.strerror or exc}") from None
    return fh, sys.stdout, True


# -- commands ---------------------------------------------------------------------

def cmd_validate(args) -> int:
    spec = load_metric(args.file)
    if args.phi is not None:
        parse_conformal_factor(load_phi_text(args.phi), spec.coord_names)
    region = "none" if spec.region is None else "declared"
    print(f"OK {spec.name or args.file}: dim={spec.dim} coords={','.join(spec.coord_names)} "
          f"region={region}")
    return EXIT_OK


def _config(args) -> RunConfig:
    return RunConfig(metric=args.metric, points=args.points, seed=args.seed, order=args.order,
                     tol=args.tol, rank_tol=args.rank_tol, phi=getattr(args, "phi", None),
                     out=args.out)


def cmd_classify(args) -> int:
    cfg = _config(args)
    spec = load_metric(cfg.metric)
    if spec.dim < 4:
        raise SpecError("classification needs dimension >= 4")
    pts = sample_points(spec, cfg.points, cfg.seed)
    result = classify(spec, pts, cfg.tolerances)
    fh, summary, close = _writer(cfg.out)
    counts = {}
    try:
        for idx, rep in enumerate(result.reports):
            rec = {"type": "point", "index": idx}
            rec.update(rep.to_record())
            fh.write(_dumps(rec) + "\n")
            counts[rep.verdict.kind] = counts.get(rep.verdict.kind, 0) + 1
        failures = sum(1 for r in result.reports if r.error is not None)
        agg = {"type": "aggregate", "metric": spec.name or cfg.metric, "source": cfg.metric,
               "points": cfg.points, "seed": cfg.seed, "tolerances": cfg.tolerances.to_record(),
               "verdict": result.aggregate.to_record(), "counts": counts,
               "numeric_failures": failures}
        fh.write(_dumps(agg) + "\n")
    finally:
        if close:
            fh.close()
    print(f"{spec.name or cfg.metric}: {result.aggregate} over {cfg.points} points", file=summary)
    return EXIT_NUMERIC if failures else EXIT_OK


def cmd_conformal_check(args) -> int:
    cfg = _config(args)
    if cfg.phi is None:
        raise ConfigError("conformal-check needs --phi")
    spec = load_metric(cfg.metric)
    if spec.dim < 4:
        raise SpecError("the transformation laws need dimension >= 4")
    phi = parse_conformal_factor(load_phi_text(cfg.phi), spec.coord_names)
    pts = sample_points(spec, cfg.points, cfg.seed)
    report = check_transformation_laws(spec, phi, pts, cfg.tolerances, law_tol=args.law_tol,
                                       corrupt=args.corrupt)
    fh, summary, close = _writer(cfg.out)
    try:
        for name, law in report.laws.items():
            rec = {"type": "law", "law": name}
            rec.update(law.to_record())
            fh.write(_dumps(rec) + "\n")
        agg = {"type": "aggregate", "metric": spec.name or cfg.metric, "source": cfg.metric,
               "phi": load_phi_text(cfg.phi), "points": cfg.points, "seed": cfg.seed,
               "law_tol": report.tol, "normalization": report.normalization,
               "max_residual": report.max_residual, "passed": report.passed,
               "failing": report.failing()}
        fh.write(_dumps(agg) + "\n")
    finally:
        if close:
            fh.close()
    if report.passed:
        print(f"all transformation laws hold (max residual {report.max_residual:.3g})", file=summary)
        return EXIT_OK
    print("transformation laws failing: " + ", ".join(report.failing()), file=summary)
    return EXIT_INTERNAL


def cmd_list(args) -> int:
    for name in catalog_list():
        e = catalog_get(name)
        print(f"{name:24s} {e.provenance}")
    return EXIT_OK


# -- argument parsing -------------------------------------------------------------

def _run_flags(p: argparse.ArgumentParser):
    p.add_argument("--metric", required=True, help="document path or catalog:NAME")
    p.add_argument("--points", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-6, help="vanishing tolerance")
    p.add_argument("--rank-tol", type=float, default=1e-8, help="relative spectral threshold")
    p.add_argument("--order", type=int, default=4, help="jet order (2, 3 or 4)")
    p.add_argument("--out", help="write records here instead of stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cel", description="Conformal invariants of closed-form metrics.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("validate", help="parse a metric document and report problems")
    p.add_argument("file", help="document path or catalog:NAME")
    p.add_argument("--phi", help="also parse a conformal factor (expression or file)")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("classify", help="evaluate the invariants at sampled points")
    _run_flags(p)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("conformal-check", help="verify the transformation laws for exp(-2 phi) g")
    _run_flags(p)
    p.add_argument("--phi", required=True, help="conformal factor expression or file")
    p.add_argument("--law-tol", type=float, default=1e-6)
    p.add_argument("--corrupt", choices=LAW_NAMES + EXTRA_LAWS,
                   help="test hook: perturb one law so that it must fail")
    p.set_defaults(func=cmd_conformal_check)

    p = sub.add_parser("list", help="list catalog entries")
    p.set_defaults(func=cmd_list)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except (ConfigError, SpecError, UnknownEntry) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (InternalCheckFailed, AssertionError) as exc:
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
