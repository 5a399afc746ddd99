"""Conformal invariants of Riemannian metrics given in closed form.

The pipeline goes from a metric document to truncated Taylor jets of the
metric, then to curvature, the Weyl operator on 2-forms and finally the
vector field ``T`` with the tensors built from it.
"""
from .catalog import catalog_get, catalog_list
from .conformal_lab import check_transformation_laws, rescale_spec
from .errors import CelError
from .invariants import Tolerances, classify, evaluate_point
from .jets import Jet
from .metric_dsl import MetricSpec, parse_conformal_factor, parse_expression, parse_metric_document

__version__ = "0.1.0"

__all__ = [
    "CelError", "Jet", "MetricSpec", "Tolerances", "catalog_get", "catalog_list",
    "check_transformation_laws", "classify", "evaluate_point", "parse_conformal_factor",
    "parse_expression", "parse_metric_document", "rescale_spec",
]
