"""Geodesics on split supermanifolds via reduction to the underlying vector bundle.

The package builds up in layers: exact Grassmann coefficient arithmetic,
symbolic scalar expressions, superfunctions on a chart, graded metrics and
connections with their Levi-Civita solve, the degree-0/1 reduction onto the
bundle total space, geodesic integration on both sides, and a scenario-driven
command line harness.
"""

from ._kernel import backend_name as kernel_backend
from .superfield import ChartSpec, SuperFunction, parse_superfunction
from .geometry import SuperMetric, SuperConnection, levi_civita
from .reduction import reduce_connection, reduce_metric, bundle_reduce
from .flow import InitialCondition, geodesic_pair, integrate_super
from .scenario import load_scenario, random_scenario
from .checks import run_checks

__all__ = [
    "ChartSpec",
    "InitialCondition",
    "SuperConnection",
    "SuperFunction",
    "SuperMetric",
    "bundle_reduce",
    "geodesic_pair",
    "integrate_super",
    "kernel_backend",
    "levi_civita",
    "load_scenario",
    "parse_superfunction",
    "random_scenario",
    "reduce_connection",
    "reduce_metric",
    "run_checks",
]
__version__ = "0.1.0"
