"""Radial graphs of prescribed r-th mean curvature over domains in the unit sphere.

Modules: ``symfun`` (symmetric functions and cones), ``sphere_chart`` (gnomonic
grids and covariant derivatives), ``radial_graph`` (pointwise geometry),
``curvature_op`` (operator, linearization, homotopy families), ``continuation``
(Newton and two-stage continuation) and ``harness``/``cli`` (runs and reports).
"""

from .symfun import AdmissibilityError, CurvatureSpec
from .sphere_chart import ChartGrid, DomainSpec, build_grid
from .curvature_op import SubsolutionError
from .continuation import CurvatureProblem, SolverConfig, run_two_stage

__version__ = "0.1.0"

__all__ = ["AdmissibilityError", "CurvatureSpec", "ChartGrid", "DomainSpec", "build_grid",
           "SubsolutionError", "CurvatureProblem", "SolverConfig", "run_two_stage"]
