"""
qerlab: numerical experiments on quantum ergodic restriction of Cauchy data
for Dirichlet eigenfunctions of planar billiards.

Modules
-------
geometry     domains, interior curves, Fermi charts
eigensolver  finite-difference eigenpairs and closed-form modes
trace        Cauchy data sampled on a curve
psido        symbols and their Weyl quantisation on the curve
lifts        boundary lifts and their classical limit states
rellich      the commutator identity in a collar, with its remainder terms
harness      batch solves, glancing sums, density-one extraction, reports
cli          configuration-driven pipeline (``python -m qerlab``)
"""

__version__ = "0.1.0"

from .geometry import Curve, Domain, GeometryError, build_curve, build_domain, fermi_chart  # noqa: E402
from .eigensolver import EigenMode, SolverError, analytic_modes, assemble_laplacian, solve_window  # noqa: E402
from .trace import CauchyTrace, TraceError, cauchy_trace  # noqa: E402
from .psido import QuantizationError, SymbolFn, glancing_cutoff, quantize, symbol_from_name  # noqa: E402
from .lifts import LiftError, compute_lifts, limit_state  # noqa: E402
from .rellich import RellichError, rellich_defect  # noqa: E402

__all__ = [
    "__version__",
    "Curve",
    "Domain",
    "GeometryError",
    "build_curve",
    "build_domain",
    "fermi_chart",
    "EigenMode",
    "SolverError",
    "analytic_modes",
    "assemble_laplacian",
    "solve_window",
    "CauchyTrace",
    "TraceError",
    "cauchy_trace",
    "QuantizationError",
    "SymbolFn",
    "glancing_cutoff",
    "quantize",
    "symbol_from_name",
    "LiftError",
    "compute_lifts",
    "limit_state",
    "RellichError",
    "rellich_defect",
]
