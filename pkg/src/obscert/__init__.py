"""Certified observability constants for semigroups, with numerical verification.

The package decides admissibility of uncertainty/dissipation rate triples,
assembles the explicit observability-constant bound and its iteration
evidence, transfers certificates through subordination and Levy symbols,
and validates every certified inequality on finite-dimensional models
against brute-force oracles.
"""

from .certifier import (
    Certificate,
    IterationTrace,
    ProblemData,
    certify,
    certify_polynomial,
    constant_K,
    iteration_trace,
)
from .errors import (
    BracketFailure,
    Divergent,
    HypothesisViolation,
    InvariantViolation,
    NonInvertible,
    NotAdmissible,
    NotThick,
    ObscertError,
    QuadratureFailure,
    SingularGramian,
)
from .rates import (
    AdmissibilityReport,
    RateFunction,
    check_monotone_ratio,
    invert,
    solve_lambda_T,
    tail_integral,
)

__all__ = [
    "AdmissibilityReport",
    "BracketFailure",
    "Certificate",
    "Divergent",
    "HypothesisViolation",
    "InvariantViolation",
    "IterationTrace",
    "NonInvertible",
    "NotAdmissible",
    "NotThick",
    "ObscertError",
    "ProblemData",
    "QuadratureFailure",
    "RateFunction",
    "SingularGramian",
    "certify",
    "certify_polynomial",
    "check_monotone_ratio",
    "constant_K",
    "invert",
    "iteration_trace",
    "solve_lambda_T",
    "tail_integral",
]

__version__ = "0.1.0"
