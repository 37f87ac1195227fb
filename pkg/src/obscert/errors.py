"""Exception types shared across the package."""


class ObscertError(Exception):
    """Base class for all package errors."""


class NonInvertible(ObscertError):
    """A rate function without the strictly-increasing + bijective flags was inverted."""


class BracketFailure(ObscertError):
    """Root bracketing failed inside the admissible search range."""


class Divergent(ObscertError):
    """Tail integral declared divergent; the integrability condition cannot hold."""


class HypothesisViolation(ObscertError):
    """Numeric inputs violate a structural hypothesis (M >= 1, C2 >= 1, exponent order, ...)."""


class NotAdmissible(ObscertError):
    """Rate triple rejected; carries the admissibility report explaining why."""

    def __init__(self, report, message: str = "rate triple is not admissible"):
        super().__init__(f"{message}: {report.reason()}")
        self.report = report


class InvariantViolation(ObscertError):
    """An iteration-trace inequality failed; names the inequality and the index."""

    def __init__(self, name: str, k: int, detail: str = ""):
        super().__init__(f"invariant '{name}' failed at k={k}" + (f": {detail}" if detail else ""))
        self.name = name
        self.k = k


class QuadratureFailure(ObscertError):
    """A measure integral required for evaluation does not converge."""


class UnsupportedDimension(ObscertError):
    """Quadrature-backed symbol evaluation is limited to n <= 3."""


class DegenerateObservation(ObscertError):
    """The observation of a projected state vanished; the set is too small at this resolution."""


class SingularGramian(ObscertError):
    """Observability Gramian is numerically singular; carries the unobserved direction."""

    def __init__(self, message: str, null_direction=None):
        super().__init__(message)
        self.null_direction = null_direction


class DegenerateFit(ObscertError):
    """Not enough usable data points to fit uncertainty constants."""


class NotThick(ObscertError):
    """Thickness verification failed; carries the violating translate."""

    def __init__(self, message: str, translate=None):
        super().__init__(message)
        self.translate = translate


class ParseError(ObscertError):
    """Scenario file is malformed; message carries the location."""


class ResolutionError(ObscertError):
    """A task references a name that is not declared in the scenario."""


class MonotonicityUnverifiedWarning(UserWarning):
    """Sampling could not confirm ray-monotonicity; the reported rate is heuristic."""
