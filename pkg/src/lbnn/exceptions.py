"""Exception types that separate bad inputs from estimator breakdowns.

Input/configuration problems raise plain ``ValueError``; the classes here
signal that a *valid* request could not be estimated reliably (degenerate
importance weights, a stuck Markov chain, a quadrature that failed to
converge). The command-line front end maps the two families to different
exit codes.
"""


class EstimatorDiagnosticError(RuntimeError):
    """An estimator ran but its own diagnostics rejected the result."""


class DegenerateWeightsError(EstimatorDiagnosticError):
    """Importance weights collapsed below the effective-sample-size floor."""


class ChainDiagnosticError(EstimatorDiagnosticError):
    """A Markov chain failed its health checks (acceptance rate, numerics)."""


class QuadratureError(EstimatorDiagnosticError):
    """Adaptive quadrature did not reach the requested tolerance."""
