"""Exception taxonomy shared across the package."""


class TempestError(Exception):
    """Base class for all package errors."""


class ReducibleChain(TempestError):
    """Markov chain state graph is not strongly connected."""


class NumericalFailure(TempestError):
    """A solver finished but its residual exceeds the accepted tolerance."""


class InvalidRates(TempestError):
    """Transition rates/probabilities violate a builder precondition."""


class DomainError(TempestError):
    """Argument outside the mathematical domain of a kernel function."""


class ConvergenceFailure(TempestError):
    """Iterative eigenvalue computation did not converge.

    Carries ``iterations`` and the last Collatz-Wielandt ``bracket``.
    """

    def __init__(self, msg, iterations=None, bracket=None):
        super().__init__(msg)
        self.iterations = iterations
        self.bracket = bracket


class EmptyInterval(TempestError):
    """Maximization interval (lo, hi] is empty."""


# alias used by the discrete-time certificate's interval check
IntervalEmpty = EmptyInterval


class DivergenceDetected(TempestError):
    """Objective exceeds the divergence cap near the open left endpoint.

    Signals that the sufficient stability condition holds trivially.
    """


class WrongKind(TempestError):
    """Graph kind (AMEI/AMAI) or time base does not match the certificate."""


class NonIrreducible(TempestError):
    """A certificate precondition on chain irreducibility/aperiodicity fails."""


class BracketError(TempestError):
    """Bisection endpoints do not straddle the stable/unstable verdict."""


class TooManyEdges(TempestError):
    """Exponential-size construction exceeds the configured resource cap."""


class NonMarkovEdge(TempestError):
    """Edge process is not a plain 2-state Markov chain."""


class TooManyConfigurations(TempestError):
    """Exhaustive expectation would enumerate more than the allowed configs."""


class ParamRange(TempestError):
    """A probability parameter left [0, 1] in a discrete-time model."""


class ToleranceFailure(TempestError):
    """Adaptive integrator could not satisfy the per-interval tolerance."""


class InsufficientData(TempestError):
    """Not enough independent trajectories for a decay-rate estimate."""


class ConfigError(TempestError):
    """Experiment configuration failed schema validation or dispatch."""


#: Exceptions that map to CLI exit code 3 (resource cap exceeded).
RESOURCE_ERRORS = (TooManyEdges, TooManyConfigurations)

#: Exceptions that map to CLI exit code 2 (numerical failure).
NUMERICAL_ERRORS = (NumericalFailure, ConvergenceFailure, ToleranceFailure)
