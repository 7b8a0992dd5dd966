"""Exception hierarchy. The CLI maps these onto process exit codes."""


class SpikeDroopError(Exception):
    exit_code = 1


class ValidationError(SpikeDroopError, ValueError):
    """A parameter or configuration value broke one of its invariants."""


class TopologyError(ValidationError):
    """The network description cannot form a connected grid."""


class NoSolutionError(SpikeDroopError):
    """The power-flow system is singular, e.g. every source is offline."""


class NumericalError(SpikeDroopError, ArithmeticError):
    """A non-finite value appeared where a finite one was required."""

    exit_code = 2


class DivergenceError(NumericalError):
    """The simulated state left the finite range."""

    def __init__(self, message, time=None):
        super().__init__(message if time is None else f"{message} (t = {time:.6g} s)")
        self.time = time


class IndeterminateError(SpikeDroopError):
    """A result is not defined for the given input, e.g. a degenerate eigenspace."""
