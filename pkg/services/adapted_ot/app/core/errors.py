"""
Exception types shared by the adapted_ot core and its command line.
"""


class AdaptedOtError(Exception):
    """Base class for all errors raised by the toolkit."""

    exit_code = 1


class MalformedInputError(AdaptedOtError, ValueError):
    """Input could not be parsed or has the wrong shape."""

    exit_code = 2


class PreconditionError(AdaptedOtError, ValueError):
    """Input is well formed but violates an operation's precondition."""

    exit_code = 3


class SolverError(AdaptedOtError, RuntimeError):
    """The LP solver stopped without a usable answer."""

    exit_code = 3
