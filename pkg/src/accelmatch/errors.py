"""Error taxonomy shared by the library and the CLI.

The CLI maps each class to a distinct process exit code, so library code
should raise the most specific one that applies.
"""


class AccelmatchError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ValidationFailure(AccelmatchError):
    """Input data violates a structural invariant (bad market, matching, ...)."""

    exit_code = 1

    def __init__(self, message, violations=None):
        super().__init__(message)
        self.violations = list(violations) if violations else []


class ConfigurationError(AccelmatchError):
    """The request itself is malformed: unknown names, bad sizes, missing inputs."""

    exit_code = 2


class NumericError(AccelmatchError):
    """A numeric procedure failed: non-finite values, degenerate weights, no variance."""

    exit_code = 3
