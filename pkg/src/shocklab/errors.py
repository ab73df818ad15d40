"""Exception hierarchy shared by every module.

Each class carries the process exit code the command line maps it to.
"""


class ShocklabError(Exception):
    exit_code = 3


class ConfigurationError(ShocklabError):
    """Inputs violate a precondition or a hypothesis gate."""

    exit_code = 2


class DomainError(ConfigurationError):
    """An argument lies outside the domain of a function."""


class NumericFailure(ShocklabError):
    """A computation did not converge or produced non-finite values.

    ``snapshot`` optionally holds the state at the moment of failure.
    """

    exit_code = 3

    def __init__(self, message, snapshot=None):
        super().__init__(message)
        self.snapshot = snapshot


class InternalConsistencyError(ShocklabError):
    """Two independent evaluation routes disagree beyond tolerance."""

    exit_code = 3
