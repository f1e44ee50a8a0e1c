"""Exception types and the CLI exit code each maps to."""

import warnings


class AddlabError(Exception):
    exit_code = 1


class ConfigError(AddlabError, ValueError):
    exit_code = 2


class DomainError(AddlabError, ValueError):
    exit_code = 2


class PreconditionError(AddlabError, ValueError):
    exit_code = 2


class RangeError(AddlabError, OverflowError):
    exit_code = 3


class NumericError(AddlabError, ArithmeticError):
    exit_code = 3

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = list(trace or [])


class ResourceError(AddlabError, RuntimeError):
    exit_code = 4


class PrecisionWarning(UserWarning):
    pass


def warn_precision(message):
    warnings.warn(message, PrecisionWarning, stacklevel=3)
