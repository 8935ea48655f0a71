"""Errors and Exceptions

This module is the main module for all errors and exceptions for perpex. Every error carries the
exit code the command line front end returns when the error reaches it.
"""

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_REGIME = 2
EXIT_ARTIFACT = 3
EXIT_VALIDATION = 4


class PerpexError(Exception):
    exit_code = EXIT_CONFIG


class InvalidInputError(PerpexError, ValueError):
    pass


class ConfigError(PerpexError):
    """Invalid configuration document or flag

    :param str field: dotted name of the offending field
    """
    exit_code = EXIT_CONFIG

    def __init__(self, message, field=None):
        if field is not None:
            message = '{}: {}'.format(field, message)
        super().__init__(message)
        self.field = field


class RegimeError(PerpexError):
    exit_code = EXIT_REGIME


class MissingArtifactError(PerpexError):
    exit_code = EXIT_ARTIFACT


class MismatchError(PerpexError):
    """A value function or critical parameter set does not belong to the market parameters"""
    exit_code = EXIT_ARTIFACT


class AdmissibilityError(PerpexError):
    """A policy emitted a buying (positive) rate"""


class SolverError(PerpexError):
    exit_code = EXIT_VALIDATION


class CutoffTooLargeError(SolverError):
    pass


class MonotonicityError(SolverError):
    pass


class NumericalBlowupError(SolverError):
    pass


class CFLError(SolverError):
    """The explicit march would be unstable

    :param int required_nt: smallest number of time steps satisfying the stability bound
    """

    def __init__(self, message, required_nt):
        super().__init__('{} (requires nt >= {})'.format(message, required_nt))
        self.required_nt = required_nt


class SchemeFailureError(SolverError):
    pass


class ValidationError(PerpexError):
    exit_code = EXIT_VALIDATION
