"""Exceptions for spirkit-specific errors.
"""


class AppError(Exception):
    """spirkit general error."""


class UserError(AppError):
    """User error."""
