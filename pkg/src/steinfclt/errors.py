"""Exception hierarchy shared by all modules."""
from __future__ import annotations


class SteinFCLTError(Exception):
    """Base class for all package errors."""


class DomainError(SteinFCLTError, ValueError):
    """An argument lies outside the domain of an operation."""


class ShapeMismatchError(SteinFCLTError, ValueError):
    """Two objects that must share dimensions do not."""


class ValidationError(SteinFCLTError, ValueError):
    """A spec, measure or kernel violates a stated invariant."""


class UnsupportedModeError(SteinFCLTError):
    """The requested computation needs a mode the inputs do not support."""


class NumericalError(SteinFCLTError, ArithmeticError):
    """A numerical procedure failed (not PSD, overflowing enumeration, ...)."""


class NotPSDError(NumericalError):
    """A covariance matrix has an eigenvalue below the PSD tolerance."""


class EnumerationTooLargeError(NumericalError):
    """Exact enumeration would exceed the configured tuple cap."""


class ConfigError(SteinFCLTError, ValueError):
    """An experiment configuration is malformed or fails schema validation."""
