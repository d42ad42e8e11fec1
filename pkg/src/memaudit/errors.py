"""Exception hierarchy shared across the toolkit."""

from __future__ import annotations


class ValidationError(ValueError):
    """Bad input data or arguments. CLI maps this to exit code 2."""


class TensorFormatError(ValidationError):
    """A tensor file violates the MATF container contract."""


class BadMagicError(TensorFormatError):
    """File does not start with the MATF magic bytes."""


class UnsupportedVersionError(TensorFormatError):
    """MATF version byte is not one this reader understands."""


class UnsupportedDtypeError(TensorFormatError):
    """MATF dtype code is not registered."""


class TruncatedPayloadError(TensorFormatError):
    """Payload length disagrees with the shape in the header."""


class ImageFormatError(ValidationError):
    """Image file is not a readable PGM P5 or rank-2 MATF tensor."""
