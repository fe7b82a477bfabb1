"""Exception types shared across the toolkit."""

from __future__ import annotations


class LongtailError(Exception):
    """Base class for all toolkit errors."""


class AnnotationParseError(LongtailError):
    """Malformed annotation file. Carries the byte offset when known."""

    def __init__(self, message: str, offset: int | None = None):
        super().__init__(message if offset is None else f"{message} (byte offset {offset})")
        self.offset = offset


class IntegrityError(LongtailError):
    """Cross-reference inside an annotation file does not resolve."""


class ValidationError(LongtailError):
    """A record or config violates a documented invariant."""


class SplitError(LongtailError):
    """Dataset split construction failed."""


class PoolError(LongtailError):
    """A sample pool is missing, empty, or too small for the request."""


class AssetError(LongtailError):
    """Asset library lookup or load failure."""


class RenderError(LongtailError):
    """Scene could not be rendered as requested."""


class TrainingError(LongtailError):
    """Training aborted (bad inputs, non-finite loss or gradients)."""


class EvaluationError(LongtailError):
    """Evaluation inputs are inconsistent."""


class ConfigError(LongtailError):
    """Config file could not be parsed or is incomplete."""
