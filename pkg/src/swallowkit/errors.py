"""Exception hierarchy.

Every error raised by the library derives from SwallowkitError, so callers
can catch one base class at pipeline boundaries while tests can assert the
precise failure mode.
"""

from __future__ import annotations


class SwallowkitError(Exception):
    """Base class for all library errors."""


class WavFormatError(SwallowkitError):
    """Malformed RIFF/WAVE container or truncated chunk."""


class WavLayoutError(SwallowkitError):
    """Channel layout other than mono."""


class WavCodecError(SwallowkitError):
    """Sample encoding other than 16-bit PCM or IEEE float."""


class AnnotationError(SwallowkitError):
    """Problem in an annotation CSV; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message)
        self.line = line


class AnnotationFormatError(AnnotationError):
    """Bad header, wrong column count, or unparseable number."""


class AnnotationRangeError(AnnotationError):
    """Interval with end_s <= start_s or negative start_s."""


class AnnotationVocabularyError(AnnotationError):
    """Label or consistency token outside the known vocabulary."""


class SegmentRangeError(SwallowkitError):
    """Annotation interval extends outside the parent signal."""


class TooShortError(SwallowkitError):
    """Input shorter than the minimum the operation needs."""


class DomainError(SwallowkitError):
    """Numeric input outside the operation's domain (non-finite, negative...)."""


class DegenerateDataError(SwallowkitError):
    """Data on which the statistic or model output is undefined."""


class GroupingError(SwallowkitError):
    """A grouping produced an empty or too-small group."""


class ParameterError(SwallowkitError):
    """Configuration value violates a precondition."""


class StratificationError(SwallowkitError):
    """A class is too small to appear in both halves of a split."""


class TrainingError(SwallowkitError):
    """Dataset unusable for training (e.g. a single class present)."""


class ShapeError(SwallowkitError):
    """Mismatched lengths or array shapes."""


class ModelFormatError(SwallowkitError):
    """Serialized model with unknown format tag or version."""
