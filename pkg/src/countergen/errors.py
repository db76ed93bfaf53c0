"""Exception types shared across the pipeline.

Every error raised on purpose by this package derives from PipelineError,
so callers can catch one base class at command boundaries and map it to an
exit status.
"""


class PipelineError(Exception):
    """Base class for all countergen errors."""


class SchemaError(PipelineError):
    """An input record, file, or label does not match the declared schema."""


class EmptyCorpusError(PipelineError):
    """A corpus file parsed successfully but contains no usable records."""


class TaxonomyError(PipelineError):
    """A value taxonomy violates its structural or cardinality invariants."""


class DimensionError(PipelineError):
    """Tensor or sequence shapes are incompatible for the requested operation."""


class ConfigError(PipelineError):
    """A configuration value is missing, malformed, or inconsistent."""


class StateError(PipelineError):
    """An operation was requested on a model that is not in a usable state."""


class NumericError(PipelineError):
    """A numeric precondition failed (for example a zero-norm embedding)."""
