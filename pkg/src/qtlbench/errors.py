"""Exception taxonomy shared across the package."""


class QtlBenchError(Exception):
    """Base class for all package errors."""


class CapacityError(QtlBenchError):
    """Requested register size exceeds the simulator budget."""


class ShapeError(QtlBenchError):
    """Dimension, index, or length mismatch."""


class DegenerateInputError(QtlBenchError):
    """Input is mathematically unusable (e.g. zero-norm vector)."""


class MalformedGateError(QtlBenchError):
    """Gate description is inconsistent (missing or extra angle)."""


class UnsupportedGeneratorError(QtlBenchError):
    """A parameterized gate is not a single-qubit rotation."""


class ConfigurationError(QtlBenchError):
    """Invalid or inconsistent configuration."""


class DataError(QtlBenchError):
    """Dataset-level problem (missing records, bad class counts)."""


class LabelError(QtlBenchError):
    """Class label outside the valid range."""


class NumericFaultError(QtlBenchError):
    """NaN or Inf appeared where finite values are required."""


class FormatError(QtlBenchError):
    """Serialized payload has a bad magic number or version."""


class CorruptionError(QtlBenchError):
    """Serialized payload is truncated or internally inconsistent."""


class AggregationError(QtlBenchError):
    """Reports with mixed configurations cannot be aggregated."""


class UndefinedMetricError(QtlBenchError):
    """Metric is mathematically undefined for the given inputs."""


class InvalidCacheError(QtlBenchError):
    """Backward pass received a cache that no longer matches the model."""
