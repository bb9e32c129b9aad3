"""Exception hierarchy shared across the package.

The CLI maps these onto stable exit codes: ConfigError -> 1,
DataError -> 2, NumericalError -> 3.
"""


class MultiVqcError(Exception):
    """Base class for all package errors."""


class ConfigError(MultiVqcError):
    """Invalid configuration value or unusable run setup."""


class ModelDefinitionError(ConfigError):
    """Circuit or model references that cannot be resolved (bad widths,
    unknown parameter/feature ids)."""


class DataError(MultiVqcError):
    """Unusable input data: parse failures, missing values, degenerate labels."""


class NumericalError(MultiVqcError):
    """Non-finite values encountered during training or evaluation."""


class PipelineStateError(MultiVqcError):
    """Preprocessing stages used before fitting or out of order."""
