"""Exception hierarchy shared across the toolkit.

The CLI maps these onto process exit codes: configuration and usage
problems exit 1, data and schema problems exit 2, numerical aborts exit 3.
"""


class GridcastError(Exception):
    """Base class for all toolkit errors."""


class DimensionError(GridcastError):
    """Tensor or layer shapes are incompatible."""


class ContractError(GridcastError):
    """An operation was called outside its contract (bad argument, missing grad)."""


class InvalidGraphError(GridcastError):
    """A graph-derived structure is unusable (e.g. an empty neighborhood segment)."""


class ConfigError(GridcastError):
    """A configuration value or combination of values is invalid."""


class StateError(GridcastError):
    """An object was used before it was put in the required state."""


class DataError(GridcastError):
    """Input data violates a schema or content requirement."""


class SchemaError(DataError):
    """A required column or field is missing or malformed."""


class GraphLoadError(DataError):
    """A graph input row failed validation; the message names the row."""


class CompatibilityError(DataError):
    """Two artifacts (e.g. checkpoint and dataset) do not belong together."""


class NumericalAbort(GridcastError):
    """Training hit a non-finite loss; carries the epoch and batch index."""

    def __init__(self, message: str, epoch: int | None = None, batch: int | None = None):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch
