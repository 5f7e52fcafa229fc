"""Exception types shared across the package.

Every error raised on a contract violation derives from ``SparsedynError``
so callers (and the CLI) can distinguish library failures from bugs.
"""


class SparsedynError(Exception):
    """Base class for all errors raised by this package."""


class ConstructionError(SparsedynError, ValueError):
    """Invalid arguments or invariants violated while building an object."""


class StabilityError(SparsedynError, ValueError):
    """An operation requires a stable system and the input is not stable."""


class AssumptionError(SparsedynError, ValueError):
    """A model assumption required by a formula does not hold.

    The message names the failing assumption (A1, A2, A3, ...).
    """


class NumericalError(SparsedynError, RuntimeError):
    """A numerical routine failed (non-convergence, overflow, singularity)."""


class DivergenceError(SparsedynError, RuntimeError):
    """An iterative process produced non-finite or exploding values."""


class DataError(SparsedynError, ValueError):
    """Malformed external data (CSV files, serialized artifacts)."""


class ConfigError(SparsedynError, ValueError):
    """Invalid experiment configuration; message names the offending field."""
