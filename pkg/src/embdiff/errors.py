"""Error types shared across the package.

Every error raised on a violated precondition or a broken file derives from
EmbdiffError so the CLI can map failures to exit code 1 with a
module-qualified message.
"""


class EmbdiffError(Exception):
    """Base class for all package errors."""


class ContractError(EmbdiffError, ValueError):
    """An argument violated a documented precondition (shape, range, ...)."""


class ConfigError(EmbdiffError, ValueError):
    """A configuration value or file is invalid or missing."""


class DataError(EmbdiffError, ValueError):
    """The dataset cannot support the requested operation."""


class IntegrityError(EmbdiffError, RuntimeError):
    """A stored artifact is corrupt or inconsistent with its manifest."""


class MetricError(EmbdiffError, ValueError):
    """A metric is undefined for the given inputs."""


class TrainingError(EmbdiffError, RuntimeError):
    """Training diverged or hit a non-recoverable state."""
