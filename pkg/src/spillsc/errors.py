"""Exception types shared across the package.

Two broad classes of failure are distinguished so the CLI can map them to
exit codes: invalid inputs or configuration (exit 1) and numerical failures
inside the sampler or downstream computations (exit 2).
"""


class SpillscError(Exception):
    """Base class for all package errors."""


class ValidationError(SpillscError):
    """Invalid data, configuration, or arguments."""


class ConfigError(ValidationError):
    """Configuration file failed validation; carries every violation found."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class NumericalError(SpillscError):
    """Numerical failure during sampling or posterior computation."""
