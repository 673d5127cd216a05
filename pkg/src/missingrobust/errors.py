"""Error taxonomy shared across the package.

``ConfigError`` maps to CLI exit code 1, everything else that escapes maps to
exit code 2 (numeric failure).
"""


class DomainError(ValueError):
    """A parameter is outside its mathematical domain."""


class DimensionError(ValueError):
    """Mismatched shapes or lengths."""


class SizeError(ValueError):
    """Too little data for the requested computation, or a problem size
    beyond the supported range."""


class ModelError(ValueError):
    """Data violates the structural assumptions of an estimator (for
    example mixed observation patterns where all-or-nothing is required)."""


class EstimationError(RuntimeError):
    """A numeric estimation step failed (empty observed set, solver
    breakdown)."""


class ConfigError(ValueError):
    """Invalid harness or CLI configuration."""
