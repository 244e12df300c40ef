"""Exception types shared by all modules.

The CLI maps these onto exit codes: domain and config errors exit 1,
size guards exit 2, numerical failures exit 3.
"""


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ConfigError(ValueError):
    """A configuration document failed to parse or validate."""


class SizeGuardError(ValueError):
    """A requested problem size exceeds an enumeration guard."""


class NumericalError(ArithmeticError):
    """A numerical procedure failed (instability, underflow, no bracket)."""
