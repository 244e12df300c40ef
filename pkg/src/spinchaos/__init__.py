"""Numerical tools for chaos in mixed even-spin models."""
from .errors import ConfigError, DomainError, NumericalError, SizeGuardError
from .mixture import (
    ConditionReport,
    CoupledModelSpec,
    FieldLaw,
    GaussianField,
    MixtureSpec,
    cauchy_schwarz_gap,
    cross_xi_eval,
    diagnose_conditions,
    theta_eval,
    xi_eval,
)

__version__ = "0.1.0"
