"""Mixed even-spin mixtures, the cross mixture of a coupled pair, and field laws.

A mixture is a finite sequence of temperatures ``betas = (b_1, b_2, ...)``
where index ``p`` (1-based) is the half-degree, so the interaction order is
``2p`` and

    xi(x) = sum_p b_p^2 x^(2p),   theta(x) = x xi'(x) - xi(x).

For a coupled pair with disorder correlations ``t_p`` the cross mixture is
``xi_12(x) = sum_p t_p b1_p b2_p x^(2p)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DomainError

__all__ = [
    "MixtureSpec",
    "GaussianField",
    "FieldLaw",
    "CoupledModelSpec",
    "ConditionReport",
    "poly_eval",
    "xi_eval",
    "theta_eval",
    "cross_xi_eval",
    "cross_theta_eval",
    "cauchy_schwarz_gap",
    "diagnose_conditions",
]


def _as_float_tuple(values, name):
    try:
        out = tuple(float(v) for v in np.atleast_1d(np.asarray(values, dtype=float)))
    except (TypeError, ValueError) as exc:
        raise DomainError(f"{name} must be a sequence of reals") from exc
    if not all(np.isfinite(out)):
        raise DomainError(f"{name} must be finite")
    return out


@dataclass(frozen=True)
class MixtureSpec:
    """Temperatures ``betas[p-1] = beta_p`` of a mixed even-spin model.

    An all-zero mixture is allowed (it describes the free spin system); the
    operations that need a nontrivial mixture check ``is_trivial``.
    """

    betas: tuple

    def __post_init__(self):
        betas = _as_float_tuple(self.betas, "betas")
        if len(betas) == 0:
            raise DomainError("betas must contain at least one entry")
        if any(b < 0 for b in betas):
            raise DomainError("beta_p must be nonnegative")
        object.__setattr__(self, "betas", betas)
        if not np.isfinite(xi_eval(self, 1.0, 0)):
            raise DomainError("xi(1) is not finite")

    @property
    def is_trivial(self) -> bool:
        return all(b == 0.0 for b in self.betas)

    @property
    def coefficients(self) -> np.ndarray:
        """Coefficients ``c_p = beta_p^2`` of ``x^(2p)``."""
        return np.asarray(self.betas) ** 2

    def padded(self, length: int) -> "MixtureSpec":
        return MixtureSpec(self.betas + (0.0,) * (length - len(self.betas)))


@dataclass(frozen=True)
class GaussianField:
    """Marginal external field of one system: ``h = mean + std * g``."""

    mean: float = 0.0
    std: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "mean", float(self.mean))
        object.__setattr__(self, "std", float(self.std))
        if not (np.isfinite(self.mean) and np.isfinite(self.std)):
            raise DomainError("field parameters must be finite")
        if self.std < 0:
            raise DomainError("field std must be nonnegative")

    @property
    def is_zero(self) -> bool:
        return self.mean == 0.0 and self.std == 0.0

    @classmethod
    def coerce(cls, value) -> "GaussianField":
        if value is None:
            return cls()
        if isinstance(value, cls):
            return value
        if isinstance(value, (int, float, np.floating)):
            return cls(float(value), 0.0)
        mean, std = value
        return cls(mean, std)


@dataclass(frozen=True)
class FieldLaw:
    """Joint law of ``(h1, h2) = (mean1 + std1 g1, mean2 + std2 g2)``, ``E g1 g2 = corr``."""

    mean1: float = 0.0
    mean2: float = 0.0
    std1: float = 0.0
    std2: float = 0.0
    corr: float = 0.0

    def __post_init__(self):
        for name in ("mean1", "mean2", "std1", "std2", "corr"):
            value = float(getattr(self, name))
            if not np.isfinite(value):
                raise DomainError(f"field {name} must be finite")
            object.__setattr__(self, name, value)
        if self.std1 < 0 or self.std2 < 0:
            raise DomainError("field std1, std2 must be nonnegative")
        if abs(self.corr) > 1:
            raise DomainError("field corr must lie in [-1,1]")

    def marginal(self, j: int) -> GaussianField:
        if j == 1:
            return GaussianField(self.mean1, self.std1)
        if j == 2:
            return GaussianField(self.mean2, self.std2)
        raise DomainError("system index must be 1 or 2")

    def covariance(self) -> np.ndarray:
        c = self.corr * self.std1 * self.std2
        return np.array([[self.std1**2, c], [c, self.std2**2]])

    @property
    def is_symmetric(self) -> bool:
        """True when both marginals are centered (law invariant under h -> -h)."""
        return self.mean1 == 0.0 and self.mean2 == 0.0


@dataclass(frozen=True)
class CoupledModelSpec:
    """Two mixtures coupled through disorder correlations ``t_p`` and a joint field."""

    spec1: MixtureSpec
    spec2: MixtureSpec
    correlations: tuple = (1.0,)
    field_law: FieldLaw = field(default_factory=FieldLaw)

    def __post_init__(self):
        t = _as_float_tuple(self.correlations, "correlations")
        if any(tp < 0 or tp > 1 for tp in t):
            raise DomainError("t_p must lie in [0,1]")
        length = max(len(self.spec1.betas), len(self.spec2.betas), len(t))
        object.__setattr__(self, "spec1", self.spec1.padded(length))
        object.__setattr__(self, "spec2", self.spec2.padded(length))
        object.__setattr__(self, "correlations", t + (0.0,) * (length - len(t)))
        if self.field_law is None:
            object.__setattr__(self, "field_law", FieldLaw())

    @property
    def cross_coefficients(self) -> np.ndarray:
        return (np.asarray(self.correlations) * np.asarray(self.spec1.betas)
                * np.asarray(self.spec2.betas))

    def spec(self, j: int) -> MixtureSpec:
        if j == 1:
            return self.spec1
        if j == 2:
            return self.spec2
        raise DomainError("system index must be 1 or 2")

    def coefficients(self, j: int, jp: int) -> np.ndarray:
        """Coefficients of ``xi_{j,j'}``."""
        if j == jp:
            return self.spec(j).coefficients
        return self.cross_coefficients

    @property
    def identical(self) -> bool:
        """Same mixtures and perfectly correlated disorder on every active order."""
        if self.spec1.betas != self.spec2.betas:
            return False
        return all(tp == 1.0 or b == 0.0 for tp, b in zip(self.correlations, self.spec1.betas))

    def to_dict(self) -> dict:
        fl = self.field_law
        return {
            "beta1": list(self.spec1.betas),
            "beta2": list(self.spec2.betas),
            "t": list(self.correlations),
            "field": {"mean1": fl.mean1, "mean2": fl.mean2, "std1": fl.std1,
                      "std2": fl.std2, "corr": fl.corr},
        }


def _check_x(x):
    xa = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(xa)) or np.any(np.abs(xa) > 1.0):
        raise DomainError("x must lie in [-1,1]")
    return xa


def poly_eval(coefficients, x, order: int = 0):
    """Evaluate ``sum_p c_p x^(2p)`` or its first/second derivative.

    No domain checks; used internally where arguments are already valid.
    """
    c = np.asarray(coefficients, dtype=float)
    xa = np.asarray(x, dtype=float)
    out = np.zeros_like(xa)
    for p, cp in enumerate(c, start=1):
        if cp == 0.0:
            continue
        d = 2 * p
        if order == 0:
            out = out + cp * xa**d
        elif order == 1:
            out = out + cp * d * xa ** (d - 1)
        elif order == 2:
            out = out + cp * d * (d - 1) * xa ** (d - 2)
        elif order == 3:
            if d >= 3:
                out = out + cp * d * (d - 1) * (d - 2) * xa ** (d - 3)
        else:
            raise DomainError("order must be in {0,1,2,3}")
    return out if out.ndim else float(out)


def _check_order(order):
    if order not in (0, 1, 2):
        raise DomainError("order must be in {0,1,2}")


def xi_eval(spec: MixtureSpec, x, order: int = 0):
    """``xi``, ``xi'`` or ``xi''`` at ``x`` in [-1,1]."""
    _check_order(order)
    return poly_eval(spec.coefficients, _check_x(x), order)


def theta_eval(spec: MixtureSpec, x):
    """``theta(x) = x xi'(x) - xi(x) = sum_p (2p-1) b_p^2 x^(2p)``."""
    xa = _check_x(x)
    return poly_eval(spec.coefficients, xa, 1) * xa - poly_eval(spec.coefficients, xa, 0)


def cross_xi_eval(coupled: CoupledModelSpec, x, order: int = 0):
    """Cross mixture ``xi_12`` (equal to ``xi_21``) or a derivative."""
    _check_order(order)
    return poly_eval(coupled.cross_coefficients, _check_x(x), order)


def cross_theta_eval(coupled: CoupledModelSpec, x):
    xa = _check_x(x)
    c = coupled.cross_coefficients
    return poly_eval(c, xa, 1) * xa - poly_eval(c, xa, 0)


def cauchy_schwarz_gap(coupled: CoupledModelSpec, v1: float, v2: float) -> float:
    """``sqrt(xi_11'(v1) xi_22'(v2)) - xi_12'(sqrt(v1 v2))``, nonnegative."""
    for v in (v1, v2):
        if not (0.0 < v <= 1.0):
            raise DomainError("v1, v2 must lie in (0,1]")
    a = xi_eval(coupled.spec1, v1, 1)
    b = xi_eval(coupled.spec2, v2, 1)
    return float(np.sqrt(a * b) - cross_xi_eval(coupled, np.sqrt(v1 * v2), 1))


@dataclass(frozen=True)
class ConditionReport:
    """Structure of the ratio ``beta2_p / beta1_p`` over the shared support."""

    proportionality_nu: float | None
    deviating_index: int | None
    shared_support: tuple
    proportional_set: tuple
    density_verifiable: bool = False
    notes: str = ""


def diagnose_conditions(coupled: CoupledModelSpec, rtol: float = 1e-12) -> ConditionReport:
    """Find the largest index set on which ``beta2_p = nu beta1_p``.

    Indices are 1-based half-degrees. The density requirement on the index set
    (divergence of ``sum 1/p``) cannot hold for a finite truncation, so it is
    always reported as unverifiable.
    """
    b1 = np.asarray(coupled.spec1.betas)
    b2 = np.asarray(coupled.spec2.betas)
    support = tuple(int(p) + 1 for p in np.flatnonzero((b1 > 0) | (b2 > 0)))
    shared = [p for p in support if b1[p - 1] > 0 and b2[p - 1] > 0]
    note_density = "density of the index set is unverifiable for a finite mixture"
    if not shared:
        return ConditionReport(None, None, support, (), False,
                               "no index carries both mixtures; " + note_density)
    ratios = {p: b2[p - 1] / b1[p - 1] for p in shared}
    groups: dict[float, list[int]] = {}
    for p, r in ratios.items():
        for key in groups:
            if abs(key - r) <= rtol * max(1.0, abs(key)):
                groups[key].append(p)
                break
        else:
            groups[r] = [p]
    # largest group wins; ties broken by the smaller ratio
    nu, members = max(groups.items(), key=lambda kv: (len(kv[1]), -kv[0]))
    deviating = [p for p in support if p not in members]
    notes = note_density
    if len(deviating) > 1:
        notes = f"several deviating indices {deviating}; " + notes
    return ConditionReport(
        proportionality_nu=float(nu),
        deviating_index=deviating[0] if deviating else None,
        shared_support=support,
        proportional_set=tuple(sorted(members)),
        density_verifiable=False,
        notes=notes,
    )
