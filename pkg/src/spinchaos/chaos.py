"""Replica-symmetric diagnostics, the coupled map phi and its fixed point.

For two systems with profiles ``Phi_j`` the coupled map is

    phi(u) = E d_x Phi_1(h1 + chi1, v1) * d_x Phi_2(h2 + chi2, v2),

with ``(chi1, chi2)`` centered Gaussian, ``E chi1^2 = xi_11'(v1)``,
``E chi2^2 = xi_22'(v2)`` and ``E chi1 chi2 = xi_12'(u)``. Since the field
and ``chi`` are independent Gaussians, ``(h1 + chi1, h2 + chi2)`` is itself a
bivariate normal pair and expectations use a product Hermite rule on it.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NumericalError
from .mixture import (
    CoupledModelSpec,
    GaussianField,
    MixtureSpec,
    cross_xi_eval,
    poly_eval,
    xi_eval,
)
from .numerics import DEFAULT_QUAD_N, bivariate_rule, find_root, hermite_rule
from .parisi import OrderParameterTriplet, ParisiSolution

__all__ = [
    "FixedPointResult",
    "rs_residual",
    "rs_roots",
    "rs_fixed_point",
    "at_index",
    "coupled_expectation",
    "phi_coupling",
    "phi_coupling_derivative",
    "find_uf",
    "support_min",
]


def _gauss_expect(field, var, func, quad_n):
    fld = GaussianField.coerce(field)
    sd = np.sqrt(fld.std ** 2 + max(var, 0.0))
    if sd == 0.0:
        return float(func(np.array([fld.mean]))[0])
    r = hermite_rule(quad_n)
    return float(np.dot(r.weights, func(fld.mean + sd * r.nodes)))


def rs_residual(spec: MixtureSpec, field, c: float, quad_n: int = DEFAULT_QUAD_N) -> float:
    """``E tanh^2(h + z sqrt(xi'(c))) - c``."""
    var = poly_eval(spec.coefficients, c, 1)
    return _gauss_expect(field, var, lambda y: np.tanh(y) ** 2, quad_n) - c


def rs_roots(spec: MixtureSpec, field, quad_n: int = DEFAULT_QUAD_N,
             scan: int = 2000, tol: float = 1e-13) -> list[float]:
    """All roots in [0,1) of the replica-symmetric consistency equation found by a sign scan."""
    grid = np.linspace(0.0, 1.0, scan + 1)[:-1]
    vals = np.array([rs_residual(spec, field, c, quad_n) for c in grid])
    roots = []
    if abs(vals[0]) <= 1e-15:
        roots.append(0.0)
    for i in range(len(grid) - 1):
        a, b = vals[i], vals[i + 1]
        if i == 0 and roots:
            continue
        if a == 0.0 and i > 0:
            roots.append(float(grid[i]))
        elif a * b < 0:
            roots.append(find_root(lambda c: rs_residual(spec, field, c, quad_n),
                                   grid[i], grid[i + 1], tol))
    return roots


def rs_fixed_point(spec: MixtureSpec, field, quad_n: int = DEFAULT_QUAD_N) -> float:
    """Smallest ``c`` in [0,1) with ``c = E tanh^2(h + z sqrt(xi'(c)))``."""
    if abs(rs_residual(spec, field, 0.0, quad_n)) <= 1e-15:
        return 0.0
    g = lambda c: rs_residual(spec, field, c, quad_n)
    grid = np.linspace(0.0, 1.0, 201)
    prev = g(0.0)
    for a, b in zip(grid[:-1], grid[1:]):
        cur = g(min(b, 1.0 - 1e-15))
        if prev * cur <= 0:
            return find_root(g, a, min(b, 1.0 - 1e-15), 1e-14)
        prev = cur
    raise NumericalError("no replica-symmetric root in [0,1)")


def at_index(spec: MixtureSpec, field, c: float, quad_n: int = DEFAULT_QUAD_N) -> float:
    """``xi''(c) E sech^4(h + z sqrt(xi'(c)))``; above 1 the RS point is unstable."""
    if not (0.0 <= c < 1.0):
        raise DomainError("c must lie in [0,1)")
    var = poly_eval(spec.coefficients, c, 1)
    e = _gauss_expect(field, var, lambda y: 1.0 / np.cosh(y) ** 4, quad_n)
    return float(poly_eval(spec.coefficients, c, 2) * e)


def _check_vu(v1, v2, u):
    if not (0.0 < v1 <= 1.0 and 0.0 < v2 <= 1.0):
        raise DomainError("v1, v2 must lie in (0,1]")
    if abs(u) > np.sqrt(v1 * v2) * (1 + 1e-12):
        raise DomainError("|u| must not exceed sqrt(v1 v2)")


def coupled_expectation(coupled: CoupledModelSpec, f1, f2, v1: float, v2: float, u: float,
                        quad_n: int = DEFAULT_QUAD_N) -> float:
    """``E f1(h1 + chi1) f2(h2 + chi2)`` for the correlated pair at ``(v1, v2, u)``."""
    _check_vu(v1, v2, u)
    fl = coupled.field_law
    cov = fl.covariance() + np.array([
        [xi_eval(coupled.spec1, v1, 1), cross_xi_eval(coupled, np.clip(u, -1, 1), 1)],
        [cross_xi_eval(coupled, np.clip(u, -1, 1), 1), xi_eval(coupled.spec2, v2, 1)]])
    a, b, w = bivariate_rule(cov, quad_n, (fl.mean1, fl.mean2))
    return float(np.dot(w, f1(a) * f2(b)))


def _profile_derivative(sol: ParisiSolution, v: float, order: int):
    prof = sol.profile(v)
    return lambda xs: prof.evaluate(xs, order)


def phi_coupling(coupled: CoupledModelSpec, sol1: ParisiSolution, sol2: ParisiSolution,
                 v1: float, v2: float, u: float, quad_n: int = DEFAULT_QUAD_N) -> float:
    """The coupled map ``phi_{v1,v2}(u)``."""
    _check_vu(v1, v2, u)
    return coupled_expectation(coupled, _profile_derivative(sol1, v1, 1),
                               _profile_derivative(sol2, v2, 1), v1, v2, u, quad_n)


def phi_coupling_derivative(coupled: CoupledModelSpec, sol1, sol2, v1, v2, u,
                            quad_n: int = DEFAULT_QUAD_N) -> float:
    """``phi'(u) = xi_12''(u) E d_xx Phi_1 d_xx Phi_2`` (Gaussian integration by parts)."""
    e = coupled_expectation(coupled, _profile_derivative(sol1, v1, 2),
                            _profile_derivative(sol2, v2, 2), v1, v2, u, quad_n)
    return float(cross_xi_eval(coupled, np.clip(u, -1, 1), 2) * e)


@dataclass(frozen=True)
class FixedPointResult:
    u_f: float
    residual: float
    iterations: int
    max_abs_derivative: float
    bracket: tuple
    contraction: bool
    method: str


def find_uf(coupled: CoupledModelSpec, sol1: ParisiSolution, sol2: ParisiSolution,
            c1: float, c2: float, tol: float = 1e-10, quad_n: int = DEFAULT_QUAD_N,
            max_iter: int = 2000, derivative_points: int = 41) -> FixedPointResult:
    """Fixed point of ``phi_{c1,c2}`` on ``[-sqrt(c1 c2), sqrt(c1 c2)]``.

    Damped iteration ``u <- (u + phi(u)) / 2`` from 0, falling back to a
    bracketing root search on ``phi(u) - u``. The largest ``|phi'|`` over
    interior points (central differences) is the contraction witness.
    """
    if not (0.0 < c1 <= 1.0 and 0.0 < c2 <= 1.0):
        raise DomainError("c1, c2 must lie in (0,1]")
    bound = float(np.sqrt(c1 * c2))
    phi = lambda u: phi_coupling(coupled, sol1, sol2, c1, c2, float(np.clip(u, -bound, bound)),
                                 quad_n)
    u = 0.0
    method = "damped"
    it = 0
    res = abs(phi(u) - u)
    while res > tol and it < max_iter:
        u = float(np.clip(u + 0.5 * (phi(u) - u), -bound, bound))
        res = abs(phi(u) - u)
        it += 1
    if res > tol:
        method = "bracket"
        u = find_root(lambda x: phi(x) - x, -bound, bound, 1e-15)
        res = abs(phi(u) - u)
    grid = bound * np.linspace(-1.0, 1.0, derivative_points + 2)[1:-1]
    h = 1e-5 * bound
    derivs = [(phi(x + h) - phi(x - h)) / (2 * h) for x in grid]
    max_d = float(np.max(np.abs(derivs)))
    return FixedPointResult(float(u), float(res), it, max_d, (-bound, bound),
                            max_d < 1.0 - 1e-6, method)


def support_min(triplet: OrderParameterTriplet, mass_tol: float = 1e-6) -> float:
    """Smallest atom carrying mass above ``mass_tol``."""
    locs = [q for q, w in triplet.atoms if w > mass_tol]
    if not locs:
        # all mass sits in atoms below tolerance; report the heaviest one
        return max(triplet.atoms, key=lambda a: a[1])[0]
    return float(min(locs))
