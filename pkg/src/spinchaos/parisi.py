"""Parisi functional for one mixed even-spin system.

For an order parameter ``m_0 = 0 <= m_1 <= ... <= m_{k+1} = 1`` and
``q_0 = 0 <= q_1 <= ... <= q_{k+2} = 1`` the functional is

    P_k = log 2 + X_0 - 1/2 sum_{p=1}^{k+1} m_p (theta(q_{p+1}) - theta(q_p)),

where ``X_0 = E A_0(h)`` and the level functions are

    A_{k+2}(x) = log cosh x,
    A_p(x) = (1/m_p) log E exp(m_p A_{p+1}(x + z_p)),   E z_p^2 = xi'(q_{p+1}) - xi'(q_p),

with a plain expectation on levels where ``m_p = 0``. The same level functions
give ``Phi(x, q)`` at every ``q`` through one partial Gaussian step, and
``Phi`` also solves the backward PDE

    d_q Phi = -(xi''(q)/2) (Phi_xx + mu([0,q]) Phi_x^2),   Phi(x, 1) = log cosh x.

Level functions live on a uniform x-grid. Only the bounded part
``A_p - log cosh`` is interpolated, so values past the grid ends are accurate.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
from typing import Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.stats import qmc

from .errors import DomainError, NumericalError
from .mixture import GaussianField, MixtureSpec, poly_eval
from .numerics import (
    DEFAULT_QUAD_N,
    hermite_rule,
    interp_points,
    logcosh,
    logcosh_derivatives,
    shift_grid_many,
)

__all__ = [
    "OrderParameterTriplet",
    "GridFunction",
    "ParisiSolution",
    "ParisiMinimum",
    "evaluate_functional",
    "functional_value",
    "phi_profile",
    "phi_pde_solve",
    "minimize_functional",
    "stationarity_residuals",
    "measure_distance",
    "parisi_grid",
]

GRID_POINTS = 2**12 + 1
SEARCH_GRID_POINTS = 2**10 + 1
SEARCH_QUAD_N = 24
BOUNDARY_Q = 1e-6


@dataclass(frozen=True)
class OrderParameterTriplet:
    """Discrete order parameter; the measure puts mass ``m_p - m_{p-1}`` on ``q_p``."""

    k: int
    m: tuple
    q: tuple

    def __post_init__(self):
        m = tuple(float(v) for v in self.m)
        q = tuple(float(v) for v in self.q)
        k = int(self.k)
        if k < 0:
            raise DomainError("k must be nonnegative")
        if len(m) != k + 2 or len(q) != k + 3:
            raise DomainError("need len(m) = k+2 and len(q) = k+3")
        if m[0] != 0.0 or m[-1] != 1.0 or q[0] != 0.0 or q[-1] != 1.0:
            raise DomainError("need m_0 = 0, m_{k+1} = 1, q_0 = 0, q_{k+2} = 1")
        if any(b < a for a, b in zip(m, m[1:])) or any(b < a for a, b in zip(q, q[1:])):
            raise DomainError("m and q must be nondecreasing")
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "q", q)

    @classmethod
    def replica_symmetric(cls, c: float) -> "OrderParameterTriplet":
        return cls(0, (0.0, 1.0), (0.0, float(c), 1.0))

    @classmethod
    def from_atoms(cls, locations: Sequence[float], masses: Sequence[float]) -> "OrderParameterTriplet":
        """Build a triplet from sorted atom locations in [0,1) and their masses."""
        loc = [float(v) for v in locations]
        cum = np.cumsum(masses)
        if abs(cum[-1] - 1.0) > 1e-12:
            raise DomainError("masses must sum to 1")
        m = (0.0,) + tuple(float(c) for c in cum[:-1]) + (1.0,)
        return cls(len(loc) - 1, m, (0.0,) + tuple(loc) + (1.0,))

    @property
    def atoms(self) -> list[tuple[float, float]]:
        """``(q_p, mass)`` for p = 1..k+1."""
        return [(self.q[p], self.m[p] - self.m[p - 1]) for p in range(1, self.k + 2)]

    def cdf(self, x: float) -> float:
        """``mu([0, x])`` for x in [0, 1]."""
        if x >= 1.0:
            return 1.0
        out = 0.0
        for p in range(1, self.k + 2):
            if self.q[p] <= x:
                out = self.m[p]
        return out

    def to_dict(self) -> dict:
        return {"k": self.k, "m": list(self.m), "q": list(self.q)}

    def sort_key(self):
        return self.m + self.q


@dataclass(frozen=True)
class GridFunction:
    """A profile ``Phi(., q)`` and its first three x-derivatives on a uniform grid."""

    x_grid: np.ndarray
    d0: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    d3: np.ndarray

    @property
    def dx(self) -> float:
        return float(self.x_grid[1] - self.x_grid[0])

    def derivative(self, order: int) -> np.ndarray:
        return (self.d0, self.d1, self.d2, self.d3)[order]

    def evaluate(self, xs, order: int = 0):
        """Interpolate the profile or a derivative at arbitrary points.

        Profiles behave like ``log cosh x + const`` for large ``|x|``, so the
        difference from ``log cosh`` is interpolated and held constant past
        the grid ends.
        """
        xs = np.asarray(xs, dtype=float)
        resid = self.derivative(order) - logcosh_derivatives(self.x_grid, order)
        return (interp_points(resid, self.x_grid[0], self.dx, xs)
                + logcosh_derivatives(xs, order))

    def to_rows(self):
        return np.column_stack([self.x_grid, self.d0, self.d1, self.d2, self.d3])


def parisi_grid(spec: MixtureSpec, field=None, points: int = GRID_POINTS) -> np.ndarray:
    """Symmetric x-grid wide enough for every Gaussian layer and the field."""
    fld = GaussianField.coerce(field)
    spread = np.sqrt(poly_eval(spec.coefficients, 1.0, 1))
    half = max(8.0, abs(fld.mean) + 6.0 * fld.std + 6.0 * spread)
    return np.linspace(-half, half, points)


def _check_triplet(triplet):
    if not isinstance(triplet, OrderParameterTriplet):
        raise DomainError("expected an OrderParameterTriplet")


def _variances(spec: MixtureSpec, q) -> np.ndarray:
    """Level variances ``xi'(q_{p+1}) - xi'(q_p)`` for p = 0..k+1."""
    dxi = poly_eval(spec.coefficients, np.asarray(q), 1)
    var = np.diff(dxi)
    if np.any(var < -1e-12):
        raise DomainError("negative variance increment")
    return np.maximum(var, 0.0)


def _theta_term(spec: MixtureSpec, triplet: OrderParameterTriplet) -> float:
    c = spec.coefficients
    q = np.asarray(triplet.q)
    theta = poly_eval(c, q, 1) * q - poly_eval(c, q, 0)
    m = np.asarray(triplet.m)
    return float(0.5 * np.sum(m[1:] * np.diff(theta)[1:]))


def _gaussian_step(sample, x, m, sd, rule, orders):
    """One level of the recursion at points ``x``.

    ``sample(order, deltas)`` returns rows ``A_{p+1}^{(order)}(x + delta_j)``. Returns
    the list of derivatives of ``A_p`` up to ``orders - 1`` and the normalized
    weights (one row per node).
    """
    if sd == 0.0:
        return [sample(d, np.zeros(1))[0] for d in range(orders)], None
    deltas = sd * rule.nodes
    f0 = sample(0, deltas)
    logw = np.log(rule.weights)[:, None]
    if m > 0:
        # centre before tilting; log1p/expm1 keeps tiny m from amplifying rounding
        w = np.exp(logw)
        mean = (w * f0).sum(axis=0)
        s = m * (f0 - mean)
        top = s.max(axis=0)
        lse = top + np.log((w * np.exp(s - top)).sum(axis=0))
        with np.errstate(over="ignore", invalid="ignore"):
            small = np.log1p((w * np.expm1(s)).sum(axis=0))
        c = np.where(np.abs(s).max(axis=0) <= 1.0, small, lse)
        a0 = mean + c / m
        wts = w * np.exp(s - c)
    else:
        wts = np.broadcast_to(np.exp(logw), f0.shape)
        a0 = (wts * f0).sum(axis=0)
    if not np.all(np.isfinite(a0)):
        raise NumericalError("non-finite level value")
    out = [a0]
    if orders == 1:
        return out, wts
    f1 = sample(1, deltas)
    a1 = (wts * f1).sum(axis=0)
    out.append(a1)
    if orders == 2:
        return out, wts
    f2 = sample(2, deltas)
    e2 = (wts * f2).sum(axis=0)
    e11 = (wts * f1 * f1).sum(axis=0)
    a2 = e2 + m * (e11 - a1 * a1)
    out.append(a2)
    if orders == 3:
        return out, wts
    f3 = sample(3, deltas)
    e3 = (wts * f3).sum(axis=0)
    e12 = (wts * f1 * f2).sum(axis=0)
    e111 = (wts * f1 ** 3).sum(axis=0)
    a3 = (e3 + 3 * m * e12 - m * a1 * e2 + m * m * (e111 - a1 * e11)
          - 2 * m * a1 * a2)
    out.append(a3)
    return out, wts


class _Levels:
    """Residual tables ``A_p^{(d)} - log cosh^{(d)}`` for p = 0..k+2 on a grid."""

    def __init__(self, spec, triplet, x, rule, orders):
        self.x = x
        self.dx = float(x[1] - x[0])
        self.rule = rule
        self.orders = orders
        self.m = np.asarray(triplet.m)
        self.sd = np.sqrt(_variances(spec, triplet.q))
        k = triplet.k
        zero = np.zeros_like(x)
        self.resid = [None] * (k + 3)
        self.resid[k + 2] = [zero] * orders
        self.base = [logcosh_derivatives(x, d) for d in range(orders)]
        for p in range(k + 1, -1, -1):
            self.resid[p] = self._step(p)

    def sampler_on_grid(self, p):
        def sample(d, deltas):
            return (shift_grid_many(self.resid[p][d], deltas, self.dx)
                    + logcosh_derivatives(self.x[None, :] + deltas[:, None], d))
        return sample

    def sampler_at(self, p, xs):
        def sample(d, deltas):
            pts = xs[None, :] + deltas[:, None]
            return (interp_points(self.resid[p][d], self.x[0], self.dx, pts)
                    + logcosh_derivatives(pts, d))
        return sample

    def _step(self, p):
        mp = self.m[p] if p < len(self.m) else 1.0
        vals, _ = _gaussian_step(self.sampler_on_grid(p + 1), self.x, mp, self.sd[p],
                                 self.rule, self.orders)
        return [v - b for v, b in zip(vals, self.base)]

    def table(self, p, d):
        return self.resid[p][d] + self.base[d]

    def value_at(self, p, xs, d=0):
        return (interp_points(self.resid[p][d], self.x[0], self.dx, xs)
                + logcosh_derivatives(xs, d))


def _field_expectation(levels, field, rule):
    fld = GaussianField.coerce(field)
    if fld.std == 0.0:
        return float(levels.value_at(0, np.array([fld.mean]))[0])
    pts = fld.mean + fld.std * rule.nodes
    return float(np.dot(rule.weights, levels.value_at(0, pts)))


def functional_value(spec: MixtureSpec, field, triplet: OrderParameterTriplet,
                     quad_n: int = DEFAULT_QUAD_N, grid_points: int = GRID_POINTS) -> float:
    """``P_k(m, q)`` without derivative tables (fast path for optimization)."""
    _check_triplet(triplet)
    rule = hermite_rule(quad_n)
    x = parisi_grid(spec, field, grid_points)
    levels = _Levels(spec, triplet, x, rule, 1)
    x0 = _field_expectation(levels, field, rule)
    return float(np.log(2.0) + x0 - _theta_term(spec, triplet))


@dataclass
class ParisiSolution:
    """An evaluated order parameter with its level functions.

    ``level_tables[p]`` samples ``A_p`` and its derivatives (p = 0..k+2);
    ``level_weights[p]`` holds ``(m_p, sd_p)`` of the Gaussian step from
    ``A_{p+1}`` to ``A_p``, which together with the tables determines the
    change-of-measure weights ``W_p``.
    """

    value: float
    x0: float
    level_tables: tuple
    level_weights: tuple
    triplet: OrderParameterTriplet
    spec: MixtureSpec
    field: GaussianField
    quad_n: int
    _levels: _Levels = None
    _profiles: dict = dc_field(default_factory=dict, repr=False)

    @property
    def theta_term(self) -> float:
        return _theta_term(self.spec, self.triplet)

    def reconstruct_value(self) -> float:
        return float(np.log(2.0) + self.x0 - self.theta_term)

    def profile(self, q_eval: float, x_grid=None) -> GridFunction:
        """``Phi(., q_eval)`` with derivatives, by the partial-step representation."""
        if not (0.0 <= q_eval <= 1.0):
            raise DomainError("q_eval must lie in [0,1]")
        lv = self._levels
        xs = lv.x if x_grid is None else np.asarray(x_grid, dtype=float)
        tq = self.triplet.q
        if q_eval == 1.0:
            vals = [logcosh_derivatives(xs, d) for d in range(4)]
            return GridFunction(xs, *vals)
        p = max(i for i in range(self.triplet.k + 2) if tq[i] <= q_eval)
        c = self.spec.coefficients
        var = max(poly_eval(c, tq[p + 1], 1) - poly_eval(c, q_eval, 1), 0.0)
        if x_grid is None and q_eval == tq[p]:
            return self.level_tables[p]
        if x_grid is None and q_eval in self._profiles:
            return self._profiles[q_eval]
        sample = lv.sampler_at(p + 1, xs)
        vals, _ = _gaussian_step(sample, xs, self.triplet.m[p], np.sqrt(var), lv.rule, 4)
        out = GridFunction(xs, *vals)
        if x_grid is None:
            self._profiles[q_eval] = out
        return out


def evaluate_functional(spec: MixtureSpec, field, triplet: OrderParameterTriplet,
                        quad_n: int = DEFAULT_QUAD_N,
                        grid_points: int = GRID_POINTS) -> ParisiSolution:
    """Evaluate ``P_k(m, q)`` and keep the level tables with derivatives 0..3."""
    _check_triplet(triplet)
    fld = GaussianField.coerce(field)
    rule = hermite_rule(quad_n)
    x = parisi_grid(spec, fld, grid_points)
    levels = _Levels(spec, triplet, x, rule, 4)
    x0 = _field_expectation(levels, fld, rule)
    tables = tuple(GridFunction(x, *[levels.table(p, d) for d in range(4)])
                   for p in range(triplet.k + 3))
    weights = tuple((float(triplet.m[p]), float(levels.sd[p])) for p in range(triplet.k + 2))
    value = float(np.log(2.0) + x0 - _theta_term(spec, triplet))
    return ParisiSolution(value, x0, tables, weights, triplet, spec, fld, quad_n, levels)


def phi_profile(spec: MixtureSpec, triplet: OrderParameterTriplet, q_eval: float,
                x_grid, quad_n: int = DEFAULT_QUAD_N) -> GridFunction:
    """``Phi_mu(., q_eval)`` and derivatives up to order 3 on ``x_grid``."""
    if not (0.0 <= q_eval <= 1.0):
        raise DomainError("q_eval must lie in [0,1]")
    sol = evaluate_functional(spec, None, triplet, quad_n)
    return sol.profile(q_eval, x_grid)


def stationarity_residuals(spec: MixtureSpec, field, triplet: OrderParameterTriplet,
                           quad_n: int = DEFAULT_QUAD_N,
                           solution: ParisiSolution | None = None) -> list[float]:
    """``E W_1...W_{r-1} A_r'(zeta_r)^2 - q_r`` for each interior atom.

    Atoms are r = 2..k+1, plus r = 1 when ``q_1 >= 1e-6``. The weighted
    expectation runs backward: ``B_r = (A_r')^2`` and
    ``B_p(x) = E[W_p B_{p+1}(x + z_p)]``, then ``E B_1(h + z_0)``. The partial
    derivative of the functional is ``-1/2 (m_r - m_{r-1}) xi''(q_r)`` times
    the residual.
    """
    _check_triplet(triplet)
    k = triplet.k
    m, q = triplet.m, triplet.q
    if any(b <= a for a, b in zip(m[:-1], m[1:])):
        raise DomainError("stationarity needs strictly increasing m")
    if any(b <= a for a, b in zip(q[1:k + 2], q[2:k + 2])) or q[k + 1] >= 1.0:
        raise DomainError("stationarity needs strictly increasing interior q below 1")
    sol = solution or evaluate_functional(spec, field, triplet, quad_n)
    lv = sol._levels
    rule = lv.rule
    fld = sol.field
    first = 1 if q[1] >= BOUNDARY_Q else 2
    out = []
    for r in range(first, k + 2):
        b = lv.table(r, 1) ** 2
        for p in range(r - 1, 0, -1):
            sample = lv.sampler_on_grid(p + 1)
            _, wts = _gaussian_step(sample, lv.x, m[p], lv.sd[p], rule, 1)
            if wts is None:
                continue
            if not np.all(np.isfinite(wts)):
                raise NumericalError(f"weights underflow at level {p}")
            shifted = shift_grid_many(b, lv.sd[p] * rule.nodes, lv.dx)
            b = (wts * shifted).sum(axis=0)
        sd0 = np.sqrt(fld.std ** 2 + lv.sd[0] ** 2)
        pts = fld.mean + sd0 * rule.nodes if sd0 > 0 else np.array([fld.mean])
        wts0 = rule.weights if sd0 > 0 else np.ones(1)
        val = float(np.dot(wts0, interp_points(b, lv.x[0], lv.dx, pts)))
        out.append(val - q[r])
    return out


def measure_distance(t1: OrderParameterTriplet, t2: OrderParameterTriplet) -> float:
    """``int_0^1 |mu1([0,x]) - mu2([0,x])| dx`` for two step CDFs."""
    points = sorted(set(t1.q) | set(t2.q) | {0.0, 1.0})
    total = 0.0
    for a, b in zip(points[:-1], points[1:]):
        if b > a:
            total += (b - a) * abs(t1.cdf(a) - t2.cdf(a))
    return total


# ---------------------------------------------------------------- PDE solver

def _fd_first(a, dx):
    return (-a[4:] + 8 * a[3:-1] - 8 * a[1:-3] + a[:-4]) / (12 * dx)


def _fd_second(a, dx):
    return (-a[4:] + 16 * a[3:-1] - 30 * a[2:-2] + 16 * a[1:-3] - a[:-4]) / (12 * dx * dx)


def _fd_third(a, dx):
    return (-a[6:] + 8 * a[5:-1] - 13 * a[4:-2] + 13 * a[2:-4] - 8 * a[1:-5] + a[:-6]) / (8 * dx ** 3)


def phi_pde_solve(spec: MixtureSpec, cdf: OrderParameterTriplet, x_grid,
                  q_steps: int | None = None, q_eval=(0.0,)) -> dict:
    """Solve the backward Parisi PDE from ``q = 1`` down to the requested ``q``.

    Method of lines: fourth-order central differences in x and classical RK4
    in q, applied to ``psi = Phi - log cosh x`` on ``x_grid`` extended by a
    margin wide enough that the edge condition ``psi_x = 0`` does not reach
    the returned window. ``q_steps`` sets the largest q-step ``1/q_steps``,
    which must satisfy ``dq <= dx^2 / (2 max xi'')``.

    Returns ``{q: GridFunction}`` on ``x_grid``.
    """
    _check_triplet(cdf)
    x = np.asarray(x_grid, dtype=float)
    dx = float(x[1] - x[0])
    if len(x) < 3 or np.max(np.abs(np.diff(x) - dx)) > 1e-9 * max(1.0, abs(dx)):
        raise DomainError("x_grid must be uniform")
    c = spec.coefficients
    xi2max = float(poly_eval(c, 1.0, 2))
    dq_max = dx * dx / (2 * xi2max) if xi2max > 0 else 1.0
    if q_steps is None:
        q_steps = int(np.ceil(1.0 / dq_max)) + 1
    if xi2max > 0 and 1.0 / q_steps > dq_max * (1 + 1e-12):
        raise NumericalError(
            f"q-step {1.0 / q_steps:.3g} exceeds stability bound {dq_max:.3g}")
    q_eval = sorted({float(v) for v in np.atleast_1d(q_eval)})
    if any(v < 0 or v > 1 for v in q_eval):
        raise DomainError("q_eval must lie in [0,1]")
    margin = 8.0 + 6.0 * np.sqrt(poly_eval(c, 1.0, 1))
    npad = int(np.ceil(margin / dx))
    xe = np.concatenate([x[0] - dx * np.arange(npad, 0, -1), x, x[-1] + dx * np.arange(1, npad + 1)])
    base1 = np.tanh(xe)
    base2 = 1.0 - base1 ** 2

    def rhs(qv, psi, mu):
        a = np.pad(psi, 2, mode="edge")
        px = _fd_first(a, dx)
        pxx = _fd_second(a, dx)
        return -0.5 * poly_eval(c, qv, 2) * (base2 + pxx + mu * (base1 + px) ** 2)

    breaks = sorted(set([0.0, 1.0] + list(cdf.q) + q_eval))
    psi = np.zeros_like(xe)
    out = {}
    if 1.0 in q_eval:
        out[1.0] = psi.copy()
    for hi, lo in zip(breaks[::-1][:-1], breaks[::-1][1:]):
        if hi <= lo:
            continue
        mu = cdf.cdf(0.5 * (lo + hi))
        nsteps = max(1, int(np.ceil((hi - lo) * q_steps - 1e-9)))
        h = -(hi - lo) / nsteps
        qv = hi
        for _ in range(nsteps):
            k1 = rhs(qv, psi, mu)
            k2 = rhs(qv + h / 2, psi + h / 2 * k1, mu)
            k3 = rhs(qv + h / 2, psi + h / 2 * k2, mu)
            k4 = rhs(qv + h, psi + h * k3, mu)
            psi = psi + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            qv += h
        if not np.all(np.isfinite(psi)):
            raise NumericalError("PDE solution became non-finite")
        if lo in q_eval:
            out[lo] = psi.copy()
    result = {}
    sl = slice(npad, npad + len(x))
    for qv, ps in out.items():
        a = np.pad(ps, 3, mode="edge")
        d1 = _fd_first(a[1:-1], dx)[sl]
        d2 = _fd_second(a[1:-1], dx)[sl]
        d3 = _fd_third(a, dx)[sl]
        result[qv] = GridFunction(
            x, ps[sl] + logcosh(x), d1 + np.tanh(x), d2 + logcosh_derivatives(x, 2),
            d3 + logcosh_derivatives(x, 3))
    return result


# ---------------------------------------------------------------- optimizer

def _triplet_from_params(k, params):
    """Stick-breaking map from the unit box to ordered (m, q)."""
    s = np.clip(params[: k + 1], 0.0, 1.0)
    r = np.clip(params[k + 1:], 0.0, 1.0)
    q = [0.0]
    for sj in s:
        q.append(q[-1] + (1.0 - q[-1]) * sj)
    m = [0.0]
    for rj in r:
        m.append(m[-1] + (1.0 - m[-1]) * rj)
    q = [min(v, 1.0) for v in q]
    return OrderParameterTriplet(k, tuple(m) + (1.0,), tuple(q) + (1.0,))


class ParisiMinimum:
    """Result of ``minimize_functional``; unpacks as ``(triplet, value)``."""

    def __init__(self, triplet, value, converged, evaluations, restart_values):
        self.triplet = triplet
        self.value = value
        self.converged = converged
        self.evaluations = evaluations
        self.restart_values = restart_values

    def __iter__(self):
        return iter((self.triplet, self.value))

    def __repr__(self):
        return (f"ParisiMinimum(value={self.value!r}, triplet={self.triplet!r}, "
                f"converged={self.converged})")


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("THREADS", "1")))
    except ValueError:
        return 1


def minimize_functional(spec: MixtureSpec, field, k: int, restarts: int = 4, seed: int = 0,
                        quad_n: int = DEFAULT_QUAD_N) -> ParisiMinimum:
    """Minimize ``P_k`` over ordered triplets with ``k+1`` atoms.

    Parameters live in the unit box through a stick-breaking map, so the
    ordering constraints become bounds. Each start runs projected quasi-Newton
    descent (L-BFGS-B) on a coarse grid; the best point is polished by bounded
    Nelder-Mead and re-evaluated at full resolution. Starts are a centre point
    plus a Latin hypercube sample seeded by ``seed``.
    """
    if k < 0:
        raise DomainError("k must be nonnegative")
    fld = GaussianField.coerce(field)
    dim = 2 * k + 1
    rule_n = min(SEARCH_QUAD_N, quad_n)
    counter = [0]

    def objective(params):
        counter[0] += 1
        return functional_value(spec, fld, _triplet_from_params(k, params), rule_n,
                                SEARCH_GRID_POINTS)

    starts = [np.full(dim, 0.5)]
    if restarts > 1:
        sampler = qmc.LatinHypercube(d=dim, seed=np.random.default_rng(seed))
        starts.extend(sampler.random(restarts - 1))
    bounds = [(0.0, 1.0)] * dim

    def local(x0):
        res = minimize(objective, x0, method="L-BFGS-B", bounds=bounds,
                       options={"eps": 1e-7, "ftol": 1e-13, "gtol": 1e-9, "maxiter": 200})
        return res

    workers = min(_threads(), len(starts))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(local, starts))
    else:
        results = [local(x0) for x0 in starts]
    ranked = sorted(
        results,
        key=lambda r: (float(r.fun), _triplet_from_params(k, r.x).sort_key()))
    best = ranked[0]
    polish = minimize(objective, np.clip(best.x, 0, 1), method="Nelder-Mead", bounds=bounds,
                      options={"xatol": 1e-9, "fatol": 1e-14, "maxfev": 100 * dim})
    x_best = polish.x if polish.fun <= best.fun else best.x
    triplet = _triplet_from_params(k, x_best)
    value = functional_value(spec, fld, triplet, quad_n)
    converged = bool(best.success or polish.success)
    return ParisiMinimum(triplet, value, converged, counter[0],
                         [float(r.fun) for r in results])
