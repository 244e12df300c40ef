"""Interpolation bounds for the coupled free energy at cross overlap ``u``.

The coupled bound is

    2 log 2 + Y_0(lam) - lam u
      - 1/2 sum_{j,j'} sum_{p=0}^{kappa} n_p (theta_jj'(rho_{p+1}^jj') - theta_jj'(rho_p^jj')),

where ``Y_0`` comes from a two-dimensional backward recursion over correlated
Gaussian pairs ``(y_p^1, y_p^2)`` starting from

    Y_{kappa+1} = log(cosh a cosh b cosh lam + sinh a sinh b sinh lam).

The sum over ``(j, j')`` runs over all four index pairs, so the cross term is
counted twice. ``Y_p`` is sampled on a square grid; as in the single-system
recursion only the bounded part ``Y_p - log cosh a - log cosh b`` is
interpolated.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .chaos import coupled_expectation, phi_coupling
from .errors import DomainError
from .mixture import CoupledModelSpec, poly_eval
from .numerics import (
    DEFAULT_QUAD_N,
    bivariate_rule,
    hermite_rule,
    interp_points_2d,
    logcosh,
    shift_grid,
    edge_pad,
)
from .parisi import OrderParameterTriplet, ParisiSolution, evaluate_functional

__all__ = [
    "CoupledBoundParams",
    "manageable_schedule",
    "y0_recursion",
    "coupled_rsb_bound",
    "manageable_bound",
    "manageable_bound_terms",
    "chaos_band_bound",
    "identical_band_integrand",
]

PSD_TOL = 1e-12
Y0_QUAD_N = 16
Y0_GRID_STEP = 0.0625
SMALL_N = 1e-3


@dataclass(frozen=True)
class CoupledBoundParams:
    """Schedule ``(kappa, n, rho)`` of the coupled bound.

    ``rho11``, ``rho22``, ``rho12`` (and ``rho21``, which must equal
    ``rho12``) have ``kappa + 2`` entries starting at 0; the diagonal ones end
    at 1 and the cross ones at ``u``.
    """

    kappa: int
    n: tuple
    rho11: tuple
    rho22: tuple
    rho12: tuple
    rho21: tuple | None = None

    def __post_init__(self):
        kappa = int(self.kappa)
        if kappa < 1:
            raise DomainError("kappa must be at least 1")
        n = tuple(float(v) for v in self.n)
        rho = [tuple(float(v) for v in r) for r in (self.rho11, self.rho22, self.rho12)]
        rho21 = rho[2] if self.rho21 is None else tuple(float(v) for v in self.rho21)
        if rho21 != rho[2]:
            raise DomainError("rho21 must equal rho12 (the pair covariance is symmetric)")
        if len(n) != kappa + 1 or any(len(r) != kappa + 2 for r in rho):
            raise DomainError("need len(n) = kappa+1 and len(rho) = kappa+2")
        if n[0] != 0.0 or n[-1] != 1.0 or any(b < a for a, b in zip(n, n[1:])):
            raise DomainError("need 0 = n_0 <= ... <= n_kappa = 1")
        if any(r[0] != 0.0 for r in rho):
            raise DomainError("rho sequences must start at 0")
        if rho[0][-1] != 1.0 or rho[1][-1] != 1.0:
            raise DomainError("diagonal rho sequences must end at 1")
        if any(abs(v) > 1 for r in rho for v in r):
            raise DomainError("rho entries must lie in [-1,1]")
        object.__setattr__(self, "kappa", kappa)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "rho11", rho[0])
        object.__setattr__(self, "rho22", rho[1])
        object.__setattr__(self, "rho12", rho[2])
        object.__setattr__(self, "rho21", rho21)

    @property
    def u(self) -> float:
        return self.rho12[-1]

    def level_covariances(self, coupled: CoupledModelSpec) -> np.ndarray:
        """Per-level covariance of ``(y_p^1, y_p^2)``; raises unless PSD."""
        d11 = np.diff(poly_eval(coupled.spec1.coefficients, np.asarray(self.rho11), 1))
        d22 = np.diff(poly_eval(coupled.spec2.coefficients, np.asarray(self.rho22), 1))
        d12 = np.diff(poly_eval(coupled.cross_coefficients, np.asarray(self.rho12), 1))
        covs = np.stack([np.stack([d11, d12], -1), np.stack([d12, d22], -1)], -2)
        for p, c in enumerate(covs):
            if np.linalg.eigvalsh(c).min() < -PSD_TOL:
                raise DomainError(f"level {p} pair covariance is not positive semidefinite")
        return covs

    def theta_sum(self, coupled: CoupledModelSpec) -> float:
        """``sum_{j,j'} sum_p n_p (theta_jj'(rho_{p+1}) - theta_jj'(rho_p))``."""
        n = np.asarray(self.n)
        total = 0.0
        for coef, rho, mult in ((coupled.spec1.coefficients, self.rho11, 1),
                                (coupled.spec2.coefficients, self.rho22, 1),
                                (coupled.cross_coefficients, self.rho12, 2)):
            r = np.asarray(rho)
            theta = poly_eval(coef, r, 1) * r - poly_eval(coef, r, 0)
            total += mult * float(np.dot(n, np.diff(theta)))
        return total


def manageable_schedule(triplet1: OrderParameterTriplet, triplet2: OrderParameterTriplet,
                        iota: int, u: float) -> CoupledBoundParams:
    """The schedule behind the manageable bound.

    ``kappa = k - iota + 2``, ``n = (0, m_iota, ..., m_{k+1})``,
    ``rho^jj = (0, q^j_iota, ..., q^j_{k+2})`` and ``rho^12 = (0, u, ..., u)``.
    """
    _check_shared(triplet1, triplet2, iota)
    k = triplet1.k
    kappa = k - iota + 2
    n = (0.0,) + tuple(triplet1.m[iota:k + 2])
    r1 = (0.0,) + tuple(triplet1.q[iota:k + 3])
    r2 = (0.0,) + tuple(triplet2.q[iota:k + 3])
    r12 = (0.0,) + (float(u),) * (kappa + 1)
    return CoupledBoundParams(kappa, n, r1, r2, r12)


def _check_shared(t1, t2, iota):
    if t1.k != t2.k or t1.m != t2.m:
        raise DomainError("triplets must share k and m")
    if not (1 <= iota <= t1.k + 1):
        raise DomainError("iota must satisfy 1 <= iota <= k+1")


def _terminal(a, b, lam):
    """``log(cosh a cosh b cosh lam + sinh a sinh b sinh lam)``, overflow-free."""
    return np.logaddexp(lam + logcosh(a + b), -lam + logcosh(a - b)) - np.log(2.0)


def _grid_for(coupled, step):
    fl = coupled.field_law
    spread = np.sqrt(max(poly_eval(coupled.spec1.coefficients, 1.0, 1),
                         poly_eval(coupled.spec2.coefficients, 1.0, 1)))
    half = max(8.0, max(abs(fl.mean1), abs(fl.mean2)) + 6 * max(fl.std1, fl.std2)
               + 6 * spread)
    m = int(np.ceil(half / step))
    return step * np.arange(-m, m + 1)


def _shifted_samples(resid, x, dx, width, a_nodes, b_nodes, w):
    """Yield ``(weight, Y_{p+1}(x + alpha, x + beta))`` per node of a bivariate rule."""
    pad0 = edge_pad(resid, width, 0)
    cache_alpha, rows, pad1 = None, None, None
    for alpha, beta, wt in zip(a_nodes, b_nodes, w):
        if alpha != cache_alpha:
            rows = shift_grid(resid, alpha, dx, axis=0, pad=pad0)
            pad1 = edge_pad(rows, width, 1)
            cache_alpha = alpha
        yield wt, (shift_grid(rows, beta, dx, axis=1, pad=pad1)
                   + logcosh(x + alpha)[:, None] + logcosh(x + beta)[None, :])


def y0_recursion(coupled: CoupledModelSpec, params: CoupledBoundParams, lam: float,
                 quad_n: int = Y0_QUAD_N, grid_step: float = Y0_GRID_STEP) -> float:
    """``Y_0(lam)`` by backward recursion on a square grid of ``(a, b)``."""
    covs = params.level_covariances(coupled)
    x = _grid_for(coupled, grid_step)
    dx = grid_step
    lc = logcosh(x)
    # n_kappa = 1, so the top level is a Gaussian moment generating function:
    # Y_kappa(a, b) = (C11 + C22)/2 + Y_{kappa+1}(a, b; lam + C12).
    c = covs[params.kappa]
    top = 0.5 * (c[0, 0] + c[1, 1]) + _terminal(x[:, None], x[None, :], lam + c[0, 1])
    resid = top - lc[:, None] - lc[None, :]
    for p in range(params.kappa - 1, 0, -1):
        a_nodes, b_nodes, w = bivariate_rule(covs[p], quad_n)
        np_ = params.n[p]
        width = int(np.ceil(np.abs(np.concatenate([a_nodes, b_nodes])).max() / dx)) + 4
        samples = lambda: _shifted_samples(resid, x, dx, width, a_nodes, b_nodes, w)
        if np_ >= SMALL_N:
            acc = None
            for wt, f in samples():
                term = np.log(wt) + np_ * f
                acc = term if acc is None else np.logaddexp(acc, term)
            y = acc / np_
        else:
            mean = sum(wt * f for wt, f in samples())
            if np_ > 0:
                # second pass: (1/n) log E exp(n (f - mean)) via log1p/expm1
                tilt = sum(wt * np.expm1(np_ * (f - mean)) for wt, f in samples())
                mean = mean + np.log1p(tilt) / np_
            y = mean
        resid = y - lc[:, None] - lc[None, :]
    fl = coupled.field_law
    root_cov = covs[0] + fl.covariance()
    a, b, w = bivariate_rule(root_cov, max(quad_n, 24), (fl.mean1, fl.mean2))
    vals = interp_points_2d(resid, x[0], dx, a, b) + logcosh(a) + logcosh(b)
    return float(np.dot(w, vals))


def coupled_rsb_bound(coupled: CoupledModelSpec, params: CoupledBoundParams,
                      u: float | None = None, lambda_opt: bool = True, lam: float = 0.0,
                      quad_n: int = Y0_QUAD_N, grid_step: float = Y0_GRID_STEP,
                      return_lambda: bool = False):
    """Coupled interpolation bound at ``u``, optionally minimized over ``lam``.

    The minimization is a Brent search bracketed around the
    quadratic-majorant point ``lam* = u - Y_0'(0)``.
    """
    if u is None:
        u = params.u
    if abs(u - params.u) > 1e-15:
        raise DomainError("u must equal the terminal cross entry of rho12")
    const = 2 * np.log(2.0) - 0.5 * params.theta_sum(coupled)
    f = lambda l: y0_recursion(coupled, params, l, quad_n, grid_step) - l * u
    if not lambda_opt:
        value, best = const + f(lam), lam
    else:
        h = 1e-3
        slope = (y0_recursion(coupled, params, h, quad_n, grid_step)
                 - y0_recursion(coupled, params, -h, quad_n, grid_step)) / (2 * h)
        center = u - slope
        res = minimize_scalar(f, bracket=(center - 0.25, center + 0.25), method="brent",
                              options={"xtol": 1e-6})
        value, best = const + float(res.fun), float(res.x)
    return (float(value), best) if return_lambda else float(value)


def _as_solution(obj, coupled, j, quad_n):
    if isinstance(obj, ParisiSolution):
        return obj
    return evaluate_functional(coupled.spec(j), coupled.field_law.marginal(j), obj, quad_n)


def _theta_partial(coef, triplet, upto):
    q = np.asarray(triplet.q)
    theta = poly_eval(coef, q, 1) * q - poly_eval(coef, q, 0)
    m = np.asarray(triplet.m)
    return 0.5 * float(np.dot(m[:upto], np.diff(theta)[:upto]))


def manageable_bound_terms(coupled: CoupledModelSpec, sol1, sol2, iota: int, u: float,
                           quad_n: int = DEFAULT_QUAD_N) -> dict:
    """Components of the manageable bound (see ``manageable_bound``)."""
    s1 = _as_solution(sol1, coupled, 1, quad_n)
    s2 = _as_solution(sol2, coupled, 2, quad_n)
    t1, t2 = s1.triplet, s2.triplet
    _check_shared(t1, t2, iota)
    v1, v2 = t1.q[iota], t2.q[iota]
    if not (0.0 < v1 < 1.0 and 0.0 < v2 < 1.0):
        raise DomainError("need 0 < q_iota^j < 1")
    if abs(u) > np.sqrt(v1 * v2) * (1 + 1e-12):
        raise DomainError("|u| must not exceed sqrt(v1 v2)")
    phi = phi_coupling(coupled, s1, s2, v1, v2, u, quad_n)
    sub = (_theta_partial(coupled.spec1.coefficients, t1, iota)
           + _theta_partial(coupled.spec2.coefficients, t2, iota))
    penalty = 0.5 * (phi - u) ** 2
    return {"P1": s1.value, "P2": s2.value, "phi": phi, "penalty": penalty,
            "sub_iota": sub, "bound": s1.value + s2.value - penalty + sub,
            "v1": v1, "v2": v2}


def manageable_bound(coupled: CoupledModelSpec, triplet1, triplet2, iota: int, u: float,
                     quad_n: int = DEFAULT_QUAD_N) -> float:
    """``P^1 + P^2 - 1/2 (phi~(u) - u)^2`` plus the sub-``iota`` theta sums.

    ``phi~`` is the coupled map built from the two profiles at
    ``v_j = q^j_iota``. This is the coupled bound for the schedule of
    ``manageable_schedule`` with ``lam`` set to the minimizer of its quadratic
    majorant, after ``Y_0(0)`` is bounded by ``X_0^1 + X_0^2``. Triplets may be
    given as ``ParisiSolution`` objects to reuse their level tables.
    """
    return manageable_bound_terms(coupled, triplet1, triplet2, iota, u, quad_n)["bound"]


def chaos_band_bound(coupled: CoupledModelSpec, sol1: ParisiSolution, sol2: ParisiSolution,
                     c1: float, c2: float, v1: float, v2: float, u: float,
                     quad_n: int = DEFAULT_QUAD_N, return_terms: bool = False):
    """``P^1 + P^2 - 1/2 (phi_{v1,v2}(u) - u)^2 + (theta_11(v1) - theta_11(c1))_+
    + (theta_22(v2) - theta_22(c2))_+``."""
    if not (0.0 < v1 < 1.0 and 0.0 < v2 < 1.0):
        raise DomainError("v1, v2 must lie in (0,1)")
    if abs(u) > np.sqrt(v1 * v2) * (1 + 1e-12):
        raise DomainError("|u| must not exceed sqrt(v1 v2)")
    phi = phi_coupling(coupled, sol1, sol2, v1, v2, u, quad_n)
    th = lambda coef, x: float(poly_eval(coef, x, 1) * x - poly_eval(coef, x, 0))
    pos = (max(th(coupled.spec1.coefficients, v1) - th(coupled.spec1.coefficients, c1), 0.0)
           + max(th(coupled.spec2.coefficients, v2) - th(coupled.spec2.coefficients, c2), 0.0))
    penalty = 0.5 * (phi - u) ** 2
    value = sol1.value + sol2.value - penalty + pos
    if return_terms:
        return {"bound": value, "P1": sol1.value, "P2": sol2.value, "penalty": penalty,
                "positive_parts": pos, "phi": phi}
    return value


def identical_band_integrand(coupled: CoupledModelSpec, c_lo: float, c_hi: float,
                             u_sign: int, quad_n: int = DEFAULT_QUAD_N,
                             legendre_n: int = 24) -> float:
    """``int_{c_lo}^{c_hi} E F_u(h1, h2, xi'(q)) xi''(q) dq`` for identical systems.

    ``F_u = E_z (tanh(h1 + z sqrt(w)) - tanh(h2 + z sqrt(w)))^2`` when ``u > 0``
    and ``E_z (tanh(h1 + z sqrt(w)) + tanh(h2 - z sqrt(w)))^2`` when ``u < 0``.
    The substitution ``w = xi'(q)`` turns the integral into one over ``w``,
    done by Gauss-Legendre. No constants multiply the result.
    """
    if not coupled.identical:
        raise DomainError("identical_band_integrand needs identical mixtures with t_p = 1")
    if not (0.0 < c_lo < c_hi < 1.0):
        raise DomainError("need 0 < c_lo < c_hi < 1")
    if u_sign not in (1, -1):
        raise DomainError("u_sign must be +1 or -1")
    coef = coupled.spec1.coefficients
    w_lo, w_hi = poly_eval(coef, c_lo, 1), poly_eval(coef, c_hi, 1)
    nodes, weights = np.polynomial.legendre.leggauss(legendre_n)
    ws = 0.5 * (w_hi - w_lo) * nodes + 0.5 * (w_hi + w_lo)
    fl = coupled.field_law
    base = fl.covariance()
    total = 0.0
    for wv, lw in zip(ws, weights):
        cov = base + np.array([[wv, u_sign * wv], [u_sign * wv, wv]])
        a, b, wt = bivariate_rule(cov, quad_n, (fl.mean1, fl.mean2))
        val = np.dot(wt, (np.tanh(a) - u_sign * np.tanh(b)) ** 2)
        total += lw * val
    return float(0.5 * (w_hi - w_lo) * total)
