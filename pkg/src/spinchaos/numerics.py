"""Quadrature, interpolation and root-finding kernels.

Every Gaussian expectation in the package is discretized with a probabilists'
Gauss-Hermite rule. Functions sampled on uniform grids are shifted with a local
six-point Lagrange stencil; values past the grid ends are held at the edge
value, which is accurate because callers subtract the linear-tailed part
(``log cosh``) before interpolating.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy.optimize import brentq

from .errors import DomainError, NumericalError
from .mixture import CoupledModelSpec, cross_xi_eval, xi_eval

__all__ = [
    "QuadratureRule",
    "JointPairRule",
    "hermite_rule",
    "bivariate_rule",
    "correlated_pair_rule",
    "find_root",
    "logcosh",
    "logcosh_derivatives",
    "shift_grid",
    "interp_points",
]

DEFAULT_QUAD_N = 40
STENCIL = np.arange(-2, 4)  # six nodes around the cell containing the target


@dataclass(frozen=True)
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray

    def expect(self, values) -> float:
        return float(np.dot(self.weights, values))

    def __len__(self):
        return len(self.nodes)


@dataclass(frozen=True)
class JointPairRule:
    """Discrete law of the correlated pair ``(chi1, chi2)``."""

    nodes: np.ndarray  # shape (n, 2)
    weights: np.ndarray
    metadata: dict

    def covariance(self) -> np.ndarray:
        x = self.nodes
        return (x * self.weights[:, None]).T @ x


@lru_cache(maxsize=64)
def _hermite_cached(n: int):
    x, w = hermegauss(n)
    # enforce exact mirror symmetry so odd integrands vanish to rounding
    x = 0.5 * (x - x[::-1])
    w = 0.5 * (w + w[::-1])
    w = w / w.sum()
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def hermite_rule(n: int = DEFAULT_QUAD_N) -> QuadratureRule:
    """n-point Gauss rule for the standard normal law (exact to degree 2n-1)."""
    if int(n) != n or not (1 <= n <= 256):
        raise DomainError("hermite_rule needs 1 <= n <= 256")
    x, w = _hermite_cached(int(n))
    return QuadratureRule(x, w)


def bivariate_rule(cov, n: int = DEFAULT_QUAD_N, mean=(0.0, 0.0)):
    """Product Hermite rule for a (possibly singular) bivariate normal law.

    Returns ``(a, b, w)`` with ``a = m1 + L11 g1`` and
    ``b = m2 + L21 g1 + L22 g2`` from a Cholesky factor that tolerates rank
    deficiency. Zero-variance directions collapse to a single node.
    """
    c = np.asarray(cov, dtype=float)
    c11, c12, c22 = c[0, 0], c[0, 1], c[1, 1]
    if c11 < -1e-12 or c22 < -1e-12:
        raise DomainError("variances must be nonnegative")
    c11, c22 = max(c11, 0.0), max(c22, 0.0)
    l11 = np.sqrt(c11)
    l21 = c12 / l11 if l11 > 0 else 0.0
    resid = c22 - l21 * l21
    if resid < -1e-10 * max(1.0, c22):
        raise DomainError("covariance matrix is not positive semidefinite")
    l22 = np.sqrt(max(resid, 0.0))
    r = hermite_rule(n)
    g1, w1 = (r.nodes, r.weights) if l11 > 0 or l21 != 0 else (np.zeros(1), np.ones(1))
    g2, w2 = (r.nodes, r.weights) if l22 > 0 else (np.zeros(1), np.ones(1))
    a = mean[0] + l11 * np.repeat(g1, len(g2))
    b = mean[1] + l21 * np.repeat(g1, len(g2)) + l22 * np.tile(g2, len(g1))
    w = np.outer(w1, w2).ravel()
    return a, b, w


def correlated_pair_rule(coupled: CoupledModelSpec, v1: float, v2: float, u: float,
                         n: int = DEFAULT_QUAD_N) -> JointPairRule:
    """Rule for ``chi1 = s1 (sqrt(eta) w + sqrt(1-eta) w1)``,
    ``chi2 = s2 (sign(u) sqrt(eta) w + sqrt(1-eta) w2)``.

    Here ``s_j^2 = xi_jj'(v_j)`` and ``eta = xi_12'(|u|) / (s1 s2)``. The tensor
    rule over ``(w, w1, w2)`` shrinks to ``n`` or ``n^2`` nodes when
    ``eta`` is 1 or 0.
    """
    if not (0.0 < v1 <= 1.0 and 0.0 < v2 <= 1.0):
        raise DomainError("v1, v2 must lie in (0,1]")
    if abs(u) > np.sqrt(v1 * v2) * (1 + 1e-12):
        raise DomainError("|u| must not exceed sqrt(v1 v2)")
    if coupled.spec1.is_trivial or coupled.spec2.is_trivial:
        raise DomainError("correlated pair needs nontrivial mixtures")
    a2 = xi_eval(coupled.spec1, v1, 1)
    b2 = xi_eval(coupled.spec2, v2, 1)
    if a2 <= 0 or b2 <= 0:
        raise DomainError("xi_jj'(v_j) must be positive")
    s1, s2 = np.sqrt(a2), np.sqrt(b2)
    eta = float(cross_xi_eval(coupled, min(abs(u), 1.0), 1) / (s1 * s2))
    eta = min(max(eta, 0.0), 1.0)
    sign = 1.0 if u >= 0 else -1.0
    r = hermite_rule(n)
    if eta == 0.0:
        chi1 = s1 * np.repeat(r.nodes, n)
        chi2 = s2 * np.tile(r.nodes, n)
        w = np.outer(r.weights, r.weights).ravel()
    elif eta == 1.0:
        chi1 = s1 * r.nodes
        chi2 = sign * s2 * r.nodes
        w = r.weights.copy()
    else:
        g, g1, g2 = np.meshgrid(r.nodes, r.nodes, r.nodes, indexing="ij")
        wt = (r.weights[:, None, None] * r.weights[None, :, None]
              * r.weights[None, None, :])
        se, sc = np.sqrt(eta), np.sqrt(1.0 - eta)
        chi1 = (s1 * (se * g + sc * g1)).ravel()
        chi2 = (s2 * (sign * se * g + sc * g2)).ravel()
        w = wt.ravel()
    meta = {"v1": v1, "v2": v2, "u": u, "eta": eta}
    return JointPairRule(np.column_stack([chi1, chi2]), w, meta)


def find_root(f, lo: float, hi: float, tol: float = 1e-12) -> float:
    """Root of ``f`` on a sign-changing bracket (Brent's method).

    Brent's method combines bisection with secant and inverse quadratic steps,
    and is deterministic.
    """
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return float(lo)
    if fhi == 0.0:
        return float(hi)
    if not (np.isfinite(flo) and np.isfinite(fhi)) or flo * fhi > 0:
        raise NumericalError(f"no sign change on [{lo}, {hi}]")
    return float(brentq(f, lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps, maxiter=500))


def logcosh(x):
    """Overflow-free ``log cosh x``."""
    ax = np.abs(x)
    return ax + np.log1p(np.exp(-2.0 * ax)) - np.log(2.0)


def logcosh_derivatives(x, order: int):
    """Derivative of ``log cosh`` of the given order (0..3)."""
    if order == 0:
        return logcosh(x)
    th = np.tanh(x)
    if order == 1:
        return th
    s2 = 1.0 - th * th
    if order == 2:
        return s2
    if order == 3:
        return -2.0 * th * s2
    raise DomainError("order must be in {0,1,2,3}")


def _lagrange_weights(frac):
    """Six-point Lagrange weights for nodes -2..3 at fractional offsets ``frac``."""
    frac = np.asarray(frac, dtype=float)
    out = np.empty(frac.shape + (6,))
    for i, ti in enumerate(STENCIL):
        num = np.ones_like(frac)
        den = 1.0
        for tj in STENCIL:
            if tj != ti:
                num = num * (frac - tj)
                den *= ti - tj
        out[..., i] = num / den
    return out


def shift_grid(values: np.ndarray, shift: float, dx: float, axis: int = 0, pad=None):
    """Sample a gridded function at ``x_i + shift`` for every grid node ``x_i``.

    ``pad`` may be a precomputed edge-padded copy (see ``edge_pad``) to avoid
    repeated padding when many shifts of the same array are needed.
    """
    n = values.shape[axis]
    pos = shift / dx
    k = int(np.floor(pos))
    frac = pos - k
    if pad is None:
        pad = edge_pad(values, abs(k) + 4, axis)
    p, arr = pad
    if abs(k) + 4 > p:
        p, arr = edge_pad(values, abs(k) + 4, axis)
    if frac == 0.0:
        return np.take(arr, np.arange(p + k, p + k + n), axis=axis)
    weights = _lagrange_weights(frac)
    out = None
    for i, t in enumerate(STENCIL):
        start = p + k + t
        sl = [slice(None)] * arr.ndim
        sl[axis] = slice(start, start + n)
        term = weights[i] * arr[tuple(sl)]
        out = term if out is None else out + term
    return out


def shift_grid_many(values: np.ndarray, shifts, dx: float) -> np.ndarray:
    """Rows ``values(x_i + shifts[j])`` for a 1-D grid; shape ``(len(shifts), n)``."""
    shifts = np.asarray(shifts, dtype=float)
    n = len(values)
    pos = shifts / dx
    k = np.floor(pos).astype(np.int64)
    frac = pos - k
    weights = _lagrange_weights(frac)
    base = np.arange(n)[None, :] + k[:, None]
    out = np.zeros((len(shifts), n))
    for i, t in enumerate(STENCIL):
        idx = np.clip(base + t, 0, n - 1)
        out += weights[:, i:i + 1] * values[idx]
    return out


def edge_pad(values: np.ndarray, width: int, axis: int = 0):
    widths = [(0, 0)] * values.ndim
    widths[axis] = (width, width)
    return width, np.pad(values, widths, mode="edge")


def interp_points(values: np.ndarray, x0: float, dx: float, xs):
    """Six-point Lagrange interpolation at arbitrary points, edge-clamped."""
    xs = np.asarray(xs, dtype=float)
    n = len(values)
    pos = (xs - x0) / dx
    k = np.floor(pos).astype(np.int64)
    frac = pos - k
    weights = _lagrange_weights(frac)
    out = np.zeros_like(xs)
    for i, t in enumerate(STENCIL):
        idx = np.clip(k + t, 0, n - 1)
        out = out + weights[..., i] * values[idx]
    # far outside the grid the stencil reads a constant edge value
    return out


def interp_points_2d(values: np.ndarray, x0: float, dx: float, xs, ys):
    """Tensor six-point interpolation of a square grid at points ``(xs, ys)``."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    n0, n1 = values.shape
    px = (xs - x0) / dx
    py = (ys - x0) / dx
    kx = np.floor(px).astype(np.int64)
    ky = np.floor(py).astype(np.int64)
    wx = _lagrange_weights(px - kx)
    wy = _lagrange_weights(py - ky)
    out = np.zeros_like(xs)
    for i, ti in enumerate(STENCIL):
        ix = np.clip(kx + ti, 0, n0 - 1)
        for j, tj in enumerate(STENCIL):
            iy = np.clip(ky + tj, 0, n1 - 1)
            out = out + wx[..., i] * wy[..., j] * values[ix, iy]
    return out
