import numpy as np
import pytest

from spinchaos import CoupledModelSpec, DomainError, FieldLaw, MixtureSpec
from spinchaos.chaos import find_uf, rs_fixed_point
from spinchaos.guerra import (
    CoupledBoundParams,
    _terminal,
    chaos_band_bound,
    coupled_rsb_bound,
    identical_band_integrand,
    manageable_bound,
    manageable_bound_terms,
    manageable_schedule,
    y0_recursion,
)
from spinchaos.mixture import cross_xi_eval, xi_eval
from spinchaos.numerics import bivariate_rule
from spinchaos.parisi import OrderParameterTriplet, evaluate_functional
from spinchaos.sim import overlap_statistics

LOG2 = np.log(2.0)
ZERO = MixtureSpec((0.0,))
ZERO_PAIR = CoupledModelSpec(ZERO, ZERO, (1.0,))


def trivial_params(u):
    return CoupledBoundParams(1, (0, 1), (0, 1, 1), (0, 1, 1), (0, u, u))


def test_params_validation():
    with pytest.raises(DomainError):
        CoupledBoundParams(1, (0, 0.5), (0, 1, 1), (0, 1, 1), (0, 0, 0))
    with pytest.raises(DomainError):
        CoupledBoundParams(1, (0, 1), (0, 0.9), (0, 1, 1), (0, 0, 0))
    with pytest.raises(DomainError, match="rho21"):
        CoupledBoundParams(1, (0, 1), (0, 1, 1), (0, 1, 1), (0, 0.2, 0.2), (0, 0.1, 0.2))
    spec = MixtureSpec((0.5,))
    c = CoupledModelSpec(spec, spec, (1.0,))
    bad = CoupledBoundParams(2, (0, 0.5, 1), (0, 0.1, 0.2, 1), (0, 0.1, 0.2, 1), (0, 0.5, 0.5, 0.5))
    with pytest.raises(DomainError, match="positive semidefinite"):
        bad.level_covariances(c)


def test_y0_zero_mixture():
    assert y0_recursion(ZERO_PAIR, trivial_params(0.0), 0.0) == pytest.approx(0.0, abs=1e-15)
    for lam in (-1.3, 0.4, 2.0):
        assert y0_recursion(ZERO_PAIR, trivial_params(0.0), lam) == pytest.approx(
            np.log(np.cosh(lam)), abs=1e-13)


def test_coupled_bound_zero_mixture():
    assert coupled_rsb_bound(ZERO_PAIR, trivial_params(0.0)) == pytest.approx(2 * LOG2, abs=1e-10)
    lam = np.arctanh(0.5)
    value, best = coupled_rsb_bound(ZERO_PAIR, trivial_params(0.5), return_lambda=True)
    assert value == pytest.approx(2 * LOG2 + np.log(np.cosh(lam)) - 0.5 * lam, abs=1e-10)
    assert best == pytest.approx(lam, abs=1e-4)


MODEL = CoupledModelSpec(MixtureSpec((0.5, 0.3)), MixtureSpec((0.4, 0.2)), (0.7, 0.5),
                         FieldLaw(0.2, 0.1, 0.4, 0.5, 0.3))
T1 = OrderParameterTriplet(1, (0, 0.5, 1), (0, 0.3, 0.7, 1))
T2 = OrderParameterTriplet(1, (0, 0.5, 1), (0, 0.25, 0.6, 1))


def solutions():
    return (evaluate_functional(MODEL.spec1, MODEL.field_law.marginal(1), T1),
            evaluate_functional(MODEL.spec2, MODEL.field_law.marginal(2), T2))


def test_decoupling_identity():
    s1, s2 = solutions()
    sch = manageable_schedule(T1, T2, 1, 0.0)
    assert y0_recursion(MODEL, sch, 0.0) == pytest.approx(s1.x0 + s2.x0, abs=1e-9)
    b = coupled_rsb_bound(MODEL, sch, lambda_opt=False, lam=0.0)
    assert b == pytest.approx(s1.value + s2.value, abs=1e-9)


def test_top_level_against_nested_quadrature():
    # kappa = 1: Y_0 = E log E_1 exp(terminal) done by two nested product rules
    spec1, spec2 = MixtureSpec((0.6,)), MixtureSpec((0.5,))
    c = CoupledModelSpec(spec1, spec2, (0.8,), FieldLaw(0.1, -0.2, 0.3, 0.2, 0.5))
    u, lam = 0.3, 0.7
    p = CoupledBoundParams(1, (0, 1), (0, 0.5, 1), (0, 0.4, 1), (0, u, u))
    cov = p.level_covariances(c)
    a0, b0, w0 = bivariate_rule(cov[0] + c.field_law.covariance(), 40, (0.1, -0.2))
    a1, b1, w1 = bivariate_rule(cov[1], 40)
    inner = np.log(np.exp(_terminal(a0[:, None] + a1[None, :], b0[:, None] + b1[None, :], lam)) @ w1)
    assert y0_recursion(c, p, lam) == pytest.approx(np.dot(w0, inner), abs=1e-9)


def test_y0_convex_small():
    sch = manageable_schedule(T1, T2, 1, 0.2)
    h = 0.05
    lams = np.linspace(-1.0, 1.0, 5)
    vals = {l: y0_recursion(MODEL, sch, l, grid_step=0.125) for l in
            sorted({*lams, *(lams + h), *(lams - h)})}
    for l in lams:
        d2 = (vals[l + h] - 2 * vals[l] + vals[l - h]) / h ** 2
        assert -1e-6 <= d2 <= 1 + 1e-6


def test_manageable_empty_sums_and_order():
    s1, s2 = solutions()
    for u in (-0.2, 0.1):
        t = manageable_bound_terms(MODEL, s1, s2, 1, u)
        assert t["sub_iota"] == 0.0
        assert t["bound"] == pytest.approx(s1.value + s2.value - t["penalty"], abs=1e-14)
        assert t["bound"] <= s1.value + s2.value
        b = coupled_rsb_bound(MODEL, manageable_schedule(T1, T2, 1, u))
        assert b <= t["bound"] + 1e-9


def test_manageable_zero_penalty_at_fixed_point():
    s1, s2 = solutions()
    fp = find_uf(MODEL, s1, s2, T1.q[1], T2.q[1], tol=1e-13)
    t = manageable_bound_terms(MODEL, s1, s2, 1, fp.u_f)
    assert t["penalty"] < 1e-20
    assert manageable_bound(MODEL, T1, T2, 1, fp.u_f) == pytest.approx(s1.value + s2.value, abs=1e-12)


def test_manageable_iota2_against_coupled():
    s1, s2 = solutions()
    u = 0.15
    m = manageable_bound(MODEL, s1, s2, 2, u)
    b = coupled_rsb_bound(MODEL, manageable_schedule(T1, T2, 2, u))
    assert b <= m + 1e-9


def test_manageable_errors():
    s1, s2 = solutions()
    with pytest.raises(DomainError):
        manageable_bound(MODEL, s1, s2, 1, 0.6)
    other = OrderParameterTriplet(1, (0, 0.4, 1), (0, 0.25, 0.6, 1))
    with pytest.raises(DomainError):
        manageable_bound(MODEL, T1, other, 1, 0.0)


def test_band_bound_examples():
    s1, s2 = solutions()
    c1, c2 = T1.q[1], T2.q[1]
    fp = find_uf(MODEL, s1, s2, c1, c2, tol=1e-13)
    at = chaos_band_bound(MODEL, s1, s2, c1, c2, c1, c2, fp.u_f, return_terms=True)
    assert at["bound"] == pytest.approx(s1.value + s2.value, abs=1e-12)
    t = chaos_band_bound(MODEL, s1, s2, c1, c2, c1 + 0.1, c2 + 0.05, 0.0, return_terms=True)
    assert t["positive_parts"] > 0
    t = chaos_band_bound(MODEL, s1, s2, c1, c2, c1 - 0.1, c2 - 0.05, 0.0, return_terms=True)
    assert t["positive_parts"] == 0.0


def test_identical_band_integrand():
    spec = MixtureSpec((0.7, 0.3))
    same = CoupledModelSpec(spec, spec, (1.0, 1.0), FieldLaw(0.2, 0.2, 0.5, 0.5, 1.0))
    assert identical_band_integrand(same, 0.2, 0.6, +1) == pytest.approx(0.0, abs=1e-14)
    flip = CoupledModelSpec(spec, spec, (1.0, 1.0), FieldLaw(0.2, -0.2, 0.5, 0.5, -1.0))
    assert identical_band_integrand(flip, 0.2, 0.6, -1) == pytest.approx(0.0, abs=1e-14)
    with pytest.raises(DomainError):
        identical_band_integrand(CoupledModelSpec(spec, MixtureSpec((0.7, 0.2))), 0.2, 0.6, 1)


def test_identical_band_integrand_monte_carlo(rng):
    spec = MixtureSpec((0.7, 0.3))
    c = CoupledModelSpec(spec, spec, (1.0, 1.0), FieldLaw(0, 0, 1, 1, 0))
    val = identical_band_integrand(c, 0.2, 0.6, +1)
    # oracle: q uniform on [c_lo, c_hi], integrand times xi''(q) times the length
    n = 1_000_000
    q = rng.uniform(0.2, 0.6, n)
    w = xi_eval(spec, q, 1)
    h1, h2, z = rng.standard_normal((3, n))
    sample = (np.tanh(h1 + z * np.sqrt(w)) - np.tanh(h2 + z * np.sqrt(w))) ** 2 * xi_eval(spec, q, 2) * 0.4
    assert abs(val - sample.mean()) < 3 * sample.std() / np.sqrt(n)


def test_coupled_bound_dominates_enumeration():
    spec1, spec2 = MixtureSpec((0.5,)), MixtureSpec((0.6,))
    c = CoupledModelSpec(spec1, spec2, (0.6,), FieldLaw(0.1, 0.0, 0.4, 0.5, 0.3))
    N = 8
    rep = overlap_statistics(c, N, 100, seed=11)
    t = OrderParameterTriplet.replica_symmetric(0.3)
    for d, u in enumerate(rep.u):
        if abs(u) > 0.3:
            continue
        p = manageable_schedule(t, t, 1, u)
        b = coupled_rsb_bound(c, p)
        assert rep.p_shell[d] <= b + 3 * rep.p_shell_se[d]
