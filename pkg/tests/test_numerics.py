import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import factorial2

from spinchaos import CoupledModelSpec, DomainError, MixtureSpec, NumericalError
from spinchaos.mixture import cross_xi_eval, xi_eval
from spinchaos.numerics import (
    bivariate_rule,
    correlated_pair_rule,
    find_root,
    hermite_rule,
    interp_points,
    interp_points_2d,
    logcosh,
    logcosh_derivatives,
    shift_grid,
)


def normal_moment(k):
    return 0.0 if k % 2 else float(factorial2(k - 1)) if k else 1.0


def test_small_rules():
    r = hermite_rule(1)
    assert r.nodes.tolist() == [0.0] and r.weights.tolist() == [1.0]
    r = hermite_rule(2)
    assert np.allclose(r.nodes, [-1, 1]) and np.allclose(r.weights, [0.5, 0.5])
    r = hermite_rule(3)
    assert np.allclose(r.nodes, [-np.sqrt(3), 0, np.sqrt(3)], atol=1e-14)
    assert np.allclose(r.weights, [1 / 6, 2 / 3, 1 / 6], atol=1e-14)


@pytest.mark.parametrize("n", [1, 2, 4, 10, 40, 80])
def test_moments(n):
    r = hermite_rule(n)
    assert abs(r.weights.sum() - 1) <= 1e-12
    for k in range(min(2 * n - 1, 12) + 1):
        assert abs(r.expect(r.nodes ** k) - normal_moment(k)) <= 1e-10 * max(1, normal_moment(k))


def test_rule_range():
    with pytest.raises(DomainError):
        hermite_rule(0)
    with pytest.raises(DomainError):
        hermite_rule(257)


def spec_pair(t=(0.6, 0.3)):
    return CoupledModelSpec(MixtureSpec((0.8, 0.4)), MixtureSpec((0.5, 0.6)), t)


@given(st.floats(0.05, 1.0), st.floats(0.05, 1.0), st.floats(-1.0, 1.0))
def test_pair_covariance(v1, v2, s):
    c = spec_pair()
    u = s * np.sqrt(v1 * v2)
    rule = correlated_pair_rule(c, v1, v2, u, 12)
    cov = rule.covariance()
    assert abs(rule.weights.sum() - 1) < 1e-12
    assert cov[0, 0] == pytest.approx(xi_eval(c.spec1, v1, 1), abs=1e-10)
    assert cov[1, 1] == pytest.approx(xi_eval(c.spec2, v2, 1), abs=1e-10)
    assert cov[0, 1] == pytest.approx(cross_xi_eval(c, u, 1), abs=1e-10)


def test_pair_degenerate_corners():
    c = spec_pair()
    rule = correlated_pair_rule(c, 0.5, 0.6, 0.0, 10)
    assert rule.metadata["eta"] == 0.0 and len(rule.weights) == 100
    s = MixtureSpec((0.7, 0.2))
    same = CoupledModelSpec(s, s, (1.0, 1.0))
    rule = correlated_pair_rule(same, 0.4, 0.4, 0.4, 10)
    assert rule.metadata["eta"] == pytest.approx(1.0)
    assert np.allclose(rule.nodes[:, 0], rule.nodes[:, 1])


def test_pair_sign_flip():
    c = spec_pair()
    a = correlated_pair_rule(c, 0.5, 0.6, 0.3, 8)
    b = correlated_pair_rule(c, 0.5, 0.6, -0.3, 8)
    assert np.array_equal(a.nodes[:, 0], b.nodes[:, 0])
    assert a.covariance()[0, 1] == pytest.approx(-b.covariance()[0, 1], abs=1e-14)


def test_pair_errors():
    c = spec_pair()
    with pytest.raises(DomainError):
        correlated_pair_rule(c, 0.25, 0.25, 0.3)
    z = MixtureSpec((0.0,))
    with pytest.raises(DomainError):
        correlated_pair_rule(CoupledModelSpec(z, z), 0.5, 0.5, 0.0)


def test_pair_monte_carlo(rng):
    # oracle: sample chi directly from its covariance
    c = spec_pair()
    rule = correlated_pair_rule(c, 0.7, 0.5, 0.4, 30)
    val = np.dot(rule.weights, np.tanh(rule.nodes[:, 0]) * np.tanh(rule.nodes[:, 1]))
    cov = rule.covariance()
    z = rng.multivariate_normal([0, 0], cov, size=2_000_000)
    prod = np.tanh(z[:, 0]) * np.tanh(z[:, 1])
    assert abs(val - prod.mean()) < 3 * prod.std() / np.sqrt(len(prod))


def test_bivariate_matches_pair_rule():
    # two independent constructions of the same expectation
    c = spec_pair()
    v1, v2, u = 0.7, 0.5, 0.4
    rule = correlated_pair_rule(c, v1, v2, u, 80)
    cov = np.array([[xi_eval(c.spec1, v1, 1), cross_xi_eval(c, u, 1)],
                    [cross_xi_eval(c, u, 1), xi_eval(c.spec2, v2, 1)]])
    a, b, w = bivariate_rule(cov, 80)
    f = lambda x, y: np.tanh(x + 0.3) * np.tanh(y - 0.2) + 0.3 * x ** 2 * y ** 2
    assert np.dot(w, f(a, b)) == pytest.approx(
        np.dot(rule.weights, f(rule.nodes[:, 0], rule.nodes[:, 1])), abs=1e-10)


def test_bivariate_singular():
    a, b, w = bivariate_rule([[1.0, 1.0], [1.0, 1.0]], 8)
    assert len(w) == 8 and np.allclose(a, b)
    a, b, w = bivariate_rule(np.zeros((2, 2)), 8, (0.3, -0.1))
    assert len(w) == 1 and a[0] == 0.3 and b[0] == -0.1
    with pytest.raises(DomainError):
        bivariate_rule([[1.0, 2.0], [2.0, 1.0]])


def test_find_root_examples():
    assert find_root(lambda x: x - 0.5, 0, 1, 1e-12) == pytest.approx(0.5, abs=1e-12)
    assert find_root(lambda x: x * x - 2, 1, 2, 1e-14) == pytest.approx(np.sqrt(2), abs=1e-12)
    with pytest.raises(NumericalError):
        find_root(lambda x: x * x + 1, -1, 1)


def test_find_root_fixed_point_against_scan():
    r = hermite_rule(60)
    g = lambda c: np.dot(r.weights, np.tanh(0.4 + r.nodes * np.sqrt(2 * 0.8 ** 2 * c)) ** 2) - c
    root = find_root(g, 1e-9, 1.0, 1e-14)
    grid = np.arange(0, 1, 1e-6)
    # vectorized scan of the same residual
    vals = (np.tanh(0.4 + np.sqrt(2 * 0.64 * grid)[:, None] * r.nodes[None, :]) ** 2) @ r.weights - grid
    idx = np.nonzero(np.diff(np.sign(vals)))[0]
    assert abs(grid[idx[0]] - root) <= 1e-6


def test_find_root_deterministic():
    f = lambda x: np.cos(x) - x
    assert find_root(f, 0, 1) == find_root(f, 0, 1)


def test_logcosh_stable():
    x = np.array([-800.0, -1.0, 0.0, 2.0, 800.0])
    assert np.all(np.isfinite(logcosh(x)))
    assert logcosh(800.0) == pytest.approx(800 - np.log(2))
    h = 1e-4
    for order in (1, 2, 3):
        fd = (logcosh_derivatives(0.7 + h, order - 1) - logcosh_derivatives(0.7 - h, order - 1)) / (2 * h)
        assert logcosh_derivatives(0.7, order) == pytest.approx(fd, abs=1e-7)


def test_interpolation_accuracy():
    x = np.linspace(-4, 4, 801)
    dx = x[1] - x[0]
    f = np.sin(x)
    xs = np.linspace(-3, 3, 97) + 0.0031
    assert np.max(np.abs(interp_points(f, x[0], dx, xs) - np.sin(xs))) < 1e-11
    assert np.max(np.abs(shift_grid(f, 0.0123, dx)[100:-100] - np.sin(x + 0.0123)[100:-100])) < 1e-11
    g = np.sin(x)[:, None] * np.cos(x)[None, :]
    ys = xs[::-1] * 0.5
    assert np.max(np.abs(interp_points_2d(g, x[0], dx, xs, ys) - np.sin(xs) * np.cos(ys))) < 1e-11
