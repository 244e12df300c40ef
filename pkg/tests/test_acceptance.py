"""Acceptance criteria; each test prints one PASS/FAIL line at the stated tolerance."""
import time

import numpy as np
import pytest

from spinchaos import CoupledModelSpec, FieldLaw, GaussianField, MixtureSpec
from spinchaos.chaos import at_index, find_uf, rs_fixed_point, support_min
from spinchaos.guerra import (
    CoupledBoundParams,
    chaos_band_bound,
    manageable_bound,
    y0_recursion,
)
from spinchaos.mixture import poly_eval
from spinchaos.numerics import find_root
from spinchaos.parisi import (
    OrderParameterTriplet,
    evaluate_functional,
    minimize_functional,
    phi_pde_solve,
    phi_profile,
)
from spinchaos.sim import (
    FunctionSpec,
    exact_shell_energies,
    gg_residuals,
    overlap_statistics,
    sample_disorder,
    spins,
)

LOG2 = np.log(2.0)


@pytest.fixture
def report(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\n[acceptance {number:2d}] {'PASS' if ok else 'FAIL'}: {detail}")
        assert ok, detail
    return emit


def rs_solution(spec, field):
    c = rs_fixed_point(spec, field)
    return evaluate_functional(spec, field, OrderParameterTriplet.replica_symmetric(c)), c


def test_01_rs_free_energy(report):
    target = LOG2 + 0.045
    rows, ok = [], True
    for k in (0, 1, 2):
        t0 = time.perf_counter()
        res = minimize_functional(MixtureSpec((0.3,)), 0.0, k)
        dt = time.perf_counter() - t0
        ok &= abs(res.value - target) <= 1e-3 and dt < 10.0
        rows.append(f"k={k} value={res.value:.7f} ({dt:.1f}s)")
    report(1, ok, f"target {target:.6f}; " + ", ".join(rows))


def test_02_at_threshold(report):
    beta = find_root(lambda b: at_index(MixtureSpec((b,)), 0.0, 0.0) - 1.0, 0.5, 1.0)
    report(2, abs(beta - 0.70711) <= 1e-4, f"crossing at beta={beta:.7f} (1/sqrt2={2 ** -0.5:.7f})")


def test_03_support_contains_zero(report):
    t0 = time.perf_counter()
    res = minimize_functional(MixtureSpec((0.6, 0.4)), 0.0, 2)
    dt = time.perf_counter() - t0
    c = support_min(res.triplet)
    report(3, c <= 0.05 and dt < 300, f"support_min={c:.3g}, atoms={res.triplet.atoms} ({dt:.1f}s)")


def test_04_uf_identities(report):
    # independent symmetric Gaussian fields
    spec1, spec2 = MixtureSpec((0.4,)), MixtureSpec((0.5, 0.2))
    coupled = CoupledModelSpec(spec1, spec2, (0.6, 0.0), FieldLaw(0, 0, 0.5, 0.7, 0.0))
    (s1, c1), (s2, c2) = rs_solution(spec1, GaussianField(0, 0.5)), rs_solution(spec2, GaussianField(0, 0.7))
    u_ind = find_uf(coupled, s1, s2, c1, c2).u_f
    # identical systems with a common nondegenerate field
    spec = MixtureSpec((0.5, 0.3))
    fld = GaussianField(0.2, 0.4)
    same = CoupledModelSpec(spec, spec, (1.0, 1.0), FieldLaw(0.2, 0.2, 0.4, 0.4, 1.0))
    sol, c = rs_solution(spec, fld)
    u_same = find_uf(same, sol, sol, c, c).u_f
    ok = abs(u_ind) <= 1e-8 and abs(u_same - c) <= 1e-4
    report(4, ok, f"independent |u_f|={abs(u_ind):.2e}; identical |u_f-c|={abs(u_same - c):.2e} (c={c:.6f})")


CONTRACTION_SPECS = [
    CoupledModelSpec(MixtureSpec((0.4,)), MixtureSpec((0.5,)), (0.5,), FieldLaw(0.1, 0.0, 0.5, 0.5, 0.3)),
    CoupledModelSpec(MixtureSpec((0.5, 0.3)), MixtureSpec((0.4, 0.2)), (0.7, 0.5),
                     FieldLaw(0.2, 0.1, 0.4, 0.5, 0.3)),
    CoupledModelSpec(MixtureSpec((0.6,)), MixtureSpec((0.6,)), (1.0,), FieldLaw(0.0, 0.0, 0.6, 0.6, 0.5)),
    CoupledModelSpec(MixtureSpec((0.3, 0.3, 0.2)), MixtureSpec((0.5,)), (0.9,), FieldLaw(0.3, -0.2, 0.2, 0.3, -0.4)),
]


def test_05_contraction_witness(report):
    worst = 0.0
    for coupled in CONTRACTION_SPECS:
        (s1, c1) = rs_solution(coupled.spec1, coupled.field_law.marginal(1))
        (s2, c2) = rs_solution(coupled.spec2, coupled.field_law.marginal(2))
        worst = max(worst, find_uf(coupled, s1, s2, c1, c2).max_abs_derivative)
    report(5, worst < 1 - 1e-4, f"max interior |phi'| over {len(CONTRACTION_SPECS)} specs = {worst:.6f}")


def test_06_bound_dominance(report):
    coupled = CONTRACTION_SPECS[1]
    (s1, c1) = rs_solution(coupled.spec1, coupled.field_law.marginal(1))
    (s2, c2) = rs_solution(coupled.spec2, coupled.field_law.marginal(2))
    lim = np.sqrt(c1 * c2)
    t0 = time.perf_counter()
    worst, checked, ok = -np.inf, 0, True
    for N in (6, 8, 10):
        rep = overlap_statistics(coupled, N, 200, seed=N)
        for d, u in enumerate(rep.u):
            if abs(u) > lim or not np.isfinite(rep.p_shell[d]):
                continue
            gap = rep.p_shell[d] - manageable_bound(coupled, s1, s2, 1, float(u)) - 3 * rep.p_shell_se[d]
            worst = max(worst, gap)
            checked += 1
        for p, se, sol in ((rep.p1, rep.p1_se, s1), (rep.p2, rep.p2_se, s2)):
            worst = max(worst, p - sol.value - 3 * se)
            checked += 1
    dt = time.perf_counter() - t0
    ok = worst <= 0 and dt < 1800
    report(6, ok, f"{checked} comparisons, max(p_hat - bound - 3SE) = {worst:.4f} ({dt:.1f}s)")


def test_07_band_gap(report):
    coupled = CoupledModelSpec(MixtureSpec((0.4,)), MixtureSpec((0.5,)), (1.0,),
                               FieldLaw(0.1, 0.1, 0.5, 0.6, 0.8))
    sols, cs = [], []
    for j in (1, 2):
        fld = coupled.field_law.marginal(j)
        tri = minimize_functional(coupled.spec(j), fld, 1, restarts=2).triplet
        sols.append(evaluate_functional(coupled.spec(j), fld, tri))
        cs.append(support_min(tri))
    c1, c2 = cs
    uf = find_uf(coupled, sols[0], sols[1], c1, c2).u_f
    lim = np.sqrt(c1 * c2)
    total = sols[0].value + sols[1].value
    grid = [u for u in lim * np.linspace(-1, 1, 81) if abs(u - uf) >= 0.1]
    eps = min(total - chaos_band_bound(coupled, sols[0], sols[1], c1, c2, c1, c2, float(u))
              for u in grid)
    report(7, eps > 0, f"u_f={uf:.5f}, c=({c1:.4f},{c2:.4f}), eps*={eps:.3e} over {len(grid)} grid points")


def test_08_partition_and_covariance(report):
    N, M = 8, 2000
    coupled = CoupledModelSpec(MixtureSpec((0.6, 0.4)), MixtureSpec((0.5, 0.3)), (0.8, 0.3),
                               FieldLaw(0.1, 0.0, 0.3, 0.3, 0.5))
    worst_rel, worst_z = 0.0, 0.0
    for scheme in ("tensor", "config-cholesky"):
        x1, x2 = [], []
        for r in range(M):
            real = sample_disorder(coupled, N, seed=3, scheme=scheme, realization=r)
            res = exact_shell_energies(real)
            total = np.logaddexp.reduce(res.log_shell)
            # relative error of the sums, from the error of their logarithms
            worst_rel = max(worst_rel, abs(np.expm1(total - res.log_z1 - res.log_z2)))
            x1.append(real.energy1)
            x2.append(real.energy2)
        x1, x2 = np.array(x1), np.array(x2)
        s = spins(N)
        for b in (0, 1, 3, 7, 15, 31, 63, 127, 255):
            R = s[0] @ s[b] / N
            for j, jp, u, v in ((1, 2, x1, x2), (1, 1, x1, x1), (2, 2, x2, x2)):
                prod = u[:, 0] * v[:, b]
                target = N * float(poly_eval(coupled.coefficients(j, jp), R))
                worst_z = max(worst_z, abs(prod.mean() - target) / (prod.std(ddof=1) / np.sqrt(M)))
    report(8, worst_rel <= 1e-9 and worst_z <= 3,
           f"max relative shell-sum error {worst_rel:.1e}; max |cov - N xi|/se = {worst_z:.2f}")


def test_09_gg_residual_decay(report):
    coupled = CoupledModelSpec(MixtureSpec((1.0,)), MixtureSpec((1.0,)), (0.5,))
    f = FunctionSpec.parse("R[1,1]^2")
    est = []
    for N in (4, 6, 8, 10, 12):
        e, se = gg_residuals(coupled, N, 500, 1, (0, 0, 1), f, seed=N).estimates["Psi1"]
        est.append((abs(e), se))
    ok = all(b[0] <= a[0] + 2 * np.hypot(a[1], b[1]) for a, b in zip(est, est[1:]))
    report(9, ok, "|Psi_11| by N=4..12: " + ", ".join(f"{e:.4f}+-{s:.4f}" for e, s in est))


def test_10_chaos_trend(report):
    spec = MixtureSpec((1.0,))
    coupled = CoupledModelSpec(spec, spec, (0.0,))
    reps = {N: overlap_statistics(coupled, N, 500, seed=N) for N in (6, 8, 10)}
    r2, r2se = reps[10].moment("R^2")
    s2, s2se = reps[10].moment("R1^2")
    margin = (s2 - r2) / np.hypot(r2se, s2se)
    trend = [reps[N].moment("R^2") for N in (6, 8, 10)]
    decreasing = all(b[0] <= a[0] + 2 * np.hypot(a[1], b[1]) for a, b in zip(trend, trend[1:]))
    report(10, margin > 3 and decreasing,
           f"N=10: E<R^2>={r2:.4f}, E<R1^2>={s2:.4f}, margin={margin:.1f} sigma; "
           "E<R^2> by N=6,8,10: " + ", ".join(f"{m:.4f}" for m, _ in trend))


def test_11_cross_solver(report):
    spec = MixtureSpec((0.5, 0.3))
    rng = np.random.default_rng(2024)
    x = np.linspace(-4, 4, 161)
    worst = 0.0
    for _ in range(20):
        k = int(rng.integers(0, 3))
        q = np.sort(rng.uniform(0.02, 0.95, k + 1))
        m = np.sort(rng.uniform(0, 1, k))
        t = OrderParameterTriplet(k, (0, *m, 1), (0, *q, 1))
        out = phi_pde_solve(spec, t, x, q_eval=tuple(q))
        for qv, g in out.items():
            worst = max(worst, float(np.max(np.abs(g.d0 - phi_profile(spec, t, qv, x).d0))))
    report(11, worst <= 1e-6, f"max |PDE - representation| over 20 triplets = {worst:.2e}")


def random_schedule(rng, coupled):
    while True:
        kappa = int(rng.integers(1, 3))
        n = (0.0, *np.sort(rng.uniform(0.05, 1, kappa - 1)), 1.0)
        r11 = (0.0, *np.sort(rng.uniform(0, 1, kappa)), 1.0)
        r22 = (0.0, *np.sort(rng.uniform(0, 1, kappa)), 1.0)
        u = float(rng.uniform(-0.6, 0.6))
        r12 = (0.0,) + (u,) * (kappa + 1)
        try:
            p = CoupledBoundParams(kappa, n, r11, r22, r12)
            p.level_covariances(coupled)
            return p
        except Exception:
            continue


def test_12_y0_convexity(report):
    coupled = CONTRACTION_SPECS[1]
    rng = np.random.default_rng(7)
    h = 0.02
    lo, hi = np.inf, -np.inf
    for _ in range(10):
        p = random_schedule(rng, coupled)
        for lam in np.linspace(-2, 2, 9):
            v = [y0_recursion(coupled, p, lam + s, grid_step=0.125) for s in (-h, 0.0, h)]
            d2 = (v[0] - 2 * v[1] + v[2]) / h ** 2
            lo, hi = min(lo, d2), max(hi, d2)
    report(12, lo >= -1e-6 and hi <= 1 + 1e-6, f"finite-difference Y0'' in [{lo:.6f}, {hi:.6f}]")
