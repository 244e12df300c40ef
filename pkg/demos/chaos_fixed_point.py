"""Cross overlap of two coupled systems: the fixed point u_f and the band bound.

Two SK systems share a correlated Gaussian field. The coupled map phi has a
unique fixed point u_f; the band bound stays strictly below P^1 + P^2 away
from it, and exact enumeration at small N puts the overlap mass near u_f.

Run: python demos/chaos_fixed_point.py
"""
import numpy as np

from spinchaos import CoupledModelSpec, FieldLaw, MixtureSpec
from spinchaos.chaos import find_uf, support_min
from spinchaos.guerra import chaos_band_bound
from spinchaos.parisi import evaluate_functional, minimize_functional
from spinchaos.sim import overlap_statistics

coupled = CoupledModelSpec(MixtureSpec((0.4,)), MixtureSpec((0.5,)), (1.0,),
                           FieldLaw(0.1, 0.1, 0.5, 0.6, 0.8))

sols, cs = [], []
for j in (1, 2):
    fld = coupled.field_law.marginal(j)
    tri = minimize_functional(coupled.spec(j), fld, 1, restarts=2).triplet
    sols.append(evaluate_functional(coupled.spec(j), fld, tri))
    cs.append(support_min(tri))
    print(f"system {j}: P = {sols[-1].value:.6f}, c = {cs[-1]:.5f}")

fp = find_uf(coupled, sols[0], sols[1], cs[0], cs[1])
print(f"\nu_f = {fp.u_f:.6f}  (residual {fp.residual:.1e}, max |phi'| = {fp.max_abs_derivative:.3f})")

total = sols[0].value + sols[1].value
lim = np.sqrt(cs[0] * cs[1])
print("\n     u     P1+P2 - band bound")
for u in lim * np.linspace(-1, 1, 11):
    gap = total - chaos_band_bound(coupled, sols[0], sols[1], cs[0], cs[1], cs[0], cs[1], float(u))
    print(f"{u:8.4f}   {gap:.3e}")

rep = overlap_statistics(coupled, 10, 200, seed=1)
print("\nexact enumeration, N=10, M=200: E<1(R = u)>")
for lo, hi, mass, *_ in rep.histogram_rows():
    bar = "#" * int(round(60 * mass))
    print(f"[{lo:+.2f}, {hi:+.2f})  {mass:.3f} {bar}")
