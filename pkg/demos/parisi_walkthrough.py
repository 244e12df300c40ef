"""Parisi functional: replica symmetric regime, the AT line, and symmetry breaking.

Run: python demos/parisi_walkthrough.py
"""
import numpy as np

from spinchaos import MixtureSpec
from spinchaos.chaos import at_index, rs_fixed_point, support_min
from spinchaos.numerics import find_root
from spinchaos.parisi import minimize_functional

# At high temperature and zero field the minimizer is a point mass at 0 and
# the functional reduces to log 2 + xi(1) / 2.
spec = MixtureSpec((0.3,))
for k in (0, 1, 2):
    res = minimize_functional(spec, 0.0, k)
    print(f"beta=0.3, k={k}: P = {res.value:.7f}   (log 2 + 0.045 = {np.log(2) + 0.045:.7f})")

# The AT index at c = 0 is xi''(0) = 2 beta^2 for SK; it reaches 1 at 1/sqrt(2).
beta_at = find_root(lambda b: at_index(MixtureSpec((b,)), 0.0, 0.0) - 1.0, 0.5, 1.0)
print(f"\nAT crossing for SK at zero field: beta = {beta_at:.6f}")

# With a random field the RS overlap is positive and the AT index stays below 1
# for small beta.
c = rs_fixed_point(MixtureSpec((0.5,)), (0.0, 0.5))
print(f"beta=0.5, h ~ N(0, 0.25): c = {c:.6f}, AT index = "
      f"{at_index(MixtureSpec((0.5,)), (0.0, 0.5), c):.4f}")

# Above the AT line more atoms pay off: the k=2 value drops below the RS value.
hot = MixtureSpec((1.0,))
for k in (0, 2):
    res = minimize_functional(hot, 0.0, k, restarts=2)
    print(f"beta=1.0, k={k}: P = {res.value:.6f}, atoms (q, mass) = "
          + ", ".join(f"({q:.3f}, {w:.3f})" for q, w in res.triplet.atoms))

# Without a field the smallest support point stays at 0 for a mixed model.
res = minimize_functional(MixtureSpec((0.6, 0.4)), 0.0, 2)
print(f"\nbeta=(0.6, 0.4), h=0: support_min = {support_min(res.triplet):.3g}")
