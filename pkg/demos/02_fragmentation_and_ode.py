"""
Fragmentation view of the uniform query
=======================================

The cost at a uniform query place behaves like the number of fragments of a
self-similar fragmentation.  Its mean solves an integro-differential equation.
"""
import numpy as np

from pmquad import constants
from pmquad.analytics import solve_mean_ode
from pmquad.fragmentation import simulate_fragment_count

rng = np.random.default_rng(11)
sol = solve_mean_ode(64.0, 0.05)

for t in (2.0, 8.0, 32.0, 64.0):
    counts = [simulate_fragment_count(t, "uniform", rng) - 1 for _ in range(2000)]
    print(f"t={t:4.0f}  fragments-1: {np.mean(counts):7.3f}   ode: {sol(t):7.3f}")

# the scaled mean settles near c_U
long = solve_mean_ode(1e4, 0.05)
print("t^-beta* f(1e4) =", round(float(long.scaled()[-1]), 4), " c_U =", round(constants().c_U, 4))
