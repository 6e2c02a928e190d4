"""
Coupling the spine chain to stationarity
========================================

Run the place chain from x=1/2 with the coupling device, look at the place
after coupling, and check the Foster-Lyapunov drift on a grid.
"""
import numpy as np
from scipy import stats

from pmquad.chain import drift_scan, simulate_coupling

rng = np.random.default_rng(3)
batch = simulate_coupling(0.5, 20, 4000, rng)
xk = batch.x_k[batch.accepted]
print("coupled by step 20:", batch.accepted.mean())
print("KS p-value vs uniform:", round(stats.kstest(xk, "uniform").pvalue, 3))
print("E[1.15^T] ~", round(np.mean(1.15 ** batch.T[~batch.censored]), 3))

xs = np.linspace(0.01, 0.99, 99)
r = drift_scan(xs)
print(f"largest drift ratio {r.max():.4f} at x={xs[r.argmax()]:.2f}")
