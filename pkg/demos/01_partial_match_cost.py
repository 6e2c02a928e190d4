"""
Partial-match cost in a random quadtree
=======================================

Build a quadtree on uniform points, ask a vertical-line query, and compare
the visited-node count with the t^beta* growth and its limit profile.
"""
import numpy as np

from pmquad import build_quadtree, constants, limit_curve, partial_match_cost
from pmquad.quadtree import random_points

rng = np.random.default_rng(7)
c = constants()
print(f"beta* = {c.beta_star:.6f}, K0 = {c.K0:.6f}")

# one tree, one query line
tree = build_quadtree(random_points(2000, rng))
print("nodes:", len(tree), " cost at x=0.5:", partial_match_cost(tree, 0.5))

# averaged over trees, the cost divided by n^beta* approaches K0 (x(1-x))^(beta*/2)
for n in (100, 1000, 5000):
    costs = [partial_match_cost(build_quadtree(random_points(n, rng)), 0.5) for _ in range(200)]
    print(f"n={n:5d}  mean cost / n^beta* = {np.mean(costs) / n ** c.beta_star:.3f}"
          f"   limit {limit_curve(0.5):.3f}")
