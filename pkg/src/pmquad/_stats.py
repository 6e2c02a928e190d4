"""Small summary-statistics helpers shared by the simulators and the harness."""
from __future__ import annotations

import math

import numpy as np
from scipy import stats


def mean_ci(samples, level: float = 0.95) -> tuple[float, float]:
    """Sample mean and Student-t half-width of the two-sided ``level`` interval."""
    a = np.asarray(samples, dtype=float)
    n = a.size
    if n == 0:
        raise ValueError("no samples")
    m = float(a.mean())
    if n == 1:
        return m, math.inf
    sd = float(a.std(ddof=1))
    return m, float(stats.t.ppf(0.5 + level / 2, n - 1)) * sd / math.sqrt(n)


def diff_ci(a, b, level: float = 0.95) -> tuple[float, float]:
    """Difference of means of two independent samples and its Welch half-width."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    va, vb = a.var(ddof=1) / a.size, b.var(ddof=1) / b.size
    se = math.sqrt(va + vb)
    dof = (va + vb) ** 2 / (va ** 2 / (a.size - 1) + vb ** 2 / (b.size - 1)) if se > 0 else 1.0
    return float(a.mean() - b.mean()), float(stats.t.ppf(0.5 + level / 2, dof)) * se
