"""Bakry-Emery curvature constants and the bounds derived from them.

Every constant K certifies Ricci - Hess S >= K on the configuration manifold
(with the Gibbs density exp(+S)); when K > 0 the measure satisfies
log-Sobolev and Poincare inequalities with rate K.
"""
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import BoundUnavailable
from .model import Target


@dataclass
class BoundReport:
    name: str
    value: float
    delta: Optional[float] = None
    inputs: dict = field(default_factory=dict)

    @property
    def positive(self):
        return self.value > 0


def ricci_constant(space, N):
    """Ricci lower bound per unit tangent: (N+2)/4 - 1 for SO(N), N - 2 for the unit sphere in R^N."""
    if space == "group":
        if N < 2:
            raise ValueError("SO(N) needs N >= 2")
        return (N + 2) / 4.0 - 1.0
    if space == "sphere":
        if N < 3:
            raise ValueError("the sphere constant needs N >= 3")
        return float(N - 2)
    raise ValueError(f"unknown space {space!r}")


def k_euclidean(N, beta, kappa, m, d):
    if m <= 0:
        raise ValueError(f"k_euclidean needs m > 0, got {m}")
    return (N + 2) / 4.0 - 1.0 - kappa * N / m - 2.0 * kappa ** 2 * N / m ** 2 - 8.0 * (d - 1) * N * abs(beta)


def _sup_min(a0, b, c0, e):
    """sup_{delta>0} min(a0 - b delta, c0 - e/delta) with b, e > 0.

    The first branch decreases and the second increases in delta, so the
    supremum is the value at their unique positive crossing, the positive
    root of b delta^2 - (a0 - c0) delta - e = 0.
    """
    delta = ((a0 - c0) + math.sqrt((a0 - c0) ** 2 + 4.0 * b * e)) / (2.0 * b)
    return a0 - b * delta, delta


def _sup_min_branches(N, beta, kappa, d, second_c0):
    ric = (N + 2) / 4.0 - 1.0
    k = abs(kappa)
    a_full = ric - 8.0 * (d - 1) * abs(beta) * N
    if k == 0:
        return min(a_full - 2.0 * k * N, second_c0), None
    # first branch: a_full - 2 k N (2 delta + 1) = (a_full - 2 k N) - 4 k N delta
    # second branch: c0 - 4 k N d (2 + 1/delta) = (c0 - 8 k N d) - 4 k N d / delta
    return _sup_min(a_full - 2.0 * k * N, 4.0 * k * N, second_c0 - 8.0 * k * N * d, 4.0 * k * N * d)


def k_sphere(N, beta, kappa, d):
    """(K, delta*) for the sphere-valued Higgs field; delta* is None at kappa = 0."""
    if N == 2:
        warnings.warn("sphere constant at N = 2: the Ricci branch N - 2 vanishes, so K <= 0", stacklevel=2)
    return _sup_min_branches(N, beta, kappa, d, float(N - 2))


def k_group(N, beta, kappa, d):
    """(K, delta*) for the SO(N)-valued Higgs field; delta* is None at kappa = 0."""
    return _sup_min_branches(N, beta, kappa, d, (N + 2) / 4.0 - 1.0)


def k_ugauge(N, beta, kappa, d):
    """Constant for the U-gauge fixed measure (group target, Higgs frozen at I)."""
    return (N + 2) / 4.0 - 1.0 - N * (8.0 * (d - 1) * abs(beta) + 2.0 * abs(kappa))


def grid_sup_min(N, beta, kappa, d, target, points=10_000, levels=6, lo=1e-6, hi=1e6):
    """Brute-force sup over delta of the min of the two branches.

    A log-spaced grid of ``points`` deltas is refined ``levels`` times around
    the best point.  Independent of the closed-form crossing, for testing.
    """
    ric = (N + 2) / 4.0 - 1.0
    k = abs(kappa)
    c0 = float(N - 2) if Target(target) is Target.SPHERE else ric

    def f(delta):
        a = ric - 8.0 * (d - 1) * abs(beta) * N - 2.0 * (2.0 * delta + 1.0) * k * N
        b = c0 - 4.0 * k * N * d * (2.0 + 1.0 / delta)
        return np.minimum(a, b)

    grid = np.geomspace(lo, hi, points)
    for _ in range(levels):
        vals = f(grid)
        i = int(np.argmax(vals))
        left = grid[max(i - 1, 0)]
        right = grid[min(i + 1, len(grid) - 1)]
        best_delta, best = grid[i], vals[i]
        grid = np.linspace(left, right, points)
    return float(best), float(best_delta)


def constant(target, N, beta, kappa, d, m=None):
    target = Target(target)
    if target is Target.EUCLIDEAN:
        return BoundReport("K_euclidean", k_euclidean(N, beta, kappa, m, d),
                           inputs=dict(N=N, beta=beta, kappa=kappa, m=m, d=d))
    fn = k_sphere if target is Target.SPHERE else k_group
    val, delta = fn(N, beta, kappa, d)
    return BoundReport(f"K_{target.value}", val, delta, dict(N=N, beta=beta, kappa=kappa, d=d))


def variance_bound(n, K, N):
    """n(n-3)/(K N): bound on var(W_l / N) for a loop of length n."""
    if not K > 0:
        raise BoundUnavailable(f"variance bound needs K > 0, got {K}")
    if n < 1:
        raise ValueError("loop length must be >= 1")
    return n * (n - 3) / (K * N)


@dataclass
class RegionMap:
    betas: np.ndarray
    kappas: np.ndarray
    K: np.ndarray                     # shape (len(betas), len(kappas))
    delta: np.ndarray

    def boundary(self):
        """Grid cells where K changes sign, as (beta, kappa) midpoints along each axis."""
        pts = []
        s = np.sign(self.K)
        for i in range(len(self.betas)):
            for j in range(len(self.kappas)):
                if i + 1 < len(self.betas) and s[i, j] != s[i + 1, j]:
                    pts.append((self._zero(self.betas[i], self.betas[i + 1], self.K[i, j], self.K[i + 1, j]),
                                self.kappas[j]))
                if j + 1 < len(self.kappas) and s[i, j] != s[i, j + 1]:
                    pts.append((self.betas[i],
                                self._zero(self.kappas[j], self.kappas[j + 1], self.K[i, j], self.K[i, j + 1])))
        return pts

    @staticmethod
    def _zero(x0, x1, k0, k1):
        return x0 + (x1 - x0) * k0 / (k0 - k1)


def admissible_region(target, N, d, betas, kappas, m=None, ugauge=False):
    """K on a (beta, kappa) grid; ``ugauge`` selects the gauge-fixed constant."""
    betas = np.asarray(betas, dtype=float)
    kappas = np.asarray(kappas, dtype=float)
    K = np.empty((len(betas), len(kappas)))
    D = np.full_like(K, np.nan)
    for i, b in enumerate(betas):
        for j, k in enumerate(kappas):
            if ugauge:
                K[i, j] = k_ugauge(N, b, k, d)
            else:
                rep = constant(target, N, b, k, d, m)
                K[i, j] = rep.value
                if rep.delta is not None:
                    D[i, j] = rep.delta
    return RegionMap(betas, kappas, K, D)
