"""Gauge-invariant observables and the statistics used to estimate them.

Observables are plain functions of a :class:`~latymh.model.FieldConfiguration`.
Estimators act on 1-d sample series and are deterministic: batch partitions
depend only on the series length.
"""
import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import model as mdl
from .errors import (DimensionMismatch, InsufficientSignal, InvalidPath, TargetMismatch,
                     TooFewSamples)
from .lattice import LatticePath
from .model import Target

MIN_SAMPLES = 100
MS_WINDOW_C = 5.0


# -- observables on a configuration -------------------------------------------

def _as_path(cfg, path):
    return path if isinstance(path, LatticePath) else LatticePath(cfg.lattice, path)


def wilson_loop(cfg, loop):
    """W_l = Tr(Q_{e1} ... Q_{en}) for a closed path."""
    loop = _as_path(cfg, loop)
    if not loop.closed:
        raise InvalidPath("not a loop: path does not return to its start")
    return float(np.trace(mdl.path_product(cfg, loop)))


def wilson_line(cfg, path):
    """Tr(phi_u^t Q_{e1} ... Q_{en} phi_v); the trace is a no-op for vector targets."""
    path = _as_path(cfg, path)
    P = mdl.path_product(cfg, path)
    a, b = cfg.phi[path.start], cfg.phi[path.end]
    if cfg.target is Target.GROUP:
        return float(np.trace(a.T @ P @ b))
    return float(a @ P @ b)


def hopping_norm(cfg):
    return cfg.N if cfg.target is Target.GROUP else 1


def plaquette_mean(cfg):
    """Mean over positive plaquettes of Tr(Q_p)/N."""
    return float(np.mean(mdl.plaquette_traces(cfg))) / cfg.N


def hopping_mean(cfg):
    """Mean over positive edges of Tr(phi_x^t Q_e phi_y), divided by N for the group target."""
    return float(np.mean(mdl.hopping_terms(cfg))) / hopping_norm(cfg)


def phi2_mean(cfg):
    """Site average of |phi_x|^2."""
    return float(np.sum(cfg.phi ** 2)) / cfg.lattice.n_sites


def standard_observers(target):
    obs = {"plaquette": plaquette_mean, "hopping": hopping_mean}
    if Target(target) is Target.EUCLIDEAN:
        obs["phi2"] = phi2_mean
    return obs


class Kind(str, enum.Enum):
    WILSON_LOOP = "wilson_loop"
    WILSON_LINE = "wilson_line"
    PLAQUETTE_MEAN = "plaquette_mean"
    HOPPING_MEAN = "hopping_mean"
    HIGGS_SECOND_MOMENT = "higgs_second_moment"
    LOCAL_FUNCTION = "local_function"


@dataclass
class ObservableSpec:
    kind: Kind
    path: Optional[LatticePath] = None
    site: Optional[int] = None
    func: Optional[Callable] = None
    name: str = ""
    normalize: bool = False

    def __post_init__(self):
        self.kind = Kind(self.kind)
        if self.kind is Kind.WILSON_LOOP and (self.path is None or not self.path.closed):
            raise InvalidPath("Wilson loop observable needs a closed path")
        if self.kind is Kind.WILSON_LINE and self.path is None:
            raise InvalidPath("Wilson line observable needs a path")
        if self.kind is Kind.LOCAL_FUNCTION and self.func is None:
            raise ValueError("local function observable needs func")
        if not self.name:
            self.name = self.kind.value

    @property
    def gauge_invariant(self):
        return self.kind is not Kind.LOCAL_FUNCTION or getattr(self.func, "gauge_invariant", False)

    def __call__(self, cfg):
        k = self.kind
        if k is Kind.WILSON_LOOP:
            val = wilson_loop(cfg, self.path)
        elif k is Kind.WILSON_LINE:
            val = wilson_line(cfg, self.path)
        elif k is Kind.PLAQUETTE_MEAN:
            return plaquette_mean(cfg)
        elif k is Kind.HOPPING_MEAN:
            return hopping_mean(cfg)
        elif k is Kind.HIGGS_SECOND_MOMENT:
            if cfg.target is not Target.EUCLIDEAN:
                raise TargetMismatch("Higgs second moment is defined for the Euclidean target")
            return float(np.sum(cfg.phi[self.site] ** 2)) if self.site is not None else phi2_mean(cfg)
        else:
            val = float(self.func(cfg))
        return val / cfg.N if self.normalize else val


# -- sample series ---------------------------------------------------------------

@dataclass
class SampleSeries:
    """Observable records indexed by Langevin time or sweep number."""
    index: np.ndarray
    records: dict
    seed: Optional[int] = None
    params: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __getitem__(self, name):
        return self.records[name]

    def names(self):
        return list(self.records)

    def __len__(self):
        return len(self.index)

    def after(self, burn_in):
        """Drop the first ``burn_in`` records."""
        keep = slice(burn_in, None)
        return SampleSeries(self.index[keep], {k: v[keep] for k, v in self.records.items()},
                            self.seed, dict(self.params), dict(self.meta))


class Recorder:
    """Preallocated storage for ``n`` records of scalar- or array-valued observers."""

    def __init__(self, observers, n):
        self.observers = dict(observers)
        self.n = n
        self.records = {}

    def put(self, i, cfg):
        for name, f in self.observers.items():
            val = np.asarray(f(cfg), dtype=float)
            if name not in self.records:
                self.records[name] = np.empty((self.n,) + val.shape)
            self.records[name][i] = val

    def result(self):
        for name in self.observers:
            self.records.setdefault(name, np.empty(0))
        return self.records


# -- estimators --------------------------------------------------------------------

@dataclass
class EstimatorResult:
    value: float
    error: float
    tau_int: float
    n: int
    error_tau: float = 0.0
    error_batch: float = 0.0

    def z(self, other):
        """Difference in units of the combined standard error."""
        s = math.hypot(self.error, other.error)
        d = self.value - other.value
        return 0.0 if s == 0 and d == 0 else (math.inf if s == 0 else d / s)


def autocorrelation(x):
    """Normalised autocorrelation function rho(t), t = 0..n-1 (FFT based)."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    y = x - x.mean()
    f = np.fft.rfft(y, 2 * n)
    acf = np.fft.irfft(f * np.conj(f))[:n]
    if acf[0] == 0:
        return np.zeros(n)
    return acf / acf[0]


def tau_int(x, c=MS_WINDOW_C):
    """Integrated autocorrelation time with Madras-Sokal automatic windowing.

    tau(W) = 1/2 + sum_{t=1}^W rho(t); the window is the smallest W with W >= c tau(W).
    """
    rho = autocorrelation(x)
    if rho[0] == 0:
        return 0.5, 0
    taus = 0.5 + np.cumsum(rho[1:])
    w = np.arange(1, len(rho))
    ok = np.nonzero(w >= c * taus)[0]
    W = int(ok[0]) if len(ok) else len(taus) - 1
    return max(float(taus[W]), 0.5), W + 1


def n_batches(n):
    return int(np.clip(round(math.sqrt(n)), 16, 128))


def _batch_view(x, B):
    size = len(x) // B
    return x[len(x) - size * B:].reshape(B, size)


def estimate(series, min_samples=MIN_SAMPLES):
    """Mean with the larger of the autocorrelation-time and batch-means standard errors."""
    x = np.asarray(series, dtype=float)
    n = len(x)
    if n < min_samples:
        raise TooFewSamples(f"need at least {min_samples} samples, got {n}")
    mean = float(x.mean())
    var = float(x.var(ddof=1))
    if var == 0.0:
        return EstimatorResult(mean, 0.0, 0.5, n)
    tau, _ = tau_int(x)
    err_tau = math.sqrt(2.0 * tau * var / n)
    bm = _batch_view(x, n_batches(n)).mean(axis=1)
    err_b = float(bm.std(ddof=1) / math.sqrt(len(bm)))
    return EstimatorResult(mean, max(err_tau, err_b), tau, n, err_tau, err_b)


def jackknife(stat, *series, n_blocks=None):
    """Jackknife over contiguous batches of aligned series.

    ``stat`` maps a tuple of aligned arrays to a scalar.  Returns (full-sample
    value, jackknife error).
    """
    arrs = [np.asarray(s, dtype=float) for s in series]
    n = len(arrs[0])
    if any(len(a) != n for a in arrs):
        raise DimensionMismatch("series have different lengths")
    B = n_blocks or n_batches(n)
    size = n // B
    start = n - size * B
    arrs = [a[start:] for a in arrs]
    full = float(stat(*arrs))
    idx = np.arange(size * B).reshape(B, size)
    loo = np.empty(B)
    for b in range(B):
        keep = np.delete(idx, b, axis=0).ravel()
        loo[b] = stat(*(a[keep] for a in arrs))
    err = math.sqrt((B - 1) / B * float(np.sum((loo - loo.mean()) ** 2)))
    return full, err


def _cov(f, g):
    return float(np.mean(f * g) - np.mean(f) * np.mean(g))


def covariance(f, g, min_samples=MIN_SAMPLES):
    """Covariance of two aligned series with a jackknife-over-batches error."""
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    if f.shape != g.shape:
        raise DimensionMismatch(f"series lengths differ: {len(f)} vs {len(g)}")
    if len(f) < min_samples:
        raise TooFewSamples(f"need at least {min_samples} samples, got {len(f)}")
    val, err = jackknife(_cov, f, g)
    prod = (f - f.mean()) * (g - g.mean())
    tau = tau_int(prod)[0] if prod.var() > 0 else 0.5
    return EstimatorResult(val, err, tau, len(f), 0.0, err)


def translated_covariance(F, shift_fn, min_samples=MIN_SAMPLES):
    """Translation-averaged covariance of a local field with its translate.

    F has shape (n_samples, n_positions); ``shift_fn`` maps F to the translated
    field G (same shape) with G[:, p] the observable at p's translate.  The
    estimator is mean_p E[F_p G_p] - E[mean F] E[mean G], valid under
    translation invariance.
    """
    F = np.asarray(F, dtype=float)
    G = shift_fn(F)
    prod = np.mean(F * G, axis=1)
    mf = F.mean(axis=1)
    mg = G.mean(axis=1)
    if len(prod) < min_samples:
        raise TooFewSamples(f"need at least {min_samples} samples, got {len(prod)}")
    val, err = jackknife(lambda a, b, c: np.mean(a) - np.mean(b) * np.mean(c), prod, mf, mg)
    return EstimatorResult(val, err, tau_int(prod)[0], len(prod), 0.0, err)


def linear_extrapolation(hs, results):
    """Weighted straight-line fit value(h) = a + b h evaluated at h = 0.

    With two points this is the Richardson combination (h1 v2 - h2 v1)/(h1 - h2).
    """
    h = np.asarray(hs, dtype=float)
    v = np.array([r.value for r in results])
    e = np.array([r.error for r in results])
    if len(h) < 2 or len(set(h)) < 2:
        raise ValueError("extrapolation needs at least two distinct step sizes")
    w = 1.0 / e ** 2 if np.all(e > 0) else np.ones_like(h)
    X = np.stack([np.ones_like(h), h], axis=1)
    A = X.T @ (w[:, None] * X)
    coef = np.linalg.solve(A, X.T @ (w * v))
    # error propagation with the actual per-point errors
    J = np.linalg.solve(A, X.T * w)[0]
    err = float(np.sqrt(np.sum((J * e) ** 2)))
    return EstimatorResult(float(coef[0]), err, float(max(r.tau_int for r in results)),
                           int(sum(r.n for r in results)))


# -- mass gap ------------------------------------------------------------------------

@dataclass
class MassGapFit:
    rate: float
    amplitude: float
    rate_error: float
    distances: np.ndarray
    excluded: np.ndarray
    signs: np.ndarray
    cutoff_sigma: float = 2.0

    def ci(self, level_z=1.959963984540054):
        return self.rate - level_z * self.rate_error, self.rate + level_z * self.rate_error


def mass_gap_fit(r, cov, err=None, cutoff_sigma=2.0):
    """Fit |cov(r)| ~ A exp(-c r) by weighted least squares on log|cov|.

    Points with |cov| <= cutoff_sigma * err are excluded (recorded in the
    result).  Zero errors mean exact data and equal weights.  Raises
    InsufficientSignal when fewer than three points survive.
    """
    r = np.asarray(r, dtype=float)
    cov = np.asarray(cov, dtype=float)
    err = np.zeros_like(cov) if err is None else np.asarray(err, dtype=float)
    a = np.abs(cov)
    keep = (a > cutoff_sigma * err) & (a > 0)
    if keep.sum() < 3:
        raise InsufficientSignal(
            f"only {int(keep.sum())} of {len(r)} distances exceed {cutoff_sigma} sigma")
    x, y = r[keep], np.log(a[keep])
    if np.all(err[keep] > 0):
        w = (a[keep] / err[keep]) ** 2      # 1 / var(log|cov|), delta method
        absolute = True
    else:
        w = np.ones_like(x)
        absolute = False
    X = np.stack([np.ones_like(x), x], axis=1)
    A = X.T @ (w[:, None] * X)
    coef = np.linalg.solve(A, X.T @ (w * y))
    cov_coef = np.linalg.inv(A)
    if not absolute:
        dof = len(x) - 2
        resid = y - X @ coef
        cov_coef = cov_coef * (float(resid @ resid) / dof if dof > 0 else 0.0)
    return MassGapFit(rate=float(-coef[1]), amplitude=float(math.exp(coef[0])),
                      rate_error=float(math.sqrt(max(cov_coef[1, 1], 0.0))),
                      distances=r[keep], excluded=r[~keep], signs=np.sign(cov), cutoff_sigma=cutoff_sigma)


# -- Higgs moment and large N --------------------------------------------------------

@dataclass
class MomentReport:
    estimate: EstimatorResult
    bound: float

    @property
    def excess_sigma(self):
        e = self.estimate
        return (e.value - self.bound) / e.error if e.error > 0 else math.copysign(math.inf, e.value - self.bound)


def higgs_second_moment(series, couplings):
    """E|phi_x|^2 with the a priori bound 1/(2m) for the Euclidean target."""
    if couplings.target is not Target.EUCLIDEAN:
        raise TargetMismatch("the second-moment bound applies to the Euclidean target")
    if couplings.m <= 0:
        raise ValueError("the second-moment bound needs m > 0")
    return MomentReport(estimate(series), 1.0 / (2.0 * couplings.m))


@dataclass
class FactorizationRow:
    N: int
    var: float
    var_error: float
    bound: float
    defect: float
    defect_error: float
    K: float


def factorization_report(samples, n, K=None):
    """Variance and factorization defect of normalised Wilson loops along an N ladder.

    ``samples`` maps N to a pair of aligned series (W_1, W_2) of unnormalised
    loop values; ``K`` maps N to the curvature constant (bound left NaN when
    K is missing or not positive).  The defect is |E[W1 W2] - E[W1] E[W2]| / N^2.
    """
    from .bounds import variance_bound
    rows = []
    for N in sorted(samples):
        w1, w2 = (np.asarray(s, dtype=float) for s in samples[N])
        v = covariance(w1 / N, w1 / N)
        dfc = covariance(w1 / N, w2 / N)
        k = (K or {}).get(N, float("nan"))
        bound = variance_bound(n, k, N) if k > 0 else float("nan")
        rows.append(FactorizationRow(N, v.value, v.error, bound, abs(dfc.value), dfc.error, k))
    return rows
