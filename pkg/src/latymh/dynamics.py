"""Langevin dynamics dQ_e = grad_e S dt + sqrt(2) dB_e Q_e (+ Ito terms), and its Higgs analogue.

Two discretisations are provided:

``geodesic``
    Q_e <- exp(dt X_e + sqrt(2 dt) xi_e) Q_e and the matching geodesic step on
    the Higgs target.  Constraints hold to rounding, and the Ito corrections
    come out of the second-order term of the exponential (E[xi^2] = c_g I).
``ito_project``
    Explicit Euler-Maruyama on the Ito form with the correction terms written
    out, followed by a polar retraction (edges, group sites) or normalisation
    (sphere sites).

``step_geodesic`` and ``step_ito_project`` are numpy reference steps.
:func:`run` drives the compiled kernel in :mod:`latymh.kernels`.
"""
import enum
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import geometry as geo
from . import kernels, streams
from . import model as mdl
from .errors import RetractionFailure, StepTooLarge
from .model import Target, TangentVector
from .observables import Recorder, SampleSeries, standard_observers

MAX_INCREMENT = 1.0


class Scheme(str, enum.Enum):
    GEODESIC = "geodesic"
    ITO_PROJECT = "ito_project"

    @property
    def code(self):
        return kernels.SCHEME_GEODESIC if self is Scheme.GEODESIC else kernels.SCHEME_ITO


@dataclass
class IntegratorSettings:
    dt: float
    steps: int
    seed: int = 0
    scheme: Scheme = Scheme.GEODESIC
    thinning: int = 1
    block: int = 1024
    max_increment: float = MAX_INCREMENT

    def __post_init__(self):
        self.scheme = Scheme(self.scheme)
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.steps < 0 or self.thinning < 1 or self.block < 1:
            raise ValueError("steps must be >= 0, thinning and block >= 1")


@dataclass
class Trajectory(SampleSeries):
    """Records at times k * thinning * dt plus the final state for chaining."""
    final: Optional[mdl.FieldConfiguration] = None
    steps_done: int = 0

    @property
    def times(self):
        return self.index


def drift(cfg, c):
    """Gradient of the action as a tangent vector (group sites stored as skew Y_x)."""
    return mdl.gradient(cfg, c)


# -- noise ---------------------------------------------------------------------------

def noise_dims(target, N):
    """(edge, site) trailing noise dimensions: so(N) coefficients or R^N components."""
    dg = geo.algebra_dim(N)
    return dg, (dg if Target(target) is Target.GROUP else N)


def sample_noise(cfg, rng):
    """Standard noise as a TangentVector: so(N) Gaussians on edges, raw or so(N) Gaussians on sites."""
    N, lat = cfg.N, cfg.lattice
    X = geo.algebra_gaussian(N, 1.0, rng, size=lat.n_edges)
    if cfg.target is Target.GROUP:
        v = geo.algebra_gaussian(N, 1.0, rng, size=lat.n_sites)
    else:
        v = rng.standard_normal((lat.n_sites, N))
    return TangentVector(X, v)


def _noise(cfg, rng, noise):
    if noise is None:
        return sample_noise(cfg, rng)
    if noise is False:
        return TangentVector(np.zeros_like(cfg.Q), np.zeros((cfg.lattice.n_sites,) + cfg.phi.shape[1:]))
    return noise


def _check_increment(inc, limit):
    big = float(np.max(np.sqrt(np.sum(inc ** 2, axis=(-1, -2) if inc.ndim == 3 else -1)), initial=0.0))
    if big > limit:
        raise StepTooLarge(f"increment norm {big:.3g} exceeds {limit:g}")


# -- reference steps -------------------------------------------------------------------

def step_geodesic(cfg, c, dt, rng=None, noise=None, max_increment=MAX_INCREMENT):
    """One geodesic step.  ``noise`` overrides the draw (False suppresses it)."""
    xi = _noise(cfg, rng, noise)
    g = drift(cfg, c)
    s = math.sqrt(2.0 * dt)
    inc = dt * g.X + s * xi.X
    _check_increment(inc, max_increment)
    Q = geo.group_exp(inc) @ cfg.Q
    if cfg.target is Target.EUCLIDEAN:
        phi = cfg.phi + dt * g.v + s * xi.v
    elif cfg.target is Target.SPHERE:
        v = dt * g.v + s * geo.sphere_tangent_project(cfg.phi, xi.v)
        _check_increment(v, max_increment)
        phi = geo.sphere_exp(cfg.phi, v)
    else:
        inc_s = dt * g.v + s * xi.v
        _check_increment(inc_s, max_increment)
        phi = geo.group_exp(inc_s) @ cfg.phi
    return mdl.FieldConfiguration(cfg.lattice, cfg.target, Q, phi)


def step_ito_project(cfg, c, dt, rng=None, noise=None):
    """Euler-Maruyama on the Ito SDE, then projection back onto the constraint set."""
    xi = _noise(cfg, rng, noise)
    g = drift(cfg, c)
    s = math.sqrt(2.0 * dt)
    N = cfg.N
    cg = geo.casimir_constant(N)
    Q = cfg.Q + dt * (g.X @ cfg.Q + cg * cfg.Q) + s * xi.X @ cfg.Q
    Q = geo.retract_orthogonal(Q)
    if cfg.target is Target.EUCLIDEAN:
        phi = cfg.phi + dt * g.v + s * xi.v
    elif cfg.target is Target.SPHERE:
        phi = cfg.phi + dt * (g.v - (N - 1) * cfg.phi) + s * geo.sphere_tangent_project(cfg.phi, xi.v)
        nrm = np.linalg.norm(phi, axis=-1, keepdims=True)
        if np.any(nrm < 0.5):
            raise RetractionFailure("sphere step left the neighbourhood of the sphere")
        phi = phi / nrm
    else:
        phi = cfg.phi + dt * (g.v @ cfg.phi + cg * cfg.phi) + s * xi.v @ cfg.phi
        phi = geo.retract_orthogonal(phi)
    return mdl.FieldConfiguration(cfg.lattice, cfg.target, Q, phi)


# -- compiled driver ----------------------------------------------------------------

def _block_noise(seed, block, k, lat, target, N):
    rng = streams.stream(seed, streams.LANGEVIN, block)
    de, ds = noise_dims(target, N)
    ne = rng.standard_normal((k, lat.n_edges, de))
    ns = rng.standard_normal((k, lat.n_sites, ds))
    return ne, ns


def advance(cfg, c, settings, start_step, nsteps, cache=None):
    """Advance cfg in place by ``nsteps`` kernel steps, using global step numbers from ``start_step``.

    ``cache`` (a dict) keeps the current noise block between calls.
    """
    mdl._check_target(cfg, c)
    cache = {} if cache is None else cache
    lat, N = cfg.lattice, c.N
    Q, phi = cfg.Q, cfg.phi3()
    B = settings.block
    s = start_step
    end = start_step + nsteps
    while s < end:
        blk, off = divmod(s, B)
        if cache.get("block") != blk:
            cache["block"] = blk
            cache["noise"] = _block_noise(settings.seed, blk, B, lat, c.target, N)
        ne, ns = cache["noise"]
        k = min(B - off, end - s)
        where, code = kernels.langevin_steps(
            Q, phi, c.target.code, N, c.beta, c.kappa, c.mass, settings.dt, settings.scheme.code,
            lat.stp_idx, lat.stp_sgn, lat.edge_ends, lat.nbr, lat.nbr_edge, lat.nbr_sgn,
            ne[off:off + k], ns[off:off + k], settings.max_increment)
        if where >= 0:
            step = s + int(where)
            if code == 1:
                raise StepTooLarge(f"increment norm exceeds {settings.max_increment:g} (dt={settings.dt:g})", step=step)
            raise RetractionFailure(f"step {step}: projection onto SO(N) did not converge")
        s += k
    return cfg


def run(cfg, c, settings, observers=None, start_step=0):
    """Integrate from cfg (left untouched) and record observers every ``thinning`` steps.

    The result is a deterministic function of (cfg, couplings, settings):
    noise for global step n comes from stream block n // settings.block.
    """
    c.require_measure()
    observers = standard_observers(c.target) if observers is None else dict(observers)
    work = cfg.copy()
    nrec = settings.steps // settings.thinning + 1
    times = np.arange(nrec) * settings.thinning * settings.dt
    rec = Recorder(observers, nrec)
    put = lambda i: rec.put(i, work)  # noqa: E731
    put(0)
    step = start_step
    cache = {}
    for i in range(1, nrec):
        advance(work, c, settings, step, settings.thinning, cache)
        step += settings.thinning
        put(i)
    rest = start_step + settings.steps - step
    if rest:
        advance(work, c, settings, step, rest, cache)
    params = dict(N=c.N, beta=c.beta, kappa=c.kappa, m=c.m, target=c.target.value,
                  dt=settings.dt, scheme=settings.scheme.value, d=cfg.lattice.d, L=cfg.lattice.L)
    return Trajectory(times, rec.result(), settings.seed, params, {"engine": "langevin"},
                      final=work, steps_done=start_step + settings.steps)
