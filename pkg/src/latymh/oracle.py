"""Metropolis sampler for the Gibbs measure exp(S) and the U-gauge fixed measure.

Proposals are left multiplication by exp(eps xi) on SO(N) (Haar symmetric),
a Gaussian shift on R^N and a great-circle step of Gaussian length and
uniform direction on the sphere; all are symmetric with respect to the
reference measure so the acceptance ratio is min(1, exp(Delta S)).
"""
import math
from dataclasses import dataclass, field

import numpy as np

from . import geometry as geo
from . import kernels, streams
from . import model as mdl
from .dynamics import noise_dims
from .model import Target
from .observables import Recorder, SampleSeries, standard_observers

TARGET_ACCEPTANCE = 0.4
ACCEPTANCE_BAND = 0.1
MAX_EDGE_STEP = 2.0 * math.pi
SWEEP_BLOCK = 256


@dataclass
class ProposalScales:
    eps_q: float = 0.5
    eps_phi: float = 0.5
    frozen: bool = False
    accepted_e: int = 0
    proposed_e: int = 0
    accepted_s: int = 0
    proposed_s: int = 0
    history: list = field(default_factory=list)

    def __post_init__(self):
        if not (self.eps_q > 0 and self.eps_phi > 0):
            raise ValueError("proposal scales must be positive")

    def tally(self, acc_e, n_e, acc_s, n_s):
        self.accepted_e += acc_e
        self.proposed_e += n_e
        self.accepted_s += acc_s
        self.proposed_s += n_s

    @property
    def acceptance_edge(self):
        return self.accepted_e / self.proposed_e if self.proposed_e else float("nan")

    @property
    def acceptance_site(self):
        return self.accepted_s / self.proposed_s if self.proposed_s else float("nan")

    def reset_counts(self):
        self.accepted_e = self.proposed_e = self.accepted_s = self.proposed_s = 0

    def freeze(self):
        self.frozen = True
        self.reset_counts()


def _adjust(eps, acc, cap):
    if math.isnan(acc) or abs(acc - TARGET_ACCEPTANCE) <= ACCEPTANCE_BAND:
        return eps
    return float(min(eps * math.exp(2.0 * (acc - TARGET_ACCEPTANCE)), cap))


def autotune(scales, acc_edge=None, acc_site=None):
    """Multiplicative step-size update toward acceptance 0.4 +- 0.1 (no-op once frozen)."""
    if scales.frozen:
        return scales
    ae = scales.acceptance_edge if acc_edge is None else acc_edge
    as_ = scales.acceptance_site if acc_site is None else acc_site
    scales.eps_q = _adjust(scales.eps_q, ae, MAX_EDGE_STEP)
    scales.eps_phi = _adjust(scales.eps_phi, as_, 10.0)
    scales.history.append((scales.eps_q, scales.eps_phi, ae, as_))
    scales.reset_counts()
    return scales


def _orders(lat, rng, randomize):
    if randomize:
        return rng.permutation(lat.n_edges), rng.permutation(lat.n_sites)
    return np.arange(lat.n_edges), np.arange(lat.n_sites)


def _draws(lat, target, N, rng, k=None):
    """Gaussian proposals and acceptance uniforms for one sweep, or a block of k sweeps."""
    de, ds = noise_dims(target, N)
    lead = () if k is None else (k,)
    return (rng.standard_normal(lead + (lat.n_edges, de)), rng.random(lead + (lat.n_edges,)),
            rng.standard_normal(lead + (lat.n_sites, ds)), rng.random(lead + (lat.n_sites,)))


def _sweep(Q, phi, target, c, scales, lat, rng, update_sites, randomize=False, draws=None):
    N = c.N
    ne, ue, ns, us = _draws(lat, target, N, rng) if draws is None else draws
    eo, so = _orders(lat, rng, randomize)
    acc_e, acc_s = kernels.metropolis_sweep_kernel(
        Q, phi, Target(target).code, N, c.beta, c.kappa, c.mass, scales.eps_q, scales.eps_phi,
        lat.stp_idx, lat.stp_sgn, lat.edge_ends, lat.nbr, lat.nbr_edge, lat.nbr_sgn,
        ne, ue, ns, us, update_sites, eo, so)
    scales.tally(int(acc_e), lat.n_edges, int(acc_s), lat.n_sites if update_sites else 0)
    return int(acc_e), int(acc_s)


def metropolis_sweep(cfg, c, scales, rng, randomize=False):
    """One sweep over all positive edges, then all sites; cfg is updated in place.

    Returns (cfg, (accepted edges, accepted sites)).
    """
    mdl._check_target(cfg, c)
    c.require_measure()
    acc = _sweep(cfg.Q, cfg.phi3(), c.target, c, scales, cfg.lattice, rng, True, randomize)
    return cfg, acc


def _identity_phi(lat, N):
    return np.ascontiguousarray(np.broadcast_to(np.eye(N), (lat.n_sites, N, N)))


def metropolis_sweep_gaugefixed(Q, c, scales, rng, lattice, randomize=False):
    """One edge sweep for exp(N beta sum Tr Q_p + 2 kappa N sum Tr Q_e); Q is updated in place."""
    if c.target is not Target.GROUP:
        raise mdl.TargetMismatch("the gauge-fixed measure is defined for the group target")
    acc = _sweep(Q, _identity_phi(lattice, c.N), Target.GROUP, c, scales, lattice, rng, False, randomize)
    return Q, acc


def sample(cfg, c, sweeps, seed, burn_in=0, thinning=1, observers=None, scales=None,
           tune_every=50, gauge_fixed=False, randomize=False):
    """Burn in (autotuning the scales), freeze the scales, then record every ``thinning`` sweeps.

    With ``gauge_fixed`` the chain samples the U-gauge measure: phi is held at
    the identity and only edges move.  Sweep k draws from stream
    (seed, tag, k // SWEEP_BLOCK).
    """
    lat = cfg.lattice
    work = cfg.copy()
    if gauge_fixed:
        work.phi = _identity_phi(lat, c.N).copy()
    else:
        c.require_measure()
    mdl._check_target(work, c)
    scales = scales or ProposalScales()
    tag = streams.GAUGEFIXED if gauge_fixed else streams.METROPOLIS
    observers = standard_observers(c.target) if observers is None else dict(observers)
    Q, phi = work.Q, work.phi3()
    cache = {}

    def one(k):
        blk, off = divmod(k, SWEEP_BLOCK)
        if cache.get("block") != blk:
            rng = streams.stream(seed, tag, blk)
            cache["block"], cache["rng"] = blk, rng
            cache["draws"] = _draws(lat, c.target, c.N, rng, SWEEP_BLOCK)
        draws = tuple(a[off] for a in cache["draws"])
        _sweep(Q, phi, c.target, c, scales, lat, cache["rng"], not gauge_fixed, randomize, draws)

    for k in range(burn_in):
        one(k)
        if (k + 1) % tune_every == 0:
            autotune(scales)
    scales.freeze()
    nrec = sweeps // thinning
    rec = Recorder(observers, nrec)
    for i in range(sweeps):
        one(burn_in + i)
        if (i + 1) % thinning == 0:
            rec.put((i + 1) // thinning - 1, work)
    params = dict(N=c.N, beta=c.beta, kappa=c.kappa, m=c.m, target=c.target.value, d=lat.d, L=lat.L)
    meta = {"engine": "metropolis_gaugefixed" if gauge_fixed else "metropolis",
            "eps_q": scales.eps_q, "eps_phi": scales.eps_phi,
            "acceptance_edge": scales.acceptance_edge, "acceptance_site": scales.acceptance_site,
            "final": work, "scales": scales}
    index = np.arange(1, nrec + 1) * thinning
    return SampleSeries(index, rec.result(), seed, params, meta)
