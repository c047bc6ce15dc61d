"""Canned experiments behind the CLI commands.

Each function takes plain parameters, runs the samplers, and returns rows
(lists of dicts) ready for CSV output, so that tests can call them directly.
"""
import warnings
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import bounds, dynamics, oracle
from . import model as mdl
from . import observables as ob
from .errors import ConfigError, InsufficientSignal
from .model import Couplings, Target


def _map(fn, items, threads):
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def initial_configuration(lattice, c, init="cold", seed=0):
    if init == "cold":
        return mdl.cold_configuration(lattice, c.N, c.target)
    if init == "hot":
        from .streams import INIT, stream
        return mdl.random_configuration(lattice, c.N, c.target, stream(seed, INIT))
    cfg = mdl.load_snapshot(init)
    if cfg.lattice != lattice or cfg.N != c.N or cfg.target is not c.target:
        raise ConfigError(f"checkpoint {init} does not match lattice/couplings")
    return cfg


# -- stationarity ------------------------------------------------------------------

def stationarity_compare(lattice, c, dts, langevin_time, sweeps, seed, burn_in_sweeps=1000,
                         burn_in_time=10.0, record_every=0.05, scheme="geodesic", threads=1):
    """Metropolis means against dt -> 0 extrapolated Langevin means.

    Returns one row per observable with the per-dt Langevin estimates, the
    extrapolation and the z-score against the Metropolis estimate.
    """
    cfg0 = mdl.cold_configuration(lattice, c.N, c.target)

    def metro(_):
        return oracle.sample(cfg0, c, sweeps, seed, burn_in=burn_in_sweeps)

    def lang(dt):
        thin = max(1, int(round(record_every / dt)))
        burn = int(round(burn_in_time / (thin * dt)))
        steps = int(round(langevin_time / dt / thin)) * thin
        st = dynamics.IntegratorSettings(dt=dt, steps=steps, seed=seed + 1 + dts.index(dt),
                                         scheme=scheme, thinning=thin)
        return dynamics.run(cfg0, c, st).after(burn)

    jobs = [("metro", None)] + [("lang", dt) for dt in dts]
    out = _map(lambda j: metro(None) if j[0] == "metro" else lang(j[1]), jobs, threads)
    ms, trajs = out[0], out[1:]
    rows = []
    for name in ms.names():
        m = ob.estimate(ms[name])
        per_dt = [ob.estimate(t[name]) for t in trajs]
        ext = ob.linear_extrapolation(dts, per_dt)
        row = {"observable": name, "metropolis": m.value, "metropolis_err": m.error}
        for dt, r in zip(dts, per_dt):
            row[f"langevin_dt{dt:g}"] = r.value
            row[f"langevin_dt{dt:g}_err"] = r.error
        row.update(extrapolated=ext.value, extrapolated_err=ext.error, z=ext.z(m))
        rows.append(row)
    return rows


# -- translated plaquette fields -----------------------------------------------------

def plaquette_planes(lattice):
    return [(mu, nu) for mu in range(lattice.d) for nu in range(mu + 1, lattice.d)]


def plaquette_field(cfg):
    """Tr Q_p for all positive plaquettes, shape (n_plaquettes,), canonical order."""
    return mdl.plaquette_traces(cfg)


def translation_permutation(lattice, axis, steps):
    """perm with perm[p] = index of p translated by ``steps`` along ``axis``."""
    npl = len(plaquette_planes(lattice))
    c = lattice.coords.copy()
    c[:, axis] = (c[:, axis] + steps) % lattice.L
    shifted = lattice.site_index(c)
    return (shifted[:, None] * npl + np.arange(npl)[None, :]).reshape(-1)


def plaquette_distance(lattice, axis, steps):
    """Torus distance between the plaquette at the origin in plane (axis, next) and its translate."""
    mu, nu = (axis, (axis + 1) % lattice.d)
    p = lattice.plaquette_path(0, mu, nu)
    q = p.translated(axis, steps)
    return lattice.torus_distance(p, q)


def _plane_columns(lattice, axis):
    planes = plaquette_planes(lattice)
    cols = [j for j, pl in enumerate(planes) if axis in pl]
    npl = len(planes)
    return np.array([x * npl + j for x in range(lattice.n_sites) for j in cols])


def sample_plaquette_field(lattice, c, engine, seed, init="cold", threads=1):
    """Per-record plaquette trace fields from the configured engine."""
    cfg0 = initial_configuration(lattice, c, init, seed)
    obs = {"plaquettes": plaquette_field}
    if engine["kind"] == "metropolis":
        s = oracle.sample(cfg0, c, engine["sweeps"], seed, burn_in=engine.get("burn_in", 0),
                          thinning=engine.get("thinning", 1), observers=obs)
        return s["plaquettes"]
    st = dynamics.IntegratorSettings(dt=engine["dt"], steps=engine["steps"], seed=seed,
                                     scheme=engine.get("scheme", "geodesic"),
                                     thinning=engine.get("thinning", 1))
    tr = dynamics.run(cfg0, c, st, observers=obs)
    return tr["plaquettes"][engine.get("burn_in_records", 0):]


def covariance_by_distance(lattice, F, distances, axis=0):
    """Translation-averaged covariance of plaquette traces against their translates.

    Only plaquettes whose plane contains ``axis`` are used; the translation
    realising each requested torus distance is found by direct search.
    """
    cols = _plane_columns(lattice, axis)
    rows = []
    for r in distances:
        steps = next((s for s in range(1, lattice.L) if plaquette_distance(lattice, axis, s) == r), None)
        if steps is None:
            raise ConfigError(f"distance {r} is not realised along axis {axis} on L={lattice.L}")
        perm = translation_permutation(lattice, axis, steps)
        res = ob.translated_covariance(F[:, cols], lambda A, p=perm[cols]: F[:, p])
        rows.append({"distance": r, "shift": steps, "cov": res.value, "cov_err": res.error,
                     "abs_cov": abs(res.value), "tau_int": res.tau_int, "n": res.n})
    return rows


def synthetic_covariances(distances, rate, amplitude, noise, seed):
    """Test hook: C(r) = A exp(-rate r) with multiplicative Gaussian noise of relative size ``noise``."""
    rng = np.random.default_rng(seed)
    r = np.asarray(distances, dtype=float)
    exact = amplitude * np.exp(-rate * r)
    vals = exact * (1.0 + noise * rng.standard_normal(len(r)))
    return [{"distance": int(d), "shift": 0, "cov": float(v), "cov_err": float(noise * e),
             "abs_cov": abs(float(v)), "tau_int": 0.5, "n": 0} for d, v, e in zip(distances, vals, exact)]


def fit_rows(rows, cutoff_sigma=2.0):
    """Apply mass_gap_fit to covariance rows; returns (summary dict, MassGapFit or None)."""
    r = [row["distance"] for row in rows]
    cov = [row["cov"] for row in rows]
    err = [row["cov_err"] for row in rows]
    try:
        fit = ob.mass_gap_fit(r, cov, err, cutoff_sigma)
    except InsufficientSignal as exc:
        for row in rows:
            row["included"] = 0
        return {"verdict": "insufficient-signal", "message": str(exc)}, None
    used = set(fit.distances.tolist())
    for row in rows:
        row["included"] = int(row["distance"] in used)
    lo, hi = fit.ci()
    return {"verdict": "ok" if lo > 0 else "ci-includes-zero", "rate": fit.rate, "rate_err": fit.rate_error,
            "ci_low": lo, "ci_high": hi, "amplitude": fit.amplitude, "n_points": len(fit.distances)}, fit


def massgap(lattice, c, engine, distances, seed, axis=0, init="cold", threads=1):
    K = bounds.constant(c.target, c.N, c.beta, c.kappa, lattice.d, c.m if c.target is Target.EUCLIDEAN else None)
    if not K.positive:
        warnings.warn(f"{K.name} = {K.value:.4g} <= 0 at these couplings: no decay guarantee", stacklevel=2)
    F = sample_plaquette_field(lattice, c, engine, seed, init, threads)
    rows = covariance_by_distance(lattice, F, distances, axis)
    summary, _ = fit_rows(rows)
    summary["K"] = K.value
    return rows, summary


# -- large N -----------------------------------------------------------------------

def largen(lattice, base, ladder, engine, seed, separation=None, constant="ugauge", threads=1):
    """Variance and factorization defect of plaquette Wilson loops along an N ladder.

    Statistics pool all translates of the loop (translation invariance): the
    variance is that of W_p/N for a single plaquette p, the defect compares a
    plaquette with its translate by ``separation`` along axis 0.
    """
    sep = lattice.L // 2 if separation is None else separation
    n_len = 4

    def one(N):
        c = Couplings(N, base.beta, base.kappa, base.m, base.target)
        F = sample_plaquette_field(lattice, c, engine, seed + N, threads=1) / N
        ident = lambda A: A  # noqa: E731
        var = ob.translated_covariance(F, ident)
        perm = translation_permutation(lattice, 0, sep)
        dfc = ob.translated_covariance(F, lambda A: A[:, perm])
        if constant == "ugauge":
            K = bounds.k_ugauge(N, c.beta, c.kappa, lattice.d)
        else:
            K = bounds.constant(c.target, N, c.beta, c.kappa, lattice.d,
                                c.m if c.target is Target.EUCLIDEAN else None).value
        bound = bounds.variance_bound(n_len, K, N) if K > 0 else float("nan")
        return {"N": N, "var": var.value, "var_err": var.error, "K": K, "bound": bound,
                "defect": abs(dfc.value), "defect_err": dfc.error, "separation": sep,
                "mean_w": float(F.mean()), "n": var.n}

    return _map(one, sorted(ladder), threads)


# -- U-gauge ---------------------------------------------------------------------------

def gauge_observables(lattice, names):
    """Named observables for the gauge-fixing comparison; non-invariant names are rejected."""
    table = {
        "plaquette_loop": (lambda cfg: ob.wilson_loop(cfg, lattice.plaquette_path(0, 0, 1)), True),
        "wilson_line2": (lambda cfg: ob.wilson_line(cfg, lattice.path(0, [(0, 1), (0, 1)])), True),
        "constant": (lambda cfg: 1.0, True),
        "edge_trace": (lambda cfg: float(np.trace(cfg.Q[0])), False),
    }
    out = {}
    for n in names:
        if n not in table:
            raise ConfigError(f"unknown observable {n!r}; choose from {sorted(table)}")
        f, inv = table[n]
        if not inv:
            raise ConfigError(f"observable {n!r} is not gauge invariant")
        out[n] = f
    return out


def gaugefix_check(lattice, c, sweeps, burn_in, seed, names=("plaquette_loop", "wilson_line2"), threads=1):
    if c.target is not Target.GROUP:
        raise ConfigError("gaugefix-check needs the group target")
    obs = gauge_observables(lattice, names)
    cfg0 = mdl.cold_configuration(lattice, c.N, c.target)
    mu, nu = _map(lambda gf: oracle.sample(cfg0, c, sweeps, seed + int(gf), burn_in=burn_in,
                                           observers=obs, gauge_fixed=gf),
                  [False, True], threads)
    rows = []
    for n in names:
        a, b = ob.estimate(mu[n]), ob.estimate(nu[n])
        rows.append({"observable": n, "mu": a.value, "mu_err": a.error, "nu": b.value, "nu_err": b.error,
                     "z": a.z(b)})
    return rows


# -- bounds grid -------------------------------------------------------------------------

def bounds_grid(target, N, d, betas, kappas, m=None, ugauge=False):
    reg = bounds.admissible_region(target, N, d, betas, kappas, m, ugauge)
    rows = []
    for i, b in enumerate(reg.betas):
        for j, k in enumerate(reg.kappas):
            rows.append({"target": "ugauge" if ugauge else Target(target).value, "N": N, "d": d,
                         "beta": float(b), "kappa": float(k), "m": float("nan") if m is None else m,
                         "K": float(reg.K[i, j]), "delta": float(reg.delta[i, j]),
                         "positive": int(reg.K[i, j] > 0)})
    return rows
