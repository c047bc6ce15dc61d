"""Command-line driver.

Usage::

    latymh simulate --config run.toml --seed 7 --out run.csv
    latymh bounds --override bounds.N=10 --override bounds.betas=0:0.01:11
    latymh massgap | largen | gaugefix-check | oracle-compare --config ...

Every command reads an optional TOML config, applies ``--override`` entries
(dotted keys, TOML values), validates it, and writes a CSV whose ``#``
header lines record the config, seed, config hash, backend and package version.

Exit codes: 0 success, 2 usage or configuration error, 3 numerical failure.
"""
import argparse
import copy
import hashlib
import json
import sys
import warnings

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

import numpy as np

from . import __version__, backend, dynamics, experiments, oracle
from . import model as mdl
from .errors import (ConfigError, HessianStepError, InsufficientSignal, LatYMHError,
                     RetractionFailure, StepTooLarge)
from .geometry import ORTHO_TOL
from .lattice import Lattice
from .model import Couplings, Target

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL = 0, 2, 3

DEFAULTS = {
    "seed": 0,
    "init": "cold",
    "lattice": {"d": 2, "L": 3},
    "couplings": {"N": 3, "beta": 0.2, "kappa": 0.2, "m": 1.0, "target": "group"},
    "engine": {"kind": "langevin", "dt": 1e-3, "steps": 1000, "scheme": "geodesic", "thinning": 1,
               "sweeps": 1000, "burn_in": 100, "eps_q": 0.5, "eps_phi": 0.5},
    "observables": {"names": []},
    "bounds": {"target": "group", "N": 10, "d": 2, "m": 1.0, "betas": "0", "kappas": "0", "ugauge": False},
    "massgap": {"distances": [1, 2, 3, 4, 5], "axis": 0, "synthetic": False,
                "synthetic_rate": 0.7, "synthetic_amplitude": 2.0, "synthetic_noise": 0.05},
    "largen": {"ladder": [4, 8, 16], "loop": "", "separation": -1, "constant": "ugauge"},
    "gaugefix": {"observables": ["plaquette_loop", "wilson_line2"]},
    "compare": {"dts": [2e-3, 1e-3], "langevin_time": 2000.0, "burn_in_time": 10.0,
                "record_every": 0.05, "sweeps": 100000},
}

_TYPES = {bool: (bool,), int: (int,), float: (int, float), str: (str,), list: (list,)}
# grid specs accept a string, a single number or a list
_GRID_FIELDS = {"bounds.betas", "bounds.kappas"}


# -- configuration --------------------------------------------------------------------

def _parse_value(text):
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def apply_override(cfg, item):
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not KEY=VALUE")
    key, value = item.split("=", 1)
    parts = key.strip().split(".")
    node = cfg
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override {key!r}: {p!r} is not a table")
    node[parts[-1]] = _parse_value(value.strip())


def _merge(base, extra, path=""):
    for k, v in extra.items():
        where = f"{path}{k}"
        if k not in base:
            raise ConfigError(f"unknown config field {where!r}")
        if isinstance(base[k], dict):
            if not isinstance(v, dict):
                raise ConfigError(f"config field {where!r} must be a table")
            _merge(base[k], v, where + ".")
        elif where in _GRID_FIELDS:
            if isinstance(v, bool) or not isinstance(v, (str, int, float, list)):
                raise ConfigError(f"config field {where!r} must be a grid spec, got {v!r}")
            base[k] = v
        else:
            want = type(base[k])
            if not isinstance(v, _TYPES[want]) or (want is not bool and isinstance(v, bool)):
                raise ConfigError(f"config field {where!r} must be {want.__name__}, got {v!r}")
            base[k] = float(v) if want is float else v


def load_config(path=None, overrides=(), seed=None):
    raw = {}
    if path:
        try:
            with open(path, "rb") as fh:
                raw = tomllib.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"config {path} is not valid TOML: {exc}") from exc
    for item in overrides:
        apply_override(raw, item)
    if seed is not None:
        raw["seed"] = seed
    cfg = copy.deepcopy(DEFAULTS)
    _merge(cfg, raw)
    validate(cfg)
    return cfg


def validate(cfg):
    lat, c, e = cfg["lattice"], cfg["couplings"], cfg["engine"]
    if lat["d"] < 2 or lat["L"] < 2:
        raise ConfigError("lattice.d and lattice.L must be >= 2")
    if c["N"] < 2:
        raise ConfigError("couplings.N must be >= 2")
    if c["target"] not in {t.value for t in Target}:
        raise ConfigError(f"couplings.target must be one of {[t.value for t in Target]}")
    if c["target"] == "euclidean" and not (c["m"] > 0 and c["kappa"] >= 0):
        raise ConfigError("couplings: the euclidean target needs m > 0 and kappa >= 0")
    if e["kind"] not in ("langevin", "metropolis"):
        raise ConfigError("engine.kind must be 'langevin' or 'metropolis'")
    if e["scheme"] not in {s.value for s in dynamics.Scheme}:
        raise ConfigError(f"engine.scheme must be one of {[s.value for s in dynamics.Scheme]}")
    if not e["dt"] > 0:
        raise ConfigError("engine.dt must be positive")
    for k in ("steps", "sweeps", "burn_in"):
        if e[k] < 0:
            raise ConfigError(f"engine.{k} must be >= 0")
    if e["thinning"] < 1:
        raise ConfigError("engine.thinning must be >= 1")
    if not (e["eps_q"] > 0 and e["eps_phi"] > 0):
        raise ConfigError("engine.eps_q and engine.eps_phi must be positive")
    if not 0 <= cfg["seed"] < 2 ** 64:
        raise ConfigError("seed must be an unsigned 64-bit integer")


def config_hash(cfg):
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def lattice_of(cfg):
    return Lattice(cfg["lattice"]["d"], cfg["lattice"]["L"])


def couplings_of(cfg, **kw):
    c = dict(cfg["couplings"])
    c.update(kw)
    return Couplings(c["N"], c["beta"], c["kappa"], c["m"], c["target"])


def parse_grid(spec, name):
    """'start:stop:num' (inclusive linspace), 'a,b,c', a single number, or a TOML list."""
    try:
        if isinstance(spec, (int, float)) and not isinstance(spec, bool):
            return np.array([float(spec)])
        if isinstance(spec, list):
            return np.array([float(v) for v in spec])
        s = str(spec).strip()
        if ":" in s:
            a, b, n = s.split(":")
            n = int(n)
            if n < 1:
                raise ValueError
            return np.linspace(float(a), float(b), n)
        return np.array([float(v) for v in s.split(",")])
    except (ValueError, TypeError):
        raise ConfigError(f"malformed grid spec for {name}: {spec!r}") from None


# -- output -----------------------------------------------------------------------------

def fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    return str(v)


def header_lines(command, cfg):
    return [
        f"# latymh {__version__} command={command} backend={backend()}",
        f"# seed={cfg['seed']} config_hash={config_hash(cfg)}",
        f"# tolerances ortho={ORTHO_TOL:g}",
        "# config=" + json.dumps(cfg, sort_keys=True, separators=(",", ":")),
    ]


def write_csv(path, command, cfg, rows, columns=None, extra_header=()):
    if columns is None:
        columns = []
        for r in rows:
            for k in r:
                if k not in columns:
                    columns.append(k)
    lines = header_lines(command, cfg) + [f"# {h}" for h in extra_header]
    lines.append(",".join(columns))
    for r in rows:
        lines.append(",".join(fmt(r.get(k, "")) for k in columns))
    text = "\n".join(lines) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


# -- commands ------------------------------------------------------------------------------

def cmd_simulate(cfg, out, threads):
    lat, c = lattice_of(cfg), couplings_of(cfg)
    e = cfg["engine"]
    cfg0 = experiments.initial_configuration(lat, c, cfg["init"], cfg["seed"])
    if e["kind"] == "langevin":
        st = dynamics.IntegratorSettings(dt=e["dt"], steps=e["steps"], seed=cfg["seed"],
                                         scheme=e["scheme"], thinning=e["thinning"])
        series = dynamics.run(cfg0, c, st)
        final = series.final
        index_name = "time"
    else:
        scales = oracle.ProposalScales(e["eps_q"], e["eps_phi"])
        series = oracle.sample(cfg0, c, e["sweeps"], cfg["seed"], burn_in=e["burn_in"],
                               thinning=e["thinning"], scales=scales)
        final = series.meta["final"]
        index_name = "sweep"
    names = series.names()
    rows = [dict({index_name: t}, **{n: series[n][i] for n in names}) for i, t in enumerate(series.index)]
    write_csv(out, "simulate", cfg, rows, [index_name] + names)
    if out not in (None, "-"):
        mdl.save_snapshot(final, out + ".ckpt")
    return EXIT_OK


def cmd_bounds(cfg, out, threads):
    b = cfg["bounds"]
    if b["target"] not in {t.value for t in Target}:
        raise ConfigError(f"bounds.target must be one of {[t.value for t in Target]}")
    betas, kappas = parse_grid(b["betas"], "bounds.betas"), parse_grid(b["kappas"], "bounds.kappas")
    if b["target"] == "euclidean" and not b["m"] > 0:
        raise ConfigError("bounds.m must be positive for the euclidean target")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rows = experiments.bounds_grid(b["target"], b["N"], b["d"], betas, kappas,
                                       b["m"] if b["target"] == "euclidean" else None, b["ugauge"])
    write_csv(out, "bounds", cfg, rows)
    return EXIT_OK


def cmd_massgap(cfg, out, threads):
    g = cfg["massgap"]
    if not g["distances"] or any((not isinstance(r, int)) or r < 1 for r in g["distances"]):
        raise ConfigError("massgap.distances must be a non-empty list of positive integers")
    if g["synthetic"]:
        rows = experiments.synthetic_covariances(g["distances"], g["synthetic_rate"],
                                                 g["synthetic_amplitude"], g["synthetic_noise"], cfg["seed"])
        summary, _ = experiments.fit_rows(rows)
    else:
        lat, c = lattice_of(cfg), couplings_of(cfg)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            rows, summary = experiments.massgap(lat, c, cfg["engine"], g["distances"], cfg["seed"],
                                                g["axis"], cfg["init"], threads)
        for w in caught:
            print(f"warning: {w.message}", file=sys.stderr)
    extra = ["fit " + " ".join(f"{k}={fmt(v)}" for k, v in summary.items())]
    write_csv(out, "massgap", cfg, rows, extra_header=extra)
    if summary["verdict"] == "insufficient-signal":
        print(f"insufficient-signal: {summary['message']}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_largen(cfg, out, threads):
    g = cfg["largen"]
    if not g["loop"]:
        raise ConfigError("largen.loop is required (supported: 'plaquette')")
    if g["loop"] != "plaquette":
        raise ConfigError(f"largen.loop {g['loop']!r} not supported (supported: 'plaquette')")
    if not g["ladder"] or any((not isinstance(n, int)) or n < 2 for n in g["ladder"]):
        raise ConfigError("largen.ladder must be a list of integers >= 2")
    if g["constant"] not in ("ugauge", "target"):
        raise ConfigError("largen.constant must be 'ugauge' or 'target'")
    lat, c = lattice_of(cfg), couplings_of(cfg)
    sep = None if g["separation"] < 0 else g["separation"]
    rows = experiments.largen(lat, c, g["ladder"], cfg["engine"] | {"kind": "metropolis"}, cfg["seed"],
                              sep, g["constant"], threads)
    write_csv(out, "largen", cfg, rows)
    return EXIT_OK


def cmd_gaugefix_check(cfg, out, threads):
    lat, c = lattice_of(cfg), couplings_of(cfg)
    e = cfg["engine"]
    rows = experiments.gaugefix_check(lat, c, e["sweeps"], e["burn_in"], cfg["seed"],
                                      tuple(cfg["gaugefix"]["observables"]), threads)
    write_csv(out, "gaugefix-check", cfg, rows)
    return EXIT_OK


def cmd_oracle_compare(cfg, out, threads):
    lat, c = lattice_of(cfg), couplings_of(cfg)
    k = cfg["compare"]
    dts = [float(x) for x in k["dts"]]
    if len(set(dts)) < 2 or any(dt <= 0 for dt in dts):
        raise ConfigError("compare.dts needs at least two distinct positive step sizes")
    rows = experiments.stationarity_compare(lat, c, dts, k["langevin_time"], k["sweeps"], cfg["seed"],
                                            cfg["engine"]["burn_in"], k["burn_in_time"], k["record_every"],
                                            cfg["engine"]["scheme"], threads)
    write_csv(out, "oracle-compare", cfg, rows)
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "bounds": cmd_bounds,
    "massgap": cmd_massgap,
    "largen": cmd_largen,
    "gaugefix-check": cmd_gaugefix_check,
    "oracle-compare": cmd_oracle_compare,
}


def build_parser():
    p = argparse.ArgumentParser(prog="latymh", description="Lattice Yang-Mills-Higgs experiments")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", metavar="PATH")
        s.add_argument("--seed", type=int)
        s.add_argument("--out", metavar="PATH", default="-")
        s.add_argument("--threads", type=int, default=1)
        s.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        cfg = load_config(args.config, args.override, args.seed)
        return COMMANDS[args.command](cfg, args.out, args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (StepTooLarge, RetractionFailure, HessianStepError, InsufficientSignal,
            FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except LatYMHError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
