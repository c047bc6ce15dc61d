"""Time the compiled (numba) and pure-Python (numpy) kernel paths.

Each backend runs in its own subprocess because the switch is read at import
time (``LATYMH_NUMBA``).  Reports microseconds per Langevin step, per
Metropolis sweep and per action evaluation, plus the speed-up.

    python benchmarks/bench_kernels.py [--L 3] [--N 3] [--json out.json]
"""
import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
import numpy as np
from latymh import Couplings, backend, build_lattice, dynamics, kernels, oracle
from latymh import model as M

L, N, steps, sweeps, evals = (int(a) for a in sys.argv[1:6])
lat = build_lattice(2, L)
out = {"backend": backend()}
for target in ("euclidean", "sphere", "group"):
    c = Couplings(N, 0.2, 0.2, 1.0, target)
    cfg = M.random_configuration(lat, N, target, np.random.default_rng(0))
    st = dynamics.IntegratorSettings(dt=1e-3, steps=steps, seed=1, block=max(steps, 1))
    dynamics.advance(cfg.copy(), c, dynamics.IntegratorSettings(dt=1e-3, steps=2, seed=1), 0, 2)  # compile
    work = cfg.copy()
    t = time.perf_counter(); dynamics.advance(work, c, st, 0, steps); t_lang = time.perf_counter() - t
    scales = oracle.ProposalScales()
    rng = np.random.default_rng(2)
    oracle.metropolis_sweep(cfg.copy(), c, scales, rng)
    work = cfg.copy()
    t = time.perf_counter()
    for _ in range(sweeps):
        oracle.metropolis_sweep(work, c, scales, rng)
    t_met = time.perf_counter() - t
    args = (cfg.Q, cfg.phi3(), c.target.code, N, c.beta, c.kappa, c.mass, lat.plaq_idx, lat.plaq_sgn,
            lat.edge_ends, 2 * lat.d)
    kernels.action_kernel(*args)
    t = time.perf_counter()
    for _ in range(evals):
        kernels.action_kernel(*args)
    t_act = time.perf_counter() - t
    out[target] = {"langevin_us_per_step": 1e6 * t_lang / steps, "metropolis_us_per_sweep": 1e6 * t_met / sweeps,
                   "action_us_per_eval": 1e6 * t_act / evals}
print(json.dumps(out))
"""


def run(flag, L, N, steps, sweeps, evals):
    env = dict(os.environ, LATYMH_NUMBA=flag)
    res = subprocess.run([sys.executable, "-c", WORKER, str(L), str(N), str(steps), str(sweeps), str(evals)],
                         env=env, capture_output=True, text=True, check=True)
    return json.loads(res.stdout)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--L", type=int, default=3)
    p.add_argument("--N", type=int, default=3)
    p.add_argument("--json", metavar="PATH")
    a = p.parse_args(argv)
    fast = run("1", a.L, a.N, 20_000, 2_000, 20_000)
    slow = run("0", a.L, a.N, 200, 20, 200)
    print(f"lattice d=2 L={a.L}, N={a.N}")
    print(f"{'target':10s} {'quantity':26s} {'numba':>12s} {'numpy':>12s} {'speed-up':>9s}")
    for target in ("euclidean", "sphere", "group"):
        for key in fast[target]:
            f, s = fast[target][key], slow[target][key]
            print(f"{target:10s} {key:26s} {f:12.1f} {s:12.1f} {s / f:9.0f}x")
    if a.json:
        with open(a.json, "w") as fh:
            json.dump({"L": a.L, "N": a.N, "numba": fast, "numpy": slow}, fh, indent=2)


if __name__ == "__main__":
    main()
