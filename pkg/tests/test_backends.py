"""The compiled and pure-Python kernel paths produce the same numbers."""
import json
import os
import subprocess
import sys

import numpy as np
import pytest

SCRIPT = r"""
import json, numpy as np
from latymh import Couplings, build_lattice, backend
from latymh import dynamics, oracle, model as M
lat = build_lattice(2, 2)
out = {"backend": backend()}
for target in ("euclidean", "sphere", "group"):
    c = Couplings(3, 0.3, 0.2, 1.0, target)
    cfg = M.random_configuration(lat, 3, target, np.random.default_rng(1))
    from latymh import kernels
    out[target + "_S"] = kernels.action_kernel(cfg.Q, cfg.phi3(), c.target.code, 3, c.beta, c.kappa, c.mass,
                                               lat.plaq_idx, lat.plaq_sgn, lat.edge_ends, 2 * lat.d)
    tr = dynamics.run(cfg, c, dynamics.IntegratorSettings(dt=1e-3, steps=20, seed=2, block=8))
    out[target + "_lang"] = tr.final.Q.ravel().tolist() + tr.final.phi.ravel().tolist()
    s = oracle.sample(cfg, c, 3, seed=3, burn_in=2, tune_every=1)
    f = s.meta["final"]
    out[target + "_metro"] = f.Q.ravel().tolist() + f.phi.ravel().tolist()
print(json.dumps(out))
"""


def run_backend(flag):
    env = dict(os.environ, LATYMH_NUMBA=flag)
    res = subprocess.run([sys.executable, "-c", SCRIPT], env=env, capture_output=True, text=True, timeout=600)
    assert res.returncode == 0, res.stderr
    return json.loads(res.stdout)


@pytest.mark.slow
def test_numba_and_numpy_paths_agree():
    a, b = run_backend("1"), run_backend("0")
    assert a.pop("backend") == "numba" and b.pop("backend") == "numpy"
    for k in a:
        np.testing.assert_allclose(np.asarray(a[k]), np.asarray(b[k]), atol=1e-10, rtol=0, err_msg=k)
