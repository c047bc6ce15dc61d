import csv
import io
import json

import numpy as np
import pytest

from latymh import bounds as bd
from latymh import cli
from latymh import model as M


def read_csv(text):
    header = [l for l in text.splitlines() if l.startswith("#")]
    body = [l for l in text.splitlines() if not l.startswith("#")]
    return header, list(csv.DictReader(io.StringIO("\n".join(body))))


def run(args, capsys):
    code = cli.main(args)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_simulate_zero_steps_single_row(tmp_path, capsys):
    out = tmp_path / "s.csv"
    code, _, _ = run(["simulate", "--out", str(out), "--override", "engine.steps=0"], capsys)
    assert code == 0
    header, rows = read_csv(out.read_text())
    assert len(rows) == 1 and float(rows[0]["plaquette"]) == 1.0
    assert any("config_hash=" in h for h in header)
    snap = M.load_snapshot(str(out) + ".ckpt")
    assert np.array_equal(snap.Q, M.cold_configuration(snap.lattice, 3, "group").Q)


@pytest.mark.parametrize("kind", ["langevin", "metropolis"])
def test_simulate_byte_identical(tmp_path, capsys, kind):
    args = ["--seed", "7", "--override", f"engine.kind=\"{kind}\"", "--override", "engine.steps=200",
            "--override", "engine.sweeps=50"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert run(["simulate", "--out", str(a)] + args, capsys)[0] == 0
    assert run(["simulate", "--out", str(b)] + args, capsys)[0] == 0
    assert a.read_bytes() == b.read_bytes()
    assert (tmp_path / "a.csv.ckpt").read_bytes() == (tmp_path / "b.csv.ckpt").read_bytes()
    code, _, _ = run(["simulate", "--out", str(b), "--seed", "8"] + args[2:], capsys)
    assert a.read_bytes() != b.read_bytes()


def test_header_reingestion_reproduces_bounds(tmp_path, capsys):
    out = tmp_path / "b.csv"
    assert run(["bounds", "--out", str(out), "--override", "bounds.betas=\"0:0.004:5\"",
                "--override", "bounds.kappas=\"0,0.01\""], capsys)[0] == 0
    header, rows = read_csv(out.read_text())
    cfg = json.loads(next(h for h in header if h.startswith("# config="))[len("# config="):])
    assert cfg["bounds"]["N"] == 10
    assert len(rows) == 10
    for r in rows:
        K, _ = bd.k_group(cfg["bounds"]["N"], float(r["beta"]), float(r["kappa"]), cfg["bounds"]["d"])
        assert float(r["K"]) == K


def test_bounds_single_point_and_zero_row(capsys):
    code, out, _ = run(["bounds", "--override", "bounds.betas=0.01", "--override", "bounds.kappas=0.05",
                        "--override", "bounds.ugauge=true"], capsys)
    _, rows = read_csv(out)
    assert code == 0 and abs(float(rows[0]["K"]) - 0.2) <= 1e-12
    for target in ("group", "euclidean"):
        code, out, _ = run(["bounds", "--override", f"bounds.target=\"{target}\""], capsys)
        _, rows = read_csv(out)
        assert float(rows[0]["K"]) == (10 + 2) / 4 - 1


@pytest.mark.parametrize("bad", [["--override", "bounds.betas=\"0:1\""], ["--override", "bounds.betas=\"a,b\""],
                                 ["--override", "lattice.q=1"], ["--override", "couplings.N=\"x\""],
                                 ["--override", "couplings.m=0", "--override", "couplings.target=\"euclidean\""],
                                 ["--config", "/nonexistent.toml"], ["--threads", "0"]])
def test_usage_errors_exit_2(bad, capsys):
    assert run(["bounds"] + bad, capsys)[0] == 2


def test_euclidean_kappa_zero_allowed(capsys):
    code, out, _ = run(["simulate", "--override", "couplings.target=\"euclidean\"",
                        "--override", "couplings.kappa=0.0", "--override", "engine.steps=10"], capsys)
    assert code == 0


def test_numerical_failure_exit_3(capsys):
    code, _, err = run(["simulate", "--override", "engine.dt=3.0", "--override", "engine.steps=5"], capsys)
    assert code == 3 and "numerical" in err


def test_massgap_synthetic_and_schedule(tmp_path, capsys):
    code, out, _ = run(["massgap", "--seed", "3", "--override", "massgap.synthetic=true",
                        "--override", "massgap.distances=[1,2,3,4,5,6]"], capsys)
    header, rows = read_csv(out)
    assert code == 0
    assert [int(r["distance"]) for r in rows] == [1, 2, 3, 4, 5, 6]
    fit = dict(kv.split("=") for kv in next(h for h in header if h.startswith("# fit")).split()[2:])
    assert abs(float(fit["rate"]) - 0.7) <= 3 * float(fit["rate_err"])


def test_massgap_all_noise_insufficient_signal(capsys):
    code, out, err = run(["massgap", "--override", "massgap.synthetic=true",
                          "--override", "massgap.synthetic_noise=50.0"], capsys)
    assert code == 3 and "insufficient-signal" in out and "insufficient-signal" in err


def test_largen_usage_and_single_row(capsys):
    assert run(["largen"], capsys)[0] == 2
    code, out, _ = run(["largen", "--override", "largen.loop=\"plaquette\"", "--override", "largen.ladder=[16]",
                        "--override", "couplings.beta=0.02", "--override", "couplings.kappa=0.02",
                        "--override", "engine.sweeps=300", "--override", "engine.burn_in=50"], capsys)
    _, rows = read_csv(out)
    assert code == 0 and len(rows) == 1
    r = rows[0]
    assert float(r["bound"]) == bd.variance_bound(4, float(r["K"]), 16)


def test_gaugefix_check_rejects_noninvariant_and_constant_exact(capsys):
    assert run(["gaugefix-check", "--override", "gaugefix.observables=[\"edge_trace\"]"], capsys)[0] == 2
    assert run(["gaugefix-check", "--override", "couplings.target=\"sphere\""], capsys)[0] == 2
    code, out, _ = run(["gaugefix-check", "--override", "gaugefix.observables=[\"constant\"]",
                        "--override", "engine.sweeps=200"], capsys)
    _, rows = read_csv(out)
    assert code == 0 and rows[0]["mu"] == rows[0]["nu"] == "1" and float(rows[0]["z"]) == 0.0
