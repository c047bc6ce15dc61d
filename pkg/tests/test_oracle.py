import math

import numpy as np
import pytest

from latymh import Couplings, Target, build_lattice
from latymh import model as M
from latymh import oracle as O
from latymh.errors import TargetMismatch
from latymh.observables import estimate


def rot(theta):
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def so3_trace_mean(kappa):
    """E[Tr Q / 3] under exp(6 kappa Tr Q) dHaar on SO(3), by quadrature over the rotation angle."""
    t = np.linspace(0.0, math.pi, 200001)
    tr = 1 + 2 * np.cos(t)
    w = (1 - np.cos(t)) * np.exp(6 * kappa * (tr - 3))
    return float(np.trapezoid(w * tr, t) / np.trapezoid(w, t)) / 3


def so2_cos_mean(a):
    """E[cos t] under exp(a cos t) dt on the circle."""
    t = np.linspace(-math.pi, math.pi, 200001)
    w = np.exp(a * (np.cos(t) - 1))
    return float(np.trapezoid(w * np.cos(t), t) / np.trapezoid(w, t))


def test_zero_action_change_always_accepted(lat23, rng):
    for target in ("sphere", "group"):
        cfg = M.random_configuration(lat23, 3, target, rng)
        scales = O.ProposalScales(1.0, 1.0)
        _, (ae, as_) = O.metropolis_sweep(cfg, Couplings(3, 0.0, 0.0, target=target), scales, rng)
        assert ae == lat23.n_edges and as_ == lat23.n_sites
        assert scales.acceptance_edge == 1.0


def test_improper_measure_rejected(lat23, rng):
    cfg = M.cold_configuration(lat23, 3, "euclidean")
    with pytest.raises(ValueError):
        O.metropolis_sweep(cfg, Couplings(3, 0.1, 0.1, 0.0, "euclidean"), O.ProposalScales(), rng)
    with pytest.raises(TargetMismatch):
        O.metropolis_sweep_gaugefixed(cfg.Q, Couplings(3, 0.1, 0.1, 1.0, "sphere"), O.ProposalScales(), rng,
                                      lat23)


@pytest.mark.parametrize("N", [2, 3])
def test_uniform_target_gives_haar_edges(N):
    lat = build_lattice(2, 3)
    cfg = M.cold_configuration(lat, N, "group")
    c = Couplings(N, 0.0, 0.0, target="group")
    obs = {"tr": lambda w: np.trace(w.Q, axis1=1, axis2=2).copy()}
    s = O.sample(cfg, c, 4000, seed=2, burn_in=200, observers=obs)
    tr = s["tr"].reshape(-1)
    second = 2.0 if N == 2 else 1.0
    se = np.sqrt(np.var(tr) / len(tr)) * 3
    assert abs(tr.mean()) < 3 * se
    assert abs(np.mean(tr ** 2) - second) < 0.05 * second


def test_sign_guard_beta_increases_plaquette(lat23):
    cfg = M.cold_configuration(lat23, 3, "group")
    means = []
    for beta in (0.0, 0.5, 1.0):
        s = O.sample(cfg, Couplings(3, beta, 0.1, target="group"), 1500, seed=4, burn_in=300)
        means.append(s["plaquette"].mean())
    assert means[0] < means[1] < means[2]
    assert abs(means[0]) < 0.1


def test_detailed_balance_single_edge_angle_grid():
    """Brute-force transition matrix of one edge move on an angle grid (N=2, beta=0, U-gauge)."""
    lat = build_lattice(2, 2)
    N, kappa, G, eps = 2, 0.3, 24, 0.7
    c = Couplings(N, 0.0, kappa, target="group")
    grid = 2 * math.pi * np.arange(G) / G
    offsets = [-2, -1, 1, 2]
    weight = {-2: 0.2, -1: 0.3, 1: 0.3, 2: 0.2}
    scales = O.ProposalScales(eps, 1.0)
    ident = O._identity_phi(lat, N)

    def moved(i, k, u):
        Q = np.ascontiguousarray(np.broadcast_to(rot(grid[i]), (lat.n_edges, N, N)))
        z = -(k * 2 * math.pi / G) * math.sqrt(2) / eps
        draws = (np.full((lat.n_edges, 1), z), np.full(lat.n_edges, u),
                 np.zeros((lat.n_sites, 1)), np.zeros(lat.n_sites))
        O._sweep(Q, ident, Target.GROUP, c, scales, lat, None, False, False, draws)
        return Q[0]

    def accept_prob(i, k):
        new = moved(i, k, 0.0)
        np.testing.assert_allclose(new, rot(grid[(i + k) % G]), atol=1e-12)
        if not np.allclose(moved(i, k, 1.0 - 1e-16), rot(grid[i])):
            return 1.0
        lo, hi = 0.0, 1.0
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if np.allclose(moved(i, k, mid), rot(grid[i])):
                hi = mid
            else:
                lo = mid
        return 0.5 * (lo + hi)

    K = np.zeros((G, G))
    for i in range(G):
        for k in offsets:
            K[i, (i + k) % G] += weight[k] * accept_prob(i, k)
        K[i, i] = 1 - K[i].sum()
    pi = np.exp(2 * kappa * N * 2 * np.cos(grid))
    pi /= pi.sum()
    flow = pi[:, None] * K
    assert np.max(np.abs(flow - flow.T)) <= 1e-10
    assert np.max(np.abs(pi @ K - pi)) <= 1e-10


def test_gaugefixed_single_edge_quadrature_so2_so3():
    lat = build_lattice(2, 3)
    for N, expect in [(2, so2_cos_mean(2 * 2.0 * 2 * 2)), (3, so3_trace_mean(2.0))]:
        c = Couplings(N, 0.0, 2.0, target="group")
        obs = {"tr": lambda w, N=N: float(np.trace(w.Q, axis1=1, axis2=2).mean()) / N}
        s = O.sample(M.cold_configuration(lat, N, "group"), c, 4000, seed=8, burn_in=500, observers=obs,
                     gauge_fixed=True)
        r = estimate(s["tr"])
        assert expect > 0.9
        assert abs(r.value - expect) <= 3 * r.error + 1e-12


def test_hopping_quadrature_beta_zero_sphere():
    """beta = 0, N = 2: phi_x . Q phi_y is the cosine of a Haar angle, weighted by exp(4 kappa cos)."""
    lat = build_lattice(2, 3)
    kappa = 0.5
    c = Couplings(2, 0.0, kappa, target="sphere")
    s = O.sample(M.cold_configuration(lat, 2, "sphere"), c, 6000, seed=3, burn_in=500)
    r = estimate(s["hopping"])
    assert abs(r.value - so2_cos_mean(4 * kappa)) <= 3 * r.error


def test_autotune_direction_and_freeze():
    s = O.ProposalScales(0.5, 0.5)
    O.autotune(s, 0.9, 0.1)
    assert s.eps_q > 0.5 and s.eps_phi < 0.5
    t = O.ProposalScales(0.5, 0.5)
    O.autotune(t, 0.42, 0.35)
    assert (t.eps_q, t.eps_phi) == (0.5, 0.5)
    big = O.ProposalScales(6.0, 0.5)
    O.autotune(big, 1.0, 0.4)
    assert big.eps_q <= O.MAX_EDGE_STEP
    s.freeze()
    before = (s.eps_q, s.eps_phi)
    O.autotune(s, 0.99, 0.01)
    assert (s.eps_q, s.eps_phi) == before
    with pytest.raises(ValueError):
        O.ProposalScales(0.0, 1.0)


def test_scales_constant_in_measurement_phase(lat23):
    c = Couplings(3, 0.2, 0.2, 1.0, "euclidean")
    s = O.sample(M.cold_configuration(lat23, 3, "euclidean"), c, 500, seed=1, burn_in=500)
    sc = s.meta["scales"]
    assert sc.frozen
    assert (sc.eps_q, sc.eps_phi) == (sc.history[-1][0], sc.history[-1][1])
    assert 0.2 < sc.acceptance_edge < 0.7


def test_sample_deterministic_and_seed_dependent(lat23):
    c = Couplings(3, 0.2, 0.2, target="sphere")
    cfg = M.cold_configuration(lat23, 3, "sphere")
    a = O.sample(cfg, c, 300, seed=5, burn_in=100)
    b = O.sample(cfg, c, 300, seed=5, burn_in=100)
    d = O.sample(cfg, c, 300, seed=6, burn_in=100)
    np.testing.assert_array_equal(a["plaquette"], b["plaquette"])
    assert not np.array_equal(a["plaquette"], d["plaquette"])
    assert len(a.index) == 300 and a.index[0] == 1


def test_ergodicity_cold_and_hot_starts_agree(lat23):
    c = Couplings(3, 0.3, 0.3, target="group")
    cold = M.cold_configuration(lat23, 3, "group")
    hot = M.random_configuration(lat23, 3, "group", np.random.default_rng(1))
    a = O.sample(cold, c, 6000, seed=11, burn_in=500)
    b = O.sample(hot, c, 6000, seed=12, burn_in=500)
    for k in ("plaquette", "hopping"):
        assert abs(estimate(a[k]).z(estimate(b[k]))) < 4


def test_randomized_order_consistent(lat23):
    c = Couplings(3, 0.3, 0.3, target="sphere")
    cfg = M.cold_configuration(lat23, 3, "sphere")
    a = O.sample(cfg, c, 6000, seed=21, burn_in=500)
    b = O.sample(cfg, c, 6000, seed=22, burn_in=500, randomize=True)
    for k in ("plaquette", "hopping"):
        assert abs(estimate(a[k]).z(estimate(b[k]))) < 4
