import math

import numpy as np
import pytest

from latymh import Couplings, DirectedEdge, LatticePath, Target, build_lattice
from latymh import geometry as geo
from latymh import model as M
from latymh.errors import HessianStepError, InvalidDimension, TargetMismatch

TARGETS = list(Target)


def couplings(target, N=3):
    return Couplings(N, 0.7, 0.4, 0.6, target)


def test_couplings_validation():
    with pytest.raises(InvalidDimension):
        Couplings(1, 0.1, 0.1)
    c = Couplings(3, 0.1, 0.1, 2.0, "sphere")
    assert c.target is Target.SPHERE and c.mass == 0.0
    with pytest.raises(ValueError):
        Couplings(3, 0.1, -0.1, 1.0, "euclidean").require_measure()
    with pytest.raises(ValueError):
        Couplings(3, 0.1, 0.1, 0.0, "euclidean").require_measure()


def test_edge_value_and_plaquette(lat23, rng):
    cfg = M.random_configuration(lat23, 3, "group", rng)
    e = DirectedEdge(4, 1, 1)
    np.testing.assert_array_equal(M.edge_value(cfg, e), cfg.Q[4 * 2 + 1])
    np.testing.assert_allclose(M.edge_value(cfg, e.reverse()) @ M.edge_value(cfg, e), np.eye(3), atol=1e-14)
    cold = M.cold_configuration(lat23, 3, "group")
    p = lat23.plaquette_path(0, 0, 1)
    np.testing.assert_allclose(M.plaquette_product(cold, p), np.eye(3))
    P = M.plaquette_product(cfg, p)
    for k in range(4):
        assert abs(np.trace(M.plaquette_product(cfg, p.rotated(k))) - np.trace(P)) < 1e-12
    np.testing.assert_allclose(M.plaquette_product(cfg, p.reversed()), P.T, atol=1e-14)
    with pytest.raises(ValueError):
        M.plaquette_product(cfg, lat23.path(0, [(0, 1), (1, 1), (0, -1)]))


def test_action_cold_values(lat23):
    N, beta, kappa = 3, 0.7, 0.4
    nP, nE = lat23.n_plaquettes, lat23.n_edges
    cfg = M.cold_configuration(lat23, N, "euclidean")
    assert math.isclose(M.action(cfg, Couplings(N, beta, kappa, 0.6, "euclidean")), N * N * beta * nP)
    cfg = M.cold_configuration(lat23, N, "sphere")
    assert math.isclose(M.action(cfg, Couplings(N, beta, kappa, 0, "sphere")), N * N * beta * nP + 2 * kappa * N * nE)
    cfg = M.cold_configuration(lat23, N, "group")
    assert math.isclose(M.action(cfg, Couplings(N, beta, kappa, 0, "group")),
                        N * N * beta * nP + 2 * kappa * N * N * nE)


def test_action_target_mismatch(lat23):
    cfg = M.cold_configuration(lat23, 3, "group")
    with pytest.raises(TargetMismatch):
        M.action(cfg, Couplings(3, 0.1, 0.1, 1.0, "sphere"))
    with pytest.raises(TargetMismatch):
        M.action(cfg, Couplings(4, 0.1, 0.1, 1.0, "group"))


def test_euclidean_expansion_matches_unexpanded(lat23, rng):
    """Kernel-style expanded action equals the |Q phi - phi|^2 form."""
    from latymh import kernels
    c = couplings("euclidean")
    cfg = M.random_configuration(lat23, 3, "euclidean", rng)
    s = kernels.action_kernel(cfg.Q, cfg.phi3(), 0, 3, c.beta, c.kappa, c.mass, lat23.plaq_idx,
                              lat23.plaq_sgn, lat23.edge_ends, 2 * lat23.d)
    assert math.isclose(s, M.action(cfg, c), rel_tol=1e-12)
    D = M.covariant_derivatives(cfg)
    S2 = c.kappa * 3 * np.sum(D ** 2) + c.m * 3 * np.sum(cfg.phi ** 2)
    assert math.isclose(S2, M.higgs_action(cfg, c), rel_tol=1e-12)


@pytest.mark.parametrize("target", TARGETS)
def test_gradient_matches_finite_differences(lat23, rng, target):
    c = couplings(target)
    cfg = M.random_configuration(lat23, 3, target, rng)
    g = M.gradient(cfg, c)
    for _ in range(5):
        v = M.random_tangent(cfg, rng)
        h = 1e-5
        fd = (M.action(M.geodesic(cfg, v, h), c) - M.action(M.geodesic(cfg, v, -h), c)) / (2 * h)
        pair = np.sum(g.X * v.X) + np.sum(g.v * v.v)
        assert abs(fd - pair) <= 1e-6 * abs(pair)


def test_gradient_single_edge(lat23, rng):
    c = couplings("group")
    cfg = M.random_configuration(lat23, 3, "group", rng)
    e = DirectedEdge(2, 0, 1)
    X = M.grad_edge(cfg, c, e)
    assert np.linalg.norm(X + X.T) < 1e-12
    Z = geo.algebra_gaussian(3, 1.0, rng)
    k = 2 * lat23.d

    def S(t):
        w = cfg.copy()
        w.Q[k] = geo.group_exp(t * Z) @ w.Q[k]
        return M.action(w, c)

    fd = (S(1e-5) - S(-1e-5)) / 2e-5
    assert abs(fd - geo.hs_inner(Z, X)) <= 1e-6 * abs(fd)


def test_gradient_vanishing_cases(lat23, rng):
    cfg = M.random_configuration(lat23, 3, "euclidean", rng)
    g = M.gradient(cfg, Couplings(3, 0.0, 0.0, 0.5, "euclidean"))
    assert np.all(g.X == 0)
    np.testing.assert_allclose(g.v, -2 * 0.5 * 3 * cfg.phi)
    cold = M.cold_configuration(lat23, 3, "sphere")
    assert np.allclose(M.grad_sites(cold, Couplings(3, 0.4, 0.4, target="sphere")), 0)


def test_pure_ym_gradient_against_plaquette_sum(lat23, rng):
    """X_e = -1/2 N beta sum_{p > e} (Q_p - Q_p^t), built from plaquettes_through."""
    c = Couplings(3, 0.9, 0.0, 1.0, "euclidean")
    cfg = M.random_configuration(lat23, 3, "euclidean", rng)
    cfg.phi[:] = 0
    X = M.grad_edges(cfg, c)
    for e in lat23.positive_edges()[:6]:
        ref = sum(-0.5 * 3 * 0.9 * (P - P.T) for P in
                  (M.path_product(cfg, LatticePath(lat23, p)) for p in lat23.plaquettes_through(e)))
        np.testing.assert_allclose(X[e.site * 2 + e.axis], ref, atol=1e-13)


@pytest.mark.parametrize("target", TARGETS)
def test_tangency(lat23, rng, target):
    c = couplings(target)
    cfg = M.random_configuration(lat23, 3, target, rng)
    X = M.grad_edges(cfg, c)
    assert np.max(np.abs(X + np.swapaxes(X, 1, 2))) < 1e-12
    gs = M.grad_sites(cfg, c)
    if target is Target.SPHERE:
        assert np.max(np.abs(np.sum(gs * cfg.phi, axis=1))) < 1e-12
    elif target is Target.GROUP:
        Y = gs @ np.swapaxes(cfg.phi, 1, 2)
        assert np.max(np.abs(Y + np.swapaxes(Y, 1, 2))) < 1e-12


@pytest.mark.parametrize("target", TARGETS)
def test_gauge_invariance(lat23, rng, target):
    c = couplings(target)
    cfg = M.random_configuration(lat23, 3, target, rng)
    S = M.action(cfg, c)
    for _ in range(10):
        g = M.random_gauge(lat23, 3, rng)
        assert abs(M.action(M.gauge_transform(cfg, g), c) - S) <= 1e-9 * (1 + abs(S))
    ident = M.gauge_transform(cfg, np.broadcast_to(np.eye(3), (lat23.n_sites, 3, 3)))
    np.testing.assert_allclose(ident.Q, cfg.Q)
    np.testing.assert_allclose(ident.phi, cfg.phi)


@pytest.mark.parametrize("target", TARGETS)
def test_gauge_edge_values_and_covariant_derivative(lat23, rng, target):
    cfg = M.random_configuration(lat23, 3, target, rng)
    g = M.random_gauge(lat23, 3, rng)
    out = M.gauge_transform(cfg, g)
    for e in [DirectedEdge(1, 0, 1), DirectedEdge(1, 0, -1), DirectedEdge(7, 1, -1)]:
        u, v = lat23.u(e), lat23.v(e)
        np.testing.assert_allclose(M.edge_value(out, e), g[u] @ M.edge_value(cfg, e) @ g[v].T, atol=1e-13)
        np.testing.assert_allclose(M.covariant_derivative(out, e), g[u] @ M.covariant_derivative(cfg, e),
                                   atol=1e-13)
        a = np.sum(M.covariant_derivative(cfg, e) ** 2)
        b = np.sum(M.covariant_derivative(cfg, e.reverse()) ** 2)
        assert math.isclose(a, b, rel_tol=1e-12)


def test_covariant_derivative_cold(lat23):
    cfg = M.cold_configuration(lat23, 3, "sphere")
    assert np.allclose(M.covariant_derivatives(cfg), 0)


def test_s2_over_reversed_edges(lat23, rng):
    c = couplings("euclidean")
    cfg = M.random_configuration(lat23, 3, "euclidean", rng)
    rev = sum(np.sum(M.covariant_derivative(cfg, e.reverse()) ** 2) for e in lat23.positive_edges())
    S2 = c.kappa * 3 * rev + c.m * 3 * np.sum(cfg.phi ** 2)
    assert math.isclose(S2, M.higgs_action(cfg, c), rel_tol=1e-12)


def test_ugauge(lat23, rng):
    c = couplings("group")
    cfg = M.random_configuration(lat23, 3, "group", rng)
    fixed = M.ugauge_fix(cfg)
    assert np.max(np.abs(fixed.phi - np.eye(3))) <= 1e-12
    S = M.action(cfg, c)
    assert math.isclose(M.action(fixed, c), S, rel_tol=1e-9)
    assert math.isclose(M.gauge_fixed_action(fixed.Q, c, lat23), S, rel_tol=1e-9)
    cold = M.cold_configuration(lat23, 3, "group")
    np.testing.assert_allclose(M.ugauge_fix(cold).Q, cold.Q)
    with pytest.raises(TargetMismatch):
        M.ugauge_fix(M.cold_configuration(lat23, 3, "sphere"))


def test_gauge_fixed_action(lat23, rng):
    c = couplings("group")
    N, nP, nE = 3, lat23.n_plaquettes, lat23.n_edges
    Q = M.cold_configuration(lat23, N, "group").Q
    assert math.isclose(M.gauge_fixed_action(Q, c, lat23), N * N * c.beta * nP + 2 * c.kappa * N * N * nE)
    for _ in range(100):
        cfg = M.random_configuration(lat23, N, "group", rng)
        cfg.phi[:] = np.eye(N)
        assert math.isclose(M.gauge_fixed_action(cfg.Q, c, lat23), M.action(cfg, c), rel_tol=1e-12)
    c0 = Couplings(N, 0.0, 0.3, target="group")
    assert math.isclose(M.gauge_fixed_action(cfg.Q, c0, lat23),
                        2 * 0.3 * N * np.trace(cfg.Q, axis1=1, axis2=2).sum(), rel_tol=1e-12)


@pytest.mark.parametrize("target", TARGETS)
def test_hessian_zero_and_parallelogram(lat23, rng, target):
    c = couplings(target)
    cfg = M.random_configuration(lat23, 3, target, rng)
    v = M.random_tangent(cfg, rng)
    w = M.random_tangent(cfg, rng)
    assert abs(M.hessian_form(cfg, c, v * 0.0)) <= 1e-8 * max(1.0, abs(M.action(cfg, c)))
    lhs = M.hessian_form(cfg, c, v + w) + M.hessian_form(cfg, c, v - w)
    rhs = 2 * M.hessian_form(cfg, c, v) + 2 * M.hessian_form(cfg, c, w)
    assert abs(lhs - rhs) <= 1e-5 * (1 + abs(lhs))


def test_hessian_ym_bound(rng):
    lat = build_lattice(2, 3)
    for N, beta in [(3, 0.4), (4, -0.2)]:
        c = Couplings(N, beta, 0.0, 1.0, "euclidean")
        for _ in range(20):
            cfg = M.random_configuration(lat, N, "euclidean", rng)
            v = M.random_tangent(cfg, rng)
            v.X[:] = 0
            v.X[3] = geo.algebra_gaussian(N, 1.0, rng)
            v.v[:] = 0
            h = M.hessian_form(cfg, c, v, part="ym")
            assert abs(h) <= 8 * (2 - 1) * N * abs(beta) * np.sum(v.X ** 2) + 1e-6


def test_hessian_euclidean_higgs_part(lat23, rng):
    c = Couplings(3, 0.3, 0.2, 0.8, "euclidean")
    cfg = M.random_configuration(lat23, 3, "euclidean", rng)
    for _ in range(10):
        v = M.random_tangent(cfg, rng)
        v.X[:] = 0
        assert M.hessian_form(cfg, c, v, part="higgs") >= 2 * c.m * 3 * v.norm2() - 1e-6


def test_hessian_step_too_small(lat23, rng):
    c = couplings("group")
    cfg = M.random_configuration(lat23, 3, "group", rng)
    v = M.random_tangent(cfg, rng)
    with pytest.raises(HessianStepError):
        M.hessian_form(cfg, c, v, h=1e-7)


@pytest.mark.parametrize("target", TARGETS)
def test_snapshot_round_trip(lat23, rng, target, tmp_path):
    cfg = M.random_configuration(lat23, 3, target, rng)
    path = tmp_path / "c.bin"
    M.save_snapshot(cfg, path)
    back = M.load_snapshot(path)
    assert back.target is cfg.target and back.lattice == cfg.lattice
    np.testing.assert_array_equal(back.Q, cfg.Q)
    np.testing.assert_array_equal(back.phi, cfg.phi)
    txt = M.text_load(M.text_dump(cfg))
    np.testing.assert_array_equal(txt.Q, cfg.Q)
    np.testing.assert_array_equal(txt.phi, cfg.phi)
    raw = bytearray(M.snapshot_bytes(cfg))
    raw[4] = 99
    with pytest.raises(ValueError):
        M.snapshot_from_bytes(bytes(raw))
