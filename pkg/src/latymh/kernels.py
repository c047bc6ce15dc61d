"""Inner loops for Metropolis sweeps and Langevin steps.

Every function here is written in the numba nopython subset and decorated with
:func:`maybe_njit`.  With ``LATYMH_NUMBA=0`` the small matrix helpers switch to
numpy calls, so the fallback runs as ordinary vectorised-per-matrix numpy.

Layout conventions (see :mod:`latymh.lattice`):

* ``Q``    float64 (n_edges, N, N), positive edges only
* ``phi``  float64 (n_sites, N, K) with K = 1 for vector targets, K = N for SO(N)
* target codes: 0 Euclidean, 1 sphere, 2 group
* noise arrays carry basis coefficients (so(N)) or raw R^N Gaussians
"""
import math

import numpy as np

from ._accel import USE_NUMBA, maybe_njit

EUCLIDEAN, SPHERE, GROUP = 0, 1, 2
SCHEME_GEODESIC, SCHEME_ITO = 0, 1


# -- small dense helpers -------------------------------------------------------

if USE_NUMBA:

    @maybe_njit
    def mm(a, b, out):
        n, k = a.shape
        m = b.shape[1]
        for i in range(n):
            for j in range(m):
                s = 0.0
                for l in range(k):
                    s += a[i, l] * b[l, j]
                out[i, j] = s

    @maybe_njit
    def mmt(a, b, out):
        """out = a @ b.T"""
        n, k = a.shape
        m = b.shape[0]
        for i in range(n):
            for j in range(m):
                s = 0.0
                for l in range(k):
                    s += a[i, l] * b[j, l]
                out[i, j] = s

    @maybe_njit
    def tmm(a, b, out):
        """out = a.T @ b"""
        k, n = a.shape
        m = b.shape[1]
        for i in range(n):
            for j in range(m):
                s = 0.0
                for l in range(k):
                    s += a[l, i] * b[l, j]
                out[i, j] = s

else:

    def mm(a, b, out):
        np.dot(a, b, out=out)

    def mmt(a, b, out):
        out[...] = a @ b.T

    def tmm(a, b, out):
        out[...] = a.T @ b


@maybe_njit
def trace_prod(a, b):
    """Tr(a b) for square a, b."""
    n = a.shape[0]
    s = 0.0
    for i in range(n):
        for j in range(n):
            s += a[i, j] * b[j, i]
    return s


@maybe_njit
def frob2(a):
    s = 0.0
    for v in a.flat:
        s += v * v
    return s


@maybe_njit
def skew_from_coeffs(z, out):
    n = out.shape[0]
    r = 1.0 / math.sqrt(2.0)
    a = 0
    for i in range(n):
        out[i, i] = 0.0
        for j in range(i + 1, n):
            out[i, j] = z[a] * r
            out[j, i] = -z[a] * r
            a += 1


@maybe_njit
def expm_skew(x, out):
    """exp(x) by scaling and squaring of a Taylor series (degree <= 16)."""
    n = x.shape[0]
    nrm = math.sqrt(frob2(x))
    s = 0
    while nrm > 0.25:
        nrm *= 0.5
        s += 1
    y = x * (0.5 ** s)
    term = np.eye(n)
    tmp = np.empty((n, n))
    out[:, :] = term
    for k in range(1, 17):
        mm(term, y, tmp)
        term[:, :] = tmp / k
        out += term
        if frob2(term) < 1e-36:
            break
    for _ in range(s):
        mm(out, out, tmp)
        out[:, :] = tmp


@maybe_njit
def polar_newton_schulz(m, out):
    """Orthogonal polar factor of a near-orthogonal m (Newton-Schulz iteration).

    Returns False if the iteration does not converge (input too far from O(N)).
    """
    n = m.shape[0]
    out[:, :] = m
    g = np.empty((n, n))
    tmp = np.empty((n, n))
    for _ in range(60):
        tmm(out, out, g)
        err = 0.0
        for i in range(n):
            for j in range(n):
                dij = g[i, j] - (1.0 if i == j else 0.0)
                err += dij * dij
        if err < 1e-30:
            return True
        if err > 0.25:
            return False
        for i in range(n):
            for j in range(n):
                g[i, j] = -0.5 * g[i, j]
            g[i, i] += 1.5
        mm(out, g, tmp)
        out[:, :] = tmp
    return False


@maybe_njit
def edge_value(Q, k, sgn, out):
    if sgn > 0:
        out[:, :] = Q[k]
    else:
        out[:, :] = Q[k].T


@maybe_njit
def staple_sum(Q, k, stp_idx, stp_sgn, out):
    """Sum over plaquettes starting with positive edge k of the product of the other three edges."""
    n = Q.shape[1]
    a = np.empty((n, n))
    b = np.empty((n, n))
    c = np.empty((n, n))
    out[:, :] = 0.0
    for j in range(stp_idx.shape[1]):
        edge_value(Q, stp_idx[k, j, 0], stp_sgn[k, j, 0], a)
        edge_value(Q, stp_idx[k, j, 1], stp_sgn[k, j, 1], b)
        mm(a, b, c)
        edge_value(Q, stp_idx[k, j, 2], stp_sgn[k, j, 2], a)
        mm(c, a, b)
        out += b


@maybe_njit
def site_field(Q, phi, x, nbr, nbr_edge, nbr_sgn, out):
    """sum over the 2d edges e = (x, y) of Q_e phi_y."""
    n = Q.shape[1]
    qe = np.empty((n, n))
    tmp = np.empty(out.shape)
    out[:, :] = 0.0
    for j in range(nbr.shape[1]):
        edge_value(Q, nbr_edge[x, j], nbr_sgn[x, j], qe)
        mm(qe, phi[nbr[x, j]], tmp)
        out += tmp


# -- observables ------------------------------------------------------------------

@maybe_njit
def plaquette_traces(Q, plaq_idx, plaq_sgn):
    n = Q.shape[1]
    out = np.empty(plaq_idx.shape[0])
    a = np.empty((n, n))
    b = np.empty((n, n))
    c = np.empty((n, n))
    for p in range(plaq_idx.shape[0]):
        edge_value(Q, plaq_idx[p, 0], plaq_sgn[p, 0], a)
        edge_value(Q, plaq_idx[p, 1], plaq_sgn[p, 1], b)
        mm(a, b, c)
        edge_value(Q, plaq_idx[p, 2], plaq_sgn[p, 2], a)
        mm(c, a, b)
        edge_value(Q, plaq_idx[p, 3], plaq_sgn[p, 3], a)
        out[p] = trace_prod(b, a)
    return out


@maybe_njit
def hopping_terms(Q, phi, edge_ends):
    """Tr(phi_x^t Q_e phi_y) for every positive edge."""
    n, kk = phi.shape[1], phi.shape[2]
    out = np.empty(Q.shape[0])
    t = np.empty((n, kk))
    for k in range(Q.shape[0]):
        mm(Q[k], phi[edge_ends[k, 1]], t)
        s = 0.0
        x = edge_ends[k, 0]
        for i in range(n):
            for j in range(kk):
                s += phi[x, i, j] * t[i, j]
        out[k] = s
    return out


@maybe_njit
def action_kernel(Q, phi, target, N, beta, kappa, m, plaq_idx, plaq_sgn, edge_ends, degree):
    """S = N beta sum_p Tr Q_p + 2 kappa N sum_e Tr(phi_x^t Q_e phi_y) - (Euclidean) N(2 d kappa + m) sum |phi|^2.

    ``degree`` is 2d; for the Euclidean target the expansion of |Q phi_y - phi_x|^2
    is exact (no constant dropped).
    """
    s = N * beta * plaquette_traces(Q, plaq_idx, plaq_sgn).sum()
    s += 2.0 * kappa * N * hopping_terms(Q, phi, edge_ends).sum()
    if target == EUCLIDEAN:
        s -= N * (kappa * degree + m) * frob2(phi)
    return s


# -- drift ---------------------------------------------------------------------------

@maybe_njit
def drift_kernel(Q, phi, target, N, beta, kappa, m, stp_idx, stp_sgn, edge_ends,
                 nbr, nbr_edge, nbr_sgn, X, V):
    """Gradient of the action: X[e] skew (tangent X_e Q_e); V[x] site tangent.

    For the group target V[x] holds the skew Y_x with tangent Y_x phi_x.
    """
    n = N
    kk = phi.shape[2]
    st = np.empty((n, n))
    a = np.empty((n, n))
    t = np.empty((n, kk))
    hb = np.empty((n, n))
    for k in range(Q.shape[0]):
        staple_sum(Q, k, stp_idx, stp_sgn, st)
        mm(Q[k], st, a)
        # Higgs part: A = Q_e phi_y phi_x^t
        mm(Q[k], phi[edge_ends[k, 1]], t)
        mmt(t, phi[edge_ends[k, 0]], hb)
        for i in range(n):
            for j in range(n):
                X[k, i, j] = -0.5 * N * beta * (a[i, j] - a[j, i]) - kappa * N * (hb[i, j] - hb[j, i])
    h = np.empty((n, kk))
    b = np.empty((n, n))
    for x in range(phi.shape[0]):
        site_field(Q, phi, x, nbr, nbr_edge, nbr_sgn, h)
        px = phi[x]
        if target == EUCLIDEAN:
            deg = nbr.shape[1]
            for i in range(n):
                V[x, i, 0] = 2.0 * kappa * N * (h[i, 0] - deg * px[i, 0]) - 2.0 * m * N * px[i, 0]
        elif target == SPHERE:
            dot = 0.0
            for i in range(n):
                dot += px[i, 0] * h[i, 0]
            for i in range(n):
                V[x, i, 0] = 2.0 * kappa * N * (h[i, 0] - dot * px[i, 0])
        else:
            mmt(h, px, b)
            for i in range(n):
                for j in range(n):
                    V[x, i, j] = kappa * N * (b[i, j] - b[j, i])


# -- Langevin ----------------------------------------------------------------------------

@maybe_njit
def langevin_steps(Q, phi, target, N, beta, kappa, m, dt, scheme,
                   stp_idx, stp_sgn, edge_ends, nbr, nbr_edge, nbr_sgn,
                   noise_e, noise_s, max_increment):
    """Advance (Q, phi) in place by noise_e.shape[0] steps.

    Returns (-1, 0) on success, or (step, code) with code 1 = increment too large,
    code 2 = retraction failure.
    """
    n = N
    kk = phi.shape[2]
    nsteps = noise_e.shape[0]
    X = np.empty(Q.shape)
    V = np.empty((phi.shape[0], n, kk if target != GROUP else n))
    xi = np.empty((n, n))
    inc = np.empty((n, n))
    g = np.empty((n, n))
    tmp = np.empty((n, n))
    sq = math.sqrt(2.0 * dt)
    cg = -0.5 * (n - 1)
    for s in range(nsteps):
        drift_kernel(Q, phi, target, N, beta, kappa, m, stp_idx, stp_sgn, edge_ends,
                     nbr, nbr_edge, nbr_sgn, X, V)
        for k in range(Q.shape[0]):
            skew_from_coeffs(noise_e[s, k], xi)
            if scheme == SCHEME_GEODESIC:
                inc[:, :] = dt * X[k] + sq * xi
                if frob2(inc) > max_increment * max_increment:
                    return s, 1
                expm_skew(inc, g)
                mm(g, Q[k], tmp)
                Q[k] = tmp
            else:
                inc[:, :] = dt * X[k] + sq * xi
                mm(inc, Q[k], tmp)
                tmp += (1.0 + dt * cg) * Q[k]
                if not polar_newton_schulz(tmp, g):
                    return s, 2
                Q[k] = g
        for x in range(phi.shape[0]):
            if target == EUCLIDEAN:
                for i in range(n):
                    phi[x, i, 0] += dt * V[x, i, 0] + sq * noise_s[s, x, i]
            elif target == SPHERE:
                px = phi[x, :, 0]
                dot = 0.0
                for i in range(n):
                    dot += px[i] * noise_s[s, x, i]
                v = np.empty(n)
                for i in range(n):
                    v[i] = dt * V[x, i, 0] + sq * (noise_s[s, x, i] - dot * px[i])
                if scheme == SCHEME_GEODESIC:
                    r = math.sqrt((v * v).sum())
                    if r > max_increment:
                        return s, 1
                    c = math.cos(r)
                    sn = math.sin(r) / r if r > 0 else 1.0
                    for i in range(n):
                        phi[x, i, 0] = c * px[i] + sn * v[i]
                else:
                    nrm2 = 0.0
                    for i in range(n):
                        val = px[i] + v[i] - dt * (n - 1) * px[i]
                        phi[x, i, 0] = val
                        nrm2 += val * val
                    inv = 1.0 / math.sqrt(nrm2)
                    for i in range(n):
                        phi[x, i, 0] *= inv
            else:
                skew_from_coeffs(noise_s[s, x], xi)
                inc[:, :] = dt * V[x] + sq * xi
                if scheme == SCHEME_GEODESIC:
                    if frob2(inc) > max_increment * max_increment:
                        return s, 1
                    expm_skew(inc, g)
                    mm(g, phi[x], tmp)
                    phi[x] = tmp
                else:
                    mm(inc, phi[x], tmp)
                    tmp += (1.0 + dt * cg) * phi[x]
                    if not polar_newton_schulz(tmp, g):
                        return s, 2
                    phi[x] = g
    return -1, 0


# -- Metropolis ---------------------------------------------------------------------

@maybe_njit
def metropolis_sweep_kernel(Q, phi, target, N, beta, kappa, m, eps_q, eps_phi,
                            stp_idx, stp_sgn, edge_ends, nbr, nbr_edge, nbr_sgn,
                            noise_e, u_e, noise_s, u_s, update_sites, edge_order, site_order):
    """One sweep (edges, then sites) targeting exp(+S).  Returns (accepted edges, accepted sites).

    With ``update_sites`` False the Higgs field is frozen; passing phi = identity
    then samples the U-gauge fixed measure.
    """
    n = N
    kk = phi.shape[2]
    st = np.empty((n, n))
    f = np.empty((n, n))
    xi = np.empty((n, n))
    g = np.empty((n, n))
    qn = np.empty((n, n))
    t = np.empty((n, kk))
    acc_e = 0
    for kk_i in range(edge_order.shape[0]):
        k = edge_order[kk_i]
        staple_sum(Q, k, stp_idx, stp_sgn, st)
        # F = N beta sum S_j + 2 kappa N phi_y phi_x^t ;  Delta S = Tr((Q' - Q) F)
        mmt(phi[edge_ends[k, 1]], phi[edge_ends[k, 0]], f)
        for i in range(n):
            for j in range(n):
                f[i, j] = N * beta * st[i, j] + 2.0 * kappa * N * f[i, j]
        skew_from_coeffs(noise_e[k], xi)
        xi *= eps_q
        expm_skew(xi, g)
        mm(g, Q[k], qn)
        ds = trace_prod(qn, f) - trace_prod(Q[k], f)
        if ds >= 0.0 or u_e[k] < math.exp(ds):
            Q[k] = qn
            acc_e += 1
    acc_s = 0
    if not update_sites:
        return acc_e, acc_s
    h = np.empty((n, kk))
    pn = np.empty((n, kk))
    deg = nbr.shape[1]
    for xi_i in range(site_order.shape[0]):
        x = site_order[xi_i]
        site_field(Q, phi, x, nbr, nbr_edge, nbr_sgn, h)
        px = phi[x]
        if target == EUCLIDEAN:
            for i in range(n):
                pn[i, 0] = px[i, 0] + eps_phi * noise_s[x, i]
        elif target == SPHERE:
            dot = 0.0
            for i in range(n):
                dot += px[i, 0] * noise_s[x, i]
            r2 = 0.0
            for i in range(n):
                t[i, 0] = eps_phi * (noise_s[x, i] - dot * px[i, 0])
                r2 += t[i, 0] * t[i, 0]
            r = math.sqrt(r2)
            c = math.cos(r)
            sn = math.sin(r) / r if r > 0 else 1.0
            for i in range(n):
                pn[i, 0] = c * px[i, 0] + sn * t[i, 0]
        else:
            skew_from_coeffs(noise_s[x], xi)
            xi *= eps_phi
            expm_skew(xi, g)
            mm(g, px, pn)
        ds = 0.0
        for i in range(n):
            for j in range(kk):
                ds += 2.0 * kappa * N * (pn[i, j] - px[i, j]) * h[i, j]
        if target == EUCLIDEAN:
            ds -= N * (kappa * deg + m) * (frob2(pn) - frob2(px))
        if ds >= 0.0 or u_s[x] < math.exp(ds):
            phi[x] = pn
            acc_s += 1
    return acc_e, acc_s
