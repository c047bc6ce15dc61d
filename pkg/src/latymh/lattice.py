"""Periodic hypercubic lattice combinatorics.

Sites are numbered row-major over their coordinates, so numeric order equals
lexicographic order.  Positive edges are indexed ``site * d + axis`` and run
from ``site`` to ``site + axis``; a reversed edge shares the storage slot of
its positive partner and carries ``sign = -1``.
"""
from functools import cached_property
from typing import NamedTuple

import numpy as np

from .errors import InvalidEdge, InvalidPath, InvalidRegion, UnsupportedGeometry


class DirectedEdge(NamedTuple):
    site: int
    axis: int
    sign: int = 1

    def reverse(self):
        return DirectedEdge(self.site, self.axis, -self.sign)

    @property
    def positive(self):
        return self.sign > 0


class Lattice:
    """The torus Z^d / L Z^d with d >= 2 and L >= 2."""

    def __init__(self, d, L):
        if int(d) != d or int(L) != L or d < 2 or L < 2:
            raise UnsupportedGeometry(f"need integer d >= 2 and L >= 2, got d={d}, L={L}")
        self.d = int(d)
        self.L = int(L)
        self.n_sites = self.L ** self.d
        self.n_edges = self.d * self.n_sites
        self.n_plaquettes = self.d * (self.d - 1) // 2 * self.n_sites

        idx = np.arange(self.n_sites)
        self.coords = np.stack(np.unravel_index(idx, (self.L,) * self.d), axis=1)
        fwd = np.empty((self.n_sites, self.d), dtype=np.int64)
        bwd = np.empty_like(fwd)
        for mu in range(self.d):
            c = self.coords.copy()
            c[:, mu] = (c[:, mu] + 1) % self.L
            fwd[:, mu] = self.site_index(c)
            c[:, mu] = (c[:, mu] - 2) % self.L
            bwd[:, mu] = self.site_index(c)
        self.fwd = fwd
        self.bwd = bwd
        self._build_tables()
        for a in (self.coords, self.fwd, self.bwd, self.plaq_idx, self.plaq_sgn,
                  self.stp_idx, self.stp_sgn, self.nbr, self.nbr_edge, self.nbr_sgn):
            a.setflags(write=False)

    def __repr__(self):
        return f"Lattice(d={self.d}, L={self.L})"

    def __eq__(self, other):
        return isinstance(other, Lattice) and (self.d, self.L) == (other.d, other.L)

    def __hash__(self):
        return hash((self.d, self.L))

    def site_index(self, coords):
        c = np.asarray(coords) % self.L
        return np.ravel_multi_index(tuple(np.moveaxis(c, -1, 0)), (self.L,) * self.d)

    def shift(self, x, axis, steps=1):
        c = self.coords[x].copy()
        c[axis] = (c[axis] + steps) % self.L
        return int(self.site_index(c))

    def edge_index(self, site, axis):
        return site * self.d + axis

    # -- edges ---------------------------------------------------------------

    def check_edge(self, e):
        if not (0 <= e.site < self.n_sites and 0 <= e.axis < self.d and e.sign in (1, -1)):
            raise InvalidEdge(f"{e} does not belong to {self!r}")

    def u(self, e):
        return e.site if e.sign > 0 else int(self.fwd[e.site, e.axis])

    def v(self, e):
        return int(self.fwd[e.site, e.axis]) if e.sign > 0 else e.site

    def positive_edges(self):
        return [DirectedEdge(x, mu, 1) for x in range(self.n_sites) for mu in range(self.d)]

    def edges_at(self, x):
        """The 2d directed edges leaving x: d forward, then d reversed."""
        if not 0 <= x < self.n_sites:
            raise InvalidRegion(f"site {x} outside lattice")
        out = [DirectedEdge(x, mu, 1) for mu in range(self.d)]
        out += [DirectedEdge(int(self.bwd[x, mu]), mu, -1) for mu in range(self.d)]
        return out

    def edge_between(self, x, y):
        for e in self.edges_at(x):
            if self.v(e) == y:
                return e
        raise InvalidEdge(f"sites {x} and {y} are not adjacent")

    # -- plaquettes ----------------------------------------------------------

    def _positive_plaquette(self, x, mu, nu):
        # mu < nu: x -> x+nu -> x+nu+mu -> x+mu -> x (second vertex is lexicographically second)
        xm, xn = int(self.fwd[x, mu]), int(self.fwd[x, nu])
        return (DirectedEdge(x, nu, 1), DirectedEdge(xn, mu, 1),
                DirectedEdge(xm, nu, -1), DirectedEdge(x, mu, -1))

    def _through_positive(self, e):
        x, mu = e.site, e.axis
        y = int(self.fwd[x, mu])
        out = []
        for nu in range(self.d):
            if nu == mu:
                continue
            xn = int(self.fwd[x, nu])
            out.append((e, DirectedEdge(y, nu, 1), DirectedEdge(xn, mu, -1), DirectedEdge(x, nu, -1)))
            yb, xb = int(self.bwd[y, nu]), int(self.bwd[x, nu])
            out.append((e, DirectedEdge(yb, nu, -1), DirectedEdge(xb, mu, -1), DirectedEdge(xb, nu, 1)))
        return out

    def plaquettes_through(self, e):
        """The 2(d-1) oriented plaquettes p with p[0] == e."""
        self.check_edge(e)
        if e.sign > 0:
            return self._through_positive(e)
        out = []
        for p in self._through_positive(e.reverse()):
            _, a, b, c = p
            out.append((e, c.reverse(), b.reverse(), a.reverse()))
        return out

    def plaquettes(self):
        """Canonical positive plaquettes, one per unoriented square."""
        out = []
        for x in range(self.n_sites):
            for mu in range(self.d):
                for nu in range(mu + 1, self.d):
                    out.append(self._positive_plaquette(x, mu, nu))
        return out

    def _build_tables(self):
        d, V = self.d, self.n_sites
        plist = self.plaquettes()
        self.plaq_idx = np.array([[self.edge_index(e.site, e.axis) for e in p] for p in plist],
                                 dtype=np.int64).reshape(-1, 4)
        self.plaq_sgn = np.array([[e.sign for e in p] for p in plist], dtype=np.int64).reshape(-1, 4)
        # staples: for positive edge k, the three remaining edges of each p > e
        nst = 2 * (d - 1)
        stp_idx = np.empty((self.n_edges, nst, 3), dtype=np.int64)
        stp_sgn = np.empty((self.n_edges, nst, 3), dtype=np.int64)
        for x in range(V):
            for mu in range(d):
                k = self.edge_index(x, mu)
                for j, p in enumerate(self._through_positive(DirectedEdge(x, mu, 1))):
                    for i, f in enumerate(p[1:]):
                        stp_idx[k, j, i] = self.edge_index(f.site, f.axis)
                        stp_sgn[k, j, i] = f.sign
        self.stp_idx, self.stp_sgn = stp_idx, stp_sgn
        # directed edges leaving each site, their far end and storage slot
        nbr = np.empty((V, 2 * d), dtype=np.int64)
        nbr_edge = np.empty_like(nbr)
        nbr_sgn = np.empty_like(nbr)
        for x in range(V):
            for j, e in enumerate(self.edges_at(x)):
                nbr[x, j] = self.v(e)
                nbr_edge[x, j] = self.edge_index(e.site, e.axis)
                nbr_sgn[x, j] = e.sign
        self.nbr, self.nbr_edge, self.nbr_sgn = nbr, nbr_edge, nbr_sgn

    @cached_property
    def edge_ends(self):
        """(n_edges, 2) array of (u, v) for positive edges."""
        u = np.repeat(np.arange(self.n_sites), self.d)
        v = self.fwd.reshape(-1)
        return np.stack([u, v], axis=1)

    # -- paths ---------------------------------------------------------------

    def path(self, start, moves):
        """Path from ``start`` following signed unit moves like ``[(0, +1), (1, -1)]``."""
        edges, x = [], start
        for axis, step in moves:
            if step > 0:
                e = DirectedEdge(x, axis, 1)
            else:
                e = DirectedEdge(int(self.bwd[x, axis]), axis, -1)
            edges.append(e)
            x = self.v(e)
        return LatticePath(self, edges)

    def rectangle(self, x, mu, nu, a=1, b=1):
        """Closed a x b rectangle starting at x, first along +mu then +nu."""
        moves = [(mu, 1)] * a + [(nu, 1)] * b + [(mu, -1)] * a + [(nu, -1)] * b
        return self.path(x, moves)

    def plaquette_path(self, x, mu, nu):
        return LatticePath(self, self._positive_plaquette(x, min(mu, nu), max(mu, nu)))

    # -- distances -----------------------------------------------------------

    def _sites_of(self, region):
        if isinstance(region, (int, np.integer)):
            return {int(region)}
        if isinstance(region, DirectedEdge):
            return {self.u(region), self.v(region)}
        if isinstance(region, LatticePath):
            region = region.edges
        sites = set()
        for item in region:
            sites |= self._sites_of(item)
        return sites

    def torus_distance(self, a, b):
        """Minimum l1 torus distance between the vertex sets of two regions."""
        sa, sb = self._sites_of(a), self._sites_of(b)
        if not sa or not sb:
            raise InvalidRegion("empty region")
        ca = self.coords[sorted(sa)]
        cb = self.coords[sorted(sb)]
        diff = np.abs(ca[:, None, :] - cb[None, :, :])
        diff = np.minimum(diff, self.L - diff)
        return int(diff.sum(axis=-1).min())


def build_lattice(d, L):
    return Lattice(d, L)


class LatticePath:
    """Chained sequence of directed edges on a fixed lattice."""

    def __init__(self, lattice, edges):
        self.lattice = lattice
        self.edges = tuple(DirectedEdge(*e) for e in edges)
        if not self.edges:
            raise InvalidPath("empty path")
        for e in self.edges:
            lattice.check_edge(e)
        for a, b in zip(self.edges, self.edges[1:]):
            if lattice.v(a) != lattice.u(b):
                raise InvalidPath(f"disconnected path: {a} does not end where {b} starts")

    def __len__(self):
        return len(self.edges)

    def __iter__(self):
        return iter(self.edges)

    def __getitem__(self, i):
        return self.edges[i]

    @property
    def start(self):
        return self.lattice.u(self.edges[0])

    @property
    def end(self):
        return self.lattice.v(self.edges[-1])

    @property
    def closed(self):
        return self.start == self.end

    def reversed(self):
        return LatticePath(self.lattice, [e.reverse() for e in reversed(self.edges)])

    def rotated(self, k=1):
        if not self.closed:
            raise InvalidPath("only closed paths can be rotated")
        k %= len(self.edges)
        return LatticePath(self.lattice, self.edges[k:] + self.edges[:k])

    def translated(self, axis, steps):
        lat = self.lattice
        edges = [DirectedEdge(lat.shift(e.site, axis, steps), e.axis, e.sign) for e in self.edges]
        return LatticePath(lat, edges)

    def sites(self):
        return sorted(self.lattice._sites_of(self))

    def __repr__(self):
        return f"LatticePath({list(self.edges)})"
