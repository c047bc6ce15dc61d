"""Yang-Mills-Higgs action, gradients, gauge transformations and Hessian forms.

The functions in this module are straightforward vectorised numpy and serve as
the reference against which the loop kernels in :mod:`latymh.kernels` are
tested.  The action is

    S = N beta sum_p Tr Q_p - S_2

with S_2 = kappa N sum_e |Q_e phi_y - phi_x|^2 + m N sum_z |phi_z|^2 for the
Euclidean target and S_2 = -2 kappa N sum_e Tr(phi_x^t Q_e phi_y) for the
sphere and group targets; the Gibbs density is exp(+S).
"""
import enum
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from . import geometry as geo
from .errors import HessianStepError, InvalidDimension, TargetMismatch
from .lattice import DirectedEdge, Lattice, LatticePath


class Target(str, enum.Enum):
    EUCLIDEAN = "euclidean"
    SPHERE = "sphere"
    GROUP = "group"

    @property
    def code(self):
        return {"euclidean": 0, "sphere": 1, "group": 2}[self.value]


@dataclass(frozen=True)
class Couplings:
    N: int
    beta: float
    kappa: float
    m: float = 0.0
    target: Target = Target.GROUP

    def __post_init__(self):
        object.__setattr__(self, "target", Target(self.target))
        if int(self.N) != self.N or self.N < 2:
            raise InvalidDimension(f"N must be an integer >= 2, got {self.N}")
        object.__setattr__(self, "N", int(self.N))

    @property
    def mass(self):
        """Mass coefficient actually used: m is dropped for compact targets."""
        return float(self.m) if self.target is Target.EUCLIDEAN else 0.0

    def require_measure(self):
        """Raise unless exp(S) is normalisable (Euclidean target needs m > 0, kappa >= 0)."""
        if self.target is Target.EUCLIDEAN and not (self.m > 0 and self.kappa >= 0):
            raise ValueError("Euclidean Gibbs measure needs m > 0 and kappa >= 0")


@dataclass
class FieldConfiguration:
    lattice: Lattice
    target: Target
    Q: np.ndarray
    phi: np.ndarray

    def __post_init__(self):
        self.target = Target(self.target)
        self.Q = np.ascontiguousarray(self.Q, dtype=float)
        self.phi = np.ascontiguousarray(self.phi, dtype=float)
        if self.Q.shape[0] != self.lattice.n_edges or self.phi.shape[0] != self.lattice.n_sites:
            raise ValueError("field arrays do not match lattice size")

    @property
    def N(self):
        return self.Q.shape[-1]

    def copy(self):
        return FieldConfiguration(self.lattice, self.target, self.Q.copy(), self.phi.copy())

    def phi3(self):
        """Site field as (n_sites, N, K): K = 1 for vector targets."""
        if self.target is Target.GROUP:
            return self.phi
        return self.phi.reshape(self.phi.shape[0], self.phi.shape[1], 1)

    def check(self, tol=geo.ORTHO_TOL):
        ok = geo.is_group_element(self.Q, tol)
        if self.target is Target.SPHERE:
            ok &= bool(np.all(np.abs(np.sum(self.phi ** 2, axis=-1) - 1.0) <= max(tol, 1e-12)))
        elif self.target is Target.GROUP:
            ok &= geo.is_group_element(self.phi, tol)
        return ok


@dataclass
class TangentVector:
    """Edge components X (skew, tangent X_e Q_e) and site components v.

    v is a free vector (Euclidean), a base-orthogonal vector (sphere), or a skew
    Y_x with tangent Y_x phi_x (group).
    """
    X: np.ndarray
    v: np.ndarray

    def norm2(self):
        return float(np.sum(self.X ** 2) + np.sum(self.v ** 2))

    def __add__(self, other):
        return TangentVector(self.X + other.X, self.v + other.v)

    def __sub__(self, other):
        return TangentVector(self.X - other.X, self.v - other.v)

    def __mul__(self, s):
        return TangentVector(self.X * s, self.v * s)

    __rmul__ = __mul__


# -- configuration factories --------------------------------------------------

def cold_configuration(lattice, N, target, phi0=None):
    """Q = I everywhere; phi = 0 (Euclidean), e_1 (sphere) or I (group) unless given."""
    target = Target(target)
    Q = np.broadcast_to(np.eye(N), (lattice.n_edges, N, N)).copy()
    V = lattice.n_sites
    if phi0 is not None:
        phi = np.broadcast_to(np.asarray(phi0, dtype=float), (V,) + np.shape(phi0)).copy()
    elif target is Target.EUCLIDEAN:
        phi = np.zeros((V, N))
    elif target is Target.SPHERE:
        phi = np.zeros((V, N))
        phi[:, 0] = 1.0
    else:
        phi = np.broadcast_to(np.eye(N), (V, N, N)).copy()
    return FieldConfiguration(lattice, target, Q, phi)


def random_configuration(lattice, N, target, rng, phi_scale=1.0):
    target = Target(target)
    Q = geo.haar_sample(N, rng, size=lattice.n_edges)
    if target is Target.EUCLIDEAN:
        phi = phi_scale * rng.standard_normal((lattice.n_sites, N))
    elif target is Target.SPHERE:
        phi = geo.sphere_sample(N, rng, size=lattice.n_sites)
    else:
        phi = geo.haar_sample(N, rng, size=lattice.n_sites)
    return FieldConfiguration(lattice, target, Q, phi)


def random_gauge(lattice, N, rng):
    return geo.haar_sample(N, rng, size=lattice.n_sites)


def random_tangent(cfg, rng, unit=False):
    N, lat = cfg.N, cfg.lattice
    X = geo.algebra_gaussian(N, 1.0, rng, size=lat.n_edges)
    if cfg.target is Target.GROUP:
        v = geo.algebra_gaussian(N, 1.0, rng, size=lat.n_sites)
    else:
        v = rng.standard_normal((lat.n_sites, N))
        if cfg.target is Target.SPHERE:
            v = geo.sphere_tangent_project(cfg.phi, v)
    t = TangentVector(X, v)
    if unit:
        t = t * (1.0 / np.sqrt(t.norm2()))
    return t


# -- elementary pieces ------------------------------------------------------------

def edge_value(cfg, e):
    q = cfg.Q[e.site * cfg.lattice.d + e.axis]
    return q if e.sign > 0 else q.T


def _edge_values(Q, idx, sgn):
    q = Q[idx]
    return np.where((sgn < 0)[..., None, None], np.swapaxes(q, -1, -2), q)


def path_product(cfg, path):
    out = np.eye(cfg.N)
    for e in path:
        out = out @ edge_value(cfg, e)
    return out


def plaquette_product(cfg, p):
    p = p if isinstance(p, LatticePath) else LatticePath(cfg.lattice, p)
    if len(p) != 4 or not p.closed:
        raise ValueError("a plaquette is a closed path of four edges")
    return path_product(cfg, p)


def plaquette_traces(cfg):
    lat = cfg.lattice
    q = _edge_values(cfg.Q, lat.plaq_idx, lat.plaq_sgn)
    prod = q[:, 0] @ q[:, 1] @ q[:, 2] @ q[:, 3]
    return np.trace(prod, axis1=-2, axis2=-1)


def covariant_derivative(cfg, e):
    """Q_e phi_{v(e)} - phi_{u(e)}."""
    lat = cfg.lattice
    return edge_value(cfg, e) @ cfg.phi[lat.v(e)] - cfg.phi[lat.u(e)]


def covariant_derivatives(cfg):
    """Covariant derivative on every positive edge, stacked."""
    ends = cfg.lattice.edge_ends
    return cfg.Q @ cfg.phi3()[ends[:, 1]] - cfg.phi3()[ends[:, 0]]


def hopping_terms(cfg):
    """Tr(phi_x^t Q_e phi_y) per positive edge."""
    ends = cfg.lattice.edge_ends
    p3 = cfg.phi3()
    return np.einsum("eik,eik->e", p3[ends[:, 0]], cfg.Q @ p3[ends[:, 1]])


# -- action ------------------------------------------------------------------------

def _check_target(cfg, c):
    if Target(cfg.target) is not c.target:
        raise TargetMismatch(f"configuration target {cfg.target.value} vs couplings {c.target.value}")
    if cfg.N != c.N:
        raise TargetMismatch(f"configuration N={cfg.N} vs couplings N={c.N}")


def ym_action(cfg, c):
    return c.N * c.beta * float(np.sum(plaquette_traces(cfg)))


def higgs_action(cfg, c):
    """S_2, with S = S_1 - S_2."""
    N = c.N
    if c.target is Target.EUCLIDEAN:
        D = covariant_derivatives(cfg)
        return c.kappa * N * float(np.sum(D ** 2)) + c.m * N * float(np.sum(cfg.phi ** 2))
    return -2.0 * c.kappa * N * float(np.sum(hopping_terms(cfg)))


def action(cfg, c):
    _check_target(cfg, c)
    return ym_action(cfg, c) - higgs_action(cfg, c)


def gauge_fixed_action(Q, c, lattice):
    """N beta sum_p Tr Q_p + 2 kappa N sum_e Tr Q_e (Higgs frozen at the identity)."""
    cfg = FieldConfiguration(lattice, Target.GROUP, Q, np.broadcast_to(np.eye(c.N), (lattice.n_sites, c.N, c.N)))
    return ym_action(cfg, c) + 2.0 * c.kappa * c.N * float(np.trace(Q, axis1=-2, axis2=-1).sum())


# -- gradients -----------------------------------------------------------------------

def _staple_sums(cfg):
    lat = cfg.lattice
    s = _edge_values(cfg.Q, lat.stp_idx, lat.stp_sgn)      # (E, 2(d-1), 3, N, N)
    return (s[:, :, 0] @ s[:, :, 1] @ s[:, :, 2]).sum(axis=1)


def grad_edges(cfg, c):
    """Skew X_e for every positive edge, the gradient being X_e Q_e."""
    _check_target(cfg, c)
    N = c.N
    A = cfg.Q @ _staple_sums(cfg)
    ends = cfg.lattice.edge_ends
    p3 = cfg.phi3()
    H = cfg.Q @ p3[ends[:, 1]] @ np.swapaxes(p3[ends[:, 0]], -1, -2)
    At = np.swapaxes(A, -1, -2)
    Ht = np.swapaxes(H, -1, -2)
    return -0.5 * N * c.beta * (A - At) - c.kappa * N * (H - Ht)


def grad_edge(cfg, c, e):
    if e.sign < 0:
        raise ValueError("grad_edge takes a positive edge")
    return grad_edges(cfg, c)[e.site * cfg.lattice.d + e.axis]


def _site_fields(cfg):
    lat = cfg.lattice
    q = _edge_values(cfg.Q, lat.nbr_edge, lat.nbr_sgn)     # (V, 2d, N, N)
    return (q @ cfg.phi3()[lat.nbr]).sum(axis=1)            # (V, N, K)


def grad_sites(cfg, c):
    """Site gradients as tangent vectors at phi_x (vector, or matrix Y_x phi_x for the group)."""
    _check_target(cfg, c)
    N, lat = c.N, cfg.lattice
    h = _site_fields(cfg)
    if c.target is Target.EUCLIDEAN:
        h = h[..., 0]
        return 2 * c.kappa * N * (h - 2 * lat.d * cfg.phi) - 2 * c.m * N * cfg.phi
    if c.target is Target.SPHERE:
        h = h[..., 0]
        return 2 * c.kappa * N * (h - np.sum(cfg.phi * h, axis=-1, keepdims=True) * cfg.phi)
    phi = cfg.phi
    return c.kappa * N * (h - phi @ np.swapaxes(h, -1, -2) @ phi)


def grad_site(cfg, c, x):
    return grad_sites(cfg, c)[x]


def site_tangent_to_storage(cfg, g):
    """Convert site tangents to TangentVector storage (Y = g phi^t for the group)."""
    if cfg.target is Target.GROUP:
        return g @ np.swapaxes(cfg.phi, -1, -2)
    return g


def gradient(cfg, c):
    return TangentVector(grad_edges(cfg, c), site_tangent_to_storage(cfg, grad_sites(cfg, c)))


# -- gauge ----------------------------------------------------------------------------

def gauge_transform(cfg, g):
    """Q_e -> g_x Q_e g_y^t, phi_x -> g_x phi_x."""
    g = np.asarray(g, dtype=float)
    ends = cfg.lattice.edge_ends
    Q = g[ends[:, 0]] @ cfg.Q @ np.swapaxes(g[ends[:, 1]], -1, -2)
    phi = (g @ cfg.phi3()).reshape(cfg.phi.shape)
    return FieldConfiguration(cfg.lattice, cfg.target, Q, phi)


def ugauge_fix(cfg):
    """Gauge transformation g_x = phi_x^t, sending a group-valued Higgs field to the identity."""
    if cfg.target is not Target.GROUP:
        raise TargetMismatch("U-gauge fixing needs the group target")
    out = gauge_transform(cfg, np.swapaxes(cfg.phi, -1, -2))
    out.phi = np.broadcast_to(np.eye(cfg.N), out.phi.shape).copy()
    return out


# -- Hessian ------------------------------------------------------------------------

def geodesic(cfg, v, t):
    """Point at time t on the geodesic from cfg with initial velocity v."""
    Q = geo.group_exp(t * v.X) @ cfg.Q
    if cfg.target is Target.EUCLIDEAN:
        phi = cfg.phi + t * v.v
    elif cfg.target is Target.SPHERE:
        phi = geo.sphere_exp(cfg.phi, t * v.v)
    else:
        phi = geo.group_exp(t * v.v) @ cfg.phi
    return FieldConfiguration(cfg.lattice, cfg.target, Q, phi)


_PARTS = {
    "action": lambda cfg, c: action(cfg, c),
    "ym": lambda cfg, c: ym_action(cfg, c),
    "higgs": lambda cfg, c: higgs_action(cfg, c),
}


def hessian_form(cfg, c, v, h=1e-2, part="action", rtol=1e-6, with_error=False):
    """Second derivative of a functional along the geodesic with velocity v.

    ``part`` selects the functional: the full action S, its Yang-Mills part
    S_1, or the Higgs part S_2 (so that Hess S = Hess S_1 - Hess S_2).  A
    5-point central stencil is evaluated at h and h/2; the Richardson
    difference of the two is the error estimate.
    """
    _check_target(cfg, c)
    f = _PARTS[part]
    scale = max(1.0, abs(f(cfg, c)))

    def d2(step):
        vals = [f(geodesic(cfg, v, k * step), c) for k in (-2, -1, 0, 1, 2)]
        return (-vals[0] + 16 * vals[1] - 30 * vals[2] + 16 * vals[3] - vals[4]) / (12.0 * step * step)

    roundoff = 64 * np.finfo(float).eps * scale / (h / 2) ** 2
    if roundoff > rtol * max(1.0, v.norm2()) * scale:
        raise HessianStepError(
            f"step h={h:g} too small: roundoff estimate {roundoff:.3g} for |S|~{scale:.3g}")
    a, b = d2(h), d2(h / 2)
    val = b + (b - a) / 15.0
    err = abs(b - a) + roundoff
    return (val, err) if with_error else val


def ricci_form(cfg, v):
    """Ricci(v, v) of the configuration manifold (HS metric on SO(N), round unit sphere)."""
    N = cfg.N
    rg = (N + 2) / 4 - 1
    r = rg * float(np.sum(v.X ** 2))
    if cfg.target is Target.SPHERE:
        r += (N - 2) * float(np.sum(v.v ** 2))
    elif cfg.target is Target.GROUP:
        r += rg * float(np.sum(v.v ** 2))
    return r


def with_target(c, target):
    return replace(c, target=Target(target))


# -- snapshots -------------------------------------------------------------------------

SNAPSHOT_MAGIC = b"LYMH"
SNAPSHOT_VERSION = 1
_HEADER = struct.Struct("<4sBIIIB")
_TAGS = {Target.EUCLIDEAN: 0, Target.SPHERE: 1, Target.GROUP: 2}


def snapshot_bytes(cfg):
    """Binary layout: magic, version byte, d, L, N (uint32), target tag (uint8),
    then Q in positive-edge order and the site values, little-endian f64 row-major."""
    lat = cfg.lattice
    head = _HEADER.pack(SNAPSHOT_MAGIC, SNAPSHOT_VERSION, lat.d, lat.L, cfg.N, _TAGS[cfg.target])
    return head + cfg.Q.astype("<f8").tobytes() + cfg.phi.astype("<f8").tobytes()


def snapshot_from_bytes(buf):
    magic, version, d, L, N, tag = _HEADER.unpack_from(buf)
    if magic != SNAPSHOT_MAGIC:
        raise ValueError("not a configuration snapshot")
    if version != SNAPSHOT_VERSION:
        raise ValueError(f"unsupported snapshot version {version}")
    target = {v: k for k, v in _TAGS.items()}[tag]
    lat = Lattice(d, L)
    data = np.frombuffer(buf, dtype="<f8", offset=_HEADER.size)
    nq = lat.n_edges * N * N
    phi_shape = (lat.n_sites, N, N) if target is Target.GROUP else (lat.n_sites, N)
    if data.size != nq + int(np.prod(phi_shape)):
        raise ValueError("snapshot payload size does not match its header")
    Q = data[:nq].reshape(lat.n_edges, N, N)
    phi = data[nq:].reshape(phi_shape)
    return FieldConfiguration(lat, target, Q.astype(float), phi.astype(float))


def save_snapshot(cfg, path):
    with open(path, "wb") as fh:
        fh.write(snapshot_bytes(cfg))


def load_snapshot(path):
    with open(path, "rb") as fh:
        return snapshot_from_bytes(fh.read())


def text_dump(cfg):
    """Human-readable lossless dump (17 significant digits round-trip float64)."""
    lat = cfg.lattice
    lines = [f"d {lat.d}", f"L {lat.L}", f"N {cfg.N}", f"target {cfg.target.value}"]
    for k, q in enumerate(cfg.Q):
        x, mu = divmod(k, lat.d)
        lines.append(f"Q {x} {mu} " + " ".join("%.17g" % v for v in q.ravel()))
    for x, p in enumerate(cfg.phi):
        lines.append(f"phi {x} " + " ".join("%.17g" % v for v in np.ravel(p)))
    return "\n".join(lines) + "\n"


def text_load(text):
    head, Q, phi = {}, [], []
    for line in text.splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "Q":
            Q.append([float(v) for v in parts[3:]])
        elif parts[0] == "phi":
            phi.append([float(v) for v in parts[2:]])
        else:
            head[parts[0]] = parts[1]
    lat = Lattice(int(head["d"]), int(head["L"]))
    N, target = int(head["N"]), Target(head["target"])
    Q = np.array(Q).reshape(lat.n_edges, N, N)
    phi = np.array(phi).reshape((lat.n_sites, N, N) if target is Target.GROUP else (lat.n_sites, N))
    return FieldConfiguration(lat, target, Q, phi)
