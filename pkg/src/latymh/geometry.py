"""SO(N), so(N) and unit-sphere primitives.

Matrices use the Hilbert-Schmidt inner product <X, Y> = Tr(X Y^t) without any
normalisation by N.  All functions accept a single matrix/vector or a stack of
them along leading axes unless stated otherwise.
"""
import math

import numpy as np

from .errors import DimensionMismatch, InvalidDimension, RetractionFailure

ORTHO_TOL = 1e-10
SKEW_TOL = 1e-12
SPHERE_TOL = 1e-12


def algebra_dim(n):
    return n * (n - 1) // 2


def _check_dim(n):
    if int(n) != n or n < 2:
        raise InvalidDimension(f"matrix dimension must be an integer >= 2, got {n!r}")
    return int(n)


def so_basis(n):
    """HS-orthonormal basis (e_mn - e_nm)/sqrt(2), m < n, in lexicographic order.

    Returns an array of shape (n(n-1)/2, n, n).
    """
    n = _check_dim(n)
    basis = np.zeros((algebra_dim(n), n, n))
    a = 0
    for i in range(n):
        for j in range(i + 1, n):
            basis[a, i, j] = 1.0 / math.sqrt(2.0)
            basis[a, j, i] = -1.0 / math.sqrt(2.0)
            a += 1
    return basis


def basis_coefficients(x):
    """Coordinates of skew matrices in :func:`so_basis` (inverse of :func:`from_coefficients`)."""
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    iu = np.triu_indices(n, 1)
    return math.sqrt(2.0) * x[..., iu[0], iu[1]]


def from_coefficients(z, n):
    """Build sum_a z_a v_a for the lexicographic basis; z has trailing axis n(n-1)/2."""
    z = np.asarray(z, dtype=float)
    iu = np.triu_indices(n, 1)
    out = np.zeros(z.shape[:-1] + (n, n))
    s = z / math.sqrt(2.0)
    out[..., iu[0], iu[1]] = s
    out[..., iu[1], iu[0]] = -s
    return out


def hs_inner(a, b):
    """Tr(a b^t), broadcast over leading axes."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape[-2:] != b.shape[-2:]:
        raise DimensionMismatch(f"shapes {a.shape} and {b.shape} differ")
    return np.einsum("...ij,...ij->...", a, b)


def project_skew(m):
    m = np.asarray(m, dtype=float)
    return 0.5 * (m - np.swapaxes(m, -1, -2))


def group_exp(x):
    """Matrix exponential of skew matrices by scaling and squaring.

    A degree-12 Taylor polynomial is applied after scaling the argument to
    Frobenius norm <= 1/4, which keeps the truncation error below 1e-17.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    norm = float(np.max(np.sqrt(np.einsum("...ij,...ij->...", x, x)), initial=0.0))
    s = 0 if norm <= 0.25 else int(math.ceil(math.log2(norm / 0.25)))
    y = x / (2.0 ** s)
    eye = np.broadcast_to(np.eye(n), x.shape)
    out = eye.copy()
    term = eye.copy()
    for k in range(1, 13):
        term = term @ y / k
        out = out + term
    for _ in range(s):
        out = out @ out
    return out


def retract_orthogonal(m):
    """Polar factor M (M^t M)^{-1/2}: the HS-nearest orthogonal matrix.

    Only near-group inputs are accepted (det > 0 and within Frobenius distance
    0.5 of the polar factor); anything else is reported rather than repaired.
    """
    m = np.asarray(m, dtype=float)
    det = np.linalg.det(m)
    if np.any(det <= 0.0):
        raise RetractionFailure("non-positive determinant")
    w, v = np.linalg.eigh(np.swapaxes(m, -1, -2) @ m)
    if np.any(w <= 1e-12):
        raise RetractionFailure("near-singular input")
    inv_sqrt = (v * (1.0 / np.sqrt(w))[..., None, :]) @ np.swapaxes(v, -1, -2)
    q = m @ inv_sqrt
    dist = np.sqrt(np.einsum("...ij,...ij->...", m - q, m - q))
    if np.any(dist > 0.5):
        raise RetractionFailure(f"input too far from SO(N): distance {float(np.max(dist)):.3g}")
    return q


def haar_sample(n, rng, size=None):
    """Haar-distributed SO(n) matrices via sign-fixed QR of a Gaussian matrix."""
    n = _check_dim(n)
    shape = () if size is None else ((size,) if np.isscalar(size) else tuple(size))
    g = rng.standard_normal(shape + (n, n))
    q, r = np.linalg.qr(g)
    d = np.sign(np.diagonal(r, axis1=-2, axis2=-1))
    d[d == 0] = 1.0
    q = q * d[..., None, :]
    flip = np.linalg.det(q) < 0
    q[flip, :, 0] *= -1.0
    return q


def algebra_gaussian(n, variance, rng, size=None):
    """Centered Gaussian in so(n) with E<X,A><X,B> = variance <A,B>."""
    n = _check_dim(n)
    if variance < 0:
        raise ValueError(f"variance must be non-negative, got {variance}")
    shape = () if size is None else ((size,) if np.isscalar(size) else tuple(size))
    z = rng.standard_normal(shape + (algebra_dim(n),)) * math.sqrt(variance)
    return from_coefficients(z, n)


def casimir_constant(n):
    """c_g with sum_a v_a^2 = c_g I for an orthonormal basis of so(n)."""
    return -0.5 * (n - 1)


def sphere_tangent_project(base, v):
    base = np.asarray(base, dtype=float)
    v = np.asarray(v, dtype=float)
    return v - np.sum(base * v, axis=-1, keepdims=True) * base


def sphere_exp(base, v):
    """Great-circle step cos|v| base + sin|v| v/|v| (v must be tangent at base)."""
    base = np.asarray(base, dtype=float)
    v = np.asarray(v, dtype=float)
    r = np.linalg.norm(v, axis=-1, keepdims=True)
    safe = np.where(r > 0, r, 1.0)
    return np.cos(r) * base + np.where(r > 0, np.sin(r) / safe, 1.0) * v


def sphere_sample(n, rng, size=None):
    """Uniform points on the unit sphere in R^n."""
    shape = () if size is None else ((size,) if np.isscalar(size) else tuple(size))
    g = rng.standard_normal(shape + (n,))
    return g / np.linalg.norm(g, axis=-1, keepdims=True)


def is_group_element(q, tol=ORTHO_TOL):
    q = np.asarray(q, dtype=float)
    n = q.shape[-1]
    err = np.linalg.norm(q @ np.swapaxes(q, -1, -2) - np.eye(n), axis=(-2, -1))
    return bool(np.all(err <= tol) and np.all(np.linalg.det(q) >= 0.5))
