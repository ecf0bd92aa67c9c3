"""Uniform 1D grids on an interval, the Neumann Laplacian and discrete norms.

Magnetisation fields are plain ``numpy`` arrays of shape ``(n_points, 3)``.
Most routines also accept a leading batch axis, ``(n_batch, n_points, 3)``,
so that ensembles of independent paths can be advanced together; nodes are
always on axis ``-2`` and vector components on axis ``-1``.

All inner products use the trapezoid rule on the nodes.
"""
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import InvalidArgument, PreconditionViolation

#: Nodewise tolerance on ``| |m(x)| - 1 |`` for a field to count as saturated.
SATURATION_TOL = 1e-10


@dataclass(frozen=True)
class Grid1D:
    """Uniform node-centred grid ``x_i = i * spacing`` on ``[0, length]``."""

    length: float
    n_points: int

    def __post_init__(self):
        if not np.isfinite(self.length) or self.length <= 0:
            raise InvalidArgument(f"grid length must be positive, got {self.length!r}")
        if int(self.n_points) != self.n_points or self.n_points < 3:
            raise InvalidArgument(f"n_points must be an integer >= 3, got {self.n_points!r}")
        object.__setattr__(self, "length", float(self.length))
        object.__setattr__(self, "n_points", int(self.n_points))

    @property
    def spacing(self):
        return self.length / (self.n_points - 1)

    @property
    def nodes(self):
        return np.arange(self.n_points) * self.spacing

    @property
    def weights(self):
        """Trapezoid quadrature weights."""
        w = np.full(self.n_points, self.spacing)
        w[0] = w[-1] = 0.5 * self.spacing
        return w


def make_grid(length, n_points):
    return Grid1D(length, n_points)


def as_field(m, g, name="m"):
    """Return ``m`` as a float array after checking it conforms to ``g``."""
    arr = np.asarray(m, dtype=float)
    if arr.ndim < 2 or arr.shape[-2:] != (g.n_points, 3):
        raise InvalidArgument(
            f"{name} has shape {arr.shape}, expected (..., {g.n_points}, 3)")
    return arr


def uniform_field(vector, g):
    v = np.asarray(vector, dtype=float)
    if v.shape != (3,):
        raise InvalidArgument(f"expected a 3-vector, got shape {v.shape}")
    return np.tile(v, (g.n_points, 1))


def node_norms(m):
    """Euclidean length of the vector at each node (explicit sum for reproducibility)."""
    m = np.asarray(m, dtype=float)
    return np.sqrt(m[..., 0] * m[..., 0] + m[..., 1] * m[..., 1] + m[..., 2] * m[..., 2])


def sphere_residual(m):
    """``max_x | |m(x)| - 1 |`` (per batch member when batched)."""
    return np.max(np.abs(node_norms(m) - 1.0), axis=-1)


def is_saturated(m, tol=SATURATION_TOL):
    return bool(np.all(sphere_residual(m) <= tol))


def require_saturated(m, tol=1e-8, name="m"):
    # Looser than SATURATION_TOL: callers may hand in fields that were
    # normalised once and then stored/reloaded through text formats.
    if not is_saturated(m, tol):
        raise PreconditionViolation(
            f"{name} is not saturated: max | |m|-1 | = {np.max(sphere_residual(m)):.3e}")


def normalize(m):
    return m / node_norms(m)[..., None]


def laplacian(m, g):
    """Second difference with mirror-ghost Neumann closure.

    Interior rows are ``(m[i-1] - 2 m[i] + m[i+1]) / h**2``; the ghost
    values ``m[-1] = m[1]`` and ``m[n] = m[n-2]`` give boundary rows
    ``2 (m[1] - m[0]) / h**2`` and ``2 (m[n-2] - m[n-1]) / h**2``.
    """
    m = as_field(m, g)
    inv_h2 = 1.0 / g.spacing ** 2
    out = np.empty_like(m)
    out[..., 1:-1, :] = (m[..., :-2, :] - 2.0 * m[..., 1:-1, :] + m[..., 2:, :]) * inv_h2
    out[..., 0, :] = 2.0 * (m[..., 1, :] - m[..., 0, :]) * inv_h2
    out[..., -1, :] = 2.0 * (m[..., -2, :] - m[..., -1, :]) * inv_h2
    return out


def forward_gradient(m, g):
    """Forward differences, one value per cell (``n_points - 1`` rows)."""
    m = as_field(m, g)
    return (m[..., 1:, :] - m[..., :-1, :]) / g.spacing


def centered_gradient(m, g):
    """Centred differences in the interior, second-order one-sided at the ends."""
    m = as_field(m, g)
    h = g.spacing
    d = np.empty_like(m)
    d[..., 1:-1, :] = (m[..., 2:, :] - m[..., :-2, :]) / (2.0 * h)
    # written as differences so that constant fields give exactly zero
    d[..., 0, :] = (4.0 * (m[..., 1, :] - m[..., 0, :]) - (m[..., 2, :] - m[..., 0, :])) / (2.0 * h)
    d[..., -1, :] = ((m[..., -3, :] - m[..., -1, :]) - 4.0 * (m[..., -2, :] - m[..., -1, :])) / (2.0 * h)
    return d


def inner(f, h, g):
    """Trapezoid inner product of two fields (scalar profiles or 3-vector fields)."""
    f = np.asarray(f, dtype=float)
    h = np.asarray(h, dtype=float)
    prod = f * h
    if prod.ndim >= 2 and prod.shape[-1] == 3 and prod.shape[-2] == g.n_points:
        prod = prod[..., 0] + prod[..., 1] + prod[..., 2]
    return (g.weights * prod).sum(axis=-1)


class Norms(NamedTuple):
    l2: float
    h1: float
    linf: float
    grad_l2: float


def norms(m, g):
    """L2, H1, sup and gradient-L2 norms of a field.

    The gradient norm uses forward differences integrated with the
    midpoint rule over cells, so a piecewise-linear interpolant's exact
    Dirichlet energy is returned.
    """
    m = as_field(m, g)
    l2 = np.sqrt(inner(m, m, g))
    d = forward_gradient(m, g)
    d2 = d[..., 0] ** 2 + d[..., 1] ** 2 + d[..., 2] ** 2
    grad_l2 = np.sqrt(g.spacing * d2.sum(axis=-1))
    h1 = np.sqrt(l2 ** 2 + grad_l2 ** 2)
    linf = np.max(node_norms(m), axis=-1)
    if np.ndim(l2) == 0:
        return Norms(float(l2), float(h1), float(linf), float(grad_l2))
    return Norms(l2, h1, linf, grad_l2)


def h1_distance(m, reference, g):
    """``|m - reference|_{H1}``; ``reference`` may be a field or a constant 3-vector."""
    m = as_field(m, g)
    ref = np.asarray(reference, dtype=float)
    return norms(m - ref, g).h1


@dataclass(frozen=True)
class EigenPair:
    index: int
    eigenvalue: float
    eigenfunction: np.ndarray


def neumann_eigenpairs(g, n_modes):
    """First ``n_modes`` eigenpairs of ``-d^2/dx^2`` with Neumann ends.

    Eigenvalues are the analytic ``(j pi / l)**2``; eigenfunctions are the
    cosines sampled on the nodes and then orthonormalised (modified
    Gram-Schmidt) in the trapezoid inner product.
    """
    if int(n_modes) != n_modes or not 1 <= n_modes <= g.n_points:
        raise InvalidArgument(f"n_modes must lie in [1, {g.n_points}], got {n_modes!r}")
    x = g.nodes
    w = g.weights
    l = g.length
    out = []
    for j in range(int(n_modes)):
        if j == 0:
            e = np.full(g.n_points, np.sqrt(1.0 / l))
        else:
            e = np.sqrt(2.0 / l) * np.cos(j * np.pi * x / l)
        for prev in out:
            e = e - np.sum(w * e * prev.eigenfunction) * prev.eigenfunction
        e = e / np.sqrt(np.sum(w * e * e))
        e.setflags(write=False)
        out.append(EigenPair(j, (j * np.pi / l) ** 2, e))
    return out


def basis_matrix(basis):
    """Stack eigenfunctions into an ``(n_modes, n_points)`` array."""
    return np.array([b.eigenfunction for b in basis])


def spectral_coefficients(m, basis, g):
    """``<m, e_j>`` for each basis function, shape ``(..., n_modes, 3)``."""
    m = as_field(m, g)
    E = basis_matrix(basis)
    if E.shape[1] != g.n_points:
        raise InvalidArgument("basis does not conform to the grid")
    return np.einsum("jn,...nc->...jc", E * g.weights, m)


def spectral_project(m, basis, g):
    """Orthogonal projection onto the span of ``basis``, componentwise."""
    if len(basis) == 0:
        raise InvalidArgument("basis must be nonempty")
    c = spectral_coefficients(m, basis, g)
    return np.einsum("jn,...jc->...nc", basis_matrix(basis), c)


def embedding_constant_k(length):
    """Constant ``k`` in ``sup|u| <= k |u|_{L2}^{1/2} |u|_{H1}^{1/2}`` on an interval."""
    if not np.isfinite(length) or length <= 0:
        raise InvalidArgument(f"length must be positive, got {length!r}")
    return 2.0 * max(1.0, 1.0 / np.sqrt(length))
