"""Pointwise vector algebra of the Landau-Lifshitz equation on a 1D needle.

The deterministic dynamics is

    dm/dt = m x H - alpha m x (m x H),   H = lap(m) - beta (0, m2, m3) + K,

and noise enters through channels ``sigma_b(m) = m x b - alpha m x (m x b)``
with either a spatial profile ``b = h(x)`` (one channel) or three constant
directions ``b = a^i``.
"""
from dataclasses import dataclass, field

import numpy as np

from . import grid_ops
from .errors import InvalidArgument, InvalidNoiseModel


def cross(a, b):
    """Broadcasting cross product over the last axis, written out explicitly."""
    a0, a1, a2 = a[..., 0], a[..., 1], a[..., 2]
    b0, b1, b2 = b[..., 0], b[..., 1], b[..., 2]
    return np.stack((a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0), axis=-1)


def dot(a, b):
    return a[..., 0] * b[..., 0] + a[..., 1] * b[..., 1] + a[..., 2] * b[..., 2]


@dataclass(frozen=True)
class PhysicalParams:
    """Material and run parameters.

    ``alpha = 0`` (no damping) is accepted for the pure-precession test
    models; the needle-model quantities in :mod:`llg1d.det_solver` and the
    command-line configs require ``alpha > 0``.
    """

    alpha: float
    beta: float = 0.0
    eps: float = 0.0
    horizon: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.alpha) and self.alpha >= 0):
            raise InvalidArgument(f"alpha must be nonnegative, got {self.alpha!r}")
        if not (np.isfinite(self.beta) and self.beta >= 0):
            raise InvalidArgument(f"beta must be nonnegative, got {self.beta!r}")
        if not (0.0 <= self.eps <= 1.0):
            raise InvalidArgument(f"eps must lie in [0, 1], got {self.eps!r}")
        if not (np.isfinite(self.horizon) and self.horizon > 0):
            raise InvalidArgument(f"horizon must be positive, got {self.horizon!r}")


class NoiseModel:
    """Noise channels: a scalar-driven profile ``h(x)`` or three constant directions."""

    SCALAR_PROFILE = "scalar_profile"
    THREE_DIRECTIONS = "three_directions"

    def __init__(self, mode, profile_h=None, directions=None):
        if mode == self.SCALAR_PROFILE:
            if profile_h is None:
                raise InvalidNoiseModel("scalar_profile mode needs profile_h")
            h = np.array(profile_h, dtype=float)
            if h.ndim != 2 or h.shape[1] != 3:
                raise InvalidNoiseModel(f"profile_h must have shape (n_points, 3), got {h.shape}")
            h.setflags(write=False)
            self.profile_h, self.directions = h, None
        elif mode == self.THREE_DIRECTIONS:
            if directions is None:
                raise InvalidNoiseModel("three_directions mode needs directions")
            a = np.array(directions, dtype=float)
            if a.shape != (3, 3):
                raise InvalidNoiseModel(f"directions must be three 3-vectors, got shape {a.shape}")
            if abs(np.linalg.det(a)) <= 1e-12:
                raise InvalidNoiseModel("noise directions are (numerically) linearly dependent")
            a.setflags(write=False)
            self.profile_h, self.directions = None, a
        else:
            raise InvalidNoiseModel(f"unknown noise mode {mode!r}")
        self.mode = mode

    @classmethod
    def three_directions(cls, directions):
        return cls(cls.THREE_DIRECTIONS, directions=directions)

    @classmethod
    def scalar_profile(cls, profile_h):
        return cls(cls.SCALAR_PROFILE, profile_h=profile_h)

    @classmethod
    def single_direction(cls, vector, g):
        """Spatially constant profile ``h(x) = vector``."""
        return cls.scalar_profile(grid_ops.uniform_field(vector, g))

    @property
    def n_channels(self):
        return 1 if self.mode == self.SCALAR_PROFILE else 3

    def channel_vectors(self):
        """Shape ``(n_channels, n_points or 1, 3)``: the ``b`` of each channel."""
        if self.mode == self.SCALAR_PROFILE:
            return self.profile_h[None, :, :]
        return self.directions[:, None, :]

    def check_grid(self, g):
        if self.mode == self.SCALAR_PROFILE and self.profile_h.shape[0] != g.n_points:
            raise InvalidArgument(
                f"noise profile has {self.profile_h.shape[0]} nodes, grid has {g.n_points}")

    def max_direction_norm_sq(self):
        if self.mode != self.THREE_DIRECTIONS:
            raise InvalidNoiseModel("needs three_directions noise")
        return float(np.max(np.sum(self.directions ** 2, axis=1)))

    def __eq__(self, other):
        if not isinstance(other, NoiseModel) or other.mode != self.mode:
            return False
        mine = self.profile_h if self.directions is None else self.directions
        theirs = other.profile_h if other.directions is None else other.directions
        return mine.shape == theirs.shape and bool(np.all(mine == theirs))

    def __repr__(self):
        data = self.profile_h if self.directions is None else self.directions
        return f"NoiseModel({self.mode!r}, {data.tolist()!r})"


@dataclass(frozen=True)
class PiecewiseConstant:
    """Right-continuous step function: segment ``i`` holds on ``(b[i], b[i+1]]``.

    Evaluation outside ``(b[0], b[-1]]`` returns zero, matching the
    indicator-function construction of the reversal schedule.
    """

    breakpoints: np.ndarray
    segment_values: np.ndarray
    width: int = field(default=3)

    def __post_init__(self):
        b = np.array(self.breakpoints, dtype=float).reshape(-1)
        v = np.array(self.segment_values, dtype=float)
        if v.ndim == 1:
            v = v.reshape(-1, 1) if self.width == 1 else v.reshape(1, -1)
        if b.size < 2:
            raise InvalidArgument("need at least two breakpoints")
        if np.any(np.diff(b) < 0):
            raise InvalidArgument("breakpoints must be nondecreasing")
        if v.shape != (b.size - 1, self.width):
            raise InvalidArgument(
                f"expected {b.size - 1} segment values of width {self.width}, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise InvalidArgument("segment values must be finite")
        b.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "breakpoints", b)
        object.__setattr__(self, "segment_values", v)

    @classmethod
    def constant(cls, value, horizon, t0=0.0):
        value = np.atleast_1d(np.asarray(value, dtype=float))
        return cls([t0, horizon], value[None, :], width=value.size)

    @classmethod
    def zero(cls, horizon, width=3):
        return cls([0.0, horizon], np.zeros((1, width)), width=width)

    def segment_index(self, t):
        """Index of the segment containing ``t`` or ``-1`` outside the support."""
        b = self.breakpoints
        if t <= b[0] or t > b[-1]:
            return -1
        return int(np.searchsorted(b, t, side="left")) - 1

    def __call__(self, t):
        i = self.segment_index(t)
        if i < 0:
            return np.zeros(self.width)
        return self.segment_values[i]

    def segment_lengths(self):
        return np.diff(self.breakpoints)

    def is_zero(self):
        return not np.any(self.segment_values)

    def to_dict(self):
        return {"breakpoints": self.breakpoints.tolist(), "values": self.segment_values.tolist()}

    def __eq__(self, other):
        return (type(self) is type(other) and self.width == other.width
                and np.array_equal(self.breakpoints, other.breakpoints)
                and np.array_equal(self.segment_values, other.segment_values))


class AppliedFieldSchedule(PiecewiseConstant):
    """Spatially constant applied field ``K(t)`` in R^3."""

    def __init__(self, breakpoints, segment_values):
        super().__init__(breakpoints, segment_values, 3)

    @classmethod
    def constant(cls, value, horizon, t0=0.0):
        return cls([t0, horizon], np.asarray(value, dtype=float)[None, :])

    @classmethod
    def zero(cls, horizon, width=3):
        return cls([0.0, horizon], np.zeros((1, 3)))


def anisotropy_field(m, beta):
    """``-beta (0, m2, m3)``."""
    out = -beta * m
    out[..., 0] = 0.0
    return out


def effective_field(m, K, p, g):
    """``lap(m) - beta (0, m2, m3) + K`` with ``K`` a constant 3-vector."""
    m = grid_ops.as_field(m, g)
    K = np.asarray(K, dtype=float)
    if K.shape != (3,):
        raise InvalidArgument(f"applied field must be a 3-vector, got shape {K.shape}")
    return grid_ops.laplacian(m, g) + anisotropy_field(m, p.beta) + K


def _broadcasts_to(shape, target):
    try:
        return np.broadcast_shapes(shape, target) == tuple(target)
    except ValueError:
        return False


def llg_drift(m, h_eff, alpha):
    """``m x h - alpha m x (m x h)`` at every node."""
    m = np.asarray(m, dtype=float)
    h_eff = np.asarray(h_eff, dtype=float)
    if m.shape[-1] != 3 or not _broadcasts_to(h_eff.shape, m.shape):
        raise InvalidArgument(f"shape mismatch: m {m.shape}, h_eff {h_eff.shape}")
    mxh = cross(m, h_eff)
    return mxh - alpha * cross(m, mxh)


def diffusion_channels(m, noise, alpha):
    """Stack of channel fields ``sigma_i(m)``, shape ``(n_channels, *m.shape)``."""
    m = np.asarray(m, dtype=float)
    b = noise.channel_vectors()
    if noise.mode == NoiseModel.SCALAR_PROFILE and b.shape[1] != m.shape[-2]:
        raise InvalidArgument("noise profile does not conform to the field")
    # channel axis first, then broadcast over any batch axes of m
    b = b.reshape((b.shape[0],) + (1,) * (m.ndim - 2) + b.shape[1:])
    mxb = cross(m, b)
    return mxb - alpha * cross(m, mxb)


def ito_correction(m, noise, alpha):
    """Stratonovich-to-Ito drift summed over channels, without the ``eps`` factor.

    For each channel vector ``b``::

        1/2 [ (m x b) x b - alpha (m x (m x b)) x b
              - alpha ( m x ((m x b) x b) - alpha (m x (m x b)) x (m x b)
                        + alpha ((m x (m x b)) x b) x m ) ]

    which equals ``1/2 D sigma(m)[sigma(m)]``.
    """
    m = np.asarray(m, dtype=float)
    b = noise.channel_vectors()
    if noise.mode == NoiseModel.SCALAR_PROFILE and b.shape[1] != m.shape[-2]:
        raise InvalidArgument("noise profile does not conform to the field")
    b = b.reshape((b.shape[0],) + (1,) * (m.ndim - 2) + b.shape[1:])
    mxb = cross(m, b)
    mmxb = cross(m, mxb)
    mxb_xb = cross(mxb, b)
    bracket = (mxb_xb
               - alpha * cross(mmxb, b)
               - alpha * (cross(m, mxb_xb)
                          - alpha * cross(mmxb, mxb)
                          + alpha * cross(cross(mmxb, b), m)))
    return 0.5 * bracket.sum(axis=0)


def energy(m, K, p, g):
    """Exchange + shape anisotropy - Zeeman energy of the needle."""
    m = grid_ops.as_field(m, g)
    K = np.asarray(K, dtype=float)
    grad = grid_ops.norms(m, g).grad_l2
    transverse = m[..., 1] ** 2 + m[..., 2] ** 2
    aniso = np.sum(g.weights * transverse, axis=-1)
    zeeman = grid_ops.inner(m, np.broadcast_to(K, m.shape), g)
    return 0.5 * grad ** 2 + 0.5 * p.beta * aniso - zeeman


def harmonic_identity_residual(m, g):
    """``m x (m x lap m) + |Dm|^2 m + lap m`` for a saturated field.

    Vanishes identically in the continuum for unit-length fields; the
    discrete value measures consistency of the stencil.
    """
    m = grid_ops.as_field(m, g)
    grid_ops.require_saturated(m)
    lap = grid_ops.laplacian(m, g)
    dm = grid_ops.centered_gradient(m, g)
    dm2 = dot(dm, dm)
    return cross(m, cross(m, lap)) + dm2[..., None] * m + lap
