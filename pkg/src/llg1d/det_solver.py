"""Deterministic and controlled (skeleton) Landau-Lifshitz flows.

The controlled flow is

    dm/dt = llg_drift(m, H(m, K(t))) + sum_j sigma_j(m) psi_j(t),

integrated with a projected Heun step: a second-order explicit step of the
right-hand side followed by nodewise renormalisation onto the unit sphere.

The module also carries the closed-form stability quantities of the needle
model (stability radius, field threshold, decay rate) and a spectral
Galerkin integrator used as an independent discretisation.
"""
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from . import grid_ops, model
from .errors import InvalidArgument, MeasurementFailure, StepFailure
from .model import PiecewiseConstant

#: A node shorter than this before renormalisation signals a blown-up step.
COLLAPSE_THRESHOLD = 1e-6

PLUS = np.array([1.0, 0.0, 0.0])
MINUS = np.array([-1.0, 0.0, 0.0])


class ControlPath(PiecewiseConstant):
    """Piecewise-constant control ``psi(t)``, one scalar per noise channel."""

    def __init__(self, breakpoints, segment_values, width=None):
        v = np.asarray(segment_values, dtype=float)
        if width is None:
            width = v.shape[-1] if v.ndim == 2 else 1
        super().__init__(breakpoints, segment_values, width)

    @classmethod
    def constant(cls, value, horizon, t0=0.0):
        value = np.atleast_1d(np.asarray(value, dtype=float))
        return cls([t0, horizon], value[None, :])

    @classmethod
    def zero(cls, horizon, width=3):
        return cls([0.0, horizon], np.zeros((1, width)))

    def cost(self):
        """``1/2 int |psi|^2 dt``, exact for step functions."""
        sq = np.sum(self.segment_values ** 2, axis=1)
        return 0.5 * float(np.sum(sq * self.segment_lengths()))


DIAGNOSTIC_KEYS = ("l2", "h1", "linf", "energy", "sphere_residual",
                   "dist_h1_plus", "dist_h1_minus", "dist_h1_ref")


@dataclass
class TrajectoryRecord:
    times: np.ndarray
    states: np.ndarray
    diagnostics: dict
    grid: grid_ops.Grid1D
    stopped_early: bool = False
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.times)

    @property
    def final_state(self):
        return self.states[-1]

    def distances_to(self, reference):
        return np.array([grid_ops.h1_distance(s, reference, self.grid) for s in self.states])


def diagnostics(m, K, p, g, reference=None):
    """Per-time diagnostic norms recorded along trajectories."""
    n = grid_ops.norms(m, g)
    ref = np.nan if reference is None else grid_ops.h1_distance(m, reference, g)
    return {
        "l2": n.l2,
        "h1": n.h1,
        "linf": n.linf,
        "energy": float(model.energy(m, K, p, g)),
        "sphere_residual": float(grid_ops.sphere_residual(m)),
        "dist_h1_plus": grid_ops.h1_distance(m, PLUS, g),
        "dist_h1_minus": grid_ops.h1_distance(m, MINUS, g),
        "dist_h1_ref": float(ref),
    }


def _field_at(K, t):
    if K is None:
        return np.zeros(3)
    if callable(K):
        return np.asarray(K(t), dtype=float)
    return np.asarray(K, dtype=float)


def rhs_skeleton(m, t, psi, K, p, noise, g):
    """Right-hand side of the controlled flow at time ``t``.

    ``K`` is an :class:`~llg1d.model.AppliedFieldSchedule`, a constant
    3-vector or ``None``; ``psi`` a :class:`ControlPath` or ``None``.
    """
    grid_ops.as_field(m, g)
    h = model.effective_field(m, _field_at(K, t), p, g)
    out = model.llg_drift(m, h, p.alpha)
    if psi is not None:
        if noise is None:
            raise InvalidArgument("a control path needs a noise model for its channels")
        if psi.width != noise.n_channels:
            raise InvalidArgument(
                f"control has {psi.width} channels, noise model has {noise.n_channels}")
        coeff = psi(t)
        if np.any(coeff):
            sig = model.diffusion_channels(m, noise, p.alpha)
            for j in range(noise.n_channels):
                out = out + coeff[j] * sig[j]
    return out


def make_rhs(psi, K, p, noise, g):
    def rhs(m, t):
        return rhs_skeleton(m, t, psi, K, p, noise, g)
    return rhs


def renormalize_or_fail(m, t):
    r = grid_ops.node_norms(m)
    if not np.all(r >= COLLAPSE_THRESHOLD) or not np.all(np.isfinite(r)):
        raise StepFailure(t)
    return m / r[..., None]


def step_rk2_projected(m, t, dt, rhs):
    """One Heun step of ``rhs`` followed by renormalisation.

    Time-dependent inputs are sampled once, at the step midpoint, for both
    stages.  For step-function schedules whose breakpoints sit on the time
    grid this reproduces the active segment exactly, whatever side of a
    breakpoint the step starts on.
    """
    if not dt > 0:
        raise InvalidArgument(f"dt must be positive, got {dt!r}")
    tm = t + 0.5 * dt
    k1 = rhs(m, tm)
    pred = m + dt * k1
    k2 = rhs(pred, tm)
    return renormalize_or_fail(m + 0.5 * dt * (k1 + k2), t)


#: bound on dt * |largest stencil eigenvalue| for the explicit RK2 step
EXPLICIT_STABILITY_LIMIT = 2.0


def explicit_stability_number(dt, p, g):
    """``dt * (4 / h^2) * sqrt(1 + alpha^2)``: the stiffest exchange mode scaled by dt."""
    return dt * 4.0 / g.spacing ** 2 * np.sqrt(1.0 + p.alpha ** 2)


def n_steps_for(horizon, dt):
    n = int(round(horizon / dt))
    if n < 1 or abs(n * dt - horizon) > 1e-9 * max(horizon, 1.0):
        raise InvalidArgument(f"dt={dt!r} does not divide the horizon {horizon!r}")
    return n


def solve_deterministic(m0, psi, K, p, noise, g, dt, record_every=1, reference=None,
                        stop_when=None):
    """Integrate the skeleton flow on ``[0, p.horizon]``.

    Diagnostics are stored at ``t = 0``, every ``record_every`` steps and at
    the final time.  ``stop_when(t, m)`` may end the run early; the record
    then ends at the stopping time.
    """
    m = grid_ops.as_field(m0, g).copy()
    grid_ops.require_saturated(m, name="m0")
    if record_every < 1:
        raise InvalidArgument("record_every must be >= 1")
    n_steps = n_steps_for(p.horizon, dt)
    number = explicit_stability_number(dt, p, g)
    if number > EXPLICIT_STABILITY_LIMIT:
        warnings.warn(f"dt={dt!r} is above the explicit stability range for this grid "
                      f"(dt*4/h^2*sqrt(1+alpha^2) = {number:.3g}); results will be unreliable",
                      RuntimeWarning, stacklevel=2)
    rhs = make_rhs(psi, K, p, noise, g)

    times, states, rows = [0.0], [m.copy()], [diagnostics(m, _field_at(K, 0.0), p, g, reference)]
    stopped = False
    for k in range(n_steps):
        t = k * dt
        m = step_rk2_projected(m, t, dt, rhs)
        t_new = (k + 1) * dt
        done = k + 1 == n_steps
        if stop_when is not None and stop_when(t_new, m):
            stopped = not done
            done = True
        if (k + 1) % record_every == 0 or done:
            times.append(t_new)
            states.append(m.copy())
            rows.append(diagnostics(m, _field_at(K, t_new), p, g, reference))
        if done:
            break
    diag = {key: np.array([r[key] for r in rows]) for key in DIAGNOSTIC_KEYS}
    return TrajectoryRecord(np.array(times), np.array(states), diag, g, stopped)


# ---------------------------------------------------------------------------
# closed-form stability quantities

def stability_radius(p, g):
    """Radius of the H1 ball around (+-1, 0, 0) that the zero-field flow cannot leave."""
    k = grid_ops.embedding_constant_k(g.length)
    return 1.0 / (2.0 * k ** 2 * np.sqrt(g.length)) * p.alpha / (1.0 + 2.0 * p.alpha)


def field_threshold(p):
    a, b = p.alpha, p.beta
    return max((4 * b + 4 * a * b) / (3 * a), (2 * b + 4 * a * b - a) / a)


def decay_rate_gamma(p, H_mag):
    """Guaranteed decay exponent for the squared H1 distance under a strong constant field."""
    a, b = p.alpha, p.beta
    return min(a * H_mag + a - 2 * b - 4 * a * b, 1.5 * a * H_mag - 2 * b - 2 * a * b)


def field_for_target(H):
    """Applied field ``K = H + beta/|H| (0, H2, H3)`` whose stable state is ``H/|H|``.

    Returned as a function of ``beta`` so the caller supplies the material.
    """
    H = np.asarray(H, dtype=float)
    mag = np.linalg.norm(H)

    def with_beta(beta):
        return H + beta / mag * np.array([0.0, H[1], H[2]])
    return with_beta


def uandz_expression(m1, alpha):
    """``(1-m1^2)/m1^2 + alpha (1-m1^2)^2/m1^2 - alpha m1^2``."""
    s = m1 * m1
    return (1 - s) / s + alpha * (1 - s) ** 2 / s - alpha * s


class UandZCheck(NamedTuple):
    drift_sign: bool
    alignment: bool
    cross_bound: bool
    within_radius: bool


def check_uandz(m, zeta, p, g, tol=1e-12):
    """Evaluate the three pointwise claims that hold inside the stability ball.

    1. ``(1-m1^2)/m1^2 + alpha (1-m1^2)^2/m1^2 - alpha m1^2 <= 0``
    2. ``<m(x), zeta> >= 3/4``
    3. ``7/8 |m(x) - zeta|^2 <= |m(x) x zeta|^2``

    ``tol`` absorbs rounding in the comparisons.  Nodes with
    ``|m1| < 1e-9`` fail claim 1.
    """
    m = grid_ops.as_field(m, g)
    grid_ops.require_saturated(m)
    zeta = np.asarray(zeta, dtype=float)
    m1 = m[:, 0]
    small = np.abs(m1) < 1e-9
    safe = np.where(small, 1.0, m1)
    c1 = (uandz_expression(safe, p.alpha) <= tol) & ~small
    c2 = model.dot(m, zeta) >= 0.75 - tol
    diff = m - zeta
    mxz = model.cross(m, zeta)
    c3 = 0.875 * model.dot(diff, diff) <= model.dot(mxz, mxz) + tol
    inside = grid_ops.h1_distance(m, zeta, g) <= stability_radius(p, g)
    return UandZCheck(bool(c1.all()), bool(c2.all()), bool(c3.all()), bool(inside))


def fit_exponential_rate(times, distances):
    """Least-squares ``r`` in ``d(t) ~ C exp(-r t)``.

    The window is cut before the first nonpositive distance.
    """
    t = np.asarray(times, dtype=float)
    d = np.asarray(distances, dtype=float)
    bad = np.flatnonzero(~(d > 0))
    if bad.size:
        t, d = t[:bad[0]], d[:bad[0]]
    if t.size < 2:
        raise MeasurementFailure("fewer than two positive distances to fit")
    slope = np.polyfit(t, np.log(d), 1)[0]
    return float(-slope)


def measure_decay(traj, reference):
    return fit_exponential_rate(traj.times, traj.distances_to(reference))


# ---------------------------------------------------------------------------
# spectral Galerkin cross-check

@dataclass
class GalerkinRecord:
    times: np.ndarray
    coefficients: np.ndarray  # (n_records, n_modes, 3)
    states: np.ndarray
    l2: np.ndarray
    basis: list


def galerkin_rhs(c, t, E, Ew, lam, K, p):
    y = np.einsum("jn,jc->nc", E, c)
    lap = np.einsum("jn,jc->nc", E, -lam[:, None] * c)
    h = lap + model.anisotropy_field(y, p.beta) + _field_at(K, t)
    f = model.llg_drift(y, h, p.alpha)
    return Ew @ f


def solve_galerkin(u0, n_modes, K, p, g, dt, record_every=1):
    """Deterministic Galerkin flow on the span of the first ``n_modes`` Neumann modes.

    The nonlinear terms are formed on the grid nodes and projected back with
    the trapezoid rule; the Laplacian acts spectrally.  Classical RK4 in
    time, no renormalisation, no cutoff factors.  The L2 norm of the
    coefficient vector is a conserved quantity of the semi-discrete flow.
    """
    basis = grid_ops.neumann_eigenpairs(g, n_modes)
    E = grid_ops.basis_matrix(basis)
    Ew = E * g.weights
    lam = np.array([b.eigenvalue for b in basis])
    c = Ew @ grid_ops.as_field(u0, g)
    n_steps = n_steps_for(p.horizon, dt)

    def f(c, t):
        return galerkin_rhs(c, t, E, Ew, lam, K, p)

    times, coeffs = [0.0], [c.copy()]
    for k in range(n_steps):
        t = k * dt
        tm = t + 0.5 * dt
        k1 = f(c, tm)
        k2 = f(c + 0.5 * dt * k1, tm)
        k3 = f(c + 0.5 * dt * k2, tm)
        k4 = f(c + dt * k3, tm)
        c = c + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if (k + 1) % record_every == 0 or k + 1 == n_steps:
            times.append((k + 1) * dt)
            coeffs.append(c.copy())
    coeffs = np.array(coeffs)
    states = np.einsum("jn,rjc->rnc", E, coeffs)
    l2 = np.sqrt(np.sum(coeffs ** 2, axis=(1, 2)))
    return GalerkinRecord(np.array(times), coeffs, states, l2, basis)
