"""Small-noise large-deviation tools for the needle model.

* waypoint and applied-field construction that steers the deterministic
  flow from (-1, 0, 0) to (1, 0, 0) in finite time, and the control that
  realises that field through the noise directions;
* control costs ``1/2 int |psi|^2`` used as witnesses for upper bounds on
  the rate function;
* the exponential lower bound on the reversal probability and the upper
  bound on the probability of leaving a small ball around (-1, 0, 0);
* Monte-Carlo estimates of those event probabilities with Wilson intervals.
"""
import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from . import det_solver, grid_ops, sde_solver
from .det_solver import MINUS, PLUS, ControlPath
from .errors import InvalidArgument, InvalidNoiseModel
from .model import AppliedFieldSchedule, NoiseModel

#: relative slack demanded of the waypoint chord against the H1 gap ``1/k``
WAYPOINT_SLACK = 0.10
R_GRID_FACTOR = 1.05
R_SAFETY = 1.1


@dataclass(frozen=True)
class Waypoints:
    points: np.ndarray  # (N + 1, 3)
    eta: float
    k: float
    length: float

    @property
    def n_segments(self):
        return len(self.points) - 1

    def h1_gaps(self):
        """``|u^i - u^{i+1}|_{H1}`` of the constant fields, i.e. chord * sqrt(l)."""
        chords = np.linalg.norm(np.diff(self.points, axis=0), axis=1)
        return chords * math.sqrt(self.length)


def build_waypoints(delta, g):
    """Great-circle points ``u^i = (-cos(i pi/N), sin(i pi/N), 0)`` from -e1 to e1.

    ``N`` is the least integer with ``chord * sqrt(l) <= (1 - slack) / k``,
    chord = ``2 sin(pi / 2N)``.  ``eta = min_i(1/k - gap_i) ^ delta/2``.
    """
    if not delta > 0:
        raise InvalidArgument(f"delta must be positive, got {delta!r}")
    k = grid_ops.embedding_constant_k(g.length)
    limit = (1.0 - WAYPOINT_SLACK) / k / math.sqrt(g.length)
    n = 1
    while 2.0 * math.sin(math.pi / (2 * n)) > limit:
        n += 1
    ang = np.arange(n + 1) * math.pi / n
    pts = np.column_stack((-np.cos(ang), np.sin(ang), np.zeros(n + 1)))
    pts[0] = MINUS
    pts[-1] = PLUS
    w = Waypoints(pts, 0.0, k, g.length)
    eta = min(float(np.min(1.0 / k - w.h1_gaps())), delta / 2.0)
    return Waypoints(pts, eta, k, g.length)


def _reversal_condition(R, k, eta, seg_time, p):
    gamma = det_solver.decay_rate_gamma(p, R)
    return (gamma > 0 and R > det_solver.field_threshold(p)
            and math.exp(-0.5 * gamma * seg_time) / k < eta)


def choose_R(w, T, p):
    """Field magnitude that carries the flow between successive waypoints in ``T/N``.

    The least admissible ``R`` (satisfying the exponential-contraction
    inequality and exceeding the field threshold) is bracketed on a
    geometric grid of ratio 1.05, refined by bisection and multiplied by
    the 1.1 safety factor.
    """
    if not T > 0:
        raise InvalidArgument(f"T must be positive, got {T!r}")
    seg_time = T / w.n_segments

    def ok(R):
        return _reversal_condition(R, w.k, w.eta, seg_time, p)

    lo = max(det_solver.field_threshold(p), 0.0)
    hi = max(lo, 1e-3)
    while not ok(hi):
        lo, hi = hi, hi * R_GRID_FACTOR
    # condition is monotone in R: bisect the bracket down to rounding
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi * R_SAFETY


@dataclass(frozen=True)
class ReversalPlan:
    waypoints: Waypoints
    R: float
    schedule: AppliedFieldSchedule
    control: ControlPath
    cost: float
    delta: float
    horizon: float
    noise: NoiseModel

    def to_dict(self):
        return {
            "delta": self.delta,
            "horizon": self.horizon,
            "R": self.R,
            "eta": self.waypoints.eta,
            "k": self.waypoints.k,
            "length": self.waypoints.length,
            "waypoints": self.waypoints.points.tolist(),
            "directions": self.noise.directions.tolist(),
            "schedule": self.schedule.to_dict(),
            "control": self.control.to_dict(),
            "cost": self.cost,
        }

    @classmethod
    def from_dict(cls, d):
        w = Waypoints(np.array(d["waypoints"], dtype=float), float(d["eta"]),
                      float(d["k"]), float(d["length"]))
        return cls(
            waypoints=w,
            R=float(d["R"]),
            schedule=AppliedFieldSchedule(d["schedule"]["breakpoints"], d["schedule"]["values"]),
            control=ControlPath(d["control"]["breakpoints"], d["control"]["values"]),
            cost=float(d["cost"]),
            delta=float(d["delta"]),
            horizon=float(d["horizon"]),
            noise=NoiseModel.three_directions(d["directions"]),
        )

    def reconstruction_error(self):
        """``max |sum_j phi_j a^j - K|`` over segments."""
        K = self.control.segment_values @ self.noise.directions
        return float(np.max(np.abs(K - self.schedule.segment_values)))


def build_reversal_plan(delta, T, p, noise, g):
    """Piecewise-constant field driving (-1,0,0) to within ``delta`` of (1,0,0) by ``T``.

    Segment ``i`` of the field, on ``(iT/N, (i+1)T/N]``, is
    ``R u^{i+1} + beta (0, u2^{i+1}, u3^{i+1})``; the control ``phi``
    solves ``[a^1 a^2 a^3] phi = K`` segment by segment.
    """
    if noise.mode != NoiseModel.THREE_DIRECTIONS:
        raise InvalidNoiseModel("reversal plans need three_directions noise")
    A = noise.directions  # rows a^i
    if abs(np.linalg.det(A)) < 1e-12:
        raise InvalidNoiseModel("noise directions are singular")
    w = build_waypoints(delta, g)
    R = choose_R(w, T, p)
    targets = w.points[1:]
    K = R * targets + p.beta * np.column_stack((np.zeros(len(targets)), targets[:, 1], targets[:, 2]))
    bps = np.arange(w.n_segments + 1) * (T / w.n_segments)
    bps[-1] = T
    phi = np.linalg.solve(A.T, K.T).T
    schedule = AppliedFieldSchedule(bps, K)
    control = ControlPath(bps, phi)
    return ReversalPlan(w, R, schedule, control, control.cost(), float(delta), float(T), noise)


def control_cost(psi):
    return psi.cost()


class WitnessResult(NamedTuple):
    cost: float
    achieved: bool
    terminal_distance: float
    trajectory: det_solver.TrajectoryRecord


def reversal_target(delta):
    """Event: terminal state inside the open H1 ball of radius ``delta`` around (1,0,0)."""
    def check(traj):
        return grid_ops.h1_distance(traj.final_state, PLUS, traj.grid) < delta
    check.reference = PLUS
    return check


def stay_target(center, radius):
    """Event: the whole trajectory stays within ``radius`` of ``center`` in H1."""
    center = np.asarray(center, dtype=float)

    def check(traj):
        return bool(np.all(traj.distances_to(center) <= radius))
    check.reference = center
    return check


def rate_upper_bound(target_check, psi, m0, p, noise, g, dt, K=None, record_every=1):
    """Run the skeleton flow under ``psi``; its cost bounds the rate if the event occurs.

    ``target_check`` is evaluated on the stored trajectory record.
    """
    cost = psi.cost()
    if not math.isfinite(cost):
        raise InvalidArgument("control cost must be finite")
    traj = det_solver.solve_deterministic(m0, psi, K, p, noise, g, dt, record_every)
    achieved = bool(target_check(traj))
    ref = getattr(target_check, "reference", PLUS)
    dist = grid_ops.h1_distance(traj.final_state, ref, g)
    return WitnessResult(cost, achieved, float(dist), traj)


def lower_bound_probability(cost, xi, eps):
    """``exp(-(cost + xi) / eps)``, clamped to (0, 1]."""
    if cost < 0 or not xi > 0 or not eps > 0:
        raise InvalidArgument("need cost >= 0, xi > 0 and eps > 0")
    val = math.exp(-(cost + xi) / eps)
    return min(max(val, math.ulp(0.0)), 1.0)


def exit_rate_coefficient(r, p, noise, g):
    """``alpha beta r^2 / (8 max|a^i|^2 l (1 + alpha^2))``."""
    a2 = noise.max_direction_norm_sq()
    return p.alpha * p.beta * r * r / (8.0 * a2 * g.length * (1.0 + p.alpha ** 2))


def upper_bound_probability(r, rho, xi, eps, p, noise, g):
    """Upper bound on ``P(sup_t |Y(t) - (-1,0,0)|_{H1} >= rho)``, clamped to 1."""
    if noise.mode != NoiseModel.THREE_DIRECTIONS:
        raise InvalidNoiseModel("the exit bound needs three_directions noise")
    if not eps > 0:
        raise InvalidArgument("eps must be positive")
    radius = det_solver.stability_radius(p, g)
    if not 0 < r < rho or rho > radius:
        raise InvalidArgument(
            f"need 0 < r < rho <= {radius:.6g}, got r={r!r}, rho={rho!r}")
    exponent = (-exit_rate_coefficient(r, p, noise, g) + xi) / eps
    return 1.0 if exponent >= 0 else math.exp(exponent)


def wilson_interval(successes, n, z=1.959963984540054):
    if n <= 0:
        raise InvalidArgument("n must be positive")
    phat = successes / n
    denom = 1.0 + z * z / n
    centre = (phat + z * z / (2 * n)) / denom
    half = z * math.sqrt(phat * (1 - phat) / n + z * z / (4 * n * n)) / denom
    # the score interval touches the boundary exactly at 0 and n successes
    lo = 0.0 if successes == 0 else max(0.0, centre - half)
    hi = 1.0 if successes == n else min(1.0, centre + half)
    return lo, hi


@dataclass(frozen=True)
class EventSpec:
    kind: str  # "reversal" or "exit"
    delta: Optional[float] = None
    rho: Optional[float] = None

    def __post_init__(self):
        if self.kind == "reversal":
            if self.delta is None or not self.delta > 0:
                raise InvalidArgument("reversal events need delta > 0")
        elif self.kind == "exit":
            if self.rho is None or not self.rho > 0:
                raise InvalidArgument("exit events need rho > 0")
        else:
            raise InvalidArgument(f"unknown event kind {self.kind!r}")


@dataclass
class EventEstimate:
    p_hat: float
    wilson_95: tuple
    n_hits: int
    n_paths: int
    n_failures: int
    degraded: bool
    summaries: Optional[list] = None  # per-path summaries of stochastic runs


def estimate_event_probability(cfg, m0, g, event, n_paths, base_seed, workers=None):
    """Monte-Carlo frequency of ``event`` over an ensemble, with a 95% Wilson interval.

    With ``cfg.params.eps == 0`` the single deterministic path is evaluated
    and replicated.  Failed paths count as non-events; more than 1% failures
    flags the estimate as degraded.
    """
    if n_paths < 100:
        raise InvalidArgument("n_paths must be >= 100")
    delta = event.delta if event.kind == "reversal" else 0.1
    if cfg.params.eps == 0:
        traj = det_solver.solve_deterministic(
            m0, cfg.control, cfg.applied_field, cfg.params, cfg.noise, g, cfg.dt)
        if event.kind == "reversal":
            hit = grid_ops.h1_distance(traj.final_state, PLUS, g) < event.delta
        else:
            hit = bool(np.max(traj.distances_to(m0)) >= event.rho)
        hits, failures, summaries = (n_paths if hit else 0), 0, None
    else:
        ens = sde_solver.simulate_ensemble(cfg, m0, g, n_paths, base_seed, delta, workers)
        if event.kind == "reversal":
            hits = sum(s.reversed for s in ens.summaries)
        else:
            hits = sum((not s.failed) and s.max_excursion >= event.rho for s in ens.summaries)
        failures, summaries = ens.n_failures, ens.summaries
    degraded = failures > 0.01 * n_paths
    if degraded:
        warnings.warn(f"estimation degraded: {failures} of {n_paths} paths failed")
    return EventEstimate(hits / n_paths, wilson_interval(hits, n_paths), int(hits),
                         int(n_paths), int(failures), degraded, summaries)
