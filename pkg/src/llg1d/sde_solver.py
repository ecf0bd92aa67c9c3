"""Stochastic integration of the Landau-Lifshitz equation with field noise.

Two independent schemes target the same Stratonovich dynamics

    dm = b(m, t) dt + sqrt(eps) sum_i sigma_i(m) o dW_i :

* ``heun_stratonovich`` -- stochastic Heun; averaging ``sigma`` over the
  predictor and the start point discretises the Stratonovich integral, so
  no correction drift is added;
* ``euler_ito_corrected`` -- Euler-Maruyama applied to the Ito form, whose
  drift carries ``eps * ito_correction(m)``.

Both renormalise every node after each step.  Paths are driven by
:class:`BrownianDriver` streams derived from a seed and a path index with
``numpy.random.SeedSequence`` spawn keys, so any path can be regenerated on
its own and ensemble results do not depend on how paths are scheduled.
"""
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from . import det_solver, grid_ops, model
from .det_solver import MINUS, PLUS, ControlPath, TrajectoryRecord
from .errors import InvalidArgument, StepFailure
from .model import AppliedFieldSchedule, NoiseModel, PhysicalParams

SCHEMES = ("heun_stratonovich", "euler_ito_corrected")
THREADS_ENV = "LLG1D_THREADS"
CHUNK_SIZE = 64


def seed_sequence(seed, stream=None):
    """Counter-based split: ``stream`` is the spawn key under ``seed``."""
    if stream is None:
        return np.random.SeedSequence(int(seed))
    return np.random.SeedSequence(int(seed), spawn_key=(int(stream),))


@dataclass(frozen=True)
class BrownianDriver:
    """I.i.d. N(0, dt) increments for ``n_channels`` independent Wiener processes."""

    seed: int
    n_channels: int
    dt: float
    n_steps: int
    stream: Optional[int] = None

    def __post_init__(self):
        if self.n_channels not in (1, 3):
            raise InvalidArgument(f"n_channels must be 1 or 3, got {self.n_channels!r}")
        if not self.dt > 0:
            raise InvalidArgument(f"dt must be positive, got {self.dt!r}")
        if self.n_steps < 1:
            raise InvalidArgument("n_steps must be >= 1")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise InvalidArgument("seed must be an unsigned 64-bit integer")

    def increments(self):
        """Array of shape ``(n_steps, n_channels)``."""
        rng = np.random.Generator(np.random.Philox(seed_sequence(self.seed, self.stream)))
        return np.sqrt(self.dt) * rng.standard_normal((self.n_steps, self.n_channels))


def coarsen(dW, factor):
    """Sum consecutive blocks of ``factor`` increments (same Brownian path, coarser dt)."""
    dW = np.asarray(dW)
    n = dW.shape[-2]
    if n % factor:
        raise InvalidArgument("factor must divide the number of increments")
    return dW.reshape(dW.shape[:-2] + (n // factor, factor, dW.shape[-1])).sum(axis=-2)


@dataclass(frozen=True)
class SdeRunConfig:
    scheme: str
    params: PhysicalParams
    noise: NoiseModel
    dt: float
    seed: int = 0
    control: Optional[ControlPath] = None
    applied_field: Optional[AppliedFieldSchedule] = None
    record_every: int = 1
    stream: Optional[int] = None
    #: multiplies the correction drift of the Ito scheme; 0 is a negative-control hook
    ito_scale: float = 1.0

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise InvalidArgument(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if not self.dt > 0:
            raise InvalidArgument(f"dt must be positive, got {self.dt!r}")
        if self.record_every < 1:
            raise InvalidArgument("record_every must be >= 1")
        if self.control is not None and self.control.width != self.noise.n_channels:
            raise InvalidArgument("control width does not match the number of noise channels")

    @property
    def n_steps(self):
        return det_solver.n_steps_for(self.params.horizon, self.dt)

    def driver(self):
        return BrownianDriver(self.seed, self.noise.n_channels, self.dt, self.n_steps, self.stream)


def _drift(m, t, cfg, g):
    return det_solver.rhs_skeleton(m, t, cfg.control, cfg.applied_field, cfg.params, cfg.noise, g)


def _noise_term(sig, dW):
    # sig: (C, ..., n, 3); dW: (..., C)
    w = np.moveaxis(np.asarray(dW, dtype=float), -1, 0)[..., None, None]
    return (sig * w).sum(axis=0)


def _finish(m_new, m_old, t, batched):
    r = grid_ops.node_norms(m_new)
    ok = np.all(r >= det_solver.COLLAPSE_THRESHOLD, axis=-1) & np.all(np.isfinite(r), axis=-1)
    if not batched:
        if not ok:
            raise StepFailure(t)
        return m_new / r[..., None], ok
    # freeze failed paths at their last good state
    r_safe = np.where(ok[:, None], r, 1.0)
    out = m_new / r_safe[..., None]
    out[~ok] = m_old[~ok]
    return out, ok


def heun_stratonovich_step(m, t, dt, dW, cfg, g, _batched=False):
    """Stochastic Heun step (Stratonovich), then renormalisation."""
    tm = t + 0.5 * dt
    eps = cfg.params.eps
    alpha = cfg.params.alpha
    b0 = _drift(m, tm, cfg, g)
    if eps == 0:
        pred = m + dt * b0
        new = m + 0.5 * dt * (b0 + _drift(pred, tm, cfg, g))
    else:
        s = np.sqrt(eps)
        sig0 = model.diffusion_channels(m, cfg.noise, alpha)
        pred = m + dt * b0 + s * _noise_term(sig0, dW)
        b1 = _drift(pred, tm, cfg, g)
        sig1 = model.diffusion_channels(pred, cfg.noise, alpha)
        new = m + 0.5 * dt * (b0 + b1) + 0.5 * s * _noise_term(sig0 + sig1, dW)
    out, ok = _finish(new, m, t, _batched)
    return (out, ok) if _batched else out


def euler_ito_corrected_step(m, t, dt, dW, cfg, g, _batched=False):
    """Euler-Maruyama step of the Ito form, then renormalisation."""
    tm = t + 0.5 * dt
    eps = cfg.params.eps
    alpha = cfg.params.alpha
    b0 = _drift(m, tm, cfg, g)
    if eps == 0:
        new = m + dt * b0
    else:
        corr = model.ito_correction(m, cfg.noise, alpha)
        sig = model.diffusion_channels(m, cfg.noise, alpha)
        new = (m + dt * (b0 + (eps * cfg.ito_scale) * corr)
               + np.sqrt(eps) * _noise_term(sig, dW))
    out, ok = _finish(new, m, t, _batched)
    return (out, ok) if _batched else out


STEPPERS = {
    "heun_stratonovich": heun_stratonovich_step,
    "euler_ito_corrected": euler_ito_corrected_step,
}


def simulate_path(cfg, m0, g, reference=None, increments=None):
    """One stochastic trajectory with diagnostics every ``cfg.record_every`` steps.

    ``increments`` overrides the driver (used by convergence studies that
    share one Brownian path across step sizes).
    """
    m = grid_ops.as_field(m0, g).copy()
    grid_ops.require_saturated(m, name="m0")
    cfg.noise.check_grid(g)
    n_steps = cfg.n_steps
    dW = cfg.driver().increments() if increments is None else np.asarray(increments)
    if dW.shape != (n_steps, cfg.noise.n_channels):
        raise InvalidArgument(
            f"increments have shape {dW.shape}, expected ({n_steps}, {cfg.noise.n_channels})")
    step = STEPPERS[cfg.scheme]
    K, p = cfg.applied_field, cfg.params
    times = [0.0]
    states = [m.copy()]
    rows = [det_solver.diagnostics(m, det_solver._field_at(K, 0.0), p, g, reference)]
    for k in range(n_steps):
        t = k * cfg.dt
        try:
            m = step(m, t, cfg.dt, dW[k], cfg, g)
        except StepFailure as exc:
            raise StepFailure(exc.t, seed=cfg.seed) from None
        if (k + 1) % cfg.record_every == 0 or k + 1 == n_steps:
            t_new = (k + 1) * cfg.dt
            times.append(t_new)
            states.append(m.copy())
            rows.append(det_solver.diagnostics(m, det_solver._field_at(K, t_new), p, g, reference))
    diag = {key: np.array([r[key] for r in rows]) for key in det_solver.DIAGNOSTIC_KEYS}
    meta = {"scheme": cfg.scheme, "seed": cfg.seed, "stream": cfg.stream}
    return TrajectoryRecord(np.array(times), np.array(states), diag, g, False, meta)


def terminal_states(cfg, m0, g, increments):
    """Advance a batch of paths; returns final states, ok-mask and failure times.

    ``increments`` has shape ``(n_paths, n_steps, n_channels)``.
    """
    m0 = grid_ops.as_field(m0, g)
    n_paths = increments.shape[0]
    m = np.broadcast_to(m0, (n_paths,) + m0.shape).copy()
    step = STEPPERS[cfg.scheme]
    alive = np.ones(n_paths, dtype=bool)
    fail_t = np.full(n_paths, np.nan)
    max_exc = np.zeros(n_paths)
    for k in range(increments.shape[1]):
        m, ok = step(m, k * cfg.dt, cfg.dt, increments[:, k, :], cfg, g, _batched=True)
        newly = alive & ~ok
        fail_t[newly] = k * cfg.dt
        alive &= ok
        exc = grid_ops.norms(m - m0, g).h1
        max_exc = np.where(alive, np.maximum(max_exc, exc), max_exc)
    return m, alive, fail_t, max_exc


@dataclass(frozen=True)
class PathSummary:
    path_id: int
    dist_h1_plus: float
    dist_h1_minus: float
    max_excursion: float
    reversed: bool
    failed: bool
    failure_time: Optional[float]  # None unless the path failed


@dataclass
class EnsembleResult:
    summaries: list
    base_seed: int
    delta: float

    @property
    def n_failures(self):
        return sum(s.failed for s in self.summaries)

    @property
    def n_paths(self):
        return len(self.summaries)


def worker_count(requested=None):
    if requested is None:
        raw = os.environ.get(THREADS_ENV, "").strip() or "0"
        try:
            requested = int(raw)
        except ValueError:
            raise InvalidArgument(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if requested < 0:
        raise InvalidArgument(f"{THREADS_ENV} must be >= 0")
    return requested if requested > 0 else (os.cpu_count() or 1)


def _run_chunk(cfg, m0, g, base_seed, ids, delta):
    n_steps = cfg.n_steps
    dW = np.stack([BrownianDriver(base_seed, cfg.noise.n_channels, cfg.dt, n_steps, i).increments()
                   for i in ids])
    m, alive, fail_t, max_exc = terminal_states(cfg, m0, g, dW)
    d_plus = grid_ops.norms(m - PLUS, g).h1
    d_minus = grid_ops.norms(m - MINUS, g).h1
    out = []
    for j, i in enumerate(ids):
        failed = not alive[j]
        out.append(PathSummary(
            path_id=int(i),
            dist_h1_plus=float(d_plus[j]),
            dist_h1_minus=float(d_minus[j]),
            max_excursion=float(max_exc[j]),
            reversed=bool(not failed and d_plus[j] < delta),
            failed=failed,
            failure_time=float(fail_t[j]) if failed else None,
        ))
    return out


def simulate_ensemble(cfg, m0, g, n_paths, base_seed, delta=0.1, workers=None):
    """Terminal summaries of ``n_paths`` independent paths.

    Path ``i`` is driven by stream ``i`` under ``base_seed``.  Paths are
    grouped in fixed-size chunks; chunks run on a thread pool whose size
    comes from ``workers`` or the ``LLG1D_THREADS`` environment variable.
    Per-path step failures are recorded, not raised.
    """
    if n_paths < 1:
        raise InvalidArgument("n_paths must be >= 1")
    grid_ops.require_saturated(grid_ops.as_field(m0, g), name="m0")
    cfg.noise.check_grid(g)
    ids = np.arange(n_paths)
    chunks = [ids[i:i + CHUNK_SIZE] for i in range(0, n_paths, CHUNK_SIZE)]
    n_workers = min(worker_count(workers), len(chunks))
    if n_workers == 1:
        parts = [_run_chunk(cfg, m0, g, base_seed, c, delta) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            parts = list(pool.map(lambda c: _run_chunk(cfg, m0, g, base_seed, c, delta), chunks))
    summaries = [s for part in parts for s in part]
    return EnsembleResult(summaries, int(base_seed), float(delta))


def path_config(cfg, base_seed, path_id):
    """Config that reproduces ensemble path ``path_id`` via :func:`simulate_path`."""
    return replace(cfg, seed=int(base_seed), stream=int(path_id))
