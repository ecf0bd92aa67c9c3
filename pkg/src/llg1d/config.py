"""Run configuration: a JSON tree with strict key checking.

Every section is optional except ``params``.  Parsing fills defaults and
returns a :class:`RunConfig` whose :meth:`RunConfig.to_dict` is the
normalised tree; parsing that tree again gives an equal config.

Example::

    {
      "grid": {"length": 1.0, "n_points": 11},
      "params": {"alpha": 1.0, "beta": 0.1, "eps": 0.0, "horizon": 7.0},
      "noise": {"mode": "three_directions",
                "directions": [[1, 0, 0], [0, 1, 0], [0, 0, 1]]},
      "initial": {"kind": "uniform", "vector": [-1, 0, 0]},
      "solver": {"dt": 0.001, "record_every": 100}
    }
"""
import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import grid_ops
from .det_solver import MINUS, PLUS, ControlPath
from .errors import InvalidArgument
from .ldp import EventSpec
from .model import AppliedFieldSchedule, NoiseModel, PhysicalParams
from .sde_solver import SCHEMES


class ConfigError(InvalidArgument):
    """Validation failure; the message starts with the offending field path."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


SECTIONS = ("grid", "params", "noise", "initial", "applied_field", "control", "solver",
            "event", "plan", "bounds", "diagnostics", "output")
REFERENCES = {"plus": PLUS, "minus": MINUS}


def _check_keys(d, allowed, where):
    if not isinstance(d, dict):
        raise ConfigError(where, f"expected an object, got {type(d).__name__}")
    for key in d:
        if key not in allowed:
            raise ConfigError(f"{where}.{key}" if where else key,
                              f"unknown key (allowed: {', '.join(allowed)})")


def _num(d, key, where, default=None, required=False, low=None, high=None,
         low_open=False, integer=False):
    path = f"{where}.{key}"
    if d.get(key) is None:
        if required:
            raise ConfigError(path, "required")
        return default
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(path, f"expected a number, got {v!r}")
    if integer:
        if isinstance(v, float) and not v.is_integer():
            raise ConfigError(path, f"expected an integer, got {v!r}")
        v = int(v)
    else:
        v = float(v)
        if not math.isfinite(v):
            raise ConfigError(path, f"must be finite, got {v!r}")
    if low is not None and (v <= low if low_open else v < low):
        raise ConfigError(path, f"must be {'>' if low_open else '>='} {low}, got {v!r}")
    if high is not None and v > high:
        raise ConfigError(path, f"must be <= {high}, got {v!r}")
    return v


def _vector(v, path, length=3):
    if (not isinstance(v, list) or len(v) != length
            or any(isinstance(x, bool) or not isinstance(x, (int, float)) for x in v)):
        raise ConfigError(path, f"expected a list of {length} numbers, got {v!r}")
    out = np.array(v, dtype=float)
    if not np.all(np.isfinite(out)):
        raise ConfigError(path, "entries must be finite")
    return out


def _matrix(v, path, cols=3):
    if not isinstance(v, list) or not v:
        raise ConfigError(path, "expected a nonempty list of rows")
    return np.array([_vector(row, f"{path}[{i}]", cols) for i, row in enumerate(v)])


def _step_function(d, where, width, horizon, cls):
    _check_keys(d, ("breakpoints", "values"), where)
    if "breakpoints" not in d or "values" not in d:
        raise ConfigError(where, "needs both breakpoints and values")
    b = d["breakpoints"]
    if not isinstance(b, list) or len(b) < 2:
        raise ConfigError(f"{where}.breakpoints", "expected at least two numbers")
    b = _vector(b, f"{where}.breakpoints", len(b))
    if np.any(np.diff(b) < 0):
        raise ConfigError(f"{where}.breakpoints", "must be nondecreasing")
    if b[0] < 0 or b[-1] > horizon * (1 + 1e-12):
        raise ConfigError(f"{where}.breakpoints", f"must lie in [0, horizon={horizon!r}]")
    vals = _matrix(d["values"], f"{where}.values", width)
    if len(vals) != len(b) - 1:
        raise ConfigError(f"{where}.values", f"expected {len(b) - 1} rows, got {len(vals)}")
    return cls(b, vals)


@dataclass
class RunConfig:
    grid: grid_ops.Grid1D
    params: PhysicalParams
    noise: Optional[NoiseModel]
    m0: np.ndarray
    applied_field: Optional[AppliedFieldSchedule]
    control: Optional[ControlPath]
    scheme: str
    dt: float
    seed: int
    n_paths: int
    record_every: int
    event: Optional[EventSpec]
    plan_delta: float
    xi: list
    eps_list: list
    exit_r: Optional[float]
    reference: Optional[np.ndarray]
    fit_decay: bool
    out_dir: str
    dump_states: bool
    plot: bool
    tree: dict

    def to_dict(self):
        """Normalised configuration tree (all defaults filled in)."""
        return json.loads(json.dumps(self.tree))

    def __eq__(self, other):
        return isinstance(other, RunConfig) and self.tree == other.tree


def _parse_noise(d, g):
    if d is None:
        return None, None
    _check_keys(d, ("mode", "directions", "vector", "profile", "channels"), "noise")
    mode = d.get("mode")
    if mode == NoiseModel.THREE_DIRECTIONS:
        if "directions" not in d:
            raise ConfigError("noise.directions", "required for three_directions")
        for key in ("vector", "profile"):
            if key in d:
                raise ConfigError(f"noise.{key}", "only valid for scalar_profile")
        A = _matrix(d["directions"], "noise.directions")
        if A.shape != (3, 3):
            raise ConfigError("noise.directions", "expected exactly three 3-vectors")
        try:
            noise = NoiseModel.three_directions(A)
        except InvalidArgument as exc:
            raise ConfigError("noise.directions", str(exc)) from None
        tree = {"mode": mode, "directions": A.tolist()}
    elif mode == NoiseModel.SCALAR_PROFILE:
        if "directions" in d:
            raise ConfigError("noise.directions", "only valid for three_directions")
        if ("vector" in d) == ("profile" in d):
            raise ConfigError("noise", "scalar_profile needs exactly one of vector or profile")
        if "vector" in d:
            v = _vector(d["vector"], "noise.vector")
            noise = NoiseModel.single_direction(v, g)
            tree = {"mode": mode, "vector": v.tolist()}
        else:
            h = _matrix(d["profile"], "noise.profile")
            if len(h) != g.n_points:
                raise ConfigError("noise.profile", f"expected {g.n_points} rows (one per node)")
            noise = NoiseModel.scalar_profile(h)
            tree = {"mode": mode, "profile": h.tolist()}
    else:
        raise ConfigError("noise.mode", f"expected one of {NoiseModel.SCALAR_PROFILE!r}, "
                                        f"{NoiseModel.THREE_DIRECTIONS!r}, got {mode!r}")
    if "channels" in d:
        ch = _num(d, "channels", "noise", integer=True)
        if ch != noise.n_channels:
            raise ConfigError("noise.channels",
                              f"{mode} drives {noise.n_channels} Brownian channel(s), got {ch}")
    tree["channels"] = noise.n_channels
    return noise, tree


def _parse_initial(d, g):
    d = {"kind": "uniform", "vector": MINUS.tolist()} if d is None else d
    kind = d.get("kind", "uniform") if isinstance(d, dict) else None
    allowed = {
        "uniform": ("kind", "vector"),
        "perturbed": ("kind", "base", "direction", "amplitude", "mode"),
        "values": ("kind", "values"),
    }
    if kind not in allowed:
        raise ConfigError("initial.kind", f"expected one of {sorted(allowed)}, got {kind!r}")
    _check_keys(d, allowed[kind], "initial")
    if kind == "uniform":
        v = _vector(d.get("vector", MINUS.tolist()), "initial.vector")
        if np.linalg.norm(v) == 0:
            raise ConfigError("initial.vector", "must be nonzero")
        m0 = grid_ops.normalize(grid_ops.uniform_field(v, g))
        tree = {"kind": kind, "vector": v.tolist()}
    elif kind == "perturbed":
        base = _vector(d.get("base", MINUS.tolist()), "initial.base")
        direction = _vector(d.get("direction", [0.0, 1.0, 0.0]), "initial.direction")
        amp = _num(d, "amplitude", "initial", default=0.1)
        mode = _num(d, "mode", "initial", default=1, low=0, integer=True)
        raw = base + amp * np.cos(mode * np.pi * g.nodes / g.length)[:, None] * direction
        if np.min(np.linalg.norm(raw, axis=1)) < 1e-8:
            raise ConfigError("initial", "perturbed field vanishes at a node")
        m0 = grid_ops.normalize(raw)
        tree = {"kind": kind, "base": base.tolist(), "direction": direction.tolist(),
                "amplitude": amp, "mode": mode}
    else:
        vals = _matrix(d.get("values"), "initial.values")
        if len(vals) != g.n_points:
            raise ConfigError("initial.values", f"expected {g.n_points} rows (one per node)")
        if not grid_ops.is_saturated(vals, 1e-8):
            raise ConfigError("initial.values", "every node must have unit length")
        m0 = grid_ops.normalize(vals)
        tree = {"kind": kind, "values": vals.tolist()}
    return m0, tree


def parse_config(data):
    """Validate a configuration tree and build the run objects."""
    _check_keys(data, SECTIONS, "")
    tree = {}

    gd = data.get("grid", {})
    _check_keys(gd, ("length", "n_points"), "grid")
    length = _num(gd, "length", "grid", default=1.0, low=0, low_open=True)
    n_points = _num(gd, "n_points", "grid", default=21, low=3, integer=True)
    g = grid_ops.make_grid(length, n_points)
    tree["grid"] = {"length": length, "n_points": n_points}

    if "params" not in data:
        raise ConfigError("params", "required")
    pd = data["params"]
    _check_keys(pd, ("alpha", "beta", "eps", "horizon"), "params")
    alpha = _num(pd, "alpha", "params", required=True, low=0, low_open=True)
    beta = _num(pd, "beta", "params", default=0.0, low=0)
    eps = _num(pd, "eps", "params", default=0.0, low=0, high=1)
    horizon = _num(pd, "horizon", "params", default=1.0, low=0, low_open=True)
    params = PhysicalParams(alpha, beta, eps, horizon)
    tree["params"] = {"alpha": alpha, "beta": beta, "eps": eps, "horizon": horizon}

    noise, tree["noise"] = _parse_noise(data.get("noise"), g)
    m0, tree["initial"] = _parse_initial(data.get("initial"), g)

    K = None
    if data.get("applied_field") is not None:
        K = _step_function(data["applied_field"], "applied_field", 3, horizon,
                           AppliedFieldSchedule)
    tree["applied_field"] = None if K is None else K.to_dict()
    psi = None
    if data.get("control") is not None:
        if noise is None:
            raise ConfigError("control", "a control needs a noise model to act through")
        psi = _step_function(data["control"], "control", noise.n_channels, horizon,
                             lambda b, v: ControlPath(b, v, noise.n_channels))
    tree["control"] = None if psi is None else psi.to_dict()

    sd = data.get("solver", {})
    _check_keys(sd, ("scheme", "dt", "seed", "n_paths", "record_every"), "solver")
    scheme = sd.get("scheme", SCHEMES[0])
    if scheme not in SCHEMES:
        raise ConfigError("solver.scheme", f"expected one of {SCHEMES}, got {scheme!r}")
    dt = _num(sd, "dt", "solver", default=1e-3, low=0, low_open=True)
    n = round(horizon / dt)
    if n < 1 or abs(n * dt - horizon) > 1e-9 * max(horizon, 1.0):
        raise ConfigError("solver.dt", f"must divide params.horizon={horizon!r}, got {dt!r}")
    seed = _num(sd, "seed", "solver", default=0, low=0, high=2 ** 64 - 1, integer=True)
    n_paths = _num(sd, "n_paths", "solver", default=1, low=1, integer=True)
    record_every = _num(sd, "record_every", "solver", default=1, low=1, integer=True)
    tree["solver"] = {"scheme": scheme, "dt": dt, "seed": seed, "n_paths": n_paths,
                      "record_every": record_every}

    event = None
    if data.get("event") is not None:
        ed = data["event"]
        _check_keys(ed, ("kind", "delta", "rho"), "event")
        kind = ed.get("kind")
        if kind == "reversal":
            if "rho" in ed:
                raise ConfigError("event.rho", "only valid for exit events")
            event = EventSpec("reversal", delta=_num(ed, "delta", "event", required=True,
                                                      low=0, low_open=True))
            tree["event"] = {"kind": kind, "delta": event.delta}
        elif kind == "exit":
            if "delta" in ed:
                raise ConfigError("event.delta", "only valid for reversal events")
            event = EventSpec("exit", rho=_num(ed, "rho", "event", required=True,
                                                low=0, low_open=True))
            tree["event"] = {"kind": kind, "rho": event.rho}
        else:
            raise ConfigError("event.kind", f"expected 'reversal' or 'exit', got {kind!r}")
    else:
        tree["event"] = None

    pl = data.get("plan", {})
    _check_keys(pl, ("delta",), "plan")
    plan_delta = _num(pl, "delta", "plan", default=0.1, low=0, low_open=True)
    tree["plan"] = {"delta": plan_delta}

    bd = data.get("bounds", {})
    _check_keys(bd, ("xi", "eps", "r"), "bounds")
    xi = _list_of_numbers(bd, "xi", "bounds", [0.1], positive=True)
    eps_list = _list_of_numbers(bd, "eps", "bounds", [0.1, 0.01], positive=True, high=1.0)
    exit_r = _num(bd, "r", "bounds", default=None, low=0, low_open=True)
    tree["bounds"] = {"xi": xi, "eps": eps_list, "r": exit_r}

    dd = data.get("diagnostics", {})
    _check_keys(dd, ("reference", "fit_decay"), "diagnostics")
    ref_raw = dd.get("reference")
    if ref_raw is None:
        reference = None
    elif isinstance(ref_raw, str):
        if ref_raw not in REFERENCES:
            raise ConfigError("diagnostics.reference", f"expected 'plus', 'minus' or a 3-vector")
        reference = REFERENCES[ref_raw]
    else:
        reference = _vector(ref_raw, "diagnostics.reference")
        ref_raw = reference.tolist()
    fit_decay = _bool(dd, "fit_decay", "diagnostics", False)
    if fit_decay and reference is None:
        raise ConfigError("diagnostics.fit_decay", "needs diagnostics.reference")
    tree["diagnostics"] = {"reference": ref_raw, "fit_decay": fit_decay}

    od = data.get("output", {})
    _check_keys(od, ("dir", "dump_states", "plot"), "output")
    out_dir = od.get("dir", "out")
    if not isinstance(out_dir, str) or not out_dir:
        raise ConfigError("output.dir", "expected a nonempty string")
    dump = _bool(od, "dump_states", "output", False)
    plot = _bool(od, "plot", "output", False)
    tree["output"] = {"dir": out_dir, "dump_states": dump, "plot": plot}

    return RunConfig(g, params, noise, m0, K, psi, scheme, dt, seed, n_paths, record_every,
                     event, plan_delta, xi, eps_list, exit_r, reference, fit_decay,
                     out_dir, dump, plot, tree)


def _bool(d, key, where, default):
    v = d.get(key, default)
    if not isinstance(v, bool):
        raise ConfigError(f"{where}.{key}", f"expected true or false, got {v!r}")
    return v


def _list_of_numbers(d, key, where, default, positive=False, high=None):
    v = d.get(key, default)
    path = f"{where}.{key}"
    if not isinstance(v, list) or not v:
        raise ConfigError(path, "expected a nonempty list of numbers")
    out = []
    for i, x in enumerate(v):
        out.append(_num({key: x}, key, where, low=0 if positive else None,
                        low_open=positive, high=high))
    return out


def load_config(path, overrides=None):
    """Read a JSON config file, apply ``overrides`` ({section: {key: value}}) and parse."""
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}", exc.msg) from None
    except OSError as exc:
        raise ConfigError(str(path), exc.strerror or str(exc)) from None
    for section, values in (overrides or {}).items():
        data.setdefault(section, {})
        if not isinstance(data[section], dict):
            raise ConfigError(section, "expected an object")
        data[section].update(values)
    return parse_config(data)


def dump_config(cfg, path):
    with open(path, "w", newline="") as fh:
        json.dump(cfg.to_dict(), fh, indent=2)
        fh.write("\n")
