"""Delimited and structured-text persistence for trajectories, summaries and plans."""
import csv
import json
import os

import numpy as np

CSV_HEADER = ("path_id", "t", "l2", "h1", "linf", "energy", "sphere_residual",
              "dist_h1_plus", "dist_h1_minus")
STATE_HEADER = ("path_id", "t", "node", "x", "m1", "m2", "m3")


def fmt(x):
    """Shortest round-trip representation; never locale dependent."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def trajectory_rows(path_id, traj):
    d = traj.diagnostics
    for i, t in enumerate(traj.times):
        yield (path_id, t) + tuple(d[key][i] for key in CSV_HEADER[2:])


def write_trajectory_csv(path, trajectories):
    """``trajectories`` is an iterable of ``(path_id, TrajectoryRecord)`` in path order."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for pid, traj in trajectories:
            for row in trajectory_rows(pid, traj):
                w.writerow([fmt(v) for v in row])


def write_states_csv(path, trajectories):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(STATE_HEADER)
        for pid, traj in trajectories:
            x = traj.grid.nodes
            for t, state in zip(traj.times, traj.states):
                for j, v in enumerate(state):
                    w.writerow([fmt(pid), fmt(t), fmt(j), fmt(x[j]), fmt(v[0]), fmt(v[1]), fmt(v[2])])


def read_trajectory_csv(path):
    """Return a dict of column arrays; ``path_id`` as ints, the rest as floats."""
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        if tuple(header) != CSV_HEADER:
            raise ValueError(f"unexpected header {header}")
        rows = list(r)
    cols = {name: [] for name in CSV_HEADER}
    for row in rows:
        for name, val in zip(CSV_HEADER, row):
            cols[name].append(val)
    out = {"path_id": np.array([int(v) for v in cols["path_id"]], dtype=int)}
    for name in CSV_HEADER[1:]:
        out[name] = np.array([float(v) for v in cols[name]])
    return out


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else None
    return obj


def write_json(path, data):
    with open(path, "w", newline="") as fh:
        json.dump(_jsonable(data), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path
