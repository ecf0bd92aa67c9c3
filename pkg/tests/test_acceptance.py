"""Acceptance suite: one pass/fail line per criterion.

Runs under pytest (lines appear in the terminal summary) or directly::

    python tests/test_acceptance.py
"""
import functools
import os
import subprocess
import sys
import tempfile
from pathlib import Path

import numpy as np
import pytest

from llg1d import det_solver, grid_ops, ldp, sde_solver, verify
from llg1d.model import NoiseModel, PhysicalParams

try:
    from conftest import ACCEPTANCE_LINES
except ImportError:  # imported outside the test directory
    ACCEPTANCE_LINES = []

SPHERE_TOL = 1e-10
CONFIGS = Path(__file__).resolve().parents[1] / "configs"


# ---------------------------------------------------------------------------
# shared studies, computed once per session

@functools.lru_cache(maxsize=None)
def strong():
    return verify.strong_convergence_study()


@functools.lru_cache(maxsize=None)
def weak(model_name):
    return verify.weak_equivalence_study(model_name, n_paths=10_000, dt=1e-3)


@functools.lru_cache(maxsize=None)
def weak_negative_control():
    return verify.weak_equivalence_study("damped", n_paths=10_000, dt=1e-3, ito_scale=0.0,
                                         seeds=(7, 9), heun=weak("damped")["heun"])


@functools.lru_cache(maxsize=None)
def stability():
    return verify.stability_study()


@functools.lru_cache(maxsize=None)
def decay(beta):
    return verify.decay_study(beta)


@functools.lru_cache(maxsize=None)
def uniformity():
    return verify.uniformity_study()


@functools.lru_cache(maxsize=None)
def reversal(beta):
    return verify.reversal_study(beta, eps=(0.1, 0.01))


@functools.lru_cache(maxsize=None)
def reversal_ensemble(eps, with_field):
    return verify.reversal_ensemble_study(eps, with_field)


@functools.lru_cache(maxsize=None)
def exit_runs():
    return verify.exit_bound_study()


def _report(number, passed, title, detail):
    line = f"criterion {number} [{'PASS' if passed else 'FAIL'}] {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


# ---------------------------------------------------------------------------
# criteria

def criterion_1():
    """Node-wise unit length at every recorded time, for every projected solver."""
    g = grid_ops.make_grid(1.0, 11)
    noise = NoiseModel.three_directions(np.eye(3))
    m0 = verify.neumann_test_field(g)
    own = {}
    p = PhysicalParams(alpha=1.0, beta=0.5, eps=0.5, horizon=0.5)
    traj = det_solver.solve_deterministic(m0, det_solver.ControlPath.constant([1.0, -2.0, 0.5], 0.5),
                                          None, p, noise, g, 1e-3)
    own["deterministic"] = traj.diagnostics["sphere_residual"].max()
    for scheme in sde_solver.SCHEMES:
        cfg = sde_solver.SdeRunConfig(scheme, p, noise, 1e-3, seed=3)
        own[scheme] = sde_solver.simulate_path(cfg, m0, g).diagnostics["sphere_residual"].max()
    runs = {
        **own,
        "strong convergence": strong()["sphere_residual"],
        "weak rotation": weak("rotation")["sphere_residual"],
        "weak damped": weak("damped")["sphere_residual"],
        "stability": stability()["sphere_residual"],
        "decay": max(decay(b)["sphere_residual"] for b in (0.1, 0.5)),
        "uniformity": uniformity()["sphere_residual"],
        "reversal": max(reversal(b)["sphere_residual"] for b in (0.0, 0.1)),
    }
    quick_ok = all(r.passed for r in verify.run_checks("quick", report=None))
    worst = max(runs.values())
    ok = worst <= SPHERE_TOL and quick_ok
    return _report(1, ok, "sphere constraint",
                   f"max residual {worst:.2e} over {len(runs)} run families "
                   f"(limit {SPHERE_TOL:g}); quick verify {'passed' if quick_ok else 'failed'}")


def criterion_2():
    s = verify.harmonic_identity_study()
    orders = s["orders"]
    ok = len(orders) >= 4 and all(1.8 <= o <= 2.2 for o in orders) and s["uniform_residual"] == 0.0
    return _report(2, ok, "harmonic-maps identity",
                   f"observed orders {np.round(orders, 3).tolist()}, "
                   f"uniform residual {s['uniform_residual']!r}")


def criterion_3():
    st = strong()
    rot, dam, neg = weak("rotation"), weak("damped"), weak_negative_control()
    ok = (st["rotation"]["order"] >= 0.9 and rot["max_abs_z"] <= 3 and dam["max_abs_z"] <= 3
          and neg["max_abs_z"] >= 5)
    return _report(3, ok, "Stratonovich/Ito consistency",
                   f"strong order {st['rotation']['order']:.3f}; max |z| rotation "
                   f"{rot['max_abs_z']:.2f}, damped {dam['max_abs_z']:.2f} (N=10^4, dt=1e-3); "
                   f"zeroed correction {neg['max_abs_z']:.1f} sigma")


def criterion_4():
    s = stability()
    g = grid_ops.make_grid(1.0, 21)
    exact = det_solver.stability_radius(PhysicalParams(alpha=1.0), g) == 1.0 / 24.0
    ok = (exact and s["max_increase_dist"] <= 1e-8 and s["max_increase_grad"] <= 1e-8
          and s["ratio"] < 0.01 and abs(s["d0"] - 0.9 * s["radius"]) <= 1e-12)
    return _report(4, ok, "stability",
                   f"radius 1/24 exact={exact}, d(T)/d(0)={s['ratio']:.2e} at T={s['horizon']}, "
                   f"max step increase dist {s['max_increase_dist']:.1e}, "
                   f"grad {s['max_increase_grad']:.1e}")


def _gamma_reference(alpha, beta, H):
    return min(alpha * H + alpha - 2 * beta - 4 * alpha * beta,
               1.5 * alpha * H - 2 * beta - 2 * alpha * beta)


def criterion_5():
    rows = [decay(b) for b in (0.1, 0.5)]
    formula = abs(det_solver.decay_rate_gamma(PhysicalParams(alpha=1.0, beta=0.1), 10.0)
                  - 10.4) <= 1e-12
    for a, b, H in ((0.5, 0.2, 7.0), (2.0, 0.0, 3.0), (1.0, 1.0, 12.0)):
        formula &= det_solver.decay_rate_gamma(PhysicalParams(alpha=a, beta=b), H) == \
            _gamma_reference(a, b, H)
    ok = formula and all(r["max_ratio"] <= 1.0 + 1e-3 and r["H_mag"] > r["threshold"]
                         for r in rows)
    return _report(5, ok, "exponential decay",
                   f"gamma(1, 0.1, 10) = 10.4 reproduced={formula}; max d(t)/envelope "
                   + ", ".join(f"{r['max_ratio']:.6f} (beta={r['beta']})" for r in rows))


def criterion_6():
    u = uniformity()
    ok = all(r["spread_inside_ball"] <= 1e-10 and r["error"] <= 10 * r["dt"] ** 2
             for r in u["runs"])
    worst_spread = max(r["spread_inside_ball"] for r in u["runs"])
    worst_ratio = max(r["error_over_dt2"] for r in u["runs"])
    return _report(6, ok, "uniformity preservation",
                   f"max spread {worst_spread:.1e}, max oracle error / dt^2 {worst_ratio:.3f}")


def criterion_7():
    rows = [reversal(b) for b in (0.0, 0.1)]
    loud = reversal_ensemble(0.1, True)
    quiet = reversal_ensemble(1e-3, False)
    ok = all(r["final_distance"] < r["bound"] and r["witness_achieved"] for r in rows)
    ok &= loud["hits"] > 0 and quiet["hits"] == 0
    parts = []
    for r in rows:
        # the bounds underflow double precision, so report their natural logs
        lb = ", ".join(f"eps={e}: {-(r['cost'] + 0.1) / e:.1f}" for e in (0.1, 0.01))
        parts.append(f"beta={r['beta']}: d(T)={r['final_distance']:.4f} < {r['bound']:.4f}, "
                     f"cost {r['cost']:.3f}, log lower bound at xi=0.1 [{lb}]")
    parts.append(f"ensemble eps=0.1 with field {loud['hits']}/400, "
                 f"eps=1e-3 without field {quiet['hits']}/400")
    return _report(7, ok, "reversal construction", "; ".join(parts))


def _exit_reference(alpha, beta, r, A, length):
    worst = max(float(a @ a) for a in np.asarray(A, dtype=float))
    return -alpha * beta * r ** 2 / (8.0 * worst * length * (1.0 + alpha ** 2))


def criterion_8():
    worst = 0.0
    cases = [(1.0, 1.0, 0.04, np.eye(3), 1.0),
             (0.3, 0.7, 0.01, [[2, 0, 0], [0, 1, 0], [0, 1, 1]], 2.0),
             (2.5, 0.1, 0.003, [[0.5, 0.5, 0], [0, 1, 0], [0, 0, 3]], 0.5)]
    for a, b, r, A, length in cases:
        g = grid_ops.make_grid(length, 11)
        got = -ldp.exit_rate_coefficient(r, PhysicalParams(alpha=a, beta=b),
                                         NoiseModel.three_directions(A), g)
        want = _exit_reference(a, b, r, A, length)
        worst = max(worst, abs(got - want) / abs(want))
    g = grid_ops.make_grid(1.0, 11)
    p = PhysicalParams(alpha=1.0, beta=1.0)
    noise = NoiseModel.three_directions(np.eye(3))
    rho = det_solver.stability_radius(p, g)
    by_r = [ldp.upper_bound_probability(r, rho, 1e-6, 1e-5, p, noise, g)
            for r in np.linspace(0.05, 0.99, 40) * rho]
    by_eps = [ldp.upper_bound_probability(0.9 * rho, rho, 1e-6, e, p, noise, g)
              for e in np.logspace(-7, -3, 40)]
    mono = bool(np.all(np.diff(by_r) <= 0) and np.all(np.diff(by_eps) >= 0))
    runs = exit_runs()["runs"]
    consistent = all(r["consistent"] for r in runs)
    ok = worst <= 4 * np.finfo(float).eps and mono and consistent
    return _report(8, ok, "bound formulas",
                   f"max relative difference {worst:.1e}, monotone sweeps {mono}, "
                   + ", ".join(f"exit eps={r['eps']:g} p_hat {r['p_hat']:.4f} <= "
                               f"{r['upper_bound']:.3g}" for r in runs))


def _cli(args, threads, cwd):
    env = dict(os.environ, LLG1D_THREADS=str(threads))
    proc = subprocess.run([sys.executable, "-m", "llg1d", *args], cwd=cwd, env=env,
                          capture_output=True, text=True)
    if proc.returncode != 0:
        raise RuntimeError(f"llg1d {' '.join(args)} exited {proc.returncode}: {proc.stderr}")
    return proc.stdout


def _tree_bytes(root):
    # emitted configs record their own output directory
    tag = str(root).encode()
    return {str(p.relative_to(root)): p.read_bytes().replace(tag, b"<out>")
            for p in sorted(Path(root).rglob("*")) if p.is_file()}


def criterion_9():
    commands = [
        ["run-det", "--config", str(CONFIGS / "stationary.json"), "--dump-states"],
        ["run-sde", "--config", str(CONFIGS / "sde_paths.json"), "--paths", "6"],
        ["build-plan", "--config", str(CONFIGS / "reversal_plan.json")],
        ["estimate", "--config", str(CONFIGS / "exit_estimate.json"), "--paths", "200"],
    ]
    trees = []
    with tempfile.TemporaryDirectory() as tmp:
        for label, threads in (("a", 1), ("b", 4), ("c", 4)):
            out = Path(tmp) / label
            stdout = []
            for i, cmd in enumerate(commands):
                stdout.append(_cli(cmd + ["--out", str(out / str(i))], threads, tmp))
            # printed paths differ by construction; compare the rest of stdout
            trees.append((_tree_bytes(out), [s.replace(str(out), "<out>") for s in stdout]))
    n_files = len(trees[0][0])
    ok = n_files > 0 and trees[0] == trees[1] == trees[2]
    return _report(9, ok, "determinism",
                   f"{n_files} output files from run-det/run-sde/build-plan/estimate "
                   f"byte-identical across repeats and LLG1D_THREADS=1/4: {ok}")


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6,
            criterion_7, criterion_8, criterion_9]


@pytest.mark.slow
@pytest.mark.parametrize("criterion", CRITERIA, ids=[f"criterion_{i}" for i in range(1, 10)])
def test_acceptance(criterion):
    assert criterion()


def main():
    results = []
    for fn in CRITERIA:
        try:
            results.append(fn())
        except Exception as exc:  # report and keep going
            results.append(_report(fn.__name__.split("_")[1], False, fn.__name__,
                                   f"error: {type(exc).__name__}: {exc}"))
    print(f"{sum(results)}/{len(results)} criteria passed")
    return 0 if all(results) else 1


if __name__ == "__main__":
    sys.exit(main())
