"""Command-line front end: ``llg1d {run-det,run-sde,build-plan,estimate,verify}``.

Exit codes: 0 success, 1 runtime failure, 2 validation failure.
"""
import argparse
import os
import sys
import tempfile
import warnings
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__, det_solver, grid_ops, io, ldp, sde_solver, verify
from .config import ConfigError, load_config
from .errors import InvalidArgument, LLGError, StepFailure

EXIT_OK, EXIT_RUNTIME, EXIT_VALIDATION = 0, 1, 2
MONOTONE_TOL = 1e-8


def _overrides(args):
    solver, output = {}, {}
    if getattr(args, "seed", None) is not None:
        solver["seed"] = args.seed
    if getattr(args, "paths", None) is not None:
        solver["n_paths"] = args.paths
    if getattr(args, "record_every", None) is not None:
        solver["record_every"] = args.record_every
    if getattr(args, "out", None) is not None:
        output["dir"] = args.out
    if getattr(args, "plot", False):
        output["plot"] = True
    if getattr(args, "dump_states", False):
        output["dump_states"] = True
    return {k: v for k, v in (("solver", solver), ("output", output)) if v}


def _nonincreasing(values):
    return bool(np.all(np.diff(values) <= MONOTONE_TOL))


def _drift_norm(m, t, cfg):
    rhs = det_solver.rhs_skeleton(m, t, cfg.control, cfg.applied_field, cfg.params, cfg.noise,
                                  cfg.grid)
    return float(np.max(np.abs(rhs)))


def _write_trajectories(cfg, trajectories, stem):
    out = io.ensure_dir(cfg.out_dir)
    csv_path = os.path.join(out, f"{stem}.csv")
    io.write_trajectory_csv(csv_path, trajectories)
    files = [csv_path]
    if cfg.dump_states:
        states_path = os.path.join(out, f"{stem}_states.csv")
        io.write_states_csv(states_path, trajectories)
        files.append(states_path)
    if cfg.plot:
        from . import plotting

        png = os.path.join(out, f"{stem}.png")
        plotting.plot_trajectory(png, io.read_trajectory_csv(csv_path))
        files.append(png)
    return files


def _path_summary(traj, cfg):
    d = traj.diagnostics
    grad = np.array([grid_ops.norms(s, cfg.grid).grad_l2 for s in traj.states])
    out = {
        "final_time": float(traj.times[-1]),
        "n_records": len(traj),
        "final": {key: float(d[key][-1]) for key in io.CSV_HEADER[2:]},
        "max_sphere_residual": float(d["sphere_residual"].max()),
        "monotone": {
            "dist_h1_minus_nonincreasing": _nonincreasing(d["dist_h1_minus"]),
            "dist_h1_plus_nonincreasing": _nonincreasing(d["dist_h1_plus"]),
            "grad_l2_nonincreasing": _nonincreasing(grad),
            "energy_nonincreasing": _nonincreasing(d["energy"]),
        },
    }
    if cfg.reference is not None:
        ref = d["dist_h1_ref"]
        out["final"]["dist_h1_ref"] = float(ref[-1])
        out["monotone"]["dist_h1_ref_nonincreasing"] = _nonincreasing(ref)
        if cfg.fit_decay:
            out["decay_rate"] = det_solver.fit_exponential_rate(traj.times, ref)
    return out


def cmd_run_det(cfg, args):
    if cfg.params.eps != 0:
        raise ConfigError("params.eps", "run-det integrates the noise-free flow; set eps to 0 "
                                        "or use run-sde")
    traj = det_solver.solve_deterministic(cfg.m0, cfg.control, cfg.applied_field, cfg.params,
                                          cfg.noise, cfg.grid, cfg.dt, cfg.record_every,
                                          reference=cfg.reference)
    files = _write_trajectories(cfg, [(0, traj)], "trajectory")
    summary = {"command": "run-det", "dt": cfg.dt, **_path_summary(traj, cfg),
               "drift_norm": {"initial": _drift_norm(traj.states[0], 0.0, cfg),
                              "final": _drift_norm(traj.final_state, float(traj.times[-1]), cfg)}}
    if cfg.control is not None:
        summary["control_cost"] = cfg.control.cost()
    path = os.path.join(cfg.out_dir, "summary.json")
    io.write_json(path, summary)
    print(f"final dist_h1_plus={summary['final']['dist_h1_plus']!r} "
          f"dist_h1_minus={summary['final']['dist_h1_minus']!r}")
    print("wrote " + ", ".join(files + [path]))
    return EXIT_OK


def _sde_config(cfg):
    if cfg.noise is None:
        raise ConfigError("noise", "stochastic runs need a noise model")
    if cfg.params.eps == 0:
        raise ConfigError("params.eps", "eps=0 is the deterministic flow; use run-det")
    try:
        return sde_solver.SdeRunConfig(cfg.scheme, cfg.params, cfg.noise, cfg.dt, cfg.seed,
                                       cfg.control, cfg.applied_field, cfg.record_every)
    except InvalidArgument as exc:
        raise ConfigError("solver", str(exc)) from None


def cmd_run_sde(cfg, args):
    scfg = _sde_config(cfg)
    ids = range(cfg.n_paths)

    def one(i):
        return sde_solver.simulate_path(sde_solver.path_config(scfg, cfg.seed, i), cfg.m0,
                                        cfg.grid, reference=cfg.reference)

    n_workers = min(sde_solver.worker_count(), cfg.n_paths)
    if n_workers == 1:
        trajs = [one(i) for i in ids]
    else:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            trajs = list(pool.map(one, ids))
    files = _write_trajectories(cfg, list(zip(ids, trajs)), "trajectory")
    summary = {"command": "run-sde", "scheme": cfg.scheme, "seed": cfg.seed, "dt": cfg.dt,
               "eps": cfg.params.eps, "n_paths": cfg.n_paths,
               "paths": [{"path_id": i, **_path_summary(t, cfg)} for i, t in zip(ids, trajs)]}
    summary["max_sphere_residual"] = max(p["max_sphere_residual"] for p in summary["paths"])
    path = os.path.join(cfg.out_dir, "summary.json")
    io.write_json(path, summary)
    print(f"scheme={cfg.scheme} seed={cfg.seed} paths={cfg.n_paths} "
          f"max sphere residual={summary['max_sphere_residual']!r}")
    print("wrote " + ", ".join(files + [path]))
    return EXIT_OK


def cmd_build_plan(cfg, args):
    if cfg.noise is None:
        raise ConfigError("noise", "build-plan needs three_directions noise")
    delta = args.delta if args.delta is not None else cfg.plan_delta
    horizon = cfg.params.horizon
    if not delta > 0:
        raise ConfigError("plan.delta", f"must be positive, got {delta!r}")
    plan = ldp.build_reversal_plan(delta, horizon, cfg.params, cfg.noise, cfg.grid)
    out = io.ensure_dir(cfg.out_dir)
    plan_path = os.path.join(out, "plan.json")
    io.write_json(plan_path, plan.to_dict())

    # ready-to-run deterministic config under the plan's applied field
    tree = cfg.to_dict()
    tree["params"]["eps"] = 0.0
    tree["initial"] = {"kind": "uniform", "vector": det_solver.MINUS.tolist()}
    tree["applied_field"] = plan.schedule.to_dict()
    tree["control"] = None
    tree["event"] = {"kind": "reversal", "delta": delta}
    tree["plan"] = {"delta": delta}
    tree["diagnostics"] = {"reference": "plus", "fit_decay": False}
    run_path = os.path.join(out, "run_det.json")
    io.write_json(run_path, tree)
    load_config(run_path)  # the emitted config must itself validate

    w = plan.waypoints
    print(f"waypoints N={w.n_segments} eta={w.eta!r} k={w.k!r}")
    print(f"field magnitude R={plan.R!r}")
    print(f"control cost={plan.cost!r}")
    # the log column stays informative where the bound itself underflows
    print("lower bound exp(-(cost+xi)/eps):")
    print("xi,eps,log_lower_bound,lower_bound")
    for xi in cfg.xi:
        for eps in cfg.eps_list:
            print(f"{xi!r},{eps!r},{-(plan.cost + xi) / eps!r},"
                  f"{ldp.lower_bound_probability(plan.cost, xi, eps)!r}")
    print(f"wrote {plan_path}, {run_path}")
    return EXIT_OK


def load_plan(path):
    """Read and re-validate a plan file."""
    d = io.read_json(path)
    plan = ldp.ReversalPlan.from_dict(d)
    if plan.reconstruction_error() > 1e-10:
        raise InvalidArgument("plan control does not reproduce its applied field")
    return plan


def cmd_estimate(cfg, args):
    if cfg.event is None:
        raise ConfigError("event", "estimate needs an event section")
    if cfg.n_paths < 100:
        raise ConfigError("solver.n_paths", f"estimate needs at least 100 paths, got {cfg.n_paths}")
    if cfg.noise is None:
        raise ConfigError("noise", "estimate needs a noise model")
    if cfg.params.eps == 0:
        scfg = sde_solver.SdeRunConfig(cfg.scheme, cfg.params, cfg.noise, cfg.dt, cfg.seed,
                                       cfg.control, cfg.applied_field, cfg.record_every)
    else:
        scfg = _sde_config(cfg)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        est = ldp.estimate_event_probability(scfg, cfg.m0, cfg.grid, cfg.event, cfg.n_paths,
                                             cfg.seed)
    result = {"command": "estimate", "event": cfg.to_dict()["event"], "eps": cfg.params.eps,
              "n_paths": est.n_paths, "hits": est.n_hits, "p_hat": est.p_hat,
              "wilson_95": list(est.wilson_95), "n_failures": est.n_failures,
              "degraded": est.degraded, "warnings": [str(w.message) for w in caught],
              "bounds": _bounds_for(cfg)}
    out = io.ensure_dir(cfg.out_dir)
    path = os.path.join(out, "estimate.json")
    io.write_json(path, result)
    lo, hi = est.wilson_95
    print(f"p_hat={est.p_hat!r} wilson95=[{lo!r}, {hi!r}] hits={est.n_hits}/{est.n_paths} "
          f"failures={est.n_failures}")
    for row in result["bounds"]:
        print(f"{row['kind']} bound (xi={row['xi']!r}): {row['value']!r}")
    if est.degraded:
        print(f"warning: {result['warnings'][-1]}", file=sys.stderr)
    files = [path]
    if cfg.plot and est.summaries is not None:
        from . import plotting

        png = os.path.join(out, "ensemble.png")
        plotting.plot_ensemble(png, est.summaries, cfg.event.delta, cfg.event.rho)
        files.append(png)
    print("wrote " + ", ".join(files))
    return EXIT_OK


def _bounds_for(cfg):
    """Analytic bounds that correspond to the configured event, one row per xi."""
    rows = []
    eps = cfg.params.eps
    if eps == 0:
        return rows
    if cfg.event.kind == "reversal" and cfg.control is not None:
        for xi in cfg.xi:
            rows.append({"kind": "lower", "xi": xi, "cost": cfg.control.cost(),
                         "value": ldp.lower_bound_probability(cfg.control.cost(), xi, eps)})
    elif cfg.event.kind == "exit":
        rho = cfg.event.rho
        r = cfg.exit_r if cfg.exit_r is not None else 0.99 * rho
        for xi in cfg.xi:
            try:
                val = ldp.upper_bound_probability(r, rho, xi, eps, cfg.params, cfg.noise, cfg.grid)
            except InvalidArgument as exc:
                rows.append({"kind": "upper", "xi": xi, "r": r, "value": None, "note": str(exc)})
                continue
            rows.append({"kind": "upper", "xi": xi, "r": r, "value": val})
    return rows


def cmd_verify(args):
    tmp = tempfile.mkdtemp(prefix="llg1d-verify-")
    results = verify.run_checks(args.level, zero_ito_correction=args.zero_ito_correction,
                                tmpdir=tmp)
    n_fail = sum(not r.passed for r in results)
    print(f"{len(results) - n_fail}/{len(results)} checks passed")
    if args.out:
        io.ensure_dir(args.out)
        io.write_json(os.path.join(args.out, "verify_report.json"),
                      {"level": args.level,
                       "checks": [{"name": r.name, "level": r.level, "passed": r.passed,
                                   "detail": r.detail, "seconds": r.seconds, "metrics": r.metrics}
                                  for r in results]})
    return EXIT_OK if n_fail == 0 else EXIT_RUNTIME


COMMANDS = {
    "run-det": cmd_run_det,
    "run-sde": cmd_run_sde,
    "build-plan": cmd_build_plan,
    "estimate": cmd_estimate,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="llg1d", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, paths=False):
        p.add_argument("--config", required=True, metavar="PATH", help="JSON run configuration")
        p.add_argument("--seed", type=_u64, help="base seed (overrides solver.seed)")
        p.add_argument("--out", metavar="DIR", help="output directory (overrides output.dir)")
        p.add_argument("--record-every", type=_positive_int, metavar="N",
                       help="record diagnostics every N steps")
        p.add_argument("--plot", action="store_true", help="also write a PNG figure")
        if paths:
            p.add_argument("--paths", type=_positive_int, metavar="N", help="number of paths")
        return p

    p = common(sub.add_parser("run-det", help="noise-free (optionally controlled) run"))
    p.add_argument("--dump-states", action="store_true", help="also write full states")
    p = common(sub.add_parser("run-sde", help="stochastic run, one or more paths"), paths=True)
    p.add_argument("--dump-states", action="store_true", help="also write full states")
    p = common(sub.add_parser("build-plan", help="construct a reversal field and control"))
    p.add_argument("--delta", type=float, help="target ball radius (overrides plan.delta)")
    common(sub.add_parser("estimate", help="Monte-Carlo event probability and bounds"), paths=True)
    p = sub.add_parser("verify", help="run the built-in check suite")
    p.add_argument("--level", choices=("quick", "full"), default="quick")
    p.add_argument("--out", metavar="DIR", help="write verify_report.json here")
    p.add_argument("--zero-ito-correction", action="store_true", help=argparse.SUPPRESS)
    return parser


def _u64(text):
    v = int(text)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("must be an unsigned 64-bit integer")
    return v


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)  # argparse itself exits with status 2 on bad usage
    try:
        sde_solver.worker_count()
    except InvalidArgument as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        if args.command == "verify":
            return cmd_verify(args)
        cfg = load_config(args.config, _overrides(args))
        return COMMANDS[args.command](cfg, args)
    except InvalidArgument as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except StepFailure as exc:
        print(f"error: step failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (LLGError, OSError, ValueError, ArithmeticError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
