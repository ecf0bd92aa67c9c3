import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from llg1d import det_solver, grid_ops, ldp
from llg1d.det_solver import MINUS, PLUS, ControlPath
from llg1d.errors import InvalidArgument, InvalidNoiseModel
from llg1d.ldp import EventSpec
from llg1d.model import NoiseModel, PhysicalParams
from llg1d.sde_solver import SdeRunConfig

EYE = NoiseModel.three_directions(np.eye(3))


def test_waypoints_geometry():
    g = grid_ops.make_grid(1.0, 11)
    w = ldp.build_waypoints(0.1, g)
    assert w.n_segments == 7
    assert np.array_equal(w.points[0], MINUS) and np.array_equal(w.points[-1], PLUS)
    assert np.allclose(np.linalg.norm(w.points, axis=1), 1.0)
    assert np.all(w.h1_gaps() <= 0.9 / w.k + 1e-15)
    assert w.eta == pytest.approx(min(0.05, np.min(1 / w.k - w.h1_gaps())))


def test_waypoints_large_delta_still_valid():
    g = grid_ops.make_grid(1.0, 11)
    w = ldp.build_waypoints(3.0, g)
    assert w.n_segments == 7 and w.eta > 0


def test_waypoints_reject_bad_delta():
    with pytest.raises(InvalidArgument):
        ldp.build_waypoints(0.0, grid_ops.make_grid(1.0, 11))


def test_choose_r_is_minimal_times_safety():
    g = grid_ops.make_grid(1.0, 11)
    p = PhysicalParams(alpha=1.0, beta=0.0)
    w = ldp.build_waypoints(0.1, g)
    R = ldp.choose_R(w, 7.0, p)
    seg = 7.0 / w.n_segments
    R0 = R / ldp.R_SAFETY
    assert ldp._reversal_condition(R0, w.k, w.eta, seg, p)
    assert not ldp._reversal_condition(R0 * (1 - 1e-9), w.k, w.eta, seg, p)
    # closed form at beta = 0: gamma = R + 1 and exp(-gamma seg/2)/k = eta
    assert R0 == pytest.approx(-2 * math.log(w.eta * w.k) / seg - 1, rel=1e-12)


def test_plan_cost_at_beta_zero_is_half_r2_t():
    g = grid_ops.make_grid(1.0, 11)
    p = PhysicalParams(alpha=1.0, beta=0.0)
    plan = ldp.build_reversal_plan(0.1, 7.0, p, EYE, g)
    assert plan.cost == pytest.approx(0.5 * plan.R ** 2 * 7.0, rel=1e-12)
    assert plan.reconstruction_error() < 1e-12


def test_plan_round_trip_and_scaled_directions():
    g = grid_ops.make_grid(1.0, 11)
    p = PhysicalParams(alpha=1.0, beta=0.1)
    noise = NoiseModel.three_directions([[2.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 0.0, 1.0]])
    plan = ldp.build_reversal_plan(0.1, 7.0, p, noise, g)
    assert plan.reconstruction_error() < 1e-12
    again = ldp.ReversalPlan.from_dict(plan.to_dict())
    assert again.to_dict() == plan.to_dict()


def test_plan_requires_three_directions():
    g = grid_ops.make_grid(1.0, 11)
    with pytest.raises(InvalidNoiseModel):
        ldp.build_reversal_plan(0.1, 7.0, PhysicalParams(alpha=1.0),
                                NoiseModel.single_direction([1, 0, 0], g), g)


def test_witness_achieves_reversal_coarse():
    g = grid_ops.make_grid(1.0, 11)
    p = PhysicalParams(alpha=1.0, beta=0.0, horizon=7.0)
    plan = ldp.build_reversal_plan(0.1, 7.0, p, EYE, g)
    res = ldp.rate_upper_bound(ldp.reversal_target(0.1), plan.control,
                               grid_ops.uniform_field(MINUS, g), p, EYE, g, 2e-3, record_every=500)
    assert res.achieved and res.terminal_distance < 0.05 + plan.waypoints.eta
    assert res.cost == plan.cost


def test_stay_target():
    g = grid_ops.make_grid(1.0, 5)
    p = PhysicalParams(alpha=1.0, horizon=0.1)
    res = ldp.rate_upper_bound(ldp.stay_target(MINUS, 1e-3), ControlPath.zero(0.1),
                               grid_ops.uniform_field(MINUS, g), p, EYE, g, 1e-2)
    assert res.achieved and res.cost == 0.0


def test_lower_bound_values():
    assert ldp.lower_bound_probability(2.5, 0.1, 1.0) == pytest.approx(math.exp(-2.6))
    assert ldp.lower_bound_probability(0.0, 1e-3, 1.0) <= 1.0
    assert ldp.lower_bound_probability(1e6, 0.1, 1e-3) > 0.0
    with pytest.raises(InvalidArgument):
        ldp.lower_bound_probability(1.0, 0.0, 1.0)


def _independent_coefficient(alpha, beta, r, A, length):
    worst = max(float(np.dot(a, a)) for a in np.asarray(A, dtype=float))
    return -(alpha * beta * r ** 2) / (8.0 * worst * length * (1.0 + alpha ** 2))


@given(st.floats(0.1, 3.0), st.floats(0.0, 1.0), st.floats(1e-3, 0.03),
       st.floats(0.5, 3.0), st.floats(0.3, 1.5))
def test_exit_coefficient_matches_independent_expression(alpha, beta, r, scale, length):
    g = grid_ops.make_grid(length, 11)
    A = scale * np.array([[1.0, 0.2, 0.0], [0.0, 1.0, 0.0], [0.0, 0.3, 1.5]])
    p = PhysicalParams(alpha=alpha, beta=beta)
    got = -ldp.exit_rate_coefficient(r, p, NoiseModel.three_directions(A), g)
    want = _independent_coefficient(alpha, beta, r, A, length)
    assert got == pytest.approx(want, rel=4 * np.finfo(float).eps, abs=1e-300)


def test_upper_bound_example_and_contract():
    g = grid_ops.make_grid(1.0, 11)
    p = PhysicalParams(alpha=1.0, beta=1.0)
    assert ldp.exit_rate_coefficient(0.04, p, EYE, g) == pytest.approx(1e-4)
    assert ldp.upper_bound_probability(0.04, 0.041, 0.0, 1e-5, p, EYE, g) == \
        pytest.approx(math.exp(-10.0))
    assert ldp.upper_bound_probability(0.01, 0.02, 1.0, 1e-3, p, EYE, g) == 1.0
    with pytest.raises(InvalidArgument):
        ldp.upper_bound_probability(0.03, 0.02, 0.0, 1e-3, p, EYE, g)
    with pytest.raises(InvalidArgument):
        ldp.upper_bound_probability(0.01, 0.5, 0.0, 1e-3, p, EYE, g)
    with pytest.raises(InvalidArgument):
        ldp.upper_bound_probability(0.01, 0.02, 0.0, 0.0, p, EYE, g)


def test_upper_bound_monotone_sweeps():
    g = grid_ops.make_grid(1.0, 11)
    p = PhysicalParams(alpha=1.0, beta=1.0)
    rho = det_solver.stability_radius(p, g)
    rs = np.linspace(0.1, 0.99, 30) * rho
    by_r = [ldp.upper_bound_probability(r, rho, 1e-6, 1e-5, p, EYE, g) for r in rs]
    assert np.all(np.diff(by_r) <= 0)
    eps = np.logspace(-7, -4, 30)
    by_eps = [ldp.upper_bound_probability(0.9 * rho, rho, 1e-6, e, p, EYE, g) for e in eps]
    assert np.all(np.diff(by_eps) >= 0)


def test_wilson_interval():
    lo, hi = ldp.wilson_interval(400, 400)
    assert hi == 1.0 and lo == pytest.approx(0.990487, abs=1e-6)
    lo, hi = ldp.wilson_interval(0, 400)
    assert lo == 0.0 and hi == pytest.approx(0.009513, abs=1e-6)
    lo, hi = ldp.wilson_interval(50, 100)
    assert lo == pytest.approx(0.4038, abs=1e-4) and hi == pytest.approx(0.5962, abs=1e-4)
    with pytest.raises(InvalidArgument):
        ldp.wilson_interval(0, 0)


def test_event_spec_validation():
    with pytest.raises(InvalidArgument):
        EventSpec("reversal")
    with pytest.raises(InvalidArgument):
        EventSpec("exit", rho=-1.0)
    with pytest.raises(InvalidArgument):
        EventSpec("escape", delta=0.1)


def test_estimate_deterministic_limit_replicates():
    g = grid_ops.make_grid(1.0, 5)
    p = PhysicalParams(alpha=1.0, horizon=0.1)
    cfg = SdeRunConfig("heun_stratonovich", p, EYE, 1e-2)
    m0 = grid_ops.uniform_field(MINUS, g)
    est = ldp.estimate_event_probability(cfg, m0, g, EventSpec("reversal", delta=0.1), 100, 0)
    assert est.p_hat == 0.0 and est.n_paths == 100 and est.summaries is None
    est = ldp.estimate_event_probability(cfg, m0, g, EventSpec("exit", rho=1e-6), 100, 0)
    assert est.p_hat == 0.0
    with pytest.raises(InvalidArgument):
        ldp.estimate_event_probability(cfg, m0, g, EventSpec("exit", rho=1.0), 99, 0)


def test_estimate_stochastic_counts_and_summaries():
    g = grid_ops.make_grid(1.0, 5)
    p = PhysicalParams(alpha=1.0, beta=1.0, eps=0.01, horizon=0.2)
    cfg = SdeRunConfig("heun_stratonovich", p, EYE, 1e-2)
    m0 = grid_ops.uniform_field(MINUS, g)
    est = ldp.estimate_event_probability(cfg, m0, g, EventSpec("exit", rho=0.05), 128, 3, 2)
    hits = sum(s.max_excursion >= 0.05 for s in est.summaries)
    assert est.n_hits == hits and est.p_hat == hits / 128
    assert est.wilson_95[0] <= est.p_hat <= est.wilson_95[1]
