import warnings

import numpy as np
import pytest

from llg1d import det_solver, grid_ops, model, verify
from llg1d.det_solver import MINUS, PLUS, ControlPath
from llg1d.errors import InvalidArgument, MeasurementFailure, PreconditionViolation, StepFailure
from llg1d.model import AppliedFieldSchedule, NoiseModel, PhysicalParams


def _params(**kw):
    kw.setdefault("alpha", 1.0)
    return PhysicalParams(**kw)


def test_control_cost_is_exact_for_steps():
    assert ControlPath.zero(3.0).cost() == 0.0
    assert ControlPath.constant([3.0, 0.0, 0.0], 2.0).cost() == pytest.approx(9.0)
    psi = ControlPath([0.0, 1.0, 3.0], [[1.0, 0.0, 0.0], [0.0, 1.0, 1.0]])
    assert psi.cost() == pytest.approx(0.5 * (1.0 + 2.0 * 2.0))


def test_minus_state_is_stationary(grid11):
    p = _params(beta=0.5, horizon=1.0)
    m0 = grid_ops.uniform_field(MINUS, grid11)
    traj = det_solver.solve_deterministic(m0, None, None, p, None, grid11, 1e-3, 100)
    assert np.array_equal(traj.final_state, m0)
    assert np.all(traj.diagnostics["dist_h1_minus"] == 0.0)


def test_precession_about_constant_field_matches_rotation():
    # alpha = 0, beta = 0, K = e3: rotation of e1 about e3 at unit speed
    g = grid_ops.make_grid(1.0, 3)
    p = PhysicalParams(alpha=0.0, horizon=1.0)
    traj = det_solver.solve_deterministic(grid_ops.uniform_field(PLUS, g), None,
                                          np.array([0.0, 0.0, 1.0]), p, None, g, 1e-3)
    t = traj.times
    exact = np.column_stack((np.cos(t), -np.sin(t), 0 * t))
    assert np.max(np.abs(traj.states[:, 0, :] - exact)) < 1e-6


def test_rk2_second_order_in_time():
    g = grid_ops.make_grid(1.0, 3)
    p = PhysicalParams(alpha=0.5, horizon=1.0)
    K = np.array([0.0, 0.3, 1.0])
    m0 = grid_ops.uniform_field([0.6, 0.8, 0.0], g)
    ref = det_solver.solve_deterministic(m0, None, K, p, None, g, 1e-4).final_state
    errs = [np.max(np.abs(det_solver.solve_deterministic(m0, None, K, p, None, g, dt).final_state
                          - ref)) for dt in (0.02, 0.01, 0.005)]
    orders = np.log2(np.array(errs[:-1]) / errs[1:])
    assert np.all(orders > 1.8)


def test_control_equals_applied_field_through_directions(grid11):
    p = _params(beta=0.2, horizon=0.5)
    A = np.array([[1.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.5, 0.0, 1.0]])
    noise = NoiseModel.three_directions(A)
    phi = np.array([0.4, -0.1, 0.3])
    m0 = verify.neumann_test_field(grid11)
    a = det_solver.solve_deterministic(m0, ControlPath.constant(phi, 0.5), None, p, noise,
                                       grid11, 1e-3)
    b = det_solver.solve_deterministic(m0, None, phi @ A, p, None, grid11, 1e-3)
    assert np.allclose(a.states, b.states, atol=1e-13)


def test_midpoint_sampling_respects_breakpoints():
    g = grid_ops.make_grid(1.0, 3)
    p = PhysicalParams(alpha=0.0, horizon=1.0)
    K = AppliedFieldSchedule([0.0, 0.5, 1.0], [[0.0, 0.0, 1.0], [0.0, 0.0, 0.0]])
    m0 = grid_ops.uniform_field(PLUS, g)
    traj = det_solver.solve_deterministic(m0, None, K, p, None, g, 0.01)
    half = det_solver.solve_deterministic(m0, None, [0.0, 0.0, 1.0],
                                          PhysicalParams(alpha=0.0, horizon=0.5), None, g, 0.01)
    assert np.array_equal(traj.final_state, half.final_state)


def test_record_every_and_final_time(grid11):
    p = _params(horizon=0.1)
    m0 = verify.neumann_test_field(grid11)
    traj = det_solver.solve_deterministic(m0, None, None, p, None, grid11, 1e-3, 30)
    assert np.allclose(traj.times, [0.0, 0.03, 0.06, 0.09, 0.1])
    assert set(traj.diagnostics) == set(det_solver.DIAGNOSTIC_KEYS)
    assert np.all(traj.diagnostics["sphere_residual"] <= 1e-10)


def test_stop_when_ends_early(grid11):
    p = _params(horizon=1.0)
    m0 = verify.neumann_test_field(grid11)
    traj = det_solver.solve_deterministic(m0, None, None, p, None, grid11, 1e-3, 100,
                                          stop_when=lambda t, m: t >= 0.25 - 1e-12)
    assert traj.stopped_early and traj.times[-1] == pytest.approx(0.25)


def test_solver_contract_errors(grid11):
    p = _params(horizon=1.0)
    m0 = grid_ops.uniform_field(MINUS, grid11)
    with pytest.raises(PreconditionViolation):
        det_solver.solve_deterministic(2 * m0, None, None, p, None, grid11, 1e-3)
    with pytest.raises(InvalidArgument):
        det_solver.solve_deterministic(m0, None, None, p, None, grid11, 0.3)
    with pytest.raises(InvalidArgument):
        det_solver.solve_deterministic(m0, ControlPath.zero(1.0), None, p, None, grid11, 1e-3)
    with pytest.raises(InvalidArgument):
        det_solver.solve_deterministic(m0, ControlPath.zero(1.0, 1), None, p,
                                       NoiseModel.three_directions(np.eye(3)), grid11, 1e-3)
    with pytest.raises(InvalidArgument):
        det_solver.step_rk2_projected(m0, 0.0, -1e-3, lambda m, t: m)


def test_collapse_raises_step_failure(grid11):
    m = grid_ops.uniform_field(PLUS, grid11)
    with pytest.raises(StepFailure) as info:
        det_solver.step_rk2_projected(m, 0.5, 1.0, lambda x, t: -m)
    assert info.value.t == 0.5


def test_explicit_stability_warning(grid11):
    p = _params(horizon=0.1)
    m0 = verify.neumann_test_field(grid11)
    with pytest.warns(RuntimeWarning, match="explicit stability"):
        det_solver.solve_deterministic(m0, None, None, p, None, grid11, 0.05)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        det_solver.solve_deterministic(m0, None, None, p, None, grid11, 1e-3)


def test_stability_radius_closed_form():
    g = grid_ops.make_grid(1.0, 11)
    assert det_solver.stability_radius(_params(), g) == 1.0 / 24.0
    g4 = grid_ops.make_grid(4.0, 11)
    p = _params(alpha=0.5)
    assert det_solver.stability_radius(p, g4) == pytest.approx(1 / (2 * 4 * 2) * 0.5 / 2.0)


def test_decay_rate_and_threshold_formulas():
    assert det_solver.decay_rate_gamma(_params(beta=0.1), 10.0) == pytest.approx(10.4)
    assert det_solver.decay_rate_gamma(_params(), 10.0) == pytest.approx(11.0)
    assert det_solver.field_threshold(_params(beta=0.0)) == 0.0
    assert det_solver.field_threshold(_params(beta=1.0)) == pytest.approx(5.0)
    assert det_solver.field_threshold(_params(alpha=2.0, beta=0.3)) == pytest.approx(0.6)


def test_field_for_target_makes_target_stationary(grid11):
    H = np.array([1.0, 0.5, 0.2]) * 4.0
    p = _params(beta=0.3)
    K = det_solver.field_for_target(H)(0.3)
    target = H / np.linalg.norm(H)
    m = grid_ops.uniform_field(target, grid11)
    h = model.effective_field(m, K, p, grid11)
    assert np.allclose(model.llg_drift(m, h, p.alpha), 0.0, atol=1e-13)


def test_uandz_claims_at_stable_state(grid11):
    c = det_solver.check_uandz(grid_ops.uniform_field(MINUS, grid11), MINUS, _params(), grid11)
    assert all(c)
    tilted = grid_ops.uniform_field([-0.6, 0.8, 0.0], grid11)
    assert not det_solver.check_uandz(tilted, MINUS, _params(), grid11).within_radius


def test_uandz_expression_example():
    assert det_solver.uandz_expression(1.0, 2.0) == -2.0


def test_fit_exponential_rate():
    t = np.linspace(0, 2, 21)
    assert det_solver.fit_exponential_rate(t, 3.0 * np.exp(-1.7 * t)) == pytest.approx(1.7)
    d = np.exp(-t)
    d[5:] = 0.0
    assert det_solver.fit_exponential_rate(t, d) == pytest.approx(1.0)
    with pytest.raises(MeasurementFailure):
        det_solver.fit_exponential_rate(t, np.zeros_like(t))


def test_stability_study_contract():
    s = verify.stability_study(horizon=2.0)
    assert s["d0"] == pytest.approx(0.9 * s["radius"], rel=1e-10)
    assert s["max_increase_dist"] <= 1e-8 and s["max_increase_grad"] <= 1e-8
    assert all(s["uandz"].values())


@pytest.mark.parametrize("beta", [0.0, 0.1])
def test_decay_envelope(beta):
    s = verify.decay_study(beta)
    assert 10.0 > s["threshold"]
    assert s["max_ratio"] <= 1.001
    assert s["fitted_rate"] >= 0.5 * s["gamma"]


def test_uniformity_and_ode_oracle():
    s = verify.uniformity_study()
    for row in s["runs"]:
        assert row["spread_overall"] <= 1e-10
        assert row["error"] <= 10 * row["dt"] ** 2


def test_galerkin_conserves_l2_and_tracks_fd():
    s = verify.galerkin_study()
    assert s["l2_drift"] < 1e-10
    assert s["fd_difference"] < 1e-3


def test_galerkin_full_basis_reproduces_uniform_state(grid11):
    p = _params(beta=0.5, horizon=0.1)
    rec = det_solver.solve_galerkin(grid_ops.uniform_field(MINUS, grid11), 5, None, p, grid11, 1e-3)
    assert np.allclose(rec.states[-1], MINUS, atol=1e-13)
