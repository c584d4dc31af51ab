import math

import numpy as np
import pytest

from needlesteer.errors import InstanceTooLargeError
from needlesteer.kinematics import (
    MotionPrimitive,
    Pose,
    Trajectory,
    apply_primitive,
    pose_distance,
)
from needlesteer.lattice import Resolution
from needlesteer.search import PlanningProblem, PlannerConfig, plan
from needlesteer.theory import (
    action_distance,
    brute_force_optimal,
    cost_bound_check,
    duty_cycle_approximate,
    duty_cycle_segment,
    estimate_lipschitz,
    pruning_drift_replay,
    pruning_error_bound,
    verify_local_strict,
    verify_piecewise,
)

from conftest import make_env, sphere_shell

KMAX = 0.08
RMIN = 1.0 / KMAX


def chain(prims, start=None):
    pose = start or Pose()
    for m in prims:
        pose = apply_primitive(pose, m)
    return pose


# -- duty cycling ------------------------------------------------------------

def test_duty_cycle_boundary_pure_arc():
    triple = duty_cycle_segment(RMIN, 0.2, KMAX)
    assert len(triple) == 1
    assert triple[0].kappa == KMAX
    assert abs(triple[0].delta_ell - 0.2 / KMAX) < 1e-12


def test_duty_cycle_below_minimum_radius_errors():
    with pytest.raises(ValueError):
        duty_cycle_segment(0.9 * RMIN, 0.2, KMAX)
    with pytest.raises(ValueError):
        duty_cycle_segment(2 * RMIN, 1.7, KMAX)  # eta beyond pi/2


def test_duty_cycle_t_formula_and_endpoint():
    r, eta = 2.0 * RMIN, 0.2
    triple = duty_cycle_segment(r, eta, KMAX)
    t_expected = (r - RMIN) * math.tan(0.5 * eta)
    assert abs(triple[0].delta_ell - t_expected) < 1e-12
    target = apply_primitive(Pose(), MotionPrimitive(1.0 / r, r * eta, 0.0))
    got = chain(triple)
    assert pose_distance(target, got, 1.0) < 1e-9


def test_duty_cycle_endpoint_grid():
    for ratio in (1.01, 1.5, 2.0, 5.0, 20.0):
        for eta in (0.05, 0.1, 0.2, 0.35, 0.5):
            r = ratio * RMIN
            target = apply_primitive(Pose(), MotionPrimitive(1.0 / r, r * eta, 0.0))
            got = chain(duty_cycle_segment(r, eta, KMAX))
            assert pose_distance(target, got, 1.0) < 1e-9


def test_duty_cycle_deviation_bound_single_case():
    r, eta = 2.0 * RMIN, 0.35
    target = Trajectory(Pose(), (MotionPrimitive(1.0 / r, r * eta, 0.0),))
    approx = Trajectory(Pose(), tuple(duty_cycle_segment(r, eta, KMAX)))
    a = target.sample_positions(r * eta / 500.0)
    b = approx.sample_positions(approx.length / 500.0)
    d = np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(-1))
    hausdorff = max(d.min(axis=1).max(), d.min(axis=0).max())
    assert hausdorff <= r * (1.0 / math.cos(0.5 * eta) - 1.0) + 1e-6


def test_duty_cycle_approximate_passthrough():
    sigma = Trajectory(Pose(), (MotionPrimitive(0.0, 5.0, 0.0), MotionPrimitive(KMAX, 8.0, 1.0)))
    out, (bi, bo) = duty_cycle_approximate(sigma, 0.5, KMAX)
    assert out.primitives == sigma.primitives
    assert bi == bo


def test_duty_cycle_approximate_verifies():
    sigma = Trajectory(Pose(), (MotionPrimitive(KMAX / 2.0, 20.0, 0.7),))
    out, partition = duty_cycle_approximate(sigma, 0.5, KMAX, alpha=1.0)
    assert all(m.kappa in (0.0, KMAX) for m in out.primitives)
    report = verify_piecewise(sigma, out, partition, 0.5, alpha=1.0)
    assert report.passed
    assert report.beta_measured <= 0.5


def test_duty_cycle_length_ratio_bound():
    for kappa in (KMAX / 4, KMAX / 2, KMAX * 0.9):
        for ell in (5.0, 12.0, 20.0):
            beta_d = 0.4
            sigma = Trajectory(Pose(), (MotionPrimitive(kappa, ell, 0.0),))
            out, _ = duty_cycle_approximate(sigma, beta_d, KMAX)
            assert out.length <= (1.0 + beta_d / ell) * ell + 1e-9


# -- strict approximation checkers --------------------------------------------

def test_verify_local_identity():
    sigma = Trajectory(Pose(), (MotionPrimitive(KMAX, 10.0, 0.5),))
    rep = verify_local_strict(sigma, sigma, 0.3)
    assert rep.passed
    assert rep.beta_measured == 0.0
    assert rep.length_ratio == 1.0


def test_verify_local_translated_fails():
    beta = 0.25
    sigma = Trajectory(Pose(), (MotionPrimitive(KMAX, 10.0, 0.5),))
    shifted = Trajectory(Pose((2 * beta, 0.0, 0.0), sigma.start.q), sigma.primitives)
    rep = verify_local_strict(sigma, shifted, beta)
    assert not rep.passed
    assert rep.beta_measured >= 2 * beta - 1e-9


def test_verify_local_symmetric_in_failure():
    beta = 0.25
    sigma = Trajectory(Pose(), (MotionPrimitive(KMAX, 10.0, 0.5),))
    shifted = Trajectory(Pose((2 * beta, 0.0, 0.0), sigma.start.q), sigma.primitives)
    assert not verify_local_strict(sigma, shifted, beta).passed
    assert not verify_local_strict(shifted, sigma, beta).passed


def test_verify_local_length_ratio_gate():
    sigma = Trajectory(Pose(), (MotionPrimitive(0.0, 10.0, 0.0),))
    longer = Trajectory(Pose(), (MotionPrimitive(0.0, 14.0, 0.0),))
    rep = verify_local_strict(sigma, longer, 0.3)
    assert not rep.passed  # 1.4 > 1.3 even though deviation stays small


def test_verify_piecewise_identity_and_shift():
    prims = (MotionPrimitive(KMAX, 6.0, 0.3), MotionPrimitive(0.0, 4.0, 0.0))
    sigma = Trajectory(Pose(), prims)
    part = ([0.0, 6.0, 10.0], [0.0, 6.0, 10.0])
    assert verify_piecewise(sigma, sigma, part, 0.2).passed
    shifted = Trajectory(Pose((0.5, 0.0, 0.0)), prims)
    assert not verify_piecewise(sigma, shifted, part, 0.2).passed


def test_verify_piecewise_partition_errors():
    sigma = Trajectory(Pose(), (MotionPrimitive(0.0, 10.0, 0.0),))
    with pytest.raises(ValueError):
        verify_piecewise(sigma, sigma, ([0.0, 10.0], [0.0, 5.0, 10.0]), 0.2)
    with pytest.raises(ValueError):
        verify_piecewise(sigma, sigma, ([0.0, 8.0], [0.0, 8.0]), 0.2)


# -- action distance ----------------------------------------------------------

def test_action_distance_identity():
    m = MotionPrimitive(KMAX, 7.0, 1.1)
    assert action_distance(m, m) == 0.0


def test_action_distance_endpoint_separation():
    m1 = MotionPrimitive(KMAX, 6.0, 0.4)
    m2 = MotionPrimitive(KMAX, 9.0, 0.4)
    e1 = apply_primitive(Pose(), m1)
    e2 = apply_primitive(Pose(), m2)
    assert action_distance(m1, m2) >= pose_distance(e1, e2, 1.0) - 1e-9


def test_action_distance_equal_curvature_upper_bound(rng):
    alpha = 1.0
    for _ in range(60):
        kappa = float(rng.uniform(0.2 * KMAX, KMAX))
        l1, l2 = rng.uniform(1.0, 20.0, 2)
        t1, t2 = rng.uniform(0.0, 2 * math.pi, 2)
        m1 = MotionPrimitive(kappa, float(l1), float(t1))
        m2 = MotionPrimitive(kappa, float(l2), float(t2))
        dth = abs(t1 - t2)
        dl = abs(l1 - l2)
        bound = dth * min(l1, l2) + dl + alpha * (dth + dl / kappa)
        assert action_distance(m1, m2, alpha) <= bound + 1e-6


# -- Lipschitz ----------------------------------------------------------------

def test_lipschitz_translation_ratio_is_one():
    m = MotionPrimitive(KMAX, 9.0, 0.8)
    x1 = Pose((0, 0, 0))
    x2 = Pose((3, -1, 2))
    num = pose_distance(apply_primitive(x1, m), apply_primitive(x2, m), 1.0)
    den = pose_distance(x1, x2, 1.0)
    assert abs(num / den - 1.0) < 1e-12


def test_lipschitz_estimate_at_least_one():
    est = estimate_lipschitz(500, 3, kappa_max=KMAX)
    assert est.value >= 1.0
    assert est.raw_max >= 1.0


def test_lipschitz_estimate_stabilizes():
    a = estimate_lipschitz(10_000, 11, kappa_max=KMAX)
    b = estimate_lipschitz(100_000, 12, kappa_max=KMAX)
    assert abs(a.value - b.value) / b.value < 0.05


# -- similar-cost bound --------------------------------------------------------

def test_cost_bound_uniform_cost_reduces_to_length():
    env = make_env(dims=(32, 32, 32))
    sigma = Trajectory(Pose((16, 16, 4)), (MotionPrimitive(0.0, 10.0, 0.0),))
    longer = Trajectory(Pose((16, 16, 4)), (MotionPrimitive(0.0, 10.09, 0.0),))
    beta = 0.1
    assert verify_local_strict(sigma, longer, beta).passed
    # with c == 1 the bound is exactly the length-ratio condition
    assert cost_bound_check(sigma, longer, beta, L_c=0.0, c_min=1.0, c_max=1.0, env=env)
    assert env.trajectory_cost(longer) <= (1.0 + beta) * env.trajectory_cost(sigma)


def test_cost_bound_identity_holds():
    env = make_env(dims=(32, 32, 32))
    sigma = Trajectory(Pose((16, 16, 4)), (MotionPrimitive(KMAX, 12.0, 0.4),))
    assert cost_bound_check(sigma, sigma, 0.05, L_c=0.2, c_min=0.01, c_max=1.0, env=env)


def test_cost_bound_pre_violated_raises():
    env = make_env(dims=(32, 32, 32))
    sigma = Trajectory(Pose((16, 16, 4)), (MotionPrimitive(0.0, 10.0, 0.0),))
    far = Trajectory(Pose((20, 16, 4)), (MotionPrimitive(0.0, 10.0, 0.0),))
    with pytest.raises(ValueError):
        cost_bound_check(sigma, far, 0.05, L_c=0.0, c_min=1.0, c_max=1.0, env=env)


def test_cost_bound_randomized_duty_cycle(rng):
    from scipy import ndimage
    n_cases = 60
    dims = (32, 32, 32)
    noise = ndimage.gaussian_filter(rng.standard_normal(dims), sigma=3.0)
    unit = (noise - noise.min()) / (noise.max() - noise.min())
    cost = 0.01 + 0.99 * unit
    env = make_env(dims=dims, cost=cost, c_min=0.01, c_max=1.0)
    L_hat = (env.c_max - env.c_min) * math.sqrt(3.0) / env.spacing
    holds = 0
    for _ in range(n_cases):
        kappa = float(rng.uniform(0.1 * KMAX, 0.9 * KMAX))
        ell = float(rng.uniform(4.0, 10.0))
        sigma = Trajectory(Pose((16, 16, 8)), (MotionPrimitive(kappa, ell, float(rng.uniform(0, 2 * math.pi))),))
        beta = 0.3
        out, _ = duty_cycle_approximate(sigma, beta, KMAX, alpha=1.0)
        holds += cost_bound_check(sigma, out, beta, L_c=L_hat, c_min=env.c_min,
                                  c_max=env.c_max, env=env)
    assert holds == n_cases


# -- pruning error ---------------------------------------------------------

def test_pruning_error_bound_values():
    assert pruning_error_bound(2.0, 1, 0.1) == pytest.approx(0.1)
    assert pruning_error_bound(2.0, 3, 0.1) == pytest.approx(0.7)
    with pytest.raises(ValueError):
        pruning_error_bound(1.0, 3, 0.1)
    with pytest.raises(ValueError):
        pruning_error_bound(2.0, 0, 0.1)


def test_pruning_replay_within_bound():
    est = estimate_lipschitz(3000, 5, kappa_max=KMAX)
    n, d_sim = 5, 0.1
    bound = pruning_error_bound(est.value, n, d_sim)
    for seed in range(30):
        assert pruning_drift_replay(n, d_sim, seed, kappa_max=KMAX) <= bound


# -- brute-force oracle -------------------------------------------------------

def _oracle_problem(occupancy=None, goal=(12.0, 12.0, 13.0), cost_kind="length"):
    env = make_env(occupancy=occupancy, needle_radius=0.5)
    return PlanningProblem(env=env, x_start=Pose((12.0, 12.0, 3.0)), p_goal=goal,
                           tau=1.5, ell_max=14.0, kappa_max=0.2, cost_kind=cost_kind)


def test_oracle_goal_at_start():
    problem = _oracle_problem(goal=(12.0, 12.0, 3.5))
    out = brute_force_optimal(problem, Resolution(5.0, math.pi / 2), 2, 10.0)
    assert out is not None
    assert out[1] == 0.0
    assert out[0].primitives == ()


def test_oracle_sealed_goal_none():
    goal = (12.0, 12.0, 14.0)
    occ = sphere_shell((24, 24, 24), 1.0, goal, 3.0, 5.5)
    problem = _oracle_problem(occupancy=occ, goal=goal)
    assert brute_force_optimal(problem, Resolution(5.0, math.pi / 2), 3, 10.0) is None


def test_oracle_matches_planner_exactly():
    problem = _oracle_problem()
    r = Resolution(5.0, math.pi / 4)
    out = brute_force_optimal(problem, r, 3, 10.0)
    assert out is not None
    cfg = PlannerConfig(mode="ROS", r_min=r, delta_ell_max=10.0, time_budget_ms=None,
                        use_direct_connect=False)
    res = plan(problem, cfg)
    assert res.found()
    assert abs(res.best_cost - out[1]) < 1e-9


def test_oracle_order_invariant():
    problem = _oracle_problem()
    r = Resolution(5.0, math.pi / 4)
    a = brute_force_optimal(problem, r, 3, 10.0)
    b = brute_force_optimal(problem, r, 3, 10.0, shuffle_seed=7)
    assert a is not None and b is not None
    assert abs(a[1] - b[1]) < 1e-12


def test_oracle_guard_rejects_huge_instances():
    problem = _oracle_problem()
    with pytest.raises(InstanceTooLargeError):
        brute_force_optimal(problem, Resolution(0.125, 0.157), 8, 20.0)
