import json
import math

import numpy as np
import pytest

from needlesteer.kinematics import MotionPrimitive, Pose, apply_primitive
from needlesteer.rrt import RrtConfig, rrt_plan, steer
from needlesteer.search import PlanningProblem

from conftest import make_env, sphere_shell


def _problem(occupancy=None, goal=(12.0, 12.0, 20.0), ell_max=30.0, kappa_max=0.2):
    env = make_env(occupancy=occupancy, needle_radius=0.5)
    return PlanningProblem(env=env, x_start=Pose((12.0, 12.0, 3.0)), p_goal=goal,
                           tau=1.0, ell_max=ell_max, kappa_max=kappa_max,
                           cost_kind="length")


def test_steer_on_axis_straight():
    m = steer(Pose(), (0.0, 0.0, 12.0), 0.1, 20.0)
    assert m.kappa == 0.0
    assert abs(m.delta_ell - 12.0) < 1e-12


def test_steer_behind_none():
    assert steer(Pose(), (0.0, 0.0, -5.0), 0.1, 20.0) is None


def test_steer_quarter_arc_inversion():
    kappa = 0.1
    r = 1.0 / kappa
    for theta in (0.0, 0.7, math.pi, 5.1):
        target = apply_primitive(Pose(), MotionPrimitive(kappa, math.pi / 2 * r, theta)).p
        m = steer(Pose(), target, kappa, 1000.0)
        assert abs(m.kappa - kappa) < 1e-9
        assert abs((m.delta_theta - theta + math.pi) % (2 * math.pi) - math.pi) < 1e-9
        assert abs(m.delta_ell - math.pi / 2 * r) < 1e-6


def test_steer_caps_step_length():
    m = steer(Pose(), (0.0, 0.0, 50.0), 0.1, 20.0)
    assert m.delta_ell == 20.0


def test_rrt_empty_env_cost_lower_bound():
    problem = _problem()
    res = rrt_plan(problem, RrtConfig(seed=4, step_ell=10.0, time_budget_ms=None, max_iters=200))
    assert res.found()
    assert res.best_cost >= math.dist(problem.x_start.p, problem.p_goal) - problem.tau - 1e-9


def test_rrt_sealed_goal_no_plan():
    goal = (12.0, 12.0, 16.0)
    occ = sphere_shell((24, 24, 24), 1.0, goal, 3.0, 5.5)
    problem = _problem(occupancy=occ, goal=goal)
    res = rrt_plan(problem, RrtConfig(seed=4, step_ell=8.0, time_budget_ms=None, max_iters=300))
    assert not res.found()
    assert res.terminated == "timeout"


def test_rrt_deterministic():
    occ = np.zeros((24, 24, 24), bool)
    occ[9:15, 9:15, 10:12] = True
    problem = _problem(occupancy=occ)
    cfg = dict(seed=9, step_ell=6.0, time_budget_ms=None, max_iters=300)
    a = rrt_plan(problem, RrtConfig(**cfg)).to_json(include_timing=False)
    b = rrt_plan(problem, RrtConfig(**cfg)).to_json(include_timing=False)
    assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)


def test_rrt_plan_revalidates():
    occ = np.zeros((24, 24, 24), bool)
    occ[9:15, 9:15, 10:12] = True
    problem = _problem(occupancy=occ)
    res = rrt_plan(problem, RrtConfig(seed=2, step_ell=6.0, time_budget_ms=None, max_iters=600))
    assert res.found()
    pose = problem.x_start
    for m in res.best.primitives:
        assert m.kappa <= problem.kappa_max + 1e-12
        assert problem.env.edge_collision_free(pose, m)
        pose = apply_primitive(pose, m)
    assert math.dist(pose.p, problem.p_goal) <= problem.tau + 1e-9
    assert res.best.length <= problem.ell_max + 1e-9
    costs = [c for _, c in res.trace]
    assert all(b < a for a, b in zip(costs, costs[1:]))
