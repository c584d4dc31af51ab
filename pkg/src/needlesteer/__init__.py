"""Motion planning for bevel-tip steerable needles: a resolution-aware
best-first lattice planner with theory-backed pruning bounds, an anytime RRT
baseline, synthetic benchmark scenarios, and a numeric validation suite."""

from .environment import Environment, ScenarioSpec, generate_scenario, load_env, save_env
from .guidance import ReachSpec, direct_goal_connect, dubins_point_distance, goal_reachable, heuristic, inevitable_collision, olive_contains
from .kinematics import MotionPrimitive, Pose, Trajectory, angular_distance, apply_primitive, pose_distance, sample_trajectory
from .lattice import Resolution, canonical_key, coarsest_primitives, finest_set, node_rank, refine_primitives, valid_resolution
from .rrt import RrtConfig, rrt_plan, steer
from .search import Node, PlannerConfig, PlanningProblem, PlanResult, dsim_from_theory, plan
from .theory import (
    ApproxReport,
    action_distance,
    brute_force_optimal,
    cost_bound_check,
    duty_cycle_approximate,
    duty_cycle_segment,
    estimate_lipschitz,
    pruning_error_bound,
    verify_local_strict,
    verify_piecewise,
)

__version__ = "0.1.0"
