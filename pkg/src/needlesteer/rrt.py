"""Anytime RRT baseline for steerable-needle planning.

Workspace-sampling variant: random 3D points (goal-biased), nearest tree
node among those that can still reach the sample inside the kinematic
trumpet, constant-curvature steering toward the sample, and a direct goal
connection attempt after every extension. Keeps running after the first
plan and returns the cheapest one found.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .errors import InvalidStartError
from .guidance import ReachSpec, direct_goal_connect, goal_reachable
from .kinematics import MotionPrimitive, Pose, Trajectory, apply_primitive, quat_conjugate, quat_rotate
from .search import EPS_COST, PlanResult, PlanningProblem


@dataclass
class RrtConfig:
    goal_bias: float = 0.05
    step_ell: float = 20.0
    seed: int = 0
    time_budget_ms: float | None = 10000.0
    max_iters: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.goal_bias <= 1.0:
            raise ValueError("goal_bias must be in [0, 1]")
        if not self.step_ell > 0.0:
            raise ValueError("step_ell must be positive")


def steer(from_pose: Pose, target, kappa_max: float, step_ell: float) -> MotionPrimitive | None:
    """Constant-curvature step toward a workspace point.

    The curving plane is rotated onto the target, curvature solves the
    in-plane aiming arc (clamped to kappa_max), and the length is capped at
    step_ell or the arc's closest approach. Targets behind the tip yield None.
    """
    gl = quat_rotate(
        quat_conjugate(from_pose.q),
        (target[0] - from_pose.p[0], target[1] - from_pose.p[1], target[2] - from_pose.p[2]),
    )
    a = math.hypot(gl[0], gl[1])
    b = gl[2]
    if b <= 1e-9:
        return None
    if a <= 1e-12:
        return MotionPrimitive(0.0, min(step_ell, b), 0.0)
    theta = math.atan2(gl[1], gl[0]) % (2.0 * math.pi)
    kappa = min(2.0 * a / (a * a + b * b), kappa_max)
    r = 1.0 / kappa
    phi = math.atan2(b, r - a) % (2.0 * math.pi)
    ell = min(step_ell, r * phi)
    if ell <= 1e-9:
        return None
    return MotionPrimitive(kappa, ell, theta)


class _TreeNode:
    __slots__ = ("pose", "parent", "primitive", "cost", "length")

    def __init__(self, pose, parent, primitive, cost, length):
        self.pose = pose
        self.parent = parent
        self.primitive = primitive
        self.cost = cost
        self.length = length

    def path_primitives(self):
        prims = []
        node = self
        while node.parent is not None:
            prims.append(node.primitive)
            node = node.parent
        return tuple(reversed(prims))


def rrt_plan(problem: PlanningProblem, cfg: RrtConfig) -> PlanResult:
    env = problem.env
    if not env.is_free(problem.x_start.p):
        raise InvalidStartError("start pose is in collision or outside the workspace")
    rng = np.random.default_rng(cfg.seed)
    g = np.asarray(problem.p_goal)
    length_cost = problem.cost_kind == "length"
    lo, hi = env.origin, env.upper

    t0 = time.perf_counter()

    def elapsed_ms():
        return (time.perf_counter() - t0) * 1000.0

    nodes = [_TreeNode(problem.x_start, None, None, 0.0, 0.0)]
    positions = [problem.x_start.p]
    tangents = [problem.x_start.tangent()]
    remaining = [problem.ell_max]
    best_traj = None
    best_cost = math.inf
    trace = []
    iters = 0

    def update_best(traj, cost):
        nonlocal best_traj, best_cost
        if cost < best_cost - EPS_COST:
            best_traj, best_cost = traj, cost
            trace.append((elapsed_ms(), cost))

    def try_goal_connect(node):
        suffix = direct_goal_connect(env, node.pose, tuple(g), problem.tau,
                                     problem.kappa_max, problem.ell_max - node.length)
        if suffix is None:
            return
        if length_cost:
            suffix_cost = suffix.length
        else:
            try:
                suffix_cost = env.trajectory_cost(suffix)
            except Exception:
                return
        update_best(Trajectory(problem.x_start, node.path_primitives() + suffix.primitives),
                    node.cost + suffix_cost)

    if math.dist(problem.x_start.p, tuple(g)) <= problem.tau:
        update_best(Trajectory(problem.x_start, ()), 0.0)

    while True:
        if cfg.time_budget_ms is not None and elapsed_ms() >= cfg.time_budget_ms:
            break
        if cfg.max_iters is not None and iters >= cfg.max_iters:
            break
        iters += 1
        if rng.random() < cfg.goal_bias:
            sample = g
        else:
            sample = rng.uniform(lo, hi)
        # nearest by position among nodes from which the sample is
        # trumpet-reachable; cheap vectorized rejections first
        pos_arr = np.asarray(positions)
        rel = sample - pos_arr
        dists = np.linalg.norm(rel, axis=1)
        with np.errstate(invalid="ignore"):
            cosang = np.einsum("ij,ij->i", rel, np.asarray(tangents)) / np.maximum(dists, 1e-12)
        plausible = (dists <= np.asarray(remaining) + problem.tau + 1e-9) & (
            (cosang >= -1e-12) | (dists <= problem.tau))
        picked = None
        for idx in np.argsort(dists):
            if not plausible[idx]:
                continue
            node = nodes[int(idx)]
            spec = ReachSpec(
                kappa_max=problem.kappa_max,
                remaining_length=problem.ell_max - node.length,
                tau=problem.tau,
            )
            if goal_reachable(node.pose, tuple(sample), spec):
                picked = node
                break
        if picked is None:
            continue
        m = steer(picked.pose, tuple(sample), problem.kappa_max, cfg.step_ell)
        if m is None:
            continue
        if picked.length + m.delta_ell > problem.ell_max + 1e-9:
            continue
        if not env.edge_collision_free(picked.pose, m):
            continue
        if length_cost:
            edge = m.delta_ell
        else:
            edge = env.edge_cost(picked.pose, m)
            if math.isinf(edge):
                continue
        child = _TreeNode(apply_primitive(picked.pose, m), picked, m,
                          picked.cost + edge, picked.length + m.delta_ell)
        nodes.append(child)
        positions.append(child.pose.p)
        tangents.append(child.pose.tangent())
        remaining.append(problem.ell_max - child.length)
        if math.dist(child.pose.p, tuple(g)) <= problem.tau:
            update_best(Trajectory(problem.x_start, child.path_primitives()), child.cost)
        try_goal_connect(child)

    return PlanResult(
        best=best_traj,
        best_cost=best_cost if best_traj is not None else math.inf,
        trace=trace,
        nodes_expanded=len(nodes),
        nodes_pruned_duplicate=0,
        nodes_pruned_reach=0,
        nodes_pruned_cost=0,
        nodes_pruned_equivalent=0,
        nodes_pruned_invalid=0,
        nodes_inserted=len(nodes),
        terminated="timeout",
        wall_ms=elapsed_ms(),
    )
