"""Cost-to-go heuristic and conservative reachability pruning gates.

All gates err on the permissive side: a node is only rejected when the
over-approximated reachable region provably excludes the goal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .environment import Environment, arc_sample_lengths, collision_spacing
from .kinematics import (
    MotionPrimitive,
    Pose,
    Trajectory,
    apply_primitive,
    quat_conjugate,
    quat_rotate,
)


@dataclass(frozen=True)
class ReachSpec:
    """Kinematic envelope for reachability tests."""

    kappa_max: float
    remaining_length: float
    tau: float
    max_turn: float = 0.5 * math.pi

    def __post_init__(self):
        if self.kappa_max <= 0.0 or self.remaining_length < 0.0 or self.tau <= 0.0:
            raise ValueError("ReachSpec fields must be positive")
        if self.max_turn > 0.5 * math.pi + 1e-12:
            raise ValueError("max_turn cannot exceed pi/2")


def _local_goal(x: Pose, g) -> tuple[float, float, float]:
    """(lateral distance a, forward distance b, plane angle) of g in x's frame."""
    gl = quat_rotate(quat_conjugate(x.q), (g[0] - x.p[0], g[1] - x.p[1], g[2] - x.p[2]))
    a = math.hypot(gl[0], gl[1])
    theta = math.atan2(gl[1], gl[0]) % (2.0 * math.pi) if a > 1e-12 else 0.0
    return a, gl[2], theta


def dubins_point_distance(x: Pose, g, kappa_max: float) -> float:
    """Shortest bounded-curvature forward path length from pose x to point g
    with free terminal heading, solved in the plane spanned by x and g.

    Outside the minimum turning circle this is the exact circle-segment (CS)
    path; inside, the aim-angle arc serves as a lower bound. The result never
    drops below the Euclidean distance.
    """
    a, b, _ = _local_goal(x, g)
    euclid = math.hypot(a, b)
    if euclid < 1e-12:
        return 0.0
    r = 1.0 / kappa_max
    wu, wv = a - r, b
    w2 = wu * wu + wv * wv
    if w2 >= r * r:
        straight = math.sqrt(max(0.0, w2 - r * r))
        phi = _wrap_turn(math.atan2(wu, wv) + math.atan2(r, straight))
        return max(euclid, r * phi + straight)
    return max(euclid, r * math.atan2(a, b))


def _wrap_turn(phi: float) -> float:
    """Wrap an arc angle into [0, 2*pi), snapping the roundoff band just
    below 2*pi to zero so an on-axis goal never costs a full loop."""
    phi = phi % (2.0 * math.pi)
    if phi > 2.0 * math.pi - 1e-9:
        return 0.0
    return phi


def heuristic(x: Pose, g, tau: float, kappa_max: float, c_min: float) -> float:
    """Admissible cost-to-go: c_min times the shortest feasible length that
    could still be needed; zero inside the goal tolerance."""
    d = math.dist(x.p, g)
    if d <= tau:
        return 0.0
    return c_min * max(0.0, dubins_point_distance(x, g, kappa_max) - tau)


def goal_reachable(x: Pose, g, spec: ReachSpec) -> bool:
    """Trumpet test: goal within the forward turn cone and close enough to be
    reached with the remaining insertion length (plus tolerance slack)."""
    d = math.dist(x.p, g)
    if d <= spec.tau:
        return True
    t = x.tangent()
    cosang = ((g[0] - x.p[0]) * t[0] + (g[1] - x.p[1]) * t[1] + (g[2] - x.p[2]) * t[2]) / d
    if math.acos(min(1.0, max(-1.0, cosang))) > spec.max_turn + 1e-12:
        return False
    return dubins_point_distance(x, g, spec.kappa_max) <= spec.remaining_length + spec.tau + 1e-9


def olive_diameter(pv, g, tau: float, kappa_max: float) -> float:
    chord = math.dist(pv, g)
    return max(2.0 / kappa_max, tau + chord)


def olive_contains(pv, g, tau: float, kappa_max: float, w) -> bool:
    """Over-approximate membership of w in the spindle of feasible positions
    between pv and the goal: inside the bounding sphere, and either within
    tau of the chord or on some through-arc of diameter at most d."""
    pv = np.asarray(pv, dtype=float)
    g = np.asarray(g, dtype=float)
    w = np.asarray(w, dtype=float)
    chord_vec = g - pv
    chord = float(np.linalg.norm(chord_vec))
    if chord < 1e-9:
        return bool(np.linalg.norm(w - pv) <= tau)
    d = olive_diameter(tuple(pv), tuple(g), tau, kappa_max)
    if np.linalg.norm(w - 0.5 * (pv + g)) > 0.5 * d + 1e-12:
        return False
    # distance from w to the chord segment
    t = float(np.clip((w - pv) @ chord_vec / (chord * chord), 0.0, 1.0))
    if np.linalg.norm(w - (pv + t * chord_vec)) <= tau + 1e-12:
        return True
    ra = float(np.linalg.norm(w - pv))
    rb = float(np.linalg.norm(w - g))
    area2 = float(np.linalg.norm(np.cross(w - pv, w - g)))  # 2 * triangle area
    if area2 < 1e-12:
        return False
    return ra * rb * chord / (2.0 * area2) <= 0.5 * d + 1e-12


def _region_masks(env: Environment, x: Pose, g, spec: ReachSpec) -> np.ndarray:
    """Voxel-center mask of the approximated reachable workspace, relaxed by
    the half-voxel diagonal so point membership implies voxel membership."""
    centers = env.voxel_centers()
    h_diag = 0.5 * env.spacing * math.sqrt(3.0)
    p = np.asarray(x.p)
    g = np.asarray(g, dtype=float)
    rel = centers - p
    dist = np.linalg.norm(rel, axis=-1)
    tvec = np.array(x.tangent())
    with np.errstate(invalid="ignore", divide="ignore"):
        cosang = np.where(dist > 1e-12, (rel @ tvec) / np.maximum(dist, 1e-12), 1.0)
    slack = np.arcsin(np.clip(h_diag / np.maximum(dist, h_diag), 0.0, 1.0))
    cone = (np.arccos(np.clip(cosang, -1.0, 1.0)) <= spec.max_turn + slack) | (dist <= h_diag)

    tau_r = spec.tau + h_diag
    chord_vec = g - p
    chord = float(np.linalg.norm(chord_vec))
    d = max(2.0 / spec.kappa_max, tau_r + chord)
    mid = 0.5 * (p + g)
    ball = np.linalg.norm(centers - mid, axis=-1) <= 0.5 * d
    t = np.clip((rel @ chord_vec) / max(chord * chord, 1e-12), 0.0, 1.0)
    seg_pts = p + t[..., None] * chord_vec
    tube = np.linalg.norm(centers - seg_pts, axis=-1) <= tau_r
    rb = np.linalg.norm(centers - g, axis=-1)
    area2 = np.linalg.norm(np.cross(centers - p, centers - g), axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        circum = np.where(area2 > 1e-12, dist * rb * chord / (2.0 * np.maximum(area2, 1e-300)), np.inf)
    olive = ball & (tube | (circum <= 0.5 * d))
    return cone & olive & ~env.inflated


def inevitable_collision(env: Environment, x: Pose, g, spec: ReachSpec) -> bool:
    """Region growing inside the approximated reachable workspace; True means
    every feasible continuation from x provably misses the goal region."""
    accepted = _region_masks(env, x, g, spec)
    seed = env.voxel_index(x.p)
    if seed is None:
        return True
    accepted = accepted.copy()
    accepted[seed] = True
    labels, _ = ndimage.label(accepted, structure=ndimage.generate_binary_structure(3, 1))
    seed_label = labels[seed]
    h_diag = 0.5 * env.spacing * math.sqrt(3.0)
    goal_ball = np.linalg.norm(env.voxel_centers() - np.asarray(g, dtype=float), axis=-1) <= spec.tau + h_diag
    if not np.any(goal_ball):
        return True
    return not bool(np.any(labels[goal_ball] == seed_label))


def direct_goal_connect(env: Environment, x: Pose, g, tau: float, kappa_max: float,
                        ell_remaining: float) -> Trajectory | None:
    """Build the in-plane CS path from x to g as one or two primitives and
    return it when collision free, within budget, and on target."""
    a, b, theta = _local_goal(x, g)
    euclid = math.hypot(a, b)
    if euclid <= tau:
        return Trajectory(x, ())
    r = 1.0 / kappa_max
    wu, wv = a - r, b
    w2 = wu * wu + wv * wv
    if w2 < r * r:
        return None
    straight = math.sqrt(max(0.0, w2 - r * r))
    phi = _wrap_turn(math.atan2(wu, wv) + math.atan2(r, straight))
    total = r * phi + straight
    if total > ell_remaining + 1e-9:
        return None
    prims = []
    if r * phi > 1e-9:
        prims.append(MotionPrimitive(kappa_max, r * phi, theta))
        if straight > 1e-9:
            prims.append(MotionPrimitive(0.0, straight, 0.0))
    elif straight > 1e-9:
        prims.append(MotionPrimitive(0.0, straight, theta if a > 1e-12 else 0.0))
    else:
        return None
    traj = Trajectory(x, tuple(prims))
    end = traj.end_pose()
    if math.dist(end.p, tuple(g)) > max(tau, 1e-6):
        return None
    pose = x
    for m in prims:
        if not env.edge_collision_free(pose, m):
            return None
        pose = apply_primitive(pose, m)
    return traj
