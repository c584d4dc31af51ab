"""Numerical embodiment of the approximation theory behind the planner.

Contents: the duty-cycling construction that emulates intermediate
curvatures with straight and max-curvature segments, strict-approximation
checkers, the action-space metric and system Lipschitz estimate, the
similar-cost bound, the pruning-error accumulation bound with a replay
experiment, an independent RK4 integrator for the tip ODE, and a
brute-force lattice oracle with no search-side pruning.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .environment import Environment, arc_local_points, arc_sample_lengths, collision_spacing
from .errors import InstanceTooLargeError
from .kinematics import (
    TWO_PI,
    MotionPrimitive,
    Pose,
    Trajectory,
    apply_primitive,
    batch_apply_primitive,
    batch_quat_multiply,
    batch_quat_to_matrix,
    pose_distance,
    quat_about_y,
    quat_about_z,
    quat_multiply,
    quat_to_matrix,
)
from .lattice import Resolution, ell_step, theta_step


# ---------------------------------------------------------------------------
# Strict approximation reports
# ---------------------------------------------------------------------------

@dataclass
class ApproxReport:
    """Outcome of a strict-approximation check.

    beta_measured is the largest pointwise pose deviation observed,
    length_ratio the worst per-piece length ratio, and cost_ratio its
    uniform-cost interpretation (cost == length for c == 1).
    """

    beta_measured: float
    length_ratio: float
    cost_ratio: float
    passed: bool


def _poses_at(traj: Trajectory, svals: np.ndarray) -> list[Pose]:
    return [traj.pose_at(float(s)) for s in svals]


def verify_local_strict(sigma: Trajectory, sigma_prime: Trajectory, beta: float,
                        alpha: float = 1.0, offset: float = 0.0,
                        offset_prime: float = 0.0, length: float | None = None,
                        length_prime: float | None = None) -> ApproxReport:
    """Check the three local strict-approximation conditions: bounded length
    ratio, bounded pointwise deviation on the shared domain, and bounded tail
    distance to the shorter trajectory's endpoint.

    The optional offsets/lengths restrict the check to a sub-interval so the
    piecewise variant can reuse it.
    """
    if beta <= 0.0:
        raise ValueError("beta must be positive")
    l = sigma.length - offset if length is None else length
    lp = sigma_prime.length - offset_prime if length_prime is None else length_prime
    h = max(beta / 10.0, 1e-6)
    lmin = min(l, lp)
    shared = np.arange(0.0, lmin, h)
    worst = 0.0
    for s in shared:
        worst = max(worst, pose_distance(sigma.pose_at(offset + s),
                                         sigma_prime.pose_at(offset_prime + s), alpha))
    end_pose = sigma.pose_at(offset + l)
    tail = np.arange(lmin, lp, h) if lp > lmin else np.array([])
    for s in tail:
        worst = max(worst, pose_distance(end_pose, sigma_prime.pose_at(offset_prime + s), alpha))
    worst = max(worst, pose_distance(end_pose if lp >= l else sigma.pose_at(offset + lp),
                                     sigma_prime.pose_at(offset_prime + lp), alpha))
    ratio = lp / l if l > 0 else (1.0 if lp == 0 else math.inf)
    passed = (lp <= (1.0 + beta) * l + 1e-12) and worst <= beta + 1e-12
    return ApproxReport(beta_measured=worst, length_ratio=ratio, cost_ratio=ratio, passed=passed)


def verify_piecewise(sigma: Trajectory, sigma_prime: Trajectory, partition,
                     beta: float, alpha: float = 1.0) -> ApproxReport:
    """Conjunction of local strict checks over matched partition pieces."""
    s_breaks, sp_breaks = partition
    if len(s_breaks) != len(sp_breaks):
        raise ValueError("partition sequences differ in size")
    if len(s_breaks) < 2:
        raise ValueError("partition needs at least two breakpoints")
    if abs(s_breaks[0]) > 1e-9 or abs(sp_breaks[0]) > 1e-9:
        raise ValueError("partitions must start at 0")
    if abs(s_breaks[-1] - sigma.length) > 1e-6 or abs(sp_breaks[-1] - sigma_prime.length) > 1e-6:
        raise ValueError("partitions must end at the trajectory lengths")
    worst = 0.0
    ratio = 0.0
    passed = True
    for i in range(len(s_breaks) - 1):
        rep = verify_local_strict(
            sigma, sigma_prime, beta, alpha,
            offset=s_breaks[i], offset_prime=sp_breaks[i],
            length=s_breaks[i + 1] - s_breaks[i],
            length_prime=sp_breaks[i + 1] - sp_breaks[i],
        )
        worst = max(worst, rep.beta_measured)
        ratio = max(ratio, rep.length_ratio)
        passed = passed and rep.passed
    return ApproxReport(beta_measured=worst, length_ratio=ratio, cost_ratio=ratio, passed=passed)


# ---------------------------------------------------------------------------
# Duty cycling
# ---------------------------------------------------------------------------

def duty_cycle_segment(r: float, eta: float, kappa_max: float) -> list[MotionPrimitive]:
    """Straight / max-curvature arc / straight triple that exactly matches the
    endpoint and end tangent of an arc of radius r and central angle eta.

    The straight length is t = (r - 1/kappa_max) * tan(eta/2); at
    r == 1/kappa_max it degenerates to the pure max-curvature arc and the
    zero-length straights are omitted.
    """
    r_min = 1.0 / kappa_max
    if r < r_min - 1e-12:
        raise ValueError(f"target radius {r} tighter than minimum {r_min}")
    if not 0.0 < eta < 0.5 * math.pi:
        raise ValueError(f"central angle {eta} outside (0, pi/2)")
    t = (r - r_min) * math.tan(0.5 * eta)
    arc = MotionPrimitive(kappa_max, eta * r_min, 0.0)
    if t <= 1e-12:
        return [arc]
    return [MotionPrimitive(0.0, t, 0.0), arc, MotionPrimitive(0.0, t, 0.0)]


def _duty_cycle_eta(r: float, total_angle: float, seg_length: float,
                    beta_d: float, alpha: float) -> float:
    """Largest sub-arc angle meeting the deviation and length-ratio budgets."""
    n = max(1, int(math.ceil(total_angle / (0.49 * math.pi))))
    while True:
        eta = total_angle / n
        dev = r * (1.0 / math.cos(0.5 * eta) - 1.0) + alpha * 0.5 * eta
        ratio_ok = 2.0 * math.tan(0.5 * eta) / eta <= 1.0 + beta_d / seg_length + 1e-15
        if dev <= beta_d and ratio_ok:
            return eta
        n += 1
        if n > 10_000_000:
            raise ValueError("cannot satisfy duty-cycling budget")


def duty_cycle_approximate(sigma: Trajectory, beta_d: float, kappa_max: float,
                           alpha: float = 0.0):
    """Rebuild sigma using only curvatures {0, kappa_max} via duty cycling.

    Primitives already at curvature 0 or kappa_max pass through unchanged.
    Each intermediate-curvature primitive is split into equal sub-arcs whose
    triple approximations meet the beta_d deviation and per-primitive length
    budgets. Returns (trajectory, partition) where the partition holds
    matched arclength breakpoints for verify_piecewise.
    """
    if beta_d <= 0.0:
        raise ValueError("beta_d must be positive")
    if any(m.kappa > kappa_max + 1e-12 for m in sigma.primitives):
        raise ValueError("trajectory exceeds kappa_max; not decomposable for this system")
    out: list[MotionPrimitive] = []
    breaks_in = [0.0]
    breaks_out = [0.0]
    s_in = 0.0
    s_out = 0.0
    for m in sigma.primitives:
        if m.kappa == 0.0 or abs(m.kappa - kappa_max) <= 1e-12:
            out.append(m)
            s_in += m.delta_ell
            s_out += m.delta_ell
        else:
            r = 1.0 / m.kappa
            total_angle = m.kappa * m.delta_ell
            eta = _duty_cycle_eta(r, total_angle, m.delta_ell, beta_d, alpha)
            n = int(round(total_angle / eta))
            first = True
            for _ in range(n):
                triple = duty_cycle_segment(r, eta, kappa_max)
                if first and m.delta_theta != 0.0:
                    lead = triple[0]
                    triple[0] = MotionPrimitive(lead.kappa, lead.delta_ell, m.delta_theta)
                first = False
                out.extend(triple)
                s_out += sum(t.delta_ell for t in triple)
            s_in += m.delta_ell
        breaks_in.append(s_in)
        breaks_out.append(s_out)
    return Trajectory(sigma.start, tuple(out)), (breaks_in, breaks_out)


# ---------------------------------------------------------------------------
# Action-space metric and system Lipschitz constant
# ---------------------------------------------------------------------------

def _primitive_pose_at(m: MotionPrimitive, s: float) -> Pose:
    if s <= 0.0:
        return Pose()
    return apply_primitive(Pose(), MotionPrimitive(m.kappa, min(s, m.delta_ell), m.delta_theta))


def action_distance(m1: MotionPrimitive, m2: MotionPrimitive, alpha: float = 1.0,
                    step: float | None = None) -> float:
    """Sampled supremum distance between the trajectories the two primitives
    trace from a common reference pose (start-invariant, so identity is used).

    Two regimes: pointwise over the shared arclength domain, then with the
    shorter trajectory clamped to its endpoint.
    """
    l1, l2 = m1.delta_ell, m2.delta_ell
    lmin, lmax = min(l1, l2), max(l1, l2)
    if step is None:
        step = max(min(l1, l2, 1.0) / 10.0, 1e-4)
    worst = 0.0
    for s in np.arange(0.0, lmax + step * 0.5, step):
        s = min(float(s), lmax)
        d = pose_distance(_primitive_pose_at(m1, min(s, l1)), _primitive_pose_at(m2, min(s, l2)), alpha)
        worst = max(worst, d)
    worst = max(worst, pose_distance(_primitive_pose_at(m1, l1), _primitive_pose_at(m2, l2), alpha))
    return worst


@dataclass
class LipschitzEstimate:
    value: float
    raw_max: float
    n_samples: int


def _batch_primitive_points(kappa, delta_theta, svals):
    """Positions/quaternions along (kappa_i, s, delta_theta_i) from identity,
    vectorized over pairs (rows) and arclengths (columns)."""
    n, k = svals.shape
    t = kappa[:, None] * svals
    with np.errstate(invalid="ignore", divide="ignore"):
        half = np.sin(0.5 * t)
        lx = np.where(kappa[:, None] > 0.0, 2.0 * half * half / np.maximum(kappa[:, None], 1e-300), 0.0)
        lz = np.where(kappa[:, None] > 0.0, np.sin(t) / np.maximum(kappa[:, None], 1e-300), svals)
    cosd, sind = np.cos(delta_theta), np.sin(delta_theta)
    px = cosd[:, None] * lx
    py = sind[:, None] * lx
    pz = lz
    # q = Rz(delta_theta) * Ry(kappa * s), both about local axes
    hz = 0.5 * delta_theta[:, None]
    hy = 0.5 * t
    qw = np.cos(hz) * np.cos(hy)
    qx = np.sin(hz) * np.sin(hy)
    qy = np.cos(hz) * np.sin(hy)
    qz = np.sin(hz) * np.cos(hy)
    pos = np.stack([px, py, pz], axis=-1)
    quat = np.stack([np.broadcast_to(qw, (n, k)), np.broadcast_to(qx, (n, k)),
                     np.broadcast_to(qy, (n, k)), np.broadcast_to(qz, (n, k))], axis=-1)
    return pos, quat


def estimate_lipschitz(n_samples: int, rng_seed: int, kappa_max: float = 0.08,
                       delta_ell_max: float = 20.0, alpha: float = 1.0,
                       pos_scale: float = 50.0, n_arc_samples: int = 24,
                       safety: float = 1.5) -> LipschitzEstimate:
    """Empirical system Lipschitz constant: the largest observed ratio of
    post-primitive pose distance to (pose distance + action distance),
    inflated by a safety factor. The action distance uses a fixed per-pair
    sample count, which slightly under-resolves very long primitives; the
    safety factor absorbs that."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.default_rng(rng_seed)
    n = n_samples
    p1 = rng.uniform(-pos_scale, pos_scale, size=(n, 3))
    q1 = rng.normal(size=(n, 4))
    q1 /= np.linalg.norm(q1, axis=1, keepdims=True)
    scale = rng.choice([0.1, 1.0, 10.0], size=(n, 1))
    p2 = p1 + rng.normal(size=(n, 3)) * scale
    q2 = q1 + rng.normal(size=(n, 4)) * 0.2
    q2 /= np.linalg.norm(q2, axis=1, keepdims=True)

    ka = rng.uniform(0.0, kappa_max, size=n)
    kb = np.clip(ka + rng.normal(size=n) * 0.1 * kappa_max, 0.0, kappa_max)
    la = rng.uniform(0.05, delta_ell_max, size=n)
    lb = np.clip(la + rng.normal(size=n) * 0.1 * delta_ell_max, 0.05, delta_ell_max)
    ta = rng.uniform(0.0, TWO_PI, size=n)
    tb = np.mod(ta + rng.normal(size=n) * 0.3, TWO_PI)

    # near-supremum stratum: identical full-length primitives under a tiny
    # start rotation, where the endpoint lever arm dominates the denominator
    k_strat = max(1, n // 4)
    idx = np.arange(k_strat)
    p2[idx] = p1[idx]
    q2[idx] = q1[idx]
    tiny = rng.uniform(1e-4, 1e-3, size=k_strat)
    axis = rng.normal(size=(k_strat, 3))
    axis /= np.linalg.norm(axis, axis=1, keepdims=True)
    dq = np.concatenate([np.cos(0.5 * tiny)[:, None], np.sin(0.5 * tiny)[:, None] * axis], axis=1)
    q2[idx] = batch_quat_multiply(q1[idx], dq)
    ka[idx] = rng.choice([0.0, kappa_max], size=k_strat)
    kb[idx] = ka[idx]
    la[idx] = delta_ell_max
    lb[idx] = delta_ell_max
    tb[idx] = ta[idx]

    # rho of the start poses
    dpos = np.linalg.norm(p1 - p2, axis=1)
    dang = 2.0 * np.arccos(np.clip(np.abs(np.sum(q1 * q2, axis=1)), -1.0, 1.0))
    rho_x = dpos + alpha * dang

    # action distance, both regimes on a common normalized grid
    lmin = np.minimum(la, lb)
    lmax = np.maximum(la, lb)
    grid = np.linspace(0.0, 1.0, n_arc_samples)
    s_shared = lmin[:, None] * grid[None, :]
    s_tail = lmin[:, None] + (lmax - lmin)[:, None] * grid[None, :]
    rho_a = np.zeros(n)
    for svals in (s_shared, s_tail):
        sa = np.minimum(svals, la[:, None])
        sb = np.minimum(svals, lb[:, None])
        pa, qa = _batch_primitive_points(ka, ta, sa)
        pb, qb = _batch_primitive_points(kb, tb, sb)
        d = np.linalg.norm(pa - pb, axis=-1) + alpha * 2.0 * np.arccos(
            np.clip(np.abs(np.sum(qa * qb, axis=-1)), -1.0, 1.0))
        rho_a = np.maximum(rho_a, d.max(axis=1))

    # rho of the end poses
    end1p, end1q = _end_pose_batch(p1, q1, ka, la, ta)
    end2p, end2q = _end_pose_batch(p2, q2, kb, lb, tb)
    dpos_e = np.linalg.norm(end1p - end2p, axis=1)
    dang_e = 2.0 * np.arccos(np.clip(np.abs(np.sum(end1q * end2q, axis=1)), -1.0, 1.0))
    rho_end = dpos_e + alpha * dang_e

    ratios = rho_end / np.maximum(rho_x + rho_a, 1e-12)
    raw = float(ratios.max())
    return LipschitzEstimate(value=max(1.0, raw) * safety, raw_max=raw, n_samples=n)


def _end_pose_batch(pos, quat, kappa, ell, theta):
    hz = 0.5 * theta
    rz = np.stack([np.cos(hz), np.zeros_like(hz), np.zeros_like(hz), np.sin(hz)], axis=1)
    q1 = batch_quat_multiply(quat, rz)
    t = kappa * ell
    half = np.sin(0.5 * t)
    with np.errstate(invalid="ignore", divide="ignore"):
        lx = np.where(kappa > 0.0, 2.0 * half * half / np.maximum(kappa, 1e-300), 0.0)
        lz = np.where(kappa > 0.0, np.sin(t) / np.maximum(kappa, 1e-300), ell)
    local = np.stack([lx, np.zeros_like(lx), lz], axis=1)
    rot = batch_quat_to_matrix(q1)
    new_pos = pos + np.einsum("nij,nj->ni", rot, local)
    hy = 0.5 * t
    ry = np.stack([np.cos(hy), np.zeros_like(hy), np.sin(hy), np.zeros_like(hy)], axis=1)
    new_quat = batch_quat_multiply(q1, ry)
    new_quat /= np.linalg.norm(new_quat, axis=1, keepdims=True)
    return new_pos, new_quat


# ---------------------------------------------------------------------------
# Similar-cost bound
# ---------------------------------------------------------------------------

def cost_bound_check(sigma: Trajectory, sigma_prime: Trajectory, beta: float,
                     L_c: float, c_min: float, c_max: float, env: Environment,
                     alpha: float = 1.0) -> bool:
    """Verify C(sigma') <= (1 + k*beta) * C(sigma) with k = (L_c + c_max)/c_min
    for a strict beta-approximation pair over an L_c-Lipschitz cost field."""
    report = verify_local_strict(sigma, sigma_prime, beta, alpha)
    if not report.passed:
        raise ValueError("sigma_prime is not a strict beta-approximation of sigma")
    k = (L_c + c_max) / c_min
    return env.trajectory_cost(sigma_prime) <= (1.0 + k * beta) * env.trajectory_cost(sigma) + 1e-9


# ---------------------------------------------------------------------------
# Pruning-error accumulation
# ---------------------------------------------------------------------------

def pruning_error_bound(L_s: float, n: int, d_sim: float) -> float:
    """Worst-case pose drift after n similarity replacements, each within
    d_sim, propagated through an L_s-Lipschitz system."""
    if L_s <= 1.0:
        raise ValueError("L_s must exceed 1")
    if n < 1:
        raise ValueError("n must be >= 1")
    log_num = n * math.log(L_s)
    if log_num > 700.0:
        return math.inf
    return (L_s ** n - 1.0) / (L_s - 1.0) * d_sim


def pruning_drift_replay(n: int, d_sim: float, rng_seed: int, kappa_max: float = 0.08,
                         delta_ell_max: float = 20.0, alpha: float = 1.0) -> float:
    """Replay one worst-case replacement chain: at every step the state is
    perturbed by a random rho-ball offset of radius d_sim before the next
    primitive is applied. Returns the final pose drift relative to the
    unperturbed chain."""
    rng = np.random.default_rng(rng_seed)
    prims = [
        MotionPrimitive(
            float(rng.choice([0.0, kappa_max])),
            float(rng.uniform(0.5, delta_ell_max)),
            float(rng.uniform(0.0, TWO_PI)),
        )
        for _ in range(n)
    ]
    clean = Pose()
    dirty = Pose()
    for m in prims:
        clean = apply_primitive(clean, m)
        dirty = apply_primitive(dirty, m)
        # spend the rho budget d_sim randomly between translation and rotation
        frac = rng.uniform()
        shift = rng.normal(size=3)
        shift *= (frac * d_sim) / max(np.linalg.norm(shift), 1e-12)
        ang = (1.0 - frac) * d_sim / alpha if alpha > 0 else 0.0
        axis = rng.normal(size=3)
        axis /= max(np.linalg.norm(axis), 1e-12)
        from .kinematics import quat_from_axis_angle
        dq = quat_from_axis_angle(tuple(axis), ang)
        dirty = Pose(
            (dirty.p[0] + shift[0], dirty.p[1] + shift[1], dirty.p[2] + shift[2]),
            quat_multiply(dirty.q, dq),
        )
    return pose_distance(clean, dirty, alpha)


# ---------------------------------------------------------------------------
# Independent tip-ODE integrator (cross-check for apply_primitive)
# ---------------------------------------------------------------------------

def rk4_tip_pose(x: Pose, m: MotionPrimitive, n_steps: int = 200) -> Pose:
    """Integrate p' = R z, R' = R [omega]x with omega = (0, kappa, 0) over the
    primitive's arclength after applying the axial pre-rotation."""
    q0 = quat_multiply(x.q, quat_about_z(m.delta_theta)) if m.delta_theta else x.q
    R = quat_to_matrix(q0)
    p = np.array(x.p, dtype=float)
    W = np.array([[0.0, 0.0, m.kappa], [0.0, 0.0, 0.0], [-m.kappa, 0.0, 0.0]])
    h = m.delta_ell / n_steps

    def deriv(p_, R_):
        return R_[:, 2].copy(), R_ @ W

    for _ in range(n_steps):
        k1p, k1R = deriv(p, R)
        k2p, k2R = deriv(p + 0.5 * h * k1p, R + 0.5 * h * k1R)
        k3p, k3R = deriv(p + 0.5 * h * k2p, R + 0.5 * h * k2R)
        k4p, k4R = deriv(p + h * k3p, R + h * k3R)
        p = p + (h / 6.0) * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
        R = R + (h / 6.0) * (k1R + 2.0 * k2R + 2.0 * k3R + k4R)
    # re-orthonormalize before extracting the quaternion
    u, _, vt = np.linalg.svd(R)
    R = u @ vt
    return Pose(tuple(p), _quat_from_matrix(R))


def _quat_from_matrix(R: np.ndarray):
    t = np.trace(R)
    if t > 0:
        s = math.sqrt(t + 1.0) * 2.0
        return (0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s)
    i = int(np.argmax(np.diag(R)))
    if i == 0:
        s = math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2.0
        return ((R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s)
    if i == 1:
        s = math.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2]) * 2.0
        return ((R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s)
    s = math.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1]) * 2.0
    return ((R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s)


# ---------------------------------------------------------------------------
# Brute-force lattice oracle
# ---------------------------------------------------------------------------

def _oracle_primitives(kappa_max: float, delta_ell_max: float, r: Resolution):
    a = 0
    while ell_step(delta_ell_max, a + 1) >= r.delta_ell_min - 1e-12:
        a += 1
    b = 0
    while theta_step(b + 1) >= r.delta_theta_min - 1e-12:
        b += 1
    step_l = ell_step(delta_ell_max, a)
    step_t = theta_step(b)
    n_l = 1 << a
    n_t = 4 * (1 << b)
    prims = [MotionPrimitive(0.0, (k + 1) * step_l, 0.0, a, 0) for k in range(n_l)]
    for k in range(n_l):
        for j in range(n_t):
            prims.append(MotionPrimitive(kappa_max, (k + 1) * step_l, j * step_t, a, b))
    return prims, step_l, n_l, n_t


def _oracle_guard(depth_cap: int, ell_max: float, step_l: float, n_l: int,
                  theta_choices: int, limit: float = 1e7) -> float:
    """Count length-feasible primitive sequences (tighter than the raw
    branching^depth bound, which already overflows the guard for the
    acceptance-scale cutoffs)."""
    max_units = int(math.floor(ell_max / step_l + 1e-9))
    per_step = 1 + theta_choices  # straight or curved-with-some-rotation
    ways = {0: 1.0}
    total = 0.0
    for _ in range(depth_cap):
        nxt: dict[int, float] = {}
        for units, cnt in ways.items():
            for k in range(1, n_l + 1):
                u = units + k
                if u > max_units:
                    break
                nxt[u] = nxt.get(u, 0.0) + cnt * per_step
        total += sum(nxt.values())
        if total > limit:
            raise InstanceTooLargeError(
                f"oracle enumeration would visit > {limit:.0f} nodes")
        ways = nxt
        if not ways:
            break
    return total


def brute_force_optimal(problem, r: Resolution, depth_cap: int,
                        delta_ell_max: float = 20.0, shuffle_seed: int | None = None):
    """Exhaustively expand the dyadic lattice at its finest steps, with no
    pruning beyond plan validity, and return the cheapest valid plan reaching
    the goal ball as (Trajectory, cost), or None.

    Logically independent of the planner: it shares only the kinematic model
    and the collision/cost quadrature rules. shuffle_seed permutes the
    expansion order (the result is order-invariant).
    """
    env = problem.env
    g = np.asarray(problem.p_goal)
    length_cost = problem.cost_kind == "length"
    prims, step_l, n_l, n_t = _oracle_primitives(problem.kappa_max, delta_ell_max, r)
    if shuffle_seed is not None:
        perm = np.random.default_rng(shuffle_seed).permutation(len(prims))
        prims = [prims[int(i)] for i in perm]
    _oracle_guard(depth_cap, min(problem.ell_max, depth_cap * delta_ell_max), step_l, n_l, n_t)

    # precompute edge sample offsets and trapezoid weights per primitive
    prep = []
    for m in prims:
        s_col = arc_sample_lengths(m.delta_ell, collision_spacing(env.spacing, m.kappa))
        local_col = arc_local_points(m, s_col)
        if length_cost:
            prep.append((m, local_col, None, None))
        else:
            s_cost = arc_sample_lengths(m.delta_ell, min(0.5 * env.spacing, m.delta_ell))
            prep.append((m, local_col, arc_local_points(m, s_cost), s_cost))

    start = problem.x_start
    pos = np.array([start.p])
    quat = np.array([start.q])
    cum_len = np.zeros(1)
    cum_cost = np.zeros(1)
    parents = [np.array([-1])]
    prim_ids = [np.array([-1])]

    best = None  # (cost, level, index)
    if math.dist(start.p, tuple(g)) <= problem.tau:
        best = (0.0, 0, 0)

    levels = [(pos, quat, cum_len, cum_cost)]
    lo, hi = env.origin, env.upper
    for depth in range(depth_cap):
        pos, quat, cum_len, cum_cost = levels[depth]
        if pos.shape[0] == 0:
            break
        new_chunks = []
        rot = batch_quat_to_matrix(quat)
        for pid, (m, local_col, local_cost, s_cost) in enumerate(prep):
            ok_len = cum_len + m.delta_ell <= problem.ell_max + 1e-9
            if not np.any(ok_len):
                continue
            idx = np.nonzero(ok_len)[0]
            if m.delta_theta != 0.0:
                rz = np.array(quat_about_z(m.delta_theta))
                q1 = batch_quat_multiply(quat[idx], np.broadcast_to(rz, (len(idx), 4)))
                rot1 = batch_quat_to_matrix(q1)
            else:
                q1 = quat[idx]
                rot1 = rot[idx]
            pts = np.einsum("nij,kj->nki", rot1, local_col) + pos[idx, None, :]
            free = ~env.swept_samples_blocked(pts)
            if not np.any(free):
                continue
            keep = idx[free]
            q1 = q1[free]
            rot1 = rot1[free]
            if length_cost:
                edge_cost = np.full(len(keep), m.delta_ell)
            else:
                cpts = np.einsum("nij,kj->nki", rot1, local_cost) + pos[keep, None, :]
                inb = np.all((cpts >= lo) & (cpts <= hi), axis=(1, 2))
                keep = keep[inb]
                if keep.size == 0:
                    continue
                q1 = q1[inb]
                rot1 = rot1[inb]
                cpts = cpts[inb]
                vals = env.point_cost_many(cpts.reshape(-1, 3)).reshape(len(keep), -1)
                edge_cost = np.trapezoid(vals, s_cost, axis=1)
            end_local = local_col[-1]
            new_pos = pos[keep] + rot1 @ end_local
            if m.kappa == 0.0:
                new_quat = q1
            else:
                ry = np.array(quat_about_y(m.kappa * m.delta_ell))
                new_quat = batch_quat_multiply(q1, np.broadcast_to(ry, q1.shape))
                new_quat /= np.linalg.norm(new_quat, axis=1, keepdims=True)
            new_chunks.append(
                (new_pos, new_quat, cum_len[keep] + m.delta_ell, cum_cost[keep] + edge_cost,
                 keep, np.full(len(keep), pid))
            )
        if not new_chunks:
            levels.append((np.zeros((0, 3)), np.zeros((0, 4)), np.zeros(0), np.zeros(0)))
            parents.append(np.zeros(0, dtype=int))
            prim_ids.append(np.zeros(0, dtype=int))
            continue
        new_pos = np.concatenate([c[0] for c in new_chunks])
        new_quat = np.concatenate([c[1] for c in new_chunks])
        new_len = np.concatenate([c[2] for c in new_chunks])
        new_cost = np.concatenate([c[3] for c in new_chunks])
        parents.append(np.concatenate([c[4] for c in new_chunks]))
        prim_ids.append(np.concatenate([c[5] for c in new_chunks]))
        levels.append((new_pos, new_quat, new_len, new_cost))
        reached = np.linalg.norm(new_pos - g, axis=1) <= problem.tau
        if np.any(reached):
            costs = np.where(reached, new_cost, np.inf)
            j = int(np.argmin(costs))
            if best is None or costs[j] < best[0]:
                best = (float(costs[j]), depth + 1, j)

    if best is None:
        return None
    cost, level, j = best
    seq = []
    while level > 0:
        seq.append(prims[int(prim_ids[level][j])])
        j = int(parents[level][j])
        level -= 1
    return Trajectory(start, tuple(reversed(seq))), cost
