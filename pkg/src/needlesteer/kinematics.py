"""Constant-curvature tip kinematics for a bevel-tip steerable needle.

Units are millimeters for positions/lengths and radians for angles.
Quaternions are stored as (w, x, y, z), unit norm, canonicalized to w >= 0.

Frame convention: local +z is the insertion tangent. The axial pre-rotation
delta_theta is applied about local +z and puts the curving direction along
local +x; an insertion of length delta_ell at curvature kappa then bends the
tangent toward +x by rotating about local +y.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi

Vec3 = tuple[float, float, float]
Quat = tuple[float, float, float, float]


# ---------------------------------------------------------------------------
# Scalar quaternion helpers (hot path: plain floats, no numpy overhead)
# ---------------------------------------------------------------------------

def quat_multiply(a: Quat, b: Quat) -> Quat:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return (
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    )


def quat_conjugate(q: Quat) -> Quat:
    return (q[0], -q[1], -q[2], -q[3])


def quat_canonical(q: Quat) -> Quat:
    """Normalize to unit length and flip sign so w >= 0 (deterministic rep)."""
    w, x, y, z = q
    n = math.sqrt(w * w + x * x + y * y + z * z)
    if n == 0.0:
        raise ValueError("zero quaternion")
    w, x, y, z = w / n, x / n, y / n, z / n
    if w < 0.0 or (w == 0.0 and (x < 0.0 or (x == 0.0 and (y < 0.0 or (y == 0.0 and z < 0.0))))):
        return (-w, -x, -y, -z)
    return (w, x, y, z)


def quat_rotate(q: Quat, v: Vec3) -> Vec3:
    """Rotate vector v by unit quaternion q (v' = q v q*)."""
    w, x, y, z = q
    vx, vy, vz = v
    # t = 2 * (q_vec x v)
    tx = 2.0 * (y * vz - z * vy)
    ty = 2.0 * (z * vx - x * vz)
    tz = 2.0 * (x * vy - y * vx)
    return (
        vx + w * tx + (y * tz - z * ty),
        vy + w * ty + (z * tx - x * tz),
        vz + w * tz + (x * ty - y * tx),
    )


def quat_about_z(theta: float) -> Quat:
    h = 0.5 * theta
    return (math.cos(h), 0.0, 0.0, math.sin(h))


def quat_about_y(theta: float) -> Quat:
    h = 0.5 * theta
    return (math.cos(h), 0.0, math.sin(h), 0.0)


def quat_from_axis_angle(axis: Vec3, angle: float) -> Quat:
    ax, ay, az = axis
    n = math.sqrt(ax * ax + ay * ay + az * az)
    if n < 1e-15:
        return (1.0, 0.0, 0.0, 0.0)
    h = 0.5 * angle
    s = math.sin(h) / n
    return (math.cos(h), ax * s, ay * s, az * s)


def quat_to_matrix(q: Quat) -> np.ndarray:
    w, x, y, z = q
    xx, yy, zz = x * x, y * y, z * z
    xy, xz, yz = x * y, x * z, y * z
    wx, wy, wz = w * x, w * y, w * z
    return np.array(
        [
            [1.0 - 2.0 * (yy + zz), 2.0 * (xy - wz), 2.0 * (xz + wy)],
            [2.0 * (xy + wz), 1.0 - 2.0 * (xx + zz), 2.0 * (yz - wx)],
            [2.0 * (xz - wy), 2.0 * (yz + wx), 1.0 - 2.0 * (xx + yy)],
        ]
    )


def angular_distance(qa: Quat, qb: Quat) -> float:
    """Geodesic angle between two orientations in [0, pi].

    Sign-invariant under the quaternion double cover. Uses a chord-based
    formula near alignment where acos(dot) loses ~sqrt(eps) of precision.
    """
    dot = qa[0] * qb[0] + qa[1] * qb[1] + qa[2] * qb[2] + qa[3] * qb[3]
    adot = abs(dot)
    if adot < 0.999:
        return 2.0 * math.acos(min(1.0, adot))
    # chord between qa and +-qb, whichever is nearer
    s = 1.0 if dot >= 0.0 else -1.0
    cx = qa[0] - s * qb[0]
    cy = qa[1] - s * qb[1]
    cz = qa[2] - s * qb[2]
    cw = qa[3] - s * qb[3]
    half_chord = 0.5 * math.sqrt(cx * cx + cy * cy + cz * cz + cw * cw)
    return 2.0 * math.asin(min(1.0, half_chord))


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Pose:
    """Needle-tip state: position (mm) and unit orientation quaternion."""

    p: Vec3 = (0.0, 0.0, 0.0)
    q: Quat = (1.0, 0.0, 0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "p", (float(self.p[0]), float(self.p[1]), float(self.p[2])))
        object.__setattr__(self, "q", quat_canonical(tuple(float(c) for c in self.q)))

    def tangent(self) -> Vec3:
        """Unit insertion direction (local +z expressed in world frame)."""
        return quat_rotate(self.q, (0.0, 0.0, 1.0))

    def rotation(self) -> np.ndarray:
        return quat_to_matrix(self.q)

    def to_json(self) -> dict:
        return {"p": list(self.p), "q": list(self.q)}

    @staticmethod
    def from_json(obj: dict) -> "Pose":
        return Pose(tuple(obj["p"]), tuple(obj["q"]))


@dataclass(frozen=True)
class MotionPrimitive:
    """One lattice edge: curvature kappa (1/mm), arc length delta_ell (mm),
    axial pre-rotation delta_theta (rad), and dyadic resolution levels."""

    kappa: float
    delta_ell: float
    delta_theta: float = 0.0
    ell_level: int = 0
    theta_level: int = 0

    def __post_init__(self):
        if self.kappa < 0.0:
            raise ValueError(f"negative curvature {self.kappa}")
        if not self.delta_ell > 0.0:
            raise ValueError(f"non-positive arc length {self.delta_ell}")
        # 2*pi itself is admitted so the finest primitive set can carry its
        # closing rotation; lattice generation always stays in [0, 2*pi).
        if not 0.0 <= self.delta_theta <= TWO_PI + 1e-12:
            raise ValueError(f"delta_theta {self.delta_theta} outside [0, 2*pi]")
        if self.ell_level < 0 or self.theta_level < 0:
            raise ValueError("negative resolution level")

    def to_json(self) -> list:
        return [self.kappa, self.delta_ell, self.delta_theta, self.ell_level, self.theta_level]

    @staticmethod
    def from_json(row) -> "MotionPrimitive":
        return MotionPrimitive(row[0], row[1], row[2], int(row[3]), int(row[4]))


def local_arc_offset(kappa: float, s: float) -> Vec3:
    """Arc point at arclength s in the post-rotation local frame.

    Uses 2*sin^2(t/2) for 1-cos(t) so the kappa -> 0 limit is stable.
    """
    if kappa == 0.0:
        return (0.0, 0.0, s)
    t = kappa * s
    half = math.sin(0.5 * t)
    return (2.0 * half * half / kappa, 0.0, math.sin(t) / kappa)


def apply_primitive(x: Pose, m: MotionPrimitive) -> Pose:
    """Exact pose after executing motion primitive m from pose x."""
    if m.delta_theta != 0.0:
        q1 = quat_multiply(x.q, quat_about_z(m.delta_theta))
    else:
        q1 = x.q
    off = local_arc_offset(m.kappa, m.delta_ell)
    dp = quat_rotate(q1, off)
    p = (x.p[0] + dp[0], x.p[1] + dp[1], x.p[2] + dp[2])
    if m.kappa == 0.0:
        return Pose(p, q1)
    return Pose(p, quat_multiply(q1, quat_about_y(m.kappa * m.delta_ell)))


def pose_distance(a: Pose, b: Pose, alpha: float) -> float:
    """Position distance plus alpha-weighted angular distance (mm)."""
    dx = a.p[0] - b.p[0]
    dy = a.p[1] - b.p[1]
    dz = a.p[2] - b.p[2]
    return math.sqrt(dx * dx + dy * dy + dz * dz) + alpha * angular_distance(a.q, b.q)


# ---------------------------------------------------------------------------
# Trajectories
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Trajectory:
    """A primitive sequence anchored at a start pose.

    Samples are derived on demand; the trajectory itself stores no states.
    """

    start: Pose
    primitives: tuple[MotionPrimitive, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "primitives", tuple(self.primitives))

    @property
    def length(self) -> float:
        return sum(m.delta_ell for m in self.primitives)

    def prefix_poses(self) -> list[Pose]:
        """Poses at every primitive boundary; len == n_primitives + 1."""
        poses = [self.start]
        for m in self.primitives:
            poses.append(apply_primitive(poses[-1], m))
        return poses

    def end_pose(self) -> Pose:
        pose = self.start
        for m in self.primitives:
            pose = apply_primitive(pose, m)
        return pose

    def pose_at(self, s: float) -> Pose:
        """Pose at arclength s in [0, length], truncating the active primitive."""
        if s < -1e-9:
            raise ValueError(f"negative arclength {s}")
        pose = self.start
        remaining = s
        for m in self.primitives:
            if remaining <= 1e-12:
                return pose
            if remaining < m.delta_ell - 1e-12:
                return apply_primitive(
                    pose,
                    MotionPrimitive(m.kappa, remaining, m.delta_theta, m.ell_level, m.theta_level),
                )
            pose = apply_primitive(pose, m)
            remaining -= m.delta_ell
        if remaining > 1e-6:
            raise ValueError(f"arclength {s} beyond trajectory length {self.length}")
        return pose

    def sample(self, spacing: float) -> list[tuple[float, Pose]]:
        """Poses at arclengths 0, spacing, 2*spacing, ..., with the endpoint
        always included."""
        if not spacing > 0.0:
            raise ValueError("spacing must be positive")
        total = self.length
        svals = [i * spacing for i in range(int(total / spacing) + 1)]
        if not svals or total - svals[-1] > 1e-9:
            svals.append(total)
        elif svals[-1] > total:
            svals[-1] = total
        out = []
        prefix = self.start
        consumed = 0.0
        idx = 0
        for s in svals:
            while idx < len(self.primitives) and s > consumed + self.primitives[idx].delta_ell + 1e-12:
                prefix = apply_primitive(prefix, self.primitives[idx])
                consumed += self.primitives[idx].delta_ell
                idx += 1
            local = s - consumed
            if local <= 1e-12:
                out.append((s, prefix))
            else:
                m = self.primitives[idx]
                local = min(local, m.delta_ell)
                out.append(
                    (s, apply_primitive(prefix, MotionPrimitive(m.kappa, local, m.delta_theta, m.ell_level, m.theta_level)))
                )
        return out

    def sample_positions(self, spacing: float) -> np.ndarray:
        return np.array([pose.p for _, pose in self.sample(spacing)])

    def to_json(self) -> dict:
        return {
            "start": self.start.to_json(),
            "primitives": [m.to_json() for m in self.primitives],
            "length": self.length,
        }

    @staticmethod
    def from_json(obj: dict) -> "Trajectory":
        return Trajectory(
            Pose.from_json(obj["start"]),
            tuple(MotionPrimitive.from_json(r) for r in obj["primitives"]),
        )


def sample_trajectory(t: Trajectory, spacing: float) -> list[tuple[float, Pose]]:
    """Poses along t at the given arclength spacing (endpoint included)."""
    return t.sample(spacing)


def concatenate(a: Trajectory, b: Trajectory) -> Trajectory:
    """Join two trajectories; b must start where a ends."""
    end = a.end_pose()
    if pose_distance(end, b.start, 1.0) > 1e-6:
        raise ValueError("trajectories are not contiguous")
    return Trajectory(a.start, a.primitives + b.primitives)


# ---------------------------------------------------------------------------
# Vectorized batch kinematics (used by the brute-force oracle and theory
# campaigns; semantics identical to the scalar path)
# ---------------------------------------------------------------------------

def batch_quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    bw, bx, by, bz = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def batch_quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    xx, yy, zz = x * x, y * y, z * z
    xy, xz, yz = x * y, x * z, y * z
    wx, wy, wz = w * x, w * y, w * z
    m = np.empty(q.shape[:-1] + (3, 3))
    m[..., 0, 0] = 1.0 - 2.0 * (yy + zz)
    m[..., 0, 1] = 2.0 * (xy - wz)
    m[..., 0, 2] = 2.0 * (xz + wy)
    m[..., 1, 0] = 2.0 * (xy + wz)
    m[..., 1, 1] = 1.0 - 2.0 * (xx + zz)
    m[..., 1, 2] = 2.0 * (yz - wx)
    m[..., 2, 0] = 2.0 * (xz - wy)
    m[..., 2, 1] = 2.0 * (yz + wx)
    m[..., 2, 2] = 1.0 - 2.0 * (xx + yy)
    return m


def batch_angular_distance(qa: np.ndarray, qb: np.ndarray) -> np.ndarray:
    dot = np.abs(np.sum(qa * qb, axis=-1))
    return 2.0 * np.arccos(np.clip(dot, -1.0, 1.0))


def batch_apply_primitive(pos: np.ndarray, quat: np.ndarray, m: MotionPrimitive):
    """Apply one primitive to N poses given as (N,3) and (N,4) arrays."""
    if m.delta_theta != 0.0:
        rz = np.array(quat_about_z(m.delta_theta))
        q1 = batch_quat_multiply(quat, np.broadcast_to(rz, quat.shape))
    else:
        q1 = quat
    off = np.array(local_arc_offset(m.kappa, m.delta_ell))
    rot = batch_quat_to_matrix(q1)
    new_pos = pos + rot @ off
    if m.kappa == 0.0:
        new_quat = q1
    else:
        ry = np.array(quat_about_y(m.kappa * m.delta_ell))
        new_quat = batch_quat_multiply(q1, np.broadcast_to(ry, q1.shape))
    norms = np.linalg.norm(new_quat, axis=-1, keepdims=True)
    return new_pos, new_quat / norms
