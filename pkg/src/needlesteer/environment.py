"""Voxelized workspace: obstacle occupancy, needle-radius inflation,
trilinear cost map, collision checking, and file I/O.

Grid layout: voxel (i, j, k) spans origin + [i, i+1) * spacing along x
(similarly y, z) with its center at origin + (i + 0.5) * spacing. The cost
map is interpolated trilinearly between voxel centers and clamped to the
grid edge. Everything outside the grid counts as obstacle.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import EnvironmentFormatError, OutOfWorkspaceError, UnsatisfiableSpecError
from .kinematics import (
    MotionPrimitive,
    Pose,
    Trajectory,
    apply_primitive,
    quat_about_z,
    quat_canonical,
    quat_conjugate,
    quat_from_axis_angle,
    quat_multiply,
    quat_rotate,
    quat_to_matrix,
)

ENV_MAGIC = "NVOX1"


def arc_sample_lengths(delta_ell: float, max_h: float) -> np.ndarray:
    """Arclength samples 0..delta_ell inclusive at spacing <= max_h."""
    n = max(1, int(math.ceil(delta_ell / max_h - 1e-12)))
    return np.linspace(0.0, delta_ell, n + 1)


def arc_local_points(m: MotionPrimitive, s: np.ndarray) -> np.ndarray:
    """Points of the arc at arclengths s, in the post-rotation local frame."""
    if m.kappa == 0.0:
        pts = np.zeros((len(s), 3))
        pts[:, 2] = s
        return pts
    t = m.kappa * s
    half = np.sin(0.5 * t)
    return np.stack([2.0 * half * half / m.kappa, np.zeros(len(s)), np.sin(t) / m.kappa], axis=1)


def collision_spacing(env_spacing: float, kappa: float) -> float:
    h = 0.5 * env_spacing
    if kappa > 0.0:
        h = min(h, 0.25 / kappa)
    return h


@dataclass
class Environment:
    """Immutable voxel workspace; all queries are read-only."""

    origin: np.ndarray
    spacing: float
    occupancy: np.ndarray
    cost: np.ndarray
    needle_radius: float
    c_min: float
    c_max: float
    inflated: np.ndarray | None = None
    clamp_warning: bool = False

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=float)
        self.occupancy = np.asarray(self.occupancy, dtype=bool)
        self.cost = np.asarray(self.cost, dtype=np.float64)
        if self.occupancy.shape != self.cost.shape:
            raise EnvironmentFormatError("occupancy and cost grids differ in shape")
        if not self.spacing > 0.0:
            raise EnvironmentFormatError("spacing must be positive")
        if not self.c_min > 0.0:
            raise EnvironmentFormatError("c_min must be positive")
        if self.inflated is None:
            self.inflated = inflate_obstacles(self.occupancy, self.spacing, self.needle_radius)
        for arr in (self.origin, self.occupancy, self.cost, self.inflated):
            arr.setflags(write=False)
        self._centers = None
        # per-primitive sampling templates, keyed by (kappa, delta_ell)
        self._col_templates: dict = {}
        self._cost_templates: dict = {}
        self._dims_arr = np.array(self.occupancy.shape)
        self._upper = self.origin + self.spacing * self._dims_arr
        # flat view plus corner offsets for the trilinear gather
        self._cost_flat = np.ascontiguousarray(self.cost).reshape(-1)
        self._cost_flat.setflags(write=False)
        ny, nz = self.dims[1], self.dims[2]
        self._corner_offsets = np.array(
            [dx * ny * nz + dy * nz + dz for dx in (0, 1) for dy in (0, 1) for dz in (0, 1)]
        )

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.occupancy.shape

    @property
    def upper(self) -> np.ndarray:
        return self._upper

    def voxel_centers(self) -> np.ndarray:
        """(nx, ny, nz, 3) array of voxel centers; built lazily and cached."""
        if self._centers is None:
            axes = [self.origin[d] + (np.arange(self.dims[d]) + 0.5) * self.spacing for d in range(3)]
            self._centers = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
            self._centers.setflags(write=False)
        return self._centers

    # -- point queries ------------------------------------------------------

    def contains(self, p) -> bool:
        lo, hi = self.origin, self.upper
        return bool(np.all(np.asarray(p) >= lo) and np.all(np.asarray(p) <= hi))

    def voxel_index(self, p) -> tuple[int, int, int] | None:
        p = np.asarray(p, dtype=float)
        if np.any(p < self.origin) or np.any(p > self._upper):
            return None
        idx = np.floor((p - self.origin) / self.spacing).astype(int)
        # points exactly on the upper face belong to the last voxel
        idx = np.minimum(idx, self._dims_arr - 1)
        return tuple(int(i) for i in idx)

    def is_free(self, p) -> bool:
        idx = self.voxel_index(p)
        if idx is None:
            return False
        return not bool(self.inflated[idx])

    def is_free_many(self, pts: np.ndarray) -> np.ndarray:
        ok = np.all(pts >= self.origin, axis=-1) & np.all(pts <= self._upper, axis=-1)
        idx = np.floor((pts - self.origin) / self.spacing).astype(int)
        np.clip(idx, 0, self._dims_arr - 1, out=idx)
        out = np.zeros(pts.shape[:-1], dtype=bool)
        if np.any(ok):
            ii = idx[ok]
            out[ok] = ~self.inflated[ii[..., 0], ii[..., 1], ii[..., 2]]
        return out

    def point_cost(self, p) -> float:
        if not self.contains(p):
            raise OutOfWorkspaceError(f"point {tuple(p)} outside workspace")
        return float(self.point_cost_many(np.asarray(p, dtype=float)[None, :])[0])

    def point_cost_many(self, pts: np.ndarray) -> np.ndarray:
        """Trilinear interpolation between voxel centers, edge-clamped.

        Caller is responsible for bounds; out-of-grid points are clamped.
        """
        u = (pts - self.origin) / self.spacing - 0.5
        dims = self._dims_arr
        u = np.clip(u, 0.0, dims - 1.0 - 1e-9)
        i0 = u.astype(int)
        f = (u - i0).reshape(-1, 3)
        ny, nz = dims[1], dims[2]
        base = (i0[..., 0] * (ny * nz) + i0[..., 1] * nz + i0[..., 2]).reshape(-1)
        corners = self._cost_flat.take(base[:, None] + self._corner_offsets[None, :],
                                       mode="clip")
        fx, fy, fz = f[:, 0:1], f[:, 1:2], f[:, 2:3]
        wx = np.concatenate([1.0 - fx, fx], axis=1)            # (n, 2)
        wy = np.concatenate([1.0 - fy, fy], axis=1)
        wz = np.concatenate([1.0 - fz, fz], axis=1)
        w = (wx[:, :, None, None] * wy[:, None, :, None] * wz[:, None, None, :]).reshape(-1, 8)
        return (corners * w).sum(axis=1).reshape(pts.shape[:-1])

    # -- edge queries -------------------------------------------------------

    def _collision_template(self, m: MotionPrimitive) -> np.ndarray:
        key = (m.kappa, m.delta_ell)
        tpl = self._col_templates.get(key)
        if tpl is None:
            s = arc_sample_lengths(m.delta_ell, collision_spacing(self.spacing, m.kappa))
            tpl = arc_local_points(m, s)
            self._col_templates[key] = tpl
        return tpl

    def _cost_template(self, m: MotionPrimitive):
        key = (m.kappa, m.delta_ell)
        tpl = self._cost_templates.get(key)
        if tpl is None:
            s = arc_sample_lengths(m.delta_ell, min(0.5 * self.spacing, m.delta_ell))
            local = arc_local_points(m, s)
            h = s[1] - s[0] if len(s) > 1 else 0.0
            w = np.full(len(s), h)
            w[0] = w[-1] = 0.5 * h
            tpl = (local, w)
            self._cost_templates[key] = tpl
        return tpl

    def edge_points(self, x: Pose, m: MotionPrimitive, s: np.ndarray) -> np.ndarray:
        """World-frame points of the edge x (+) m at arclengths s."""
        if m.delta_theta != 0.0:
            q1 = quat_multiply(x.q, quat_about_z(m.delta_theta))
        else:
            q1 = x.q
        local = arc_local_points(m, s)
        return local @ quat_to_matrix(q1).T + np.asarray(x.p)

    def edge_collision_free(self, x: Pose, m: MotionPrimitive) -> bool:
        local = self._collision_template(m)
        q1 = quat_multiply(x.q, quat_about_z(m.delta_theta)) if m.delta_theta != 0.0 else x.q
        pts = local @ quat_to_matrix(q1).T + np.asarray(x.p)
        return not bool(self.swept_samples_blocked(pts[None, :, :])[0])

    def swept_samples_blocked(self, pts: np.ndarray) -> np.ndarray:
        """Collision test for (N, K, 3) sample chains with step < spacing.

        Checks the sample voxels plus every voxel the connecting segments can
        cross (a conservative supercover), so refining the sampling can never
        flip a passing edge to blocked. Out-of-grid counts as blocked.
        """
        n, k, _ = pts.shape
        oob = np.any(pts < self.origin, axis=(1, 2)) | np.any(pts > self._upper, axis=(1, 2))
        idx = np.floor((pts - self.origin) / self.spacing).astype(int)
        np.clip(idx, 0, self._dims_arr - 1, out=idx)
        blocked = oob | self.inflated[idx[..., 0], idx[..., 1], idx[..., 2]].any(axis=1)
        if k > 1:
            i0 = idx[:, :-1, :]
            i1 = idx[:, 1:, :]
            d = i1 - i0
            for axis in range(3):
                step = d[..., axis]
                cross = step != 0
                if not np.any(cross):
                    continue
                for base, sgn in ((i0, 1), (i1, -1)):
                    cand = base.copy()
                    cand[..., axis] += sgn * step
                    np.clip(cand, 0, self._dims_arr - 1, out=cand)
                    hit = self.inflated[cand[..., 0], cand[..., 1], cand[..., 2]] & cross
                    blocked |= hit.any(axis=1)
        return blocked

    def edge_cost(self, x: Pose, m: MotionPrimitive) -> float:
        """Trapezoidal integral of point_cost along the edge at half-voxel
        sample spacing.

        Returns +inf when any sample leaves the workspace (the planner treats
        such edges as invalid without raising).
        """
        local, w = self._cost_template(m)
        q1 = quat_multiply(x.q, quat_about_z(m.delta_theta)) if m.delta_theta != 0.0 else x.q
        pts = local @ quat_to_matrix(q1).T + np.asarray(x.p)
        if np.any(pts < self.origin) or np.any(pts > self.upper):
            return math.inf
        vals = self.point_cost_many(pts)
        return float(w @ vals)

    def edge_costs_batch(self, x: Pose, prims) -> list[float]:
        """edge_cost for several primitives from one pose, with a single
        interpolation pass over the concatenated samples."""
        p = np.asarray(x.p)
        chunks = []
        weights = []
        for m in prims:
            local, w = self._cost_template(m)
            q1 = quat_multiply(x.q, quat_about_z(m.delta_theta)) if m.delta_theta != 0.0 else x.q
            chunks.append(local @ quat_to_matrix(q1).T + p)
            weights.append(w)
        pts = np.concatenate(chunks)
        inb = np.all(pts >= self.origin, axis=1) & np.all(pts <= self._upper, axis=1)
        vals = self.point_cost_many(pts)
        out = []
        ofs = 0
        for w in weights:
            k = len(w)
            if not inb[ofs:ofs + k].all():
                out.append(math.inf)
            else:
                out.append(float(w @ vals[ofs:ofs + k]))
            ofs += k
        return out

    def trajectory_cost(self, t: Trajectory) -> float:
        """Cost integral of Eq-style quadrature, exactly additive over
        concatenation because each primitive is integrated on its own grid."""
        total = 0.0
        pose = t.start
        for m in t.primitives:
            c = self.edge_cost(pose, m)
            if math.isinf(c):
                raise OutOfWorkspaceError("trajectory leaves the workspace")
            total += c
            pose = apply_primitive(pose, m)
        return total

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(json.dumps(
            {
                "magic": ENV_MAGIC,
                "dims": list(self.dims),
                "spacing": self.spacing,
                "origin": list(self.origin),
                "needle_radius": self.needle_radius,
                "c_min": self.c_min,
                "c_max": self.c_max,
            },
            sort_keys=True,
        ).encode())
        h.update(np.ascontiguousarray(self.occupancy.astype(np.uint8)).tobytes())
        h.update(np.ascontiguousarray(self.cost.astype(np.float32)).tobytes())
        return h.hexdigest()


def inflate_obstacles(occupancy: np.ndarray, spacing: float, needle_radius: float) -> np.ndarray:
    """Dilate occupancy by the needle radius via a Euclidean distance transform."""
    if not occupancy.any():
        return occupancy.copy()
    dist = ndimage.distance_transform_edt(~occupancy, sampling=spacing)
    return dist <= needle_radius + 1e-12


# ---------------------------------------------------------------------------
# File format: JSON manifest + two raw little-endian blobs (x fastest)
# ---------------------------------------------------------------------------

def save_env(env: Environment, manifest_path: str) -> None:
    base = os.path.splitext(manifest_path)[0]
    occ_file = os.path.basename(base) + ".occ.bin"
    cost_file = os.path.basename(base) + ".cost.bin"
    d = os.path.dirname(os.path.abspath(manifest_path))
    manifest = {
        "magic": ENV_MAGIC,
        "dims": list(env.dims),
        "spacing": env.spacing,
        "origin": [float(v) for v in env.origin],
        "needle_radius": env.needle_radius,
        "c_min": env.c_min,
        "c_max": env.c_max,
        "occupancy_file": occ_file,
        "cost_file": cost_file,
    }
    with open(manifest_path, "w") as f:
        json.dump(manifest, f, sort_keys=True, indent=1)
        f.write("\n")
    env.occupancy.astype(np.uint8).ravel(order="F").tofile(os.path.join(d, occ_file))
    env.cost.astype("<f4").ravel(order="F").tofile(os.path.join(d, cost_file))


def load_env(manifest_path: str) -> Environment:
    try:
        with open(manifest_path) as f:
            manifest = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise EnvironmentFormatError(f"cannot read manifest: {e}") from e
    if manifest.get("magic") != ENV_MAGIC:
        raise EnvironmentFormatError(f"bad magic {manifest.get('magic')!r}")
    for key in ("dims", "spacing", "origin", "needle_radius", "c_min", "c_max",
                "occupancy_file", "cost_file"):
        if key not in manifest:
            raise EnvironmentFormatError(f"manifest missing field {key!r}")
    dims = tuple(int(v) for v in manifest["dims"])
    if len(dims) != 3 or any(d <= 0 for d in dims):
        raise EnvironmentFormatError(f"bad dims {dims}")
    n = dims[0] * dims[1] * dims[2]
    d = os.path.dirname(os.path.abspath(manifest_path))
    occ_raw = np.fromfile(os.path.join(d, manifest["occupancy_file"]), dtype=np.uint8)
    cost_raw = np.fromfile(os.path.join(d, manifest["cost_file"]), dtype="<f4")
    if occ_raw.size != n:
        raise EnvironmentFormatError(f"occupancy blob has {occ_raw.size} voxels, expected {n}")
    if cost_raw.size != n:
        raise EnvironmentFormatError(f"cost blob has {cost_raw.size} voxels, expected {n}")
    c_min = float(manifest["c_min"])
    c_max = float(manifest["c_max"])
    cost = cost_raw.astype(np.float64).reshape(dims, order="F")
    clamped = bool(np.any(cost < c_min - 1e-12) or np.any(cost > c_max + 1e-12))
    cost = np.clip(cost, c_min, c_max)
    return Environment(
        origin=np.array(manifest["origin"], dtype=float),
        spacing=float(manifest["spacing"]),
        occupancy=occ_raw.reshape(dims, order="F").astype(bool),
        cost=cost,
        needle_radius=float(manifest["needle_radius"]),
        c_min=c_min,
        c_max=c_max,
        clamp_warning=clamped,
    )


# ---------------------------------------------------------------------------
# Synthetic scenario generation
# ---------------------------------------------------------------------------

@dataclass
class ScenarioSpec:
    """Seeded recipe for a synthetic environment plus planning problem."""

    seed: int
    dims: tuple[int, int, int] = (48, 48, 48)
    spacing: float = 1.0
    n_spheres: int = 6
    sphere_radius: tuple[float, float] = (3.0, 7.0)
    n_tubes: int = 2
    tube_radius: tuple[float, float] = (2.0, 3.5)
    cost_smoothness: float = 3.0
    c_min: float = 0.01
    c_max: float = 1.0
    needle_radius: float = 1.0
    tau: float = 1.5
    ell_max: float = 60.0
    # desk-scale grids need a tighter turning radius than a lung needle so
    # obstacle detours stay kinematically possible
    kappa_max: float = 0.08
    cost_kind: str = "costmap"
    goal_bearing_deg: float = 30.0
    goal_dist_frac: tuple[float, float] = (0.35, 0.8)
    # when positive, require at least this many collision-free probe arcs
    # from the start so the tree has room to grow
    min_clear_arcs: int = 3
    max_retries: int = 400
    spec_version: int = 1

    def to_json(self) -> dict:
        out = dict(self.__dict__)
        out["dims"] = list(self.dims)
        out["sphere_radius"] = list(self.sphere_radius)
        out["tube_radius"] = list(self.tube_radius)
        out["goal_dist_frac"] = list(self.goal_dist_frac)
        return out

    @staticmethod
    def from_json(obj: dict) -> "ScenarioSpec":
        if int(obj.get("spec_version", 1)) != 1:
            raise EnvironmentFormatError(f"unsupported spec_version {obj.get('spec_version')}")
        kwargs = dict(obj)
        for key in ("dims", "sphere_radius", "tube_radius", "goal_dist_frac"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        return ScenarioSpec(**kwargs)


def _build_grids(spec: ScenarioSpec, rng: np.random.Generator):
    dims = np.array(spec.dims)
    extent = dims * spec.spacing
    axes = [(np.arange(d) + 0.5) * spec.spacing for d in dims]
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    occ = np.zeros(spec.dims, dtype=bool)
    for _ in range(spec.n_spheres):
        r = rng.uniform(*spec.sphere_radius)
        c = rng.uniform(r, extent - r)
        occ |= (gx - c[0]) ** 2 + (gy - c[1]) ** 2 + (gz - c[2]) ** 2 <= r * r
    for _ in range(spec.n_tubes):
        r = rng.uniform(*spec.tube_radius)
        a = rng.uniform(0.0, extent)
        b = rng.uniform(0.0, extent)
        ab = b - a
        denom = max(float(ab @ ab), 1e-9)
        px, py, pz = gx - a[0], gy - a[1], gz - a[2]
        t = np.clip((px * ab[0] + py * ab[1] + pz * ab[2]) / denom, 0.0, 1.0)
        d2 = (px - t * ab[0]) ** 2 + (py - t * ab[1]) ** 2 + (pz - t * ab[2]) ** 2
        occ |= d2 <= r * r
    if spec.cost_kind == "length":
        cost = np.ones(spec.dims)
        c_min, c_max = 1.0, 1.0
    else:
        noise = rng.standard_normal(spec.dims)
        smooth = ndimage.gaussian_filter(noise, sigma=spec.cost_smoothness)
        lo, hi = smooth.min(), smooth.max()
        unit = (smooth - lo) / max(hi - lo, 1e-12)
        cost = spec.c_min + (spec.c_max - spec.c_min) * unit
        c_min, c_max = spec.c_min, spec.c_max
    return occ, cost, c_min, c_max


def _pose_from_direction(p, direction, roll: float) -> Pose:
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    z = np.array([0.0, 0.0, 1.0])
    axis = np.cross(z, d)
    angle = math.acos(float(np.clip(z @ d, -1.0, 1.0)))
    q_align = quat_from_axis_angle(tuple(axis), angle) if np.linalg.norm(axis) > 1e-12 else (
        (1.0, 0.0, 0.0, 0.0) if angle < 1.0 else (0.0, 1.0, 0.0, 0.0))
    q = quat_multiply(q_align, quat_about_z(roll))
    return Pose(tuple(float(v) for v in p), quat_canonical(q))


def direct_arc_to_point(x: Pose, g) -> tuple[float, float, float] | None:
    """The unique aiming arc (kappa, delta_ell, delta_theta) from x through g,
    or None when g is on/behind the start plane."""
    gl = quat_rotate(quat_conjugate(x.q), tuple(np.asarray(g, dtype=float) - np.asarray(x.p)))
    a = math.hypot(gl[0], gl[1])
    b = gl[2]
    if b <= 1e-9 and a <= 1e-9:
        return None
    theta = math.atan2(gl[1], gl[0]) % (2.0 * math.pi) if a > 1e-12 else 0.0
    if a <= 1e-9:
        return (0.0, b, 0.0) if b > 0 else None
    kappa = 2.0 * a / (a * a + b * b)
    r = 1.0 / kappa
    phi = math.atan2(b, r - a) % (2.0 * math.pi)
    if phi <= 1e-12:
        return None
    return (kappa, r * phi, theta)


def direct_arc_exists(env: Environment, x: Pose, g, tau: float, kappa_max: float,
                      ell_max: float, margin: float = 1.0,
                      n_theta: int = 48, n_kappa: int = 24) -> bool:
    """True when a single collision-free constant-curvature arc from x passes
    within margin*tau of g. Sweeps the curving plane and curvature, plus the
    exact aiming arc."""
    g = np.asarray(g, dtype=float)
    candidates = []
    aim = direct_arc_to_point(x, g)
    if aim is not None and aim[0] <= kappa_max + 1e-12 and aim[1] <= ell_max + 1e-9:
        candidates.append(MotionPrimitive(min(aim[0], kappa_max), aim[1], aim[2]))
    gl = quat_rotate(quat_conjugate(x.q), tuple(g - np.asarray(x.p)))
    for j in range(n_theta):
        theta = j * 2.0 * math.pi / n_theta
        ct, st = math.cos(theta), math.sin(theta)
        # local coordinates in the candidate curving plane
        u = gl[0] * ct + gl[1] * st
        w = -gl[0] * st + gl[1] * ct
        z = gl[2]
        for i in range(n_kappa + 1):
            kappa = kappa_max * i / n_kappa
            if kappa <= 1e-9:
                t_close = min(max(z, 0.0), ell_max)
                d2 = u * u + w * w + (z - t_close) ** 2
                ell = t_close
            else:
                r = 1.0 / kappa
                dr = math.hypot(u - r, z)
                phi = math.atan2(z, r - u) % (2.0 * math.pi)
                ell = r * phi
                if ell > ell_max or ell <= 1e-9:
                    continue
                d2 = (dr - r) ** 2 + w * w
            if ell <= 1e-9:
                continue
            if d2 <= (margin * tau) ** 2:
                candidates.append(MotionPrimitive(kappa, ell, theta))
    for m in candidates:
        if env.edge_collision_free(x, m):
            return True
    return False


def generate_scenario(spec: ScenarioSpec):
    """Deterministically build (Environment, PlanningProblem) from a seed.

    Start/goal pairs are resampled until the start survives the
    inevitable-collision check and no direct collision-free arc reaches the
    goal (trivial scenarios are rejected). Raises UnsatisfiableSpecError when
    the retry budget runs out.
    """
    from .guidance import ReachSpec, goal_reachable, inevitable_collision
    from .search import PlanningProblem

    rng = np.random.default_rng(spec.seed)
    occ, cost, c_min, c_max = _build_grids(spec, rng)
    env = Environment(
        origin=np.zeros(3),
        spacing=spec.spacing,
        occupancy=occ,
        cost=cost,
        needle_radius=spec.needle_radius,
        c_min=c_min,
        c_max=c_max,
    )
    extent = np.array(spec.dims) * spec.spacing
    span = float(min(np.min(extent), spec.ell_max))
    margin = 2.0 * spec.spacing + spec.needle_radius
    bearing_max = math.radians(spec.goal_bearing_deg)
    for _ in range(spec.max_retries):
        p_start = rng.uniform(margin, extent - margin)
        if not env.is_free(p_start):
            continue
        to_center = 0.5 * extent - p_start
        if np.linalg.norm(to_center) < 1e-6:
            continue
        jitter = rng.normal(scale=0.25, size=3)
        direction = to_center / np.linalg.norm(to_center) + jitter
        roll = rng.uniform(0.0, 2.0 * math.pi)
        x_start = _pose_from_direction(p_start, direction, roll)
        # goal inside a forward cone shallow enough that the aiming arc is
        # kinematically feasible: in an empty workspace every candidate pair
        # then has a direct arc and is rejected as trivial, so only obstacles
        # create accepted scenarios
        dist = rng.uniform(*spec.goal_dist_frac) * span
        sin_cap = min(math.sin(bearing_max), 0.45 * spec.kappa_max * dist)
        bearing = rng.uniform(math.radians(2.0), math.asin(sin_cap))
        azim = rng.uniform(0.0, 2.0 * math.pi)
        local = (
            math.sin(bearing) * math.cos(azim),
            math.sin(bearing) * math.sin(azim),
            math.cos(bearing),
        )
        p_goal = np.asarray(x_start.p) + dist * np.array(quat_rotate(x_start.q, local))
        if np.any(p_goal < margin) or np.any(p_goal > extent - margin):
            continue
        if not env.is_free(p_goal):
            continue
        aim = direct_arc_to_point(x_start, p_goal)
        if aim is None or aim[0] > 0.9 * spec.kappa_max or aim[1] > 0.85 * spec.ell_max:
            continue
        reach = ReachSpec(kappa_max=spec.kappa_max, remaining_length=spec.ell_max, tau=spec.tau)
        if not goal_reachable(x_start, tuple(p_goal), reach):
            continue
        if spec.min_clear_arcs > 0:
            ell_probe = min(0.35 * spec.ell_max, 1.5 / spec.kappa_max)
            probes = [MotionPrimitive(0.0, ell_probe, 0.0)] + [
                MotionPrimitive(spec.kappa_max, ell_probe, k * math.pi / 4.0) for k in range(8)
            ]
            clear = sum(env.edge_collision_free(x_start, m) for m in probes)
            if clear < spec.min_clear_arcs:
                continue
        if direct_arc_exists(env, x_start, p_goal, spec.tau, spec.kappa_max, spec.ell_max,
                             margin=1.15):
            continue
        if inevitable_collision(env, x_start, tuple(p_goal), reach):
            continue
        problem = PlanningProblem(
            env=env,
            x_start=x_start,
            p_goal=tuple(float(v) for v in p_goal),
            tau=spec.tau,
            ell_max=spec.ell_max,
            kappa_max=spec.kappa_max,
            cost_kind=spec.cost_kind,
        )
        return env, problem
    raise UnsatisfiableSpecError(
        f"no admissible start/goal pair after {spec.max_retries} tries (seed={spec.seed})"
    )
