import json
import math

import numpy as np
import pytest

from needlesteer.kinematics import (
    MotionPrimitive,
    Pose,
    Trajectory,
    angular_distance,
    apply_primitive,
    pose_distance,
    quat_about_z,
    quat_from_axis_angle,
    quat_multiply,
)
from needlesteer.theory import rk4_tip_pose

from conftest import random_pose

KAPPA = 0.02
QUARTER = math.pi / (2.0 * KAPPA)


def test_straight_insertion():
    out = apply_primitive(Pose(), MotionPrimitive(0.0, 10.0, 0.0))
    assert out.p == (0.0, 0.0, 10.0)
    assert out.q == (1.0, 0.0, 0.0, 0.0)


def test_quarter_arc_against_ode():
    m = MotionPrimitive(KAPPA, QUARTER, 0.0)
    out = apply_primitive(Pose(), m)
    assert np.allclose(out.p, (50.0, 0.0, 50.0), atol=1e-9)
    assert np.allclose(out.tangent(), (1.0, 0.0, 0.0), atol=1e-9)
    ode = rk4_tip_pose(Pose(), m, n_steps=10_000)
    assert math.dist(out.p, ode.p) < 1e-6
    assert angular_distance(out.q, ode.q) < 1e-8


def test_quarter_arc_mirrored_plane():
    m = MotionPrimitive(KAPPA, QUARTER, math.pi)
    out = apply_primitive(Pose(), m)
    assert np.allclose(out.p, (-50.0, 0.0, 50.0), atol=1e-9)
    assert np.allclose(out.tangent(), (-1.0, 0.0, 0.0), atol=1e-9)
    ode = rk4_tip_pose(Pose(), m, n_steps=10_000)
    assert math.dist(out.p, ode.p) < 1e-6


def test_ode_consistency_random_primitives(rng):
    worst_p = worst_q = 0.0
    for _ in range(1000):
        x = random_pose(rng)
        m = MotionPrimitive(
            float(rng.uniform(0.0, KAPPA)),
            float(rng.uniform(1e-3, 20.0)),
            float(rng.uniform(0.0, 2.0 * math.pi)),
        )
        a = apply_primitive(x, m)
        b = rk4_tip_pose(x, m, n_steps=200)
        worst_p = max(worst_p, math.dist(a.p, b.p))
        worst_q = max(worst_q, angular_distance(a.q, b.q))
    assert worst_p < 1e-6
    assert worst_q < 1e-8


def test_zero_curvature_limit():
    for ell in (1.0, 10.0, 20.0):
        a = apply_primitive(Pose(), MotionPrimitive(1e-9, ell, 0.3))
        b = apply_primitive(Pose(), MotionPrimitive(0.0, ell, 0.3))
        assert math.dist(a.p, b.p) < 1e-4


def test_curvature_exactness_circumradius():
    m = MotionPrimitive(0.05, 30.0, 1.2)
    t = Trajectory(Pose((3, -2, 1), (0.8, 0.1, 0.5, 0.2)), (m,))
    pts = [np.array(p.p) for _, p in t.sample(1.0)]
    for a, b, c in zip(pts, pts[1:], pts[2:]):
        la, lb, lc = np.linalg.norm(b - c), np.linalg.norm(a - c), np.linalg.norm(a - b)
        area = 0.5 * np.linalg.norm(np.cross(b - a, c - a))
        radius = la * lb * lc / (4.0 * area)
        assert abs(radius - 1.0 / m.kappa) / (1.0 / m.kappa) < 1e-3


def test_pose_distance_basics():
    a = Pose()
    assert pose_distance(a, a, 1.0) == 0.0
    rot = Pose((0, 0, 0), quat_from_axis_angle((1, 0, 0), math.pi))
    assert abs(pose_distance(a, rot, 1.0) - math.pi) < 1e-12
    b = Pose((3, 4, 0))
    assert abs(pose_distance(a, b, 7.0) - 5.0) < 1e-12


def test_pose_distance_metric_axioms(rng):
    poses = [random_pose(rng) for _ in range(40)]
    alpha = 2.5
    for a in poses[:10]:
        for b in poses[:10]:
            assert pose_distance(a, b, alpha) == pose_distance(b, a, alpha)
    for _ in range(10_000):
        i, j, k = rng.integers(0, len(poses), 3)
        a, b, c = poses[i], poses[j], poses[k]
        assert pose_distance(a, c, alpha) <= pose_distance(a, b, alpha) + pose_distance(b, c, alpha) + 1e-9


def test_angular_distance_basics():
    q = (0.5, 0.5, 0.5, 0.5)
    assert angular_distance(q, q) == 0.0
    assert angular_distance(q, tuple(-c for c in q)) == 0.0
    for axis in ((1, 0, 0), (0, 1, 0), (0, 0, 1), (0.6, 0.8, 0)):
        rot = quat_multiply(q, quat_from_axis_angle(axis, math.pi / 2))
        assert abs(angular_distance(q, rot) - math.pi / 2) < 1e-9


def test_quaternion_invariants(rng):
    x = Pose()
    for _ in range(200):
        m = MotionPrimitive(float(rng.uniform(0, 0.1)), float(rng.uniform(0.1, 20)),
                            float(rng.uniform(0, 2 * math.pi)))
        x = apply_primitive(x, m)
        assert abs(sum(c * c for c in x.q) - 1.0) < 1e-9
        assert x.q[0] >= 0.0
        assert abs(sum(c * c for c in x.tangent()) - 1.0) < 1e-9


def test_sample_trajectory_spacing():
    t = Trajectory(Pose(), (MotionPrimitive(0.0, 10.0, 0.0),))
    samples = t.sample(5.0)
    assert [s for s, _ in samples] == [0.0, 5.0, 10.0]
    assert samples[0][1].p == (0.0, 0.0, 0.0)

    coarse = t.sample(30.0)
    assert [s for s, _ in coarse] == [0.0, 10.0]


def test_sample_trajectory_quarter_arc_midpoint():
    m = MotionPrimitive(KAPPA, QUARTER, 0.0)
    t = Trajectory(Pose(), (m,))
    samples = t.sample(QUARTER / 2.0)
    mid = samples[1][1]
    expected = ((1 - math.cos(math.pi / 4)) / KAPPA, 0.0, math.sin(math.pi / 4) / KAPPA)
    assert math.dist(mid.p, expected) < 1e-9
    ode = rk4_tip_pose(Pose(), MotionPrimitive(KAPPA, QUARTER / 2.0, 0.0), 2000)
    assert math.dist(mid.p, ode.p) < 1e-6


def test_sample_continuity(rng):
    prims = tuple(
        MotionPrimitive(float(rng.uniform(0, 0.08)), float(rng.uniform(1, 15)),
                        float(rng.uniform(0, 2 * math.pi)))
        for _ in range(5)
    )
    t = Trajectory(random_pose(rng), prims)
    h = 0.7
    samples = t.sample(h)
    for (s0, p0), (s1, p1) in zip(samples, samples[1:]):
        assert math.dist(p0.p, p1.p) <= (s1 - s0) + 1e-9
    assert abs(samples[-1][0] - t.length) < 1e-9


def test_trajectory_json_roundtrip(rng):
    t = Trajectory(random_pose(rng), (MotionPrimitive(0.05, 12.5, 1.0, 2, 1),))
    blob = json.dumps(t.to_json())
    back = Trajectory.from_json(json.loads(blob))
    assert back.start == t.start
    assert back.primitives == t.primitives


def test_primitive_validation():
    with pytest.raises(ValueError):
        MotionPrimitive(-0.1, 1.0, 0.0)
    with pytest.raises(ValueError):
        MotionPrimitive(0.1, 0.0, 0.0)
    with pytest.raises(ValueError):
        MotionPrimitive(0.1, 1.0, 7.0)
    with pytest.raises(ValueError):
        MotionPrimitive(0.1, 1.0, 0.0, -1, 0)
