import math

import numpy as np
import pytest

from needlesteer.kinematics import (
    MotionPrimitive,
    Pose,
    apply_primitive,
    pose_distance,
    quat_from_axis_angle,
    quat_multiply,
)
from needlesteer.lattice import (
    Resolution,
    canonical_key,
    coarsest_primitives,
    finest_set,
    node_rank,
    refine_primitives,
    valid_resolution,
)

KMAX = 0.02
DLMAX = 20.0


def key_set(prims, dl=DLMAX):
    return {canonical_key(m, dl) for m in prims}


def test_coarsest_set():
    prims = coarsest_primitives(KMAX, DLMAX)
    assert len(prims) == 5
    assert all(m.ell_level == 0 and m.theta_level == 0 for m in prims)
    expected = {(0.0, DLMAX, 0.0)} | {(KMAX, DLMAX, k * math.pi / 2) for k in range(4)}
    assert {(m.kappa, m.delta_ell, m.delta_theta) for m in prims} == expected


def test_coarsest_curved_endpoints_rotationally_related():
    # the four curved endpoints are images of each other under rotation
    # about the start tangent (+z)
    prims = [m for m in coarsest_primitives(KMAX, DLMAX) if m.kappa > 0]
    base = apply_primitive(Pose(), prims[0])
    for k, m in enumerate(prims):
        end = apply_primitive(Pose(), m)
        rot = quat_from_axis_angle((0, 0, 1), m.delta_theta)
        expected = Pose(
            tuple(np.array(_rotate(rot, base.p))),
            quat_multiply(rot, base.q),
        )
        assert pose_distance(end, expected, 1.0) < 1e-9


def _rotate(q, v):
    from needlesteer.kinematics import quat_rotate
    return quat_rotate(q, v)


def test_refine_example():
    m = MotionPrimitive(KMAX, 20.0, 0.0, 0, 0)
    children = refine_primitives(m, DLMAX)
    got = {(c.kappa, c.delta_ell, c.delta_theta, c.ell_level, c.theta_level) for c in children}
    assert got == {
        (KMAX, 10.0, 0.0, 1, 0),
        (KMAX, 20.0, math.pi / 4, 0, 1),
        (KMAX, 20.0, 7 * math.pi / 4, 0, 1),
    }


def test_refine_straight_length_only():
    m = MotionPrimitive(0.0, 10.0, 0.0, 1, 0)
    children = refine_primitives(m, DLMAX)
    assert all(c.kappa == 0.0 for c in children)
    assert {(c.delta_ell, c.ell_level) for c in children} == {(5.0, 2), (15.0, 2)}


def test_refinement_order_commutes():
    m = MotionPrimitive(KMAX, 20.0, math.pi / 2, 0, 0)
    by_len_first = set()
    for a in refine_primitives(m, DLMAX):
        for b in refine_primitives(a, DLMAX):
            by_len_first.add(canonical_key(b, DLMAX))
    # the grandchildren reached via (length, angle) and (angle, length)
    # orders collide on canonical keys
    grandchildren = [canonical_key(b, DLMAX)
                     for a in refine_primitives(m, DLMAX)
                     for b in refine_primitives(a, DLMAX)]
    assert len(grandchildren) > len(set(grandchildren))


def test_valid_resolution_length_cutoff():
    r = Resolution(0.125, 0.157)
    ok = MotionPrimitive(KMAX, 20.0 / 2 ** 7, 0.0, 7, 0)
    assert valid_resolution(ok, r, DLMAX)  # step 0.15625 >= 0.125
    too_fine = MotionPrimitive(KMAX, 20.0 / 2 ** 8, 0.0, 8, 0)
    assert not valid_resolution(too_fine, r, DLMAX)  # step 0.078125


def test_valid_resolution_angle_cutoff():
    r = Resolution(0.125, 0.157)
    ok = MotionPrimitive(KMAX, 20.0, math.pi / 16, 0, 3)
    assert valid_resolution(ok, r, DLMAX)  # step pi/16 ~ 0.19635
    too_fine = MotionPrimitive(KMAX, 20.0, math.pi / 32, 0, 4)
    assert not valid_resolution(too_fine, r, DLMAX)  # step ~ 0.0982


def test_valid_resolution_coarsest_always_ok():
    r = Resolution(0.125, 0.157)
    for m in coarsest_primitives(KMAX, DLMAX):
        assert valid_resolution(m, r, DLMAX)


def test_node_rank():
    root_rank = 0
    coarse = coarsest_primitives(KMAX, DLMAX)[0]
    assert node_rank(root_rank, coarse) == 1
    fine = MotionPrimitive(KMAX, 5.0, math.pi / 4, 2, 1)
    assert node_rank(3, fine) == 7


def test_canonical_key_examples():
    a = MotionPrimitive(KMAX, 10.0, 0.0, 1, 0)
    b = MotionPrimitive(KMAX, 10.0, 0.0, 1, 0)
    assert canonical_key(a, DLMAX) == canonical_key(b, DLMAX)
    s1 = MotionPrimitive(0.0, 10.0, 0.0, 1, 0)
    s2 = MotionPrimitive(0.0, 10.0, math.pi / 2, 1, 1)
    assert canonical_key(s1, DLMAX) == canonical_key(s2, DLMAX)


def test_canonical_keys_distinct_to_level_4():
    seen = {}
    step_l = DLMAX / 16
    step_t = (math.pi / 2) / 16
    for n_ell in range(1, 17):
        for n_th in range(0, 64):
            m = MotionPrimitive(KMAX, n_ell * step_l, n_th * step_t, 4, 4)
            key = canonical_key(m, DLMAX)
            val = (round(n_ell * step_l, 12), round(n_th * step_t, 12))
            if key in seen:
                assert seen[key] == val
            seen[key] = val
    assert len(seen) == 16 * 64


def test_finest_set_counts():
    r = Resolution(0.125, math.pi / 2)
    prims = finest_set(r, {0.0, KMAX}, DLMAX)
    assert len(prims) == 10  # 2 curvatures x n in 0..4

    r2 = Resolution(0.125, 2 * math.pi)
    prims2 = finest_set(r2, {0.0, KMAX}, DLMAX)
    assert len(prims2) == 4  # n in {0, 1}


def test_finest_set_passes_valid_resolution():
    r = Resolution(0.125, 0.157)
    for m in finest_set(r, {0.0, KMAX}, DLMAX):
        assert valid_resolution(m, r, DLMAX)


def test_dyadic_closure_depth_3():
    frontier = coarsest_primitives(KMAX, DLMAX)
    for _ in range(3):
        nxt = []
        for m in frontier:
            for c in refine_primitives(m, DLMAX):
                step_l = DLMAX / 2 ** c.ell_level
                step_t = (math.pi / 2) / 2 ** c.theta_level
                assert abs(c.delta_ell / step_l - round(c.delta_ell / step_l)) < 1e-9
                assert abs(c.delta_theta / step_t - round(c.delta_theta / step_t)) < 1e-9
                assert 0 < c.delta_ell <= DLMAX + 1e-12
                nxt.append(c)
        frontier = nxt
    assert frontier


def test_rank_monotone_and_sibling_rule():
    parent_rank = 5
    m = MotionPrimitive(KMAX, 10.0, math.pi / 4, 1, 1)
    v_rank = node_rank(parent_rank, m)
    assert v_rank > parent_rank
    for c in refine_primitives(m, DLMAX):
        assert node_rank(parent_rank, c) == v_rank + 1


def test_reachable_keys_finite_with_cutoff():
    r = Resolution(2.5, math.pi / 4)
    seen = set()
    frontier = [m for m in coarsest_primitives(KMAX, 10.0)]
    while frontier:
        nxt = []
        for m in frontier:
            key = canonical_key(m, 10.0)
            if key in seen:
                continue
            seen.add(key)
            for c in refine_primitives(m, 10.0):
                if valid_resolution(c, r, 10.0):
                    nxt.append(c)
        frontier = nxt
        assert len(seen) < 10_000  # termination guard
    # levels <= (2, 1): lengths {2.5,5,7.5,10}, angles multiples of pi/4
    assert seen == {canonical_key(m, 10.0) for m in _enumerate_full(2, 1)}


def _enumerate_full(a_max, b_max):
    out = [MotionPrimitive(0.0, (k + 1) * 10.0 / 2 ** a_max, 0.0, a_max, 0) for k in range(2 ** a_max)]
    for k in range(2 ** a_max):
        for j in range(4 * 2 ** b_max):
            out.append(MotionPrimitive(KMAX, (k + 1) * 10.0 / 2 ** a_max,
                                       j * (math.pi / 2) / 2 ** b_max, a_max, b_max))
    return out
