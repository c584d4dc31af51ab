"""Multi-resolution motion-primitive sets.

Lengths live on the dyadic grid delta_ell_max / 2^ell_level and pre-rotations
on (pi/2) / 2^theta_level. Refinement moves one dyadic half-step per axis.
Straight primitives carry a canonical delta_theta of zero: rotating before a
straight insertion changes only the frame roll, not the path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .kinematics import TWO_PI, MotionPrimitive

Rank = int


@dataclass(frozen=True)
class Resolution:
    """Cutoff resolution: the finest allowed insertion and rotation steps."""

    delta_ell_min: float
    delta_theta_min: float

    def __post_init__(self):
        if not (self.delta_ell_min > 0.0 and self.delta_theta_min > 0.0):
            raise ValueError("resolution steps must be positive")


def ell_step(delta_ell_max: float, level: int) -> float:
    return delta_ell_max / (1 << level)


def theta_step(level: int) -> float:
    return (0.5 * math.pi) / (1 << level)


def coarsest_primitives(kappa_max: float, delta_ell_max: float) -> list[MotionPrimitive]:
    """The five coarsest primitives: one straight plus four max-curvature arcs
    at quarter-turn steering orientations."""
    if not (kappa_max > 0.0 and delta_ell_max > 0.0):
        raise ValueError("kappa_max and delta_ell_max must be positive")
    prims = [MotionPrimitive(0.0, delta_ell_max, 0.0, 0, 0)]
    for k in range(4):
        prims.append(MotionPrimitive(kappa_max, delta_ell_max, k * 0.5 * math.pi, 0, 0))
    return prims


def refine_primitives(m: MotionPrimitive, delta_ell_max: float) -> list[MotionPrimitive]:
    """Dyadic neighborhood of m, one level finer per axis.

    Length children move +-delta_ell_max / 2^(a+1) and are kept when the
    result stays in (0, delta_ell_max]; angle children move
    +-(pi/2) / 2^(b+1) mod 2*pi. Straight primitives refine in length only.
    """
    out = []
    a, b = m.ell_level, m.theta_level
    ds = ell_step(delta_ell_max, a + 1)
    for sign in (1.0, -1.0):
        ell = m.delta_ell + sign * ds
        # snap to the exact dyadic multiple to avoid float drift
        ell = round(ell / ds) * ds
        if 1e-12 < ell <= delta_ell_max + 1e-12:
            out.append(MotionPrimitive(m.kappa, min(ell, delta_ell_max), m.delta_theta, a + 1, b))
    if m.kappa != 0.0:
        dt = theta_step(b + 1)
        n_mod = 4 * (1 << (b + 1))
        for sign in (1.0, -1.0):
            n = round((m.delta_theta + sign * dt) / dt) % n_mod
            out.append(MotionPrimitive(m.kappa, m.delta_ell, n * dt, a, b + 1))
    return out


def valid_resolution(m: MotionPrimitive, r: Resolution, delta_ell_max: float) -> bool:
    """True while m's dyadic steps are no finer than the cutoff resolution."""
    return (
        ell_step(delta_ell_max, m.ell_level) >= r.delta_ell_min - 1e-12
        and theta_step(m.theta_level) >= r.delta_theta_min - 1e-12
    )


def node_rank(parent_rank: Rank, m: MotionPrimitive) -> Rank:
    """Rank grows with depth and with the primitive's resolution levels."""
    return parent_rank + 1 + m.ell_level + m.theta_level


def canonical_key(m: MotionPrimitive, delta_ell_max: float) -> tuple:
    """Exact dyadic-rational key; primitives with identical geometric action
    (e.g. reached by refining the two axes in a different order) share it."""
    a = m.ell_level
    n_ell = round(m.delta_ell * (1 << a) / delta_ell_max)
    while n_ell % 2 == 0 and a > 0:
        n_ell //= 2
        a -= 1
    if m.kappa == 0.0:
        return (0.0, n_ell, a, 0, 0)
    b = m.theta_level
    n_th = round(m.delta_theta / theta_step(b)) % (4 * (1 << b))
    while n_th % 2 == 0 and b > 0:
        n_th //= 2
        b -= 1
    return (m.kappa, n_ell, a, n_th, b)


def finest_set(r: Resolution, curvatures, delta_ell_max: float = 20.0) -> list[MotionPrimitive]:
    """All primitives of the finest resolution: every curvature combined with
    the finest insertion step and each multiple n * r_theta, n in
    [0, floor(2*pi / r_theta)].

    Levels are assigned as the deepest dyadic level whose step still covers
    the requested resolution, so the result passes valid_resolution at r.
    """
    a = 0
    while ell_step(delta_ell_max, a + 1) >= r.delta_ell_min - 1e-12:
        a += 1
    b = 0
    while theta_step(b + 1) >= r.delta_theta_min - 1e-12:
        b += 1
    n_max = int(math.floor(TWO_PI / r.delta_theta_min + 1e-9))
    out = []
    for kappa in sorted(curvatures):
        for n in range(n_max + 1):
            theta = min(n * r.delta_theta_min, TWO_PI)
            out.append(MotionPrimitive(kappa, r.delta_ell_min, theta, a, b))
    return out
