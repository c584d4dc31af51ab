"""Best-first multi-resolution lattice search over needle motion primitives.

Two modes share one loop:
  ROS  - rank window of width n_la ordered by f = cost-to-come + heuristic,
         cost-bound pruning against the incumbent plan, and duplicate
         rejection that also requires the incumbent's cost to be no larger.
  RCS  - strict rank order (f breaks ties), duplicate rejection on pose
         similarity alone, no cost-bound pruning.

Both run anytime: after the first plan they keep improving until the OPEN
list is exhausted or the budget runs out.
"""

from __future__ import annotations

import hashlib
import heapq
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .environment import Environment
from .errors import InvalidStartError
from .guidance import ReachSpec, direct_goal_connect, dubins_point_distance, goal_reachable, heuristic, inevitable_collision
from .kinematics import MotionPrimitive, Pose, Trajectory, apply_primitive, pose_distance
from .lattice import Resolution, canonical_key, coarsest_primitives, node_rank, refine_primitives, valid_resolution

EPS_COST = 1e-12


@dataclass(frozen=True)
class PlanningProblem:
    """The planning instance: workspace, start, goal ball, and limits."""

    env: Environment
    x_start: Pose
    p_goal: tuple[float, float, float]
    tau: float
    ell_max: float
    kappa_max: float
    cost_kind: str = "costmap"

    def __post_init__(self):
        if self.tau <= 0.0 or self.kappa_max <= 0.0 or self.ell_max <= 0.0:
            raise ValueError("tau, ell_max, kappa_max must be positive")
        if self.cost_kind not in ("length", "costmap"):
            raise ValueError(f"unknown cost_kind {self.cost_kind!r}")
        object.__setattr__(self, "p_goal", tuple(float(v) for v in self.p_goal))

    @property
    def c_min(self) -> float:
        return 1.0 if self.cost_kind == "length" else self.env.c_min

    def to_json(self) -> dict:
        return {
            "spec_version": 1,
            "x_start": self.x_start.to_json(),
            "p_goal": list(self.p_goal),
            "tau": self.tau,
            "ell_max": self.ell_max,
            "kappa_max": self.kappa_max,
            "cost_kind": self.cost_kind,
        }

    @staticmethod
    def from_json(obj: dict, env: Environment) -> "PlanningProblem":
        return PlanningProblem(
            env=env,
            x_start=Pose.from_json(obj["x_start"]),
            p_goal=tuple(obj["p_goal"]),
            tau=float(obj["tau"]),
            ell_max=float(obj["ell_max"]),
            kappa_max=float(obj["kappa_max"]),
            cost_kind=obj.get("cost_kind", "costmap"),
        )

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(json.dumps(self.to_json(), sort_keys=True).encode())
        h.update(self.env.digest().encode())
        return h.hexdigest()


@dataclass
class PlannerConfig:
    n_la: int = 3
    alpha: float = 1.0
    d_sim: float | None = None
    eps: float = 0.1
    r_min: Resolution = field(default_factory=lambda: Resolution(0.125, 0.157))
    delta_ell_max: float = 20.0
    mode: str = "ROS"
    time_budget_ms: float | None = 10000.0
    max_expansions: int | None = None
    threads: int = 1
    seed: int = 0
    use_inevitable_collision: bool = False
    use_direct_connect: bool = True

    def __post_init__(self):
        if self.mode not in ("ROS", "RCS"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.n_la < 0 or self.threads < 1:
            raise ValueError("n_la must be >= 0 and threads >= 1")
        if self.d_sim is not None and self.d_sim <= 0.0:
            raise ValueError("d_sim must be positive")

    def to_json(self) -> dict:
        return {
            "n_la": self.n_la,
            "alpha": self.alpha,
            "d_sim": self.d_sim,
            "eps": self.eps,
            "r_min": [self.r_min.delta_ell_min, self.r_min.delta_theta_min],
            "delta_ell_max": self.delta_ell_max,
            "mode": self.mode,
            "time_budget_ms": self.time_budget_ms,
            "max_expansions": self.max_expansions,
            "threads": self.threads,
            "seed": self.seed,
            "use_inevitable_collision": self.use_inevitable_collision,
            "use_direct_connect": self.use_direct_connect,
        }


@dataclass
class Node:
    """Search-tree vertex."""

    pose: Pose
    parent: "Node | None"
    primitive: MotionPrimitive | None
    cost_to_come: float
    depth: int
    rank: int
    f: float
    insertion_index: int
    path_length: float
    child_keys: set | None = None

    def path_primitives(self) -> tuple[MotionPrimitive, ...]:
        prims = []
        node = self
        while node.parent is not None:
            prims.append(node.primitive)
            node = node.parent
        return tuple(reversed(prims))


@dataclass
class PlanResult:
    best: Trajectory | None
    best_cost: float
    trace: list[tuple[float, float]]
    nodes_expanded: int
    nodes_pruned_duplicate: int
    nodes_pruned_reach: int
    nodes_pruned_cost: int
    nodes_pruned_equivalent: int
    nodes_pruned_invalid: int
    nodes_inserted: int
    terminated: str
    wall_ms: float

    def found(self) -> bool:
        return self.best is not None

    def to_json(self, problem: PlanningProblem | None = None,
                config: PlannerConfig | None = None,
                include_timing: bool = True) -> dict:
        out = {
            "found": self.found(),
            "cost": self.best_cost if self.found() else None,
            "length": self.best.length if self.found() else None,
            "primitives": [m.to_json() for m in self.best.primitives] if self.found() else None,
            "polyline": [list(p.p) for _, p in self.best.sample(0.5)] if self.found() else None,
            "counters": {
                "nodes_expanded": self.nodes_expanded,
                "nodes_pruned_duplicate": self.nodes_pruned_duplicate,
                "nodes_pruned_reach": self.nodes_pruned_reach,
                "nodes_pruned_cost": self.nodes_pruned_cost,
                "nodes_pruned_equivalent": self.nodes_pruned_equivalent,
                "nodes_pruned_invalid": self.nodes_pruned_invalid,
                "nodes_inserted": self.nodes_inserted,
            },
            "terminated": self.terminated,
            "trace": [[t if include_timing else 0.0, c] for t, c in self.trace],
            "wall_ms": self.wall_ms if include_timing else 0.0,
        }
        if problem is not None:
            out["problem_digest"] = problem.digest()
        if config is not None:
            out["config"] = config.to_json()
        return out


class OpenList:
    """Per-rank min-heaps keyed by (f, cost_to_come, insertion_index)."""

    def __init__(self):
        self.heaps: dict[int, list] = {}
        self.size = 0

    def __len__(self):
        return self.size

    def insert(self, node: Node) -> None:
        self.heaps.setdefault(node.rank, [])
        heapq.heappush(self.heaps[node.rank], (node.f, node.cost_to_come, node.insertion_index, node))
        self.size += 1

    def _prune_empty(self):
        for r in [r for r, h in self.heaps.items() if not h]:
            del self.heaps[r]

    def extract(self, mode: str, n_la: int) -> Node:
        """ROS: argmin f over ranks within the look-ahead window, ties broken
        by (rank, cost_to_come, insertion order). RCS: strict rank order with
        the same key as tie-break."""
        if self.size == 0:
            raise RuntimeError("extract from empty OPEN list")
        self._prune_empty()
        r_open = min(self.heaps)
        if mode == "RCS":
            entry = heapq.heappop(self.heaps[r_open])
            self.size -= 1
            return entry[3]
        best_rank = None
        best_key = None
        for r in range(r_open, r_open + n_la + 1):
            heap = self.heaps.get(r)
            if not heap:
                continue
            f, cost, idx, _ = heap[0]
            key = (f, r, cost, idx)
            if best_key is None or key < best_key:
                best_key = key
                best_rank = r
        entry = heapq.heappop(self.heaps[best_rank])
        self.size -= 1
        return entry[3]


class ClosedSet:
    """Spatial hash over positions with cell size d_sim; a duplicate query
    inspects the 27 neighboring cells and then the full pose metric."""

    def __init__(self, cell: float):
        self.cell = max(cell, 1e-9)
        self.cells: dict[tuple[int, int, int], list[tuple[Pose, float]]] = {}

    def _key(self, p):
        c = self.cell
        return (int(math.floor(p[0] / c)), int(math.floor(p[1] / c)), int(math.floor(p[2] / c)))

    def insert(self, node: Node) -> None:
        self.cells.setdefault(self._key(node.pose.p), []).append((node.pose, node.cost_to_come))

    def is_duplicate(self, v: Node, d_sim: float, alpha: float, mode: str) -> bool:
        kx, ky, kz = self._key(v.pose.p)
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for dz in (-1, 0, 1):
                    bucket = self.cells.get((kx + dx, ky + dy, kz + dz))
                    if not bucket:
                        continue
                    for pose, cost in bucket:
                        if mode == "ROS" and cost > v.cost_to_come:
                            continue
                        if pose_distance(pose, v.pose, alpha) < d_sim:
                            return True
        return False


def is_duplicate(closed: ClosedSet, v: Node, d_sim: float, alpha: float, mode: str) -> bool:
    return closed.is_duplicate(v, d_sim, alpha, mode)


def open_extract(open_list: OpenList, n_la: int, mode: str = "ROS") -> Node:
    return open_list.extract(mode, n_la)


def successor_separation(kappa_max: float, delta_ell_min: float) -> float:
    """Minimum positional distance between a node and any successor: the
    chord of the shortest, sharpest primitive. Any duplicate radius strictly
    below it cannot prune a child against its own parent."""
    return (2.0 / kappa_max) * math.sin(0.5 * kappa_max * delta_ell_min)


def dsim_from_theory(kappa_max: float, delta_ell_min: float, ell_max: float,
                     L_s: float, delta: float) -> float:
    """Upper bound on the duplicate-rejection radius that preserves the
    approximation guarantee; any d_sim strictly below it is safe."""
    if L_s <= 1.0:
        raise ValueError("L_s must exceed 1")
    if delta <= 0.0:
        raise ValueError("delta must be positive")
    term1 = successor_separation(kappa_max, delta_ell_min)
    H = math.ceil(ell_max / delta_ell_min)
    # evaluate delta*(L_s-1) / (2*(L_s^H - 1)) in log space; L_s^H overflows
    # for any realistic H
    log_den = H * math.log(L_s)
    if log_den > 700.0:
        term2 = math.exp(math.log(delta * (L_s - 1.0) / 2.0) - log_den)
    else:
        term2 = delta * (L_s - 1.0) / (2.0 * (L_s ** H - 1.0))
    return min(term1, term2)


def default_d_sim(kappa_max: float, delta_ell_min: float, tau: float) -> float:
    """Heuristic radius used when the theory constants are unknown."""
    return min(successor_separation(kappa_max, delta_ell_min), 0.25 * tau)


def node_valid(v: Node, problem: PlanningProblem, config: PlannerConfig,
               best_cost: float) -> bool:
    """Validity per the expansion contract; see plan() for the split between
    the precomputed parts and the commit-time cost bound."""
    return _validity_parts(v, problem, config) is None and _cost_bound_ok(v, config, best_cost)


def _validity_parts(v: Node, problem: PlanningProblem, config: PlannerConfig) -> str | None:
    """The expensive, side-effect-free validity conditions (safe to evaluate
    concurrently). Returns None when valid, else the failure reason."""
    if v.path_length > problem.ell_max + 1e-9:
        return "length"
    spec = ReachSpec(
        kappa_max=problem.kappa_max,
        remaining_length=problem.ell_max - v.path_length,
        tau=problem.tau,
    )
    if not goal_reachable(v.pose, problem.p_goal, spec):
        return "reach"
    if v.parent is not None:
        if math.isinf(v.cost_to_come):
            return "collision"
        if not problem.env.edge_collision_free(v.parent.pose, v.primitive):
            return "collision"
    if config.use_inevitable_collision:
        if inevitable_collision(problem.env, v.pose, problem.p_goal, spec):
            return "reach"
    return None


def _cost_bound_ok(v: Node, config: PlannerConfig, best_cost: float) -> bool:
    if config.mode == "ROS" and best_cost < math.inf:
        return v.f < best_cost - EPS_COST
    return True


def plan(problem: PlanningProblem, config: PlannerConfig) -> PlanResult:
    env = problem.env
    if not env.is_free(problem.x_start.p):
        raise InvalidStartError("start pose is in collision or outside the workspace")

    g = problem.p_goal
    c_min = problem.c_min
    d_sim = config.d_sim if config.d_sim is not None else default_d_sim(
        problem.kappa_max, config.r_min.delta_ell_min, problem.tau)
    length_cost = problem.cost_kind == "length"
    coarse = coarsest_primitives(problem.kappa_max, config.delta_ell_max)

    t0 = time.perf_counter()

    def elapsed_ms() -> float:
        return (time.perf_counter() - t0) * 1000.0

    counters = {"expanded": 0, "dup": 0, "reach": 0, "cost": 0, "equiv": 0,
                "inserted": 0, "invalid": 0}
    trace: list[tuple[float, float]] = []
    best_traj: Trajectory | None = None
    best_cost = math.inf

    def update_best(traj: Trajectory, cost: float) -> None:
        nonlocal best_traj, best_cost
        if cost < best_cost - EPS_COST:
            best_traj, best_cost = traj, cost
            trace.append((elapsed_ms(), cost))

    insertion_counter = 0

    def make_root() -> Node:
        h0 = heuristic(problem.x_start, g, problem.tau, problem.kappa_max, c_min)
        return Node(problem.x_start, None, None, 0.0, 0, 0, h0, 0, 0.0)

    def make_child(parent: Node, m: MotionPrimitive, edge: float) -> Node:
        nonlocal insertion_counter
        insertion_counter += 1
        pose = apply_primitive(parent.pose, m)
        cost = parent.cost_to_come + edge
        h = heuristic(pose, g, problem.tau, problem.kappa_max, c_min)
        return Node(
            pose=pose,
            parent=parent,
            primitive=m,
            cost_to_come=cost,
            depth=parent.depth + 1,
            rank=node_rank(parent.rank, m),
            f=cost + h,
            insertion_index=insertion_counter,
            path_length=parent.path_length + m.delta_ell,
        )

    open_list = OpenList()
    closed = ClosedSet(cell=d_sim)
    open_list.insert(make_root())
    counters["inserted"] += 1

    def insert_under(parent: Node, prims) -> None:
        if parent.child_keys is None:
            parent.child_keys = set()
        fresh = []
        for m in prims:
            key = canonical_key(m, config.delta_ell_max)
            if key in parent.child_keys:
                counters["equiv"] += 1
                continue
            parent.child_keys.add(key)
            fresh.append(m)
        if not fresh:
            return
        if length_cost:
            edges = [m.delta_ell for m in fresh]
        else:
            edges = env.edge_costs_batch(parent.pose, fresh)
        for m, edge in zip(fresh, edges):
            open_list.insert(make_child(parent, m, edge))
            counters["inserted"] += 1

    def try_direct_connect(v: Node) -> None:
        if not config.use_direct_connect:
            return
        lower = v.cost_to_come + c_min * max(
            0.0, dubins_point_distance(v.pose, g, problem.kappa_max) - problem.tau)
        if lower >= best_cost - EPS_COST:
            return
        suffix = direct_goal_connect(env, v.pose, g, problem.tau, problem.kappa_max,
                                     problem.ell_max - v.path_length)
        if suffix is None:
            return
        prims = v.path_primitives() + suffix.primitives
        if length_cost:
            suffix_cost = suffix.length
        else:
            try:
                suffix_cost = env.trajectory_cost(suffix)
            except Exception:
                return
        update_best(Trajectory(problem.x_start, prims), v.cost_to_come + suffix_cost)

    executor = ThreadPoolExecutor(max_workers=config.threads) if config.threads > 1 else None
    terminated = "open-exhausted"
    try:
        while len(open_list) > 0:
            if config.time_budget_ms is not None and elapsed_ms() >= config.time_budget_ms:
                terminated = "timeout"
                break
            if config.max_expansions is not None and counters["expanded"] >= config.max_expansions:
                terminated = "timeout"
                break
            if best_cost <= EPS_COST:
                break  # zero-cost plan cannot be improved

            batch = []
            for _ in range(config.threads):
                if len(open_list) == 0:
                    break
                batch.append(open_list.extract(config.mode, config.n_la))
            if executor is not None and len(batch) > 1:
                parts = list(executor.map(lambda n: _validity_parts(n, problem, config), batch))
            else:
                parts = [_validity_parts(n, problem, config) for n in batch]

            # mutations are committed serially in extraction order
            for v, reason in zip(batch, parts):
                valid = reason is None and _cost_bound_ok(v, config, best_cost)
                if not valid:
                    if reason is None:
                        counters["cost"] += 1
                    elif reason == "reach":
                        counters["reach"] += 1
                    else:
                        counters["invalid"] += 1
                elif closed.is_duplicate(v, d_sim, config.alpha, config.mode):
                    counters["dup"] += 1
                else:
                    if math.dist(v.pose.p, g) <= problem.tau:
                        update_best(Trajectory(problem.x_start, v.path_primitives()), v.cost_to_come)
                    try_direct_connect(v)
                    insert_under(v, coarse)
                    closed.insert(v)
                    counters["expanded"] += 1
                if v.parent is not None:
                    refined = [m for m in refine_primitives(v.primitive, config.delta_ell_max)
                               if valid_resolution(m, config.r_min, config.delta_ell_max)]
                    if refined:
                        insert_under(v.parent, refined)
    finally:
        if executor is not None:
            executor.shutdown(wait=False)

    return PlanResult(
        best=best_traj,
        best_cost=best_cost if best_traj is not None else math.inf,
        trace=trace,
        nodes_expanded=counters["expanded"],
        nodes_pruned_duplicate=counters["dup"],
        nodes_pruned_reach=counters["reach"],
        nodes_pruned_cost=counters["cost"],
        nodes_pruned_equivalent=counters["equiv"],
        nodes_pruned_invalid=counters["invalid"],
        nodes_inserted=counters["inserted"],
        terminated=terminated,
        wall_ms=elapsed_ms(),
    )
