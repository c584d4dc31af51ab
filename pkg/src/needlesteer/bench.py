"""Benchmark orchestration: run planners over seeded scenarios, emit
per-scenario CSV rows and aggregate relative-cost curves plus the RCS/ROS
final-cost-ratio CDF.

Relative cost follows the first-found-plan convention: within one scenario
the earliest plan found by any planner defines cost 1.0 and every other
plan is reported relative to it.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .environment import ScenarioSpec, generate_scenario
from .rrt import RrtConfig, rrt_plan
from .search import PlannerConfig, PlanResult, plan

PLANNERS = ("ros", "rcs", "rrt")
CSV_HEADER = ["scenario_id", "planner", "t_first_ms", "c_first", "t_best_ms", "c_best", "nodes_expanded"]


@dataclass
class BenchRun:
    scenario_ids: list[int]
    results: dict  # (scenario_id, planner) -> PlanResult
    budget_ms: float | None

    def csv_rows(self, include_timing: bool = True) -> list[list]:
        rows = []
        for sid in self.scenario_ids:
            for name in sorted({p for s, p in self.results if s == sid}, key=PLANNERS.index):
                res = self.results[(sid, name)]
                if res.trace:
                    t_first, c_first = res.trace[0]
                    t_best, c_best = res.trace[-1]
                    row = [sid, name,
                           round(t_first, 3) if include_timing else 0.0, repr(c_first),
                           round(t_best, 3) if include_timing else 0.0, repr(c_best),
                           res.nodes_expanded]
                else:
                    row = [sid, name, "", "", "", "", res.nodes_expanded]
                rows.append(row)
        return rows

    def reference_costs(self, use_timing: bool = True) -> dict:
        """Per scenario: cost of the earliest plan found by any planner.

        Without timing (deterministic runs), falls back to fixed planner
        order since wall-clock arrival order is not reproducible."""
        ref = {}
        for sid in self.scenario_ids:
            entries = []
            for name in PLANNERS:
                res = self.results.get((sid, name))
                if res is not None and res.trace:
                    t = res.trace[0][0] if use_timing else 0.0
                    entries.append((t, PLANNERS.index(name), res.trace[0][1]))
            if entries:
                entries.sort()
                ref[sid] = entries[0][2]
        return ref

    def relative_curves(self, n_points: int = 40) -> dict:
        """Mean relative best-cost-so-far per planner on a shared time grid."""
        ref = self.reference_costs()
        horizon = self.budget_ms if self.budget_ms else 1.0
        t_grid = np.logspace(math.log10(1.0), math.log10(max(horizon, 10.0)), n_points)
        curves = {}
        for name in PLANNERS:
            if not any((sid, name) in self.results for sid in self.scenario_ids):
                continue
            means = []
            for t in t_grid:
                vals = []
                for sid, c_ref in ref.items():
                    res = self.results.get((sid, name))
                    if res is None:
                        continue
                    best = None
                    for tt, cc in res.trace:
                        if tt <= t:
                            best = cc
                        else:
                            break
                    if best is not None:
                        vals.append(best / c_ref)
                means.append({"t_ms": float(t),
                              "mean_rel_cost": float(np.mean(vals)) if vals else None,
                              "n": len(vals)})
            curves[name] = means
        return curves

    def final_cost_ratio_cdf(self, num: str = "rcs", den: str = "ros") -> list[dict]:
        """CDF of final-cost ratios num/den across scenarios where both found
        a plan; non-decreasing from 0 to 1."""
        ratios = []
        for sid in self.scenario_ids:
            a = self.results.get((sid, num))
            b = self.results.get((sid, den))
            if a is not None and b is not None and a.found() and b.found():
                ratios.append(a.best_cost / b.best_cost)
        ratios.sort()
        n = len(ratios)
        return [{"ratio": r, "cdf": (i + 1) / n} for i, r in enumerate(ratios)]

    def aggregate_json(self, include_timing: bool = True) -> dict:
        out = {
            "scenarios": self.scenario_ids,
            "budget_ms": self.budget_ms,
            "reference_costs": {str(k): v for k, v in self.reference_costs(include_timing).items()},
            "final_costs": {
                f"{sid}/{name}": (self.results[(sid, name)].best_cost
                                  if self.results[(sid, name)].found() else None)
                for sid in self.scenario_ids
                for name in PLANNERS if (sid, name) in self.results
            },
            "cdf_rcs_over_ros": self.final_cost_ratio_cdf(),
        }
        if include_timing:
            out["relative_cost_curves"] = self.relative_curves()
        return out


def run_bench(base_spec: ScenarioSpec, n_scenarios: int, planners,
              budget_ms: float | None, max_expansions: int | None = None,
              max_iters: int | None = None, planner_config: PlannerConfig | None = None,
              rrt_config: RrtConfig | None = None) -> BenchRun:
    """Run each requested planner on n_scenarios seeded variants of
    base_spec with identical budgets."""
    results = {}
    scenario_ids = []
    for i in range(n_scenarios):
        spec = ScenarioSpec(**{**base_spec.__dict__, "seed": base_spec.seed + i})
        env, problem = generate_scenario(spec)
        sid = spec.seed
        scenario_ids.append(sid)
        for name in planners:
            if name in ("ros", "rcs"):
                template = planner_config or PlannerConfig()
                cfg_kwargs = dict(template.__dict__)
                cfg_kwargs.update(mode=name.upper(), time_budget_ms=budget_ms,
                                  max_expansions=max_expansions, seed=sid)
                results[(sid, name)] = plan(problem, PlannerConfig(**cfg_kwargs))
            elif name == "rrt":
                template = rrt_config or RrtConfig()
                results[(sid, name)] = rrt_plan(problem, RrtConfig(
                    goal_bias=template.goal_bias, step_ell=template.step_ell,
                    seed=sid, time_budget_ms=budget_ms, max_iters=max_iters))
            else:
                raise ValueError(f"unknown planner {name!r}")
    return BenchRun(scenario_ids=scenario_ids, results=results, budget_ms=budget_ms)


def write_csv(run: BenchRun, path: str, include_timing: bool = True) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(CSV_HEADER)
        writer.writerows(run.csv_rows(include_timing=include_timing))


def write_aggregate(run: BenchRun, path: str, include_timing: bool = True) -> None:
    with open(path, "w") as f:
        json.dump(run.aggregate_json(include_timing=include_timing), f, sort_keys=True, indent=1)
        f.write("\n")
