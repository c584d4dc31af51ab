"""Command-line entry points: plan, bench, gen-env, validate-theory.

Exit codes for `plan`: 0 plan found, 1 bad inputs, 2 proven no plan
(open-exhausted), 3 timeout without a plan. `validate-theory` exits 4 when
any bound is violated. NEEDLESTEER_LOG sets the log level.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys

import numpy as np

from .bench import run_bench, write_aggregate, write_csv
from .environment import ScenarioSpec, generate_scenario, load_env, save_env
from .errors import NeedleSteerError
from .lattice import Resolution
from .rrt import RrtConfig, rrt_plan
from .search import PlannerConfig, PlanningProblem, plan
from . import theory

log = logging.getLogger("needlesteer")


def _setup_logging():
    level = os.environ.get("NEEDLESTEER_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _add_planner_flags(p: argparse.ArgumentParser):
    p.add_argument("--planner", choices=["ros", "rcs", "rrt"], default="ros")
    p.add_argument("--budget-ms", type=float, default=10000.0)
    p.add_argument("--budget-expansions", type=int, default=None,
                   help="deterministic budget: stop after this many extractions/iterations")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--n-la", type=int, default=3)
    p.add_argument("--d-sim", type=float, default=None)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--dl-min", type=float, default=0.125)
    p.add_argument("--dtheta-min", type=float, default=0.157)
    p.add_argument("--dl-max", type=float, default=20.0)
    p.add_argument("--goal-bias", type=float, default=0.05)
    p.add_argument("--step-ell", type=float, default=20.0)
    p.add_argument("--inevitable-collision", action="store_true",
                   help="enable the region-growing inevitable-collision gate")
    p.add_argument("--no-timing", action="store_true",
                   help="zero wall-clock fields in outputs for byte-reproducible runs")


def _planner_config(args) -> PlannerConfig:
    return PlannerConfig(
        n_la=args.n_la,
        alpha=args.alpha,
        d_sim=args.d_sim,
        eps=args.eps,
        r_min=Resolution(args.dl_min, args.dtheta_min),
        delta_ell_max=args.dl_max,
        mode=args.planner.upper() if args.planner in ("ros", "rcs") else "ROS",
        time_budget_ms=args.budget_ms,
        max_expansions=args.budget_expansions,
        threads=args.threads,
        seed=args.seed,
        use_inevitable_collision=args.inevitable_collision,
    )


def cmd_plan(args) -> int:
    env = load_env(args.env)
    with open(args.problem) as f:
        problem = PlanningProblem.from_json(json.load(f), env)
    if args.planner == "rrt":
        cfg = RrtConfig(goal_bias=args.goal_bias, step_ell=args.step_ell, seed=args.seed,
                        time_budget_ms=args.budget_ms, max_iters=args.budget_expansions)
        result = rrt_plan(problem, cfg)
        cfg_json = dict(cfg.__dict__)
    else:
        cfg = _planner_config(args)
        result = plan(problem, cfg)
        cfg_json = None
    out = result.to_json(problem=problem,
                         config=cfg if not isinstance(cfg, RrtConfig) else None,
                         include_timing=not args.no_timing)
    if cfg_json is not None:
        out["config"] = cfg_json
    payload = json.dumps(out, sort_keys=True, indent=1) + "\n"
    if args.out:
        with open(args.out, "w") as f:
            f.write(payload)
    else:
        sys.stdout.write(payload)
    if result.found():
        return 0
    return 2 if result.terminated == "open-exhausted" else 3


def cmd_gen_env(args) -> int:
    if args.spec:
        with open(args.spec) as f:
            spec = ScenarioSpec.from_json(json.load(f))
        if args.seed is not None:
            spec.seed = args.seed
    else:
        spec = ScenarioSpec(seed=args.seed if args.seed is not None else 0)
    env, problem = generate_scenario(spec)
    os.makedirs(args.out_dir, exist_ok=True)
    base = os.path.join(args.out_dir, args.name)
    save_env(env, base + ".env.json")
    with open(base + ".problem.json", "w") as f:
        json.dump(problem.to_json(), f, sort_keys=True, indent=1)
        f.write("\n")
    with open(base + ".scenario.json", "w") as f:
        json.dump(spec.to_json(), f, sort_keys=True, indent=1)
        f.write("\n")
    log.info("scenario %d written to %s.*", spec.seed, base)
    return 0


def cmd_bench(args) -> int:
    if args.spec:
        with open(args.spec) as f:
            base_spec = ScenarioSpec.from_json(json.load(f))
    else:
        base_spec = ScenarioSpec(seed=args.seed if args.seed is not None else 0)
    if args.seed is not None:
        base_spec.seed = args.seed
    planners = [p.strip() for p in args.planners.split(",") if p.strip()]
    template = PlannerConfig(
        n_la=args.n_la, alpha=args.alpha, d_sim=args.d_sim, eps=args.eps,
        r_min=Resolution(args.dl_min, args.dtheta_min), delta_ell_max=args.dl_max,
        threads=args.threads, use_inevitable_collision=args.inevitable_collision,
    )
    rrt_template = RrtConfig(goal_bias=args.goal_bias, step_ell=args.step_ell)
    run = run_bench(base_spec, args.scenarios, planners,
                    budget_ms=args.budget_ms, max_expansions=args.budget_expansions,
                    max_iters=args.budget_expansions, planner_config=template,
                    rrt_config=rrt_template)
    os.makedirs(args.out_dir, exist_ok=True)
    write_csv(run, os.path.join(args.out_dir, "bench.csv"), include_timing=not args.no_timing)
    write_aggregate(run, os.path.join(args.out_dir, "aggregate.json"),
                    include_timing=not args.no_timing)
    return 0


def cmd_validate_theory(args) -> int:
    report = {}
    violations = []

    # duty-cycling deviation and length-ratio bounds over the (r, eta) grid
    kappa_max = 0.08
    r_min = 1.0 / kappa_max
    grid_cases = []
    for fr in (1.01, 1.5, 2.0, 5.0, 20.0):
        for eta in (0.05, 0.1, 0.2, 0.35, 0.5):
            r = fr * r_min
            dev, ratio = _duty_cycle_margins(r, eta, kappa_max)
            dev_bound = r * (1.0 / math.cos(0.5 * eta) - 1.0)
            ratio_bound = 2.0 * math.tan(0.5 * eta) / eta
            ok = dev <= dev_bound + 1e-6 and ratio <= ratio_bound + 1e-6
            grid_cases.append(ok)
            if not ok:
                violations.append({"campaign": "duty_cycle", "r": r, "eta": eta,
                                   "deviation": dev, "bound": dev_bound,
                                   "ratio": ratio, "ratio_bound": ratio_bound})
    report["duty_cycle_grid"] = {"cases": len(grid_cases), "violations": grid_cases.count(False)}

    # kinematics against the independent integrator
    rng = np.random.default_rng(args.seed)
    n_kin = min(args.cases, 200)
    worst_pos = worst_ang = 0.0
    from .kinematics import MotionPrimitive, Pose, apply_primitive, angular_distance
    for _ in range(n_kin):
        q = rng.normal(size=4)
        x = Pose(tuple(rng.uniform(-40, 40, 3)), tuple(q / np.linalg.norm(q)))
        m = MotionPrimitive(float(rng.uniform(0, kappa_max)), float(rng.uniform(0.1, 20.0)),
                            float(rng.uniform(0, 2 * math.pi)))
        a = apply_primitive(x, m)
        b = theory.rk4_tip_pose(x, m, 200)
        worst_pos = max(worst_pos, math.dist(a.p, b.p))
        worst_ang = max(worst_ang, angular_distance(a.q, b.q))
    ok = worst_pos <= 1e-6 and worst_ang <= 1e-8
    report["kinematics_ode"] = {"cases": n_kin, "worst_pos_mm": worst_pos,
                                "worst_ang_rad": worst_ang, "violations": 0 if ok else 1}
    if not ok:
        violations.append({"campaign": "kinematics_ode", "worst_pos": worst_pos,
                           "worst_ang": worst_ang})

    # pruning-error accumulation replay
    est = theory.estimate_lipschitz(5000, args.seed, kappa_max=kappa_max)
    n_chain, d_sim = 6, 0.1
    bound = theory.pruning_error_bound(est.value, n_chain, d_sim)
    drifts = [theory.pruning_drift_replay(n_chain, d_sim, args.seed + i, kappa_max=kappa_max)
              for i in range(min(args.cases, 100))]
    bad = sum(d > bound for d in drifts)
    report["pruning_replay"] = {"cases": len(drifts), "L_s": est.value,
                                "bound": bound, "worst_drift": max(drifts),
                                "violations": bad}
    if bad:
        violations.append({"campaign": "pruning_replay", "bound": bound,
                           "worst": max(drifts)})

    report["lipschitz"] = {"value": est.value, "raw_max": est.raw_max,
                           "n_samples": est.n_samples}
    report["passed"] = not violations
    if violations:
        report["violations"] = violations
    payload = json.dumps(report, sort_keys=True, indent=1) + "\n"
    if args.out:
        with open(args.out, "w") as f:
            f.write(payload)
    else:
        sys.stdout.write(payload)
    return 4 if violations else 0


def _duty_cycle_margins(r: float, eta: float, kappa_max: float):
    """Measured two-way positional Hausdorff deviation and length ratio of
    the duty-cycle triple against the target arc."""
    from .kinematics import MotionPrimitive, Pose, Trajectory
    target = Trajectory(Pose(), (MotionPrimitive(1.0 / r, r * eta, 0.0),))
    triple = theory.duty_cycle_segment(r, eta, kappa_max)
    approx = Trajectory(Pose(), tuple(triple))
    step = min(r * eta, approx.length) / 400.0
    a = target.sample_positions(step)
    b = approx.sample_positions(step)
    d_ab = np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(-1))
    dev = max(d_ab.min(axis=1).max(), d_ab.min(axis=0).max())
    return float(dev), approx.length / target.length


def main(argv=None) -> int:
    _setup_logging()
    parser = argparse.ArgumentParser(prog="needlesteer",
                                     description="Steerable-needle motion planning toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p_plan = sub.add_parser("plan", help="plan on a stored environment/problem pair")
    p_plan.add_argument("--env", required=True)
    p_plan.add_argument("--problem", required=True)
    p_plan.add_argument("--out", default=None)
    _add_planner_flags(p_plan)
    p_plan.set_defaults(func=cmd_plan)

    p_gen = sub.add_parser("gen-env", help="generate a synthetic scenario")
    p_gen.add_argument("--spec", default=None, help="ScenarioSpec JSON file")
    p_gen.add_argument("--seed", type=int, default=None)
    p_gen.add_argument("--out-dir", required=True)
    p_gen.add_argument("--name", default="scenario")
    p_gen.set_defaults(func=cmd_gen_env)

    p_bench = sub.add_parser("bench", help="compare planners over seeded scenarios")
    p_bench.add_argument("--spec", default=None)
    p_bench.add_argument("--scenarios", type=int, default=30)
    p_bench.add_argument("--planners", default="ros,rcs,rrt")
    p_bench.add_argument("--out-dir", required=True)
    _add_planner_flags(p_bench)
    p_bench.set_defaults(func=cmd_bench)

    p_val = sub.add_parser("validate-theory", help="run the numeric theory campaigns")
    p_val.add_argument("--cases", type=int, default=100)
    p_val.add_argument("--seed", type=int, default=0)
    p_val.add_argument("--out", default=None)
    p_val.set_defaults(func=cmd_validate_theory)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (NeedleSteerError, OSError, json.JSONDecodeError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
