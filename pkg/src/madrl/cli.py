"""Command-line front end: train / eval / verify / export.

Outputs are deterministic per (config, seed): metrics and evaluation tables
are CSV, verification reports are JSON, and report paths also render PNG
figures next to the delimited files. MAD_RL_THREADS caps evaluation workers.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import checkpoints, config as cfgmod, corridor, ddpg, plots, stable_ops, verify
from .config import ConfigError
from .policies import MODEL_BASED_MODES, make_policy
from .signals import Signal


def _eval_workers() -> int:
    try:
        return max(1, int(os.environ.get("MAD_RL_THREADS", "1")))
    except ValueError:
        return 1


def _prepare(args, flag_overrides=()):
    cfg = cfgmod.load_config(getattr(args, "config", None))
    cfg = cfgmod.apply_overrides(cfg, getattr(args, "set", None))
    cfg = cfgmod.apply_overrides(
        cfg, [f"{key}={value}" for key, value in flag_overrides if value is not None])
    cfgmod.validate(cfg)
    return cfg


def cmd_train(args) -> int:
    cfg = _prepare(args, [("ddpg.seed", args.seed), ("policy.mode", args.mode),
                          ("ddpg.episodes", args.episodes)])
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfgmod.dump_config(cfg, out / "config.yaml")
    env = corridor.CorridorEnv(cfgmod.build_env_config(cfg))
    policy = cfgmod.build_policy(cfg, env)
    dcfg = cfgmod.build_ddpg_config(cfg)
    meta = {"model": cfg["policy"]["model"]}

    def checkpoint_hook(ep, pol):
        checkpoints.save_policy(out / f"checkpoint_ep{ep + 1}.json", pol, meta)

    result = ddpg.train(env, policy, dcfg, out_dir=out, checkpoint_hook=checkpoint_hook)
    checkpoints.save_policy(out / "checkpoint_final.json", result.policy, meta)
    checkpoints.save_policy(out / "checkpoint_best.json", result.best_policy(), meta)
    if result.metrics:
        plots.plot_training_curves({cfg["policy"]["mode"]: result.metrics},
                                   out / "training_curves.png")
        print(f"trained {dcfg.episodes} episodes; best improvement "
              f"{result.best_improvement:.2f}% (metrics.csv, checkpoints in {out})")
    else:
        print(f"no episodes requested; wrote initial checkpoint to {out}")
    return 0


def _rollout_row(env_cfg, policy, mode, seed, T):
    xb, ub = corridor.evaluation_rollout(env_cfg, None, mode, seed, T)
    loss_base = corridor.discounted_return(env_cfg, xb, ub)
    xp, up = corridor.evaluation_rollout(env_cfg, policy, mode, seed, T)
    loss_policy = corridor.discounted_return(env_cfg, xp, up)
    l_max = float(np.max(corridor.stage_losses(env_cfg, xp.data, up.data)))
    return {
        "seed": seed,
        "return_policy": loss_policy,
        "return_base": loss_base,
        "improvement_pct": 100.0 * (loss_base - loss_policy) / loss_base,
        "truncation_bound": corridor.truncation_bound(env_cfg.alpha, l_max, T),
        "trajectory": (xp, up),
    }


def _load_policy_for(cfg, env, checkpoint_path):
    _, meta = checkpoints.load_arrays(checkpoint_path)
    nominal = env.nominal(cfg["policy"]["model"]) if meta.get("model_based") else None
    return checkpoints.load_policy(checkpoint_path, nominal=nominal)


def cmd_eval(args) -> int:
    cfg = _prepare(args)
    env_cfg = cfgmod.build_env_config(cfg)
    env = corridor.CorridorEnv(env_cfg)
    policy = _load_policy_for(cfg, env, args.checkpoint)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    T = cfg["eval"]["horizon"]
    seeds = [args.seed + i for i in range(args.n)]
    workers = _eval_workers()
    if workers > 1:
        # rollouts are independent; each worker gets its own policy instance
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(
                lambda s: _rollout_row(env_cfg, _load_policy_for(cfg, env, args.checkpoint),
                                       args.mode, s, T), seeds))
    else:
        rows = [_rollout_row(env_cfg, policy, args.mode, s, T) for s in seeds]

    table = out / f"evaluation_{args.mode}.csv"
    with open(table, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rollout", "seed", "return_policy", "return_base",
                         "improvement_pct", "truncation_bound"])
        for i, row in enumerate(rows):
            writer.writerow([i, row["seed"], repr(row["return_policy"]),
                             repr(row["return_base"]), repr(row["improvement_pct"]),
                             repr(row["truncation_bound"])])
    x0_traj, u0_traj = rows[0]["trajectory"]
    x0_traj.to_csv(out / f"trajectory_{args.mode}_x.csv")
    u0_traj.to_csv(out / f"trajectory_{args.mode}_u.csv")
    plots.plot_trajectories(env_cfg, [row["trajectory"][0] for row in rows[:8]],
                            out / f"trajectories_{args.mode}.png",
                            title=f"{policy.mode} on {args.mode} initial conditions")
    mean_imp = float(np.mean([row["improvement_pct"] for row in rows]))
    summary = {"mode": args.mode, "n": args.n,
               "mean_improvement_pct": mean_imp,
               "mean_return_policy": float(np.mean([r["return_policy"] for r in rows])),
               "mean_return_base": float(np.mean([r["return_base"] for r in rows]))}
    with open(out / f"evaluation_{args.mode}.json", "w") as fh:
        json.dump(summary, fh, indent=2)
    print(f"{args.mode}: mean improvement over base {mean_imp:.2f}% "
          f"over {args.n} rollouts ({table})")
    return 0


def _run_verify_checks(cfg) -> list:
    env_cfg = cfgmod.build_env_config(cfg)
    v = cfg["verify"]
    reports = []
    for check in v["checks"]:
        if check == "base_stability":
            reports.append(verify.check_stability(
                verify.CorridorSystem(env_cfg, None), v["n_probes"], v["T_list"],
                v["p"], v["threshold"], seed=v["seed"], name="base_stability"))
        elif check == "random_policy_stability":
            modes = ("MAD", "MA", "AD")
            sub, worst = [], 0.0
            env = corridor.CorridorEnv(env_cfg)
            for i in range(v["n_random_policies"]):
                mode = modes[i % len(modes)]
                nominal = env.nominal("exact") if mode in MODEL_BASED_MODES else None
                pol = make_policy(mode, 8, 4, np.random.default_rng([v["seed"], 10 + i]),
                                  nominal=nominal)
                rep = verify.check_stability(
                    verify.CorridorSystem(env_cfg, pol), 1, v["T_list"], v["p"],
                    v["threshold"], seed=v["seed"] + i, name=f"random_{mode}_{i}")
                sub.append(rep["pass"])
                worst = max(worst, rep["metrics"]["tail_ratio_pair"][str(max(v["T_list"]))])
            reports.append({
                "name": "random_policy_stability", "pass": all(sub),
                "metrics": {"policies": len(sub), "worst_tail_ratio": worst},
                "thresholds": {"tail_ratio": v["threshold"]}, "seeds": [v["seed"]]})
        elif check == "inclusion":
            theta1 = stable_ops.lru_init(np.random.default_rng([v["seed"], 77]),
                                         8, 8, 4, prefix="m.")
            reports.append(verify.check_inclusion(
                theta1, v["inclusion_rollouts"], v["inclusion_tol"], cfg=env_cfg,
                seed=v["seed"]))
        elif check == "robustness_truth_table":
            reports.append(verify.robustness_truth_table())
        elif check == "mismatch_residual":
            reports.append(verify.check_mismatch_residual(env_cfg, None, seed=v["seed"]))
        elif check == "unstable_negative_control":
            rep = verify.check_stability(
                verify.ToySystem(a=0.9, policy_gain=2.0), 1, [50, 100], v["p"],
                v["threshold"], seed=v["seed"], name="unstable_toy")
            reports.append({
                "name": "unstable_negative_control",
                "pass": not rep["pass"],  # the harness must flag this one
                "metrics": rep["metrics"], "thresholds": rep["thresholds"],
                "seeds": rep["seeds"]})
        else:
            raise ConfigError(f"unknown verify check {check!r}")
    if v["inject_unstable"]:
        reports.append(verify.check_stability(
            verify.ToySystem(a=0.9, policy_gain=2.0), 1, [50, 100], v["p"],
            v["threshold"], seed=v["seed"], name="injected_unstable_policy"))
    return reports


def cmd_verify(args) -> int:
    cfg = _prepare(args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    reports = _run_verify_checks(cfg)
    for rep in reports:
        with open(out / f"verify_{rep['name']}.json", "w") as fh:
            json.dump(rep, fh, indent=2)
    summary = {"checks": len(reports),
               "passed": sum(1 for r in reports if r["pass"]),
               "all_pass": all(r["pass"] for r in reports)}
    with open(out / "verify_summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)
    for rep in reports:
        print(f"[{'PASS' if rep['pass'] else 'FAIL'}] {rep['name']}")
    return 0 if summary["all_pass"] else 1


def cmd_export(args) -> int:
    cfg = _prepare(args)
    env_cfg = cfgmod.build_env_config(cfg)
    env = corridor.CorridorEnv(env_cfg)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    policy = _load_policy_for(cfg, env, args.checkpoint)
    if args.what == "params":
        by_component = {}
        for name in policy.params.names():
            group = name.split(".")[0]
            by_component[group] = by_component.get(group, 0) + policy.params.get(name).size
        payload = {"mode": policy.mode, "total": policy.param_count,
                   "by_component": by_component}
        with open(out / "params.json", "w") as fh:
            json.dump(payload, fh, indent=2)
        print(f"{policy.mode}: {policy.param_count} trainable parameters")
    elif args.what == "trajectories":
        T = cfg["eval"]["horizon"]
        x, u = corridor.evaluation_rollout(env_cfg, policy, "validation", args.seed, T)
        x.to_csv(out / "trajectory_x.csv")
        u.to_csv(out / "trajectory_u.csv")
        plots.plot_trajectories(env_cfg, [x], out / "trajectory.png")
        print(f"exported a horizon-{T} rollout to {out}")
    elif args.what == "gains":
        rng = np.random.default_rng(args.seed)
        report = {"caveat": "probe-based lower bounds, not true gains"}
        if "m.nu" in policy.params.names():
            probes = stable_ops.gain_probes(rng, policy.n, 200, 20, 4)
            report["gamma_m_lower_bound"] = stable_ops.estimate_gain(
                lambda w: stable_ops.run_lru(policy.params.arrays(), "m.", w), probes)
        probes = stable_ops.gain_probes(rng, 8, 400, 20, 4, scale=0.3)
        system = verify.CorridorSystem(env_cfg, None)
        report["gamma_f_lower_bound"] = stable_ops.estimate_gain(
            lambda w: system(w, w.horizon)[0], probes)
        with open(out / "gains.json", "w") as fh:
            json.dump(report, fh, indent=2)
        print(json.dumps(report))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="madrl",
        description="Stability-constrained RL: stable-operator policies on the "
                    "two-vehicle corridor benchmark")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="YAML config file (defaults apply otherwise)")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override any config key, e.g. ddpg.episodes=50")
        p.add_argument("--out-dir", default="out", help="output directory")

    p_train = sub.add_parser("train", help="run the trainer for the configured mode")
    common(p_train)
    p_train.add_argument("--seed", type=int, help="training seed")
    p_train.add_argument("--mode", choices=["MAD", "MA", "AD", "DF", "MLP"])
    p_train.add_argument("--episodes", type=int)
    p_train.set_defaults(fn=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint against the base controller")
    common(p_eval)
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--mode", choices=["validation", "generalization"],
                        default="validation")
    p_eval.add_argument("--n", type=int, default=20)
    p_eval.add_argument("--seed", type=int, default=5000)
    p_eval.set_defaults(fn=cmd_eval)

    p_verify = sub.add_parser("verify", help="run the stability/inclusion check suite")
    common(p_verify)
    p_verify.set_defaults(fn=cmd_verify)

    p_export = sub.add_parser("export", help="export trajectories, parameters, or gains")
    common(p_export)
    p_export.add_argument("--checkpoint", required=True)
    p_export.add_argument("--what", choices=["trajectories", "params", "gains"],
                          required=True)
    p_export.add_argument("--seed", type=int, default=0)
    p_export.set_defaults(fn=cmd_export)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
