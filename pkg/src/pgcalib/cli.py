"""Command-line harness: train policies, run bias analyses, build reports.

Subcommands:
    train   optimize a policy on a synthetic world and dump run artifacts
    bias    Monte-Carlo advantage curves and sigma estimates for fixed
            policies
    report  combine run directories into one comparison table

Every flag has a config-file equivalent (key=value lines, '#' comments);
explicit flags override the file. Exit codes: 0 success, 1 runtime
failure, 2 usage error.
"""

import argparse
import json
import os
import sys

from .advantage import Algo, EstimatorSpec
from .bias import (curves_to_csv, discretize_beta, empirical_advantage_curve,
                   sigma_estimates, sigmas_to_csv)
from .env import RewardRule, gen_categories, gen_dataset
from .metrics import reliability_to_csv
from .policy import save_checkpoint
from .trainer import (TrainConfig, category_pairs_to_csv, run,
                      train_log_to_csv)

_ALGOS = {a.value: a for a in Algo}
_REWARDS = {r.value: r for r in RewardRule}


class UsageError(Exception):
    pass


def _default_threads() -> int:
    try:
        return max(1, int(os.environ.get("PGCALIB_THREADS", "1")))
    except ValueError:
        return 1


TRAIN_DEFAULTS = {
    "algo": "grpo", "group_size": 2, "prompts_per_rollout": 512,
    "updates_per_rollout": 1, "clip_eps": None, "policy_lr": 6.0,
    "value_lr": 1e-1, "lr_schedule": "linear", "steps": 30000,
    "reward": "loglik", "grpo_eps": 1e-4,
    "eval_every": 200, "readout": "argmax", "k": 20, "dataset_size": 10000,
    "eval_size": 100000, "world_seed": 22, "eval_seed": None, "seed": 1,
    "out": "run", "threads": None, "table1": False,
}

BIAS_DEFAULTS = {
    "policy": ["beta:1,1", "beta:5.7,3", "beta:50,1"],
    "estimator": ["grpo", "grpo-nostd"], "reward": "loglik", "p_true": 0.7,
    "g": 1000, "samples": 100000, "min_count": 1000, "sigma_groups": 2000,
    "seed": 0, "out": "bias", "threads": None,
}

REPORT_DEFAULTS = {"out": ".", "threads": None, "seed": 0}

_BOOL_KEYS = {"table1"}
_LIST_KEYS = {"policy", "estimator"}
_OPTIONAL_FLOAT_KEYS = {"clip_eps"}
_OPTIONAL_INT_KEYS = {"eval_seed", "threads"}


def _coerce(key: str, raw: str, defaults: dict):
    if key in _BOOL_KEYS:
        return raw.strip().lower() in ("1", "true", "yes", "on")
    if key in _LIST_KEYS:
        return [s.strip() for s in raw.split() if s.strip()]
    if raw.strip().lower() in ("none", ""):
        return None
    if key in _OPTIONAL_FLOAT_KEYS:
        return float(raw)
    if key in _OPTIONAL_INT_KEYS:
        return int(raw)
    ref = defaults.get(key)
    if isinstance(ref, bool):
        return raw.strip().lower() in ("1", "true", "yes", "on")
    if isinstance(ref, int):
        return int(raw)
    if isinstance(ref, float):
        return float(raw)
    return raw


def _load_config_file(path: str, defaults: dict) -> dict:
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key=value")
            key, raw = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in defaults:
                raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
            out[key] = _coerce(key, raw, defaults)
    return out


def _effective(opts: argparse.Namespace, defaults: dict) -> dict:
    eff = dict(defaults)
    config_path = getattr(opts, "config", None)
    if config_path:
        eff.update(_load_config_file(config_path, defaults))
    for key, value in vars(opts).items():
        if key in ("config", "command", "runs"):
            continue
        eff[key] = value
    if eff.get("threads") is None:
        eff["threads"] = _default_threads()
    return eff


def _add_common(sp, defaults):
    sp.add_argument("--seed", type=int, help="training / analysis seed")
    sp.add_argument("--out", help="output directory")
    sp.add_argument("--config", help="key=value config file")
    sp.add_argument("--threads", type=int, help="worker threads")
    sp.set_defaults(**{})


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pgcalib",
                                description=__doc__.splitlines()[0])
    p.set_defaults(command=None)
    sub = p.add_subparsers(dest="command")
    sub.required = True
    for name in ("train", "bias", "report"):
        sp = sub.add_parser(name, argument_default=argparse.SUPPRESS)
        sp.set_defaults(command=name)
        if name == "train":
            sp.add_argument("--algo", choices=sorted(_ALGOS))
            sp.add_argument("--group-size", dest="group_size", type=int)
            sp.add_argument("--prompts-per-rollout",
                            dest="prompts_per_rollout", type=int)
            sp.add_argument("--updates-per-rollout",
                            dest="updates_per_rollout", type=int)
            sp.add_argument("--clip-eps", dest="clip_eps", type=float)
            sp.add_argument("--policy-lr", dest="policy_lr", type=float)
            sp.add_argument("--value-lr", dest="value_lr", type=float)
            sp.add_argument("--lr-schedule", dest="lr_schedule",
                            choices=("constant", "linear"))
            sp.add_argument("--steps", type=int)
            sp.add_argument("--reward", choices=sorted(_REWARDS))
            sp.add_argument("--grpo-eps", dest="grpo_eps", type=float)
            sp.add_argument("--eval-every", dest="eval_every", type=int)
            sp.add_argument("--readout", choices=("mean", "argmax"))
            sp.add_argument("--k", type=int, help="number of categories")
            sp.add_argument("--dataset-size", dest="dataset_size", type=int)
            sp.add_argument("--eval-size", dest="eval_size", type=int)
            sp.add_argument("--world-seed", dest="world_seed", type=int)
            sp.add_argument("--eval-seed", dest="eval_seed", type=int)
            sp.add_argument("--table1", action="store_true",
                            help="run all four algorithms on a shared world")
        elif name == "bias":
            sp.add_argument("--policy", action="append",
                            help="beta:a,b (repeatable)")
            sp.add_argument("--estimator", action="append",
                            choices=("grpo", "grpo-nostd"))
            sp.add_argument("--reward", choices=sorted(_REWARDS))
            sp.add_argument("--p-true", dest="p_true", type=float)
            sp.add_argument("--g", type=int)
            sp.add_argument("--samples", type=int)
            sp.add_argument("--min-count", dest="min_count", type=int)
            sp.add_argument("--sigma-groups", dest="sigma_groups", type=int)
        else:
            sp.add_argument("runs", nargs="*", help="run directories")
        _add_common(sp, None)
    return p


def _train_config(eff: dict) -> TrainConfig:
    algo = EstimatorSpec(kind=_ALGOS[eff["algo"]], eps=eff["grpo_eps"])
    return TrainConfig(
        algo=algo, group_size=eff["group_size"],
        prompts_per_rollout=eff["prompts_per_rollout"],
        updates_per_rollout=eff["updates_per_rollout"],
        clip_eps=eff["clip_eps"], policy_lr=eff["policy_lr"],
        value_lr=eff["value_lr"], lr_schedule=eff["lr_schedule"],
        steps=eff["steps"], seed=eff["seed"],
        reward=_REWARDS[eff["reward"]], eval_every=eff["eval_every"],
        readout=eff["readout"])


def _write_run(out_dir: str, eff: dict, result) -> None:
    os.makedirs(out_dir, exist_ok=True)
    rep = result.eval_report
    trep = result.train_report
    metrics = {
        "config": {k: v for k, v in sorted(eff.items())},
        "eval": {"ece": rep.ece, "auroc": rep.auroc,
                 "accuracy": rep.accuracy},
        "train": {"ece": trep.ece, "auroc": trep.auroc,
                  "accuracy": trep.accuracy},
    }
    with open(os.path.join(out_dir, "metrics.json"), "w") as fh:
        json.dump(metrics, fh, indent=2, sort_keys=True)
    train_log_to_csv(result.log, os.path.join(out_dir, "training_log.csv"))
    reliability_to_csv(rep.reliability,
                       os.path.join(out_dir, "reliability.csv"))
    category_pairs_to_csv(result.category_pairs,
                          os.path.join(out_dir, "categories.csv"))
    save_checkpoint(os.path.join(out_dir, "policy.json"), result.policy,
                    result.values)


def cmd_train(opts: argparse.Namespace) -> int:
    eff = _effective(opts, TRAIN_DEFAULTS)
    if eff["eval_seed"] is None:
        eff["eval_seed"] = eff["world_seed"] + 1
    try:
        table = gen_categories(eff["k"], eff["world_seed"])
        train_ds = gen_dataset(table, eff["dataset_size"], eff["world_seed"],
                               split="train")
        eval_ds = gen_dataset(table, eff["eval_size"], eff["eval_seed"],
                              split="eval")
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    algos = sorted(_ALGOS) if eff["table1"] else [eff["algo"]]
    for algo in algos:
        run_eff = dict(eff, algo=algo)
        try:
            config = _train_config(run_eff)
            config.validate()
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        result = run(config, table, train_ds, eval_ds)
        out_dir = (os.path.join(eff["out"], algo) if eff["table1"]
                   else eff["out"])
        _write_run(out_dir, run_eff, result)
    if eff["table1"]:
        dirs = [os.path.join(eff["out"], a) for a in algos]
        _write_report(dirs, eff["out"])
    return 0


def _parse_policy_spec(spec: str):
    try:
        family, params = spec.split(":", 1)
        if family.strip().lower() != "beta":
            raise ValueError
        a, b = (float(s) for s in params.split(","))
        if a <= 0 or b <= 0:
            raise ValueError
    except ValueError:
        raise UsageError(f"malformed --policy spec {spec!r}; "
                         f"expected beta:a,b with positive a, b") from None
    return a, b


def cmd_bias(opts: argparse.Namespace) -> int:
    eff = _effective(opts, BIAS_DEFAULTS)
    rule = _REWARDS[eff["reward"]]
    specs = [_parse_policy_spec(s) for s in eff["policy"]]
    estimators = [EstimatorSpec(kind=_ALGOS[e]) for e in eff["estimator"]]
    os.makedirs(eff["out"], exist_ok=True)
    curves = []
    sigmas = []
    for a, b in specs:
        policy = discretize_beta(a, b)
        for est in estimators:
            curves.append(empirical_advantage_curve(
                policy, eff["p_true"], rule, est, g=eff["g"],
                n_samples=eff["samples"], min_count=eff["min_count"],
                seed=eff["seed"], threads=eff["threads"]))
        sigmas.append((policy.label, rule.value,
                       sigma_estimates(policy, rule, g=eff["g"],
                                       n_groups=eff["sigma_groups"],
                                       seed=eff["seed"])))
    curves_to_csv(curves, os.path.join(eff["out"], "advantage_curves.csv"))
    sigmas_to_csv(sigmas, os.path.join(eff["out"], "sigmas.csv"))
    return 0


def _write_report(dirs: list[str], out_dir: str) -> None:
    rows = []
    missing = []
    for d in dirs:
        path = os.path.join(d, "metrics.json")
        if not os.path.exists(path):
            missing.append(path)
            continue
        with open(path) as fh:
            m = json.load(fh)
        cfg = m["config"]
        rows.append({
            "run": d, "algorithm": cfg["algo"],
            "updates_per_rollout": cfg["updates_per_rollout"],
            "clip_eps": cfg["clip_eps"],
            "ece": m["eval"]["ece"], "auroc": m["eval"]["auroc"],
            "accuracy": m["eval"]["accuracy"]})
    if missing:
        raise FileNotFoundError("missing run artifacts: " + ", ".join(missing))
    os.makedirs(out_dir, exist_ok=True)
    header = ["algorithm", "updates_per_rollout", "clip_eps", "ece", "auroc",
              "accuracy"]
    with open(os.path.join(out_dir, "report.csv"), "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for r in rows:
            cells = [str(r["algorithm"]), str(r["updates_per_rollout"]),
                     "" if r["clip_eps"] is None else f"{r['clip_eps']:.17g}",
                     f"{r['ece']:.17g}", f"{r['auroc']:.17g}",
                     f"{r['accuracy']:.17g}"]
            fh.write(",".join(cells) + "\n")
    lines = [f"{'algorithm':<12} {'upd':>4} {'clip':>6} {'ece':>7} "
             f"{'auroc':>7} {'acc':>7}"]
    for r in rows:
        clip = "-" if r["clip_eps"] is None else f"{r['clip_eps']:g}"
        lines.append(f"{r['algorithm']:<12} {r['updates_per_rollout']:>4} "
                     f"{clip:>6} {r['ece']:>7.3f} {r['auroc']:>7.3f} "
                     f"{r['accuracy']:>7.3f}")
    text = "\n".join(lines) + "\n"
    with open(os.path.join(out_dir, "report.txt"), "w") as fh:
        fh.write(text)
    sys.stdout.write(text)


def cmd_report(opts: argparse.Namespace) -> int:
    eff = _effective(opts, REPORT_DEFAULTS)
    dirs = list(getattr(opts, "runs", []) or [])
    if not dirs:
        raise UsageError("report needs at least one run directory")
    _write_report(dirs, eff["out"])
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        opts = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if opts.command == "train":
            return cmd_train(opts)
        if opts.command == "bias":
            return cmd_bias(opts)
        return cmd_report(opts)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
