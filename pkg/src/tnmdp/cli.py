"""Command-line experiment runner.

Examples
--------
  tnmdp sarl-walk --T 20 --sigma 0 --out runs/sarl
  tnmdp marl-walk --T 6 --mode joint --out runs/marl
  tnmdp plan --T 20 --alpha 0.4 --epsilon 0.2 --n-traj 30 --epochs 10
  tnmdp svd-scan --T 6 --sigma 1 --chi 1..30
  tnmdp plan --config plan.json --seed 3     # flags override the file

Every run writes plot-ready CSV files, ``summary.json`` with the headline
numbers and ``manifest.json`` (config echo, version, file hashes, timing).
Data files depend only on the config, so reruns are byte-identical.

Exit codes: 0 success, 1 invariant violation, 2 invalid config, 3 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .contraction import expected_return
from .decompose import EXACT_TOL, first_exact, svd_scan, write_scan_csv
from .fmdp import uniform_policy, validate
from .optimize import optimize_marl, optimize_sarl
from .planning import PlanConfig, plan, write_plan_csv
from .walker import (WalkerConfig, build_walker, policy_rows, sample_trajectories,
                     write_trajectories_csv)

EXPERIMENTS = ("sarl-walk", "marl-walk", "plan", "svd-scan")
DEFAULT_T = {"sarl-walk": 20, "marl-walk": 6, "plan": 20, "svd-scan": 6}

# option name -> (type, default); None default means "per experiment"
OPTIONS: dict[str, tuple[Any, Any]] = {
    "T": (int, None),
    "sigma": (float, 0.0),
    "seed": (int, 0),
    "out": (str, None),
    "n_sample": (int, 100),
    "mode": (str, "joint"),
    "alpha": (float, 0.4),
    "epsilon": (float, 0.2),
    "n_traj": (int, 30),
    "epochs": (int, 10),
    "chi": (str, "1..30"),
}
PER_COMMAND = {
    "sarl-walk": {"T", "sigma", "seed", "out", "n_sample"},
    "marl-walk": {"T", "sigma", "seed", "out", "n_sample", "mode"},
    "plan": {"T", "sigma", "seed", "out", "alpha", "epsilon", "n_traj", "epochs"},
    "svd-scan": {"T", "sigma", "seed", "out", "chi"},
}


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending option."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


class InvariantError(RuntimeError):
    pass


@dataclass
class ExperimentConfig:
    experiment: str
    walker: WalkerConfig
    output_dir: Path
    plan: PlanConfig | None = None
    n_sample: int = 100
    chi_range: list[int] | None = None
    mode: str = "joint"
    echo: dict = field(default_factory=dict)


def parse_chi(text) -> list[int]:
    """``"a..b"`` (inclusive), ``"1,5,9"``, a single int, or a JSON list."""
    if isinstance(text, (list, tuple)):
        values = [int(x) for x in text]
    else:
        text = str(text).strip()
        try:
            if ".." in text:
                a, b = text.split("..", 1)
                values = list(range(int(a), int(b) + 1))
            else:
                values = [int(x) for x in text.split(",") if x.strip()]
        except ValueError:
            raise ConfigError("chi", f"cannot parse {text!r}; use a..b or a comma list") from None
    if not values:
        raise ConfigError("chi", "empty chi range")
    if min(values) < 1:
        raise ConfigError("chi", "chi values must be >= 1")
    return values


def _merge(experiment: str, flags: dict, file_cfg: dict) -> dict:
    allowed = PER_COMMAND[experiment]
    for key in file_cfg:
        if key == "experiment":
            continue
        if key not in allowed:
            raise ConfigError(key, f"unknown option for {experiment}")
    if file_cfg.get("experiment", experiment) != experiment:
        raise ConfigError("experiment", f"config file is for {file_cfg['experiment']!r}")
    merged = {}
    for key in sorted(allowed):
        typ, default = OPTIONS[key]
        value = flags.get(key)
        if value is None:
            value = file_cfg.get(key, default)
        if value is not None and key != "chi":
            try:
                value = typ(value)
            except (TypeError, ValueError):
                raise ConfigError(key, f"expected {typ.__name__}, got {value!r}") from None
        merged[key] = value
    if merged["T"] is None:
        merged["T"] = DEFAULT_T[experiment]
    if merged["out"] is None:
        merged["out"] = str(Path("runs") / experiment)
    return merged


def build_config(experiment: str, flags: dict, file_cfg: dict | None = None) -> ExperimentConfig:
    if experiment not in EXPERIMENTS:
        raise ConfigError("experiment", f"unknown experiment {experiment!r}")
    m = _merge(experiment, flags, file_cfg or {})
    if m["T"] < 1:
        raise ConfigError("T", "must be >= 1")
    if m["sigma"] < 0:
        raise ConfigError("sigma", "must be >= 0")
    if m["seed"] < 0:
        raise ConfigError("seed", "must be >= 0")
    n_agents = 2 if experiment in ("marl-walk", "svd-scan") else 1
    walker = WalkerConfig(m["T"], m["sigma"], n_agents, m["seed"])
    cfg = ExperimentConfig(experiment, walker, Path(m["out"]), echo=m)
    if "n_sample" in m:
        if m["n_sample"] < 0:
            raise ConfigError("n_sample", "must be >= 0")
        cfg.n_sample = m["n_sample"]
    if "mode" in m:
        if m["mode"] not in ("joint", "per-agent"):
            raise ConfigError("mode", "must be 'joint' or 'per-agent'")
        cfg.mode = m["mode"]
    if experiment == "plan":
        for key in ("alpha", "epsilon"):
            if not 0.0 <= m[key] <= 1.0:
                raise ConfigError(key, "must lie in [0, 1]")
        if m["n_traj"] < 0:
            raise ConfigError("n_traj", "must be >= 0")
        if m["epochs"] < 0:
            raise ConfigError("epochs", "must be >= 0")
        cfg.plan = PlanConfig(m["alpha"], m["epsilon"], m["n_traj"], m["epochs"], m["seed"])
    if experiment == "svd-scan":
        cfg.chi_range = parse_chi(m["chi"])
    return cfg


def _check(*objs) -> None:
    for obj in objs:
        bad = validate(obj)
        if bad:
            shown = "; ".join(str(v) for v in bad[:5])
            raise InvariantError(f"{type(obj).__name__} failed validation: {shown}")


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(x) if isinstance(x, float) else x for x in row])


def _trajectory_stats(records) -> dict:
    if not records:
        return {"n": 0, "objective_fraction": None, "mean_return": None}
    returns = [r.total_return for r in records]
    return {
        "n": len(records),
        "objective_fraction": float(np.mean([r.satisfied_objective for r in records])),
        "mean_return": float(np.mean(returns)),
        "distinct_trajectories": len({repr((r.states, r.actions)) for r in records}),
    }


def _run_walk(cfg: ExperimentConfig) -> tuple[dict, list[str]]:
    w = cfg.walker
    spec, model, p0 = build_walker(w)
    if w.n_agents == 1:
        start = uniform_policy(spec)
    else:
        start = uniform_policy(spec, "joint" if cfg.mode == "joint" else "per-agent")
    _check(model, start, p0)
    before = expected_return(spec, model, start, p0)
    sample_before = sample_trajectories(spec, model, start, cfg.n_sample, 0.0, w.seed, p0)
    if w.n_agents == 1:
        policy, report = optimize_sarl(spec, model, start, p0)
    else:
        policy, report = optimize_marl(spec, model, start, p0, cfg.mode)
    _check(policy)
    after = expected_return(spec, model, policy, p0)
    sample_after = sample_trajectories(spec, model, policy, cfg.n_sample, 0.0, w.seed, p0)

    out = cfg.output_dir
    write_trajectories_csv(sample_before, out / "trajectories_before.csv")
    write_trajectories_csv(sample_after, out / "trajectories.csv")
    files = ["trajectories_before.csv", "trajectories.csv", "policy.csv"]
    if w.n_agents == 1:
        _write_csv(out / "policy.csv", ["t", "s", "p_up"], policy_rows(spec, policy))
    else:
        joint = policy.as_joint()
        up = spec.action_index(1)
        rows = []
        for t in range(spec.horizon):
            pj = joint.joint_tensor(t + 1)
            for i in range(spec.n_states):
                for j in range(spec.n_states):
                    rows.append((t, spec.state_value(i), spec.state_value(j),
                                 float(pj[up, :, i, j].sum()), float(pj[:, up, i, j].sum())))
        _write_csv(out / "policy.csv", ["t", "s1", "s2", "p_up1", "p_up2"], rows)
    if sample_after:
        states = np.array([r.states for r in sample_after], dtype=float)
        mean_state = states.mean(axis=0).tolist()
    else:
        mean_state = []
    summary = {
        "experiment": cfg.experiment,
        "e_return_before": before,
        "e_return_after": after,
        "sweep_converged": report.converged,
        "sweep_monotone": report.is_monotone(),
        "before": _trajectory_stats(sample_before),
        "after": _trajectory_stats(sample_after),
        "mean_state_per_agent": mean_state,
    }
    return summary, files


def _run_plan(cfg: ExperimentConfig) -> tuple[dict, list[str]]:
    spec, model, p0 = build_walker(cfg.walker)
    _check(model, p0)
    logs = plan(spec, model, cfg.plan, p0)
    write_plan_csv(logs, cfg.output_dir / "plan.csv")
    optimum = expected_return(spec, model, optimize_sarl(spec, model, uniform_policy(spec), p0)[0], p0)
    hit = [log.epoch for log in logs if abs(log.e_return_true - optimum) <= 1e-9]
    summary = {
        "experiment": "plan",
        "e_model_epoch0": logs[0].e_return_model,
        "e_true_epoch0": logs[0].e_return_true,
        "e_model_final": logs[-1].e_return_model,
        "e_true_final": logs[-1].e_return_true,
        "true_optimum": optimum,
        "first_epoch_at_optimum": hit[0] if hit else None,
    }
    return summary, ["plan.csv"]


def _run_scan(cfg: ExperimentConfig) -> tuple[dict, list[str]]:
    spec, model, p0 = build_walker(cfg.walker)
    _check(model, p0)
    mj = model[1]
    rows = svd_scan(mj, cfg.chi_range)
    write_scan_csv(rows, cfg.output_dir / "svd.csv")
    side = int(np.sqrt(mj.size))
    chi0 = first_exact(rows)
    alphas = [a for _, a, _ in sorted(rows)]
    summary = {
        "experiment": "svd-scan",
        "timestep": 1,
        "matrix_side": side,
        "full_elements": side * side,
        "exact_tol": EXACT_TOL,
        "first_exact_chi": chi0,
        "elements_at_first_exact": 2 * chi0 * side if chi0 else None,
        "compression_ratio": 2 * chi0 * side / side ** 2 if chi0 else None,
        "alpha_monotone": all(b <= a + EXACT_TOL for a, b in zip(alphas, alphas[1:])),
    }
    return summary, ["svd.csv"]


RUNNERS = {"sarl-walk": _run_walk, "marl-walk": _run_walk, "plan": _run_plan,
           "svd-scan": _run_scan}


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Run one experiment and write its files; returns the summary."""
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    summary, files = RUNNERS[cfg.experiment](cfg)
    elapsed = time.perf_counter() - t0
    with open(cfg.output_dir / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    manifest = {
        "experiment": cfg.experiment,
        "config": cfg.echo,
        "seed": cfg.walker.seed,
        "version": __version__,
        "numpy": np.__version__,
        "created": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "elapsed_s": elapsed,
        "files": {name: _sha256(cfg.output_dir / name) for name in files + ["summary.json"]},
    }
    with open(cfg.output_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tnmdp", description="Tensor-network MDP experiments.")
    sub = ap.add_subparsers(dest="experiment", required=True)
    helps = {
        "sarl-walk": "optimize the single walker and sample trajectories",
        "marl-walk": "optimize two coupled walkers and sample trajectory pairs",
        "plan": "model-based planning on the single walker",
        "svd-scan": "reconstruction error of the joint two-agent tensor versus chi",
    }
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=helps[name])
        p.add_argument("--T", type=int, help=f"horizon (default {DEFAULT_T[name]})")
        p.add_argument("--sigma", type=float, help="noise std, 0 = deterministic (default 0)")
        p.add_argument("--seed", type=int, help="RNG seed (default 0)")
        p.add_argument("--out", help=f"output directory (default runs/{name})")
        p.add_argument("--config", help="JSON config file; flags take precedence")
        if name in ("sarl-walk", "marl-walk"):
            p.add_argument("--n-sample", dest="n_sample", type=int,
                           help="trajectories to sample (default 100)")
        if name == "marl-walk":
            p.add_argument("--mode", choices=["joint", "per-agent"],
                           help="joint policy tensors or per-agent factors (default joint)")
        if name == "plan":
            p.add_argument("--alpha", type=float, help="learning rate (default 0.4)")
            p.add_argument("--epsilon", type=float, help="action flip probability (default 0.2)")
            p.add_argument("--n-traj", dest="n_traj", type=int,
                           help="trajectories per epoch (default 30)")
            p.add_argument("--epochs", type=int, help="planning epochs (default 10)")
        if name == "svd-scan":
            p.add_argument("--chi", help="range a..b or list a,b,c (default 1..30)")
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    flags = {k: v for k, v in vars(args).items() if k not in ("experiment", "config")}
    try:
        file_cfg = {}
        if args.config:
            with open(args.config) as fh:
                file_cfg = json.load(fh)
            if not isinstance(file_cfg, dict):
                raise ConfigError("config", "file must hold a JSON object")
        cfg = build_config(args.experiment, flags, file_cfg)
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return 2
    except json.JSONDecodeError as exc:
        print(f"invalid config: config: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return 3
    try:
        summary = run_experiment(cfg)
    except InvariantError as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 3
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
