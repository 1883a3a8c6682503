"""Experiment runner: config files, seed fan-out, CSV curves and summaries.

Config files are flat ``key=value`` lines with dotted namespaces, e.g.::

    env=cartpole
    agents=ddopg,reinforce
    seeds=404,931,159
    budget.max_steps=100000
    agent.ddopg.temperature=0.1
    agent.reinforce.step_size=0.03

Blank lines and ``#`` comments are ignored. Command-line flags override
file values.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

import numpy as np

from . import __version__
from .agents import DdopgConfig, LearningCurve, ReinforceConfig, ddopg_run, reinforce_run
from .envs import ENVIRONMENTS, make_env

PAPER_SEEDS = (404, 931, 159, 380, 858, 708, 16, 448, 136, 989)
AGENTS = {"ddopg": (DdopgConfig, ddopg_run), "reinforce": (ReinforceConfig, reinforce_run)}
CSV_HEADER = ("iteration", "steps", "return", "seconds")

# each sweep is a list of DD-OPG overrides; one output folder per entry
ABLATIONS = {
    "history": tuple({"n_max": n} for n in (5, 20, 50)),
    "lengthscale": tuple({"log_var": v} for v in (1.0, 2.0, 3.0, 4.0)),
    "temperature": tuple({"temperature": t} for t in (0.01, 0.1, 0.5, 2.0)),
    # full optimisation against a single Adam step, for every history size
    "inner-steps": tuple({"inner_steps": k, "n_max": n} for k in (1, 200) for n in (5, 20, 50)),
}


def setting_label(overrides: dict[str, Any]) -> str:
    return ",".join(f"{k}={v}" for k, v in overrides.items())


class UsageError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    env: str = "cartpole"
    agents: tuple[str, ...] = ("ddopg", "reinforce")
    seeds: tuple[int, ...] = PAPER_SEEDS
    out: str = "runs"
    overrides: dict[str, dict[str, str]] = field(default_factory=dict)
    max_steps: int | None = 100_000
    workers: int = 1
    record_time: bool = True
    grid_points: int = 101

    def __post_init__(self):
        if self.env not in ENVIRONMENTS:
            raise UsageError(f"unknown environment {self.env!r}")
        for name in self.agents:
            if name not in AGENTS:
                raise UsageError(f"unknown agent {name!r}")
        if not self.seeds:
            raise UsageError("seed list is empty")

    def agent_config(self, name: str, extra: dict[str, Any] | None = None):
        cls, _ = AGENTS[name]
        values: dict[str, Any] = {}
        if self.max_steps is not None:
            values["max_steps"] = self.max_steps
            values["max_iters"] = 10 ** 9
        for key, raw in self.overrides.get(name, {}).items():
            values[key] = _coerce(cls, key, raw)
        values.update(extra or {})
        return cls(**values)


def _coerce(cls, key: str, raw: str):
    fields = {f.name: f for f in dataclasses.fields(cls)}
    if key not in fields:
        raise UsageError(f"{cls.__name__} has no field {key!r}")
    default = fields[key].default
    if isinstance(raw, str):
        if key == "hidden":
            return tuple(int(v) for v in raw.split(",") if v)
        if raw.lower() == "none":
            return None
        if isinstance(default, bool):
            return raw.lower() in ("1", "true", "yes")
        if isinstance(default, int) or (default is None and key in ("max_steps",)):
            return int(float(raw))
        if isinstance(default, float):
            return float(raw)
    return raw


def parse_config_text(text: str) -> dict[str, str]:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"line {lineno}: expected key=value")
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return values


def build_config(values: dict[str, str]) -> ExperimentConfig:
    kwargs: dict[str, Any] = {}
    overrides: dict[str, dict[str, str]] = {}
    for key, value in values.items():
        if key.startswith("agent."):
            parts = key.split(".")
            if len(parts) != 3:
                raise UsageError(f"agent keys look like agent.<name>.<field>, got {key!r}")
            overrides.setdefault(parts[1], {})[parts[2]] = value
        elif key == "env":
            kwargs["env"] = value
        elif key == "agents":
            kwargs["agents"] = tuple(v.strip() for v in value.split(",") if v.strip())
        elif key == "seeds":
            kwargs["seeds"] = tuple(int(v) for v in value.split(",") if v.strip())
        elif key == "out":
            kwargs["out"] = value
        elif key == "budget.max_steps":
            kwargs["max_steps"] = None if value.lower() == "none" else int(float(value))
        elif key == "workers":
            kwargs["workers"] = int(value)
        elif key == "record_time":
            kwargs["record_time"] = value.lower() in ("1", "true", "yes")
        elif key == "summary.grid_points":
            kwargs["grid_points"] = int(value)
        else:
            raise UsageError(f"unknown config key {key!r}")
    for name in overrides:
        if name not in AGENTS:
            raise UsageError(f"unknown agent {name!r} in overrides")
    kwargs["overrides"] = overrides
    return ExperimentConfig(**kwargs)


# -- running ---------------------------------------------------------------------


def _run_one(job) -> LearningCurve:
    env_name, agent, agent_cfg, seed, record_time = job
    _, run = AGENTS[agent]
    return run(make_env(env_name), agent_cfg, seed, record_time=record_time)


def _run_jobs(jobs: list, workers: int) -> list[LearningCurve]:
    if workers <= 1 or len(jobs) == 1:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_one, jobs))


def format_curve(curve: LearningCurve) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for it, steps, ret, sec in zip(curve.iteration, curve.steps, curve.returns, curve.seconds):
        writer.writerow((it, steps, repr(float(ret)), f"{sec:.6f}"))
    return buf.getvalue()


def read_curve(path: str | Path) -> LearningCurve:
    curve = LearningCurve()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        if tuple(next(reader)) != CSV_HEADER:
            raise ValueError(f"{path}: unexpected CSV header")
        for row in reader:
            curve.append(int(row[0]), int(row[1]), float(row[2]), float(row[3]))
    return curve


def summarize(curves: dict[str, list[LearningCurve]], grid_points: int = 101) -> str:
    """Mean and std of return per agent on a shared step grid (linear interpolation)."""
    last = max(c.steps[-1] for cs in curves.values() for c in cs)
    grid = np.linspace(0.0, float(last), grid_points)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("agent", "steps", "mean", "std", "runs"))
    for agent, cs in curves.items():
        vals = np.array([np.interp(grid, c.steps, c.returns) for c in cs])
        for s, m, sd in zip(grid, vals.mean(axis=0), vals.std(axis=0)):
            writer.writerow((agent, repr(float(s)), repr(float(m)), repr(float(sd)), len(cs)))
    return buf.getvalue()


def _manifest(lines: Iterable[tuple[str, Any]]) -> str:
    return "".join(f"{k}={v}\n" for k, v in lines)


def _config_lines(cfg: ExperimentConfig, agent_cfgs: dict[str, Any]):
    yield "version", __version__
    yield "env", cfg.env
    yield "agents", ",".join(cfg.agents)
    yield "seeds", ",".join(str(s) for s in cfg.seeds)
    yield "budget.max_steps", cfg.max_steps
    yield "record_time", cfg.record_time
    for name, acfg in agent_cfgs.items():
        for f in dataclasses.fields(acfg):
            value = getattr(acfg, f.name)
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            yield f"agent.{name}.{f.name}", value


def run_benchmark(cfg: ExperimentConfig) -> dict[str, list[LearningCurve]]:
    """One curve CSV per (agent, seed), a summary CSV and a manifest under ``cfg.out``."""
    out = Path(cfg.out)
    (out / "curves").mkdir(parents=True, exist_ok=True)
    agent_cfgs = {a: cfg.agent_config(a) for a in cfg.agents}
    jobs = [(cfg.env, a, agent_cfgs[a], s, cfg.record_time) for a in cfg.agents for s in cfg.seeds]
    results = _run_jobs(jobs, cfg.workers)
    curves: dict[str, list[LearningCurve]] = {a: [] for a in cfg.agents}
    for (_, agent, _, seed, _), curve in zip(jobs, results):
        (out / "curves" / f"{agent}_seed{seed}.csv").write_text(format_curve(curve))
        curves[agent].append(curve)
    (out / "summary.csv").write_text(summarize(curves, cfg.grid_points))
    (out / "manifest.txt").write_text(_manifest(_config_lines(cfg, agent_cfgs)))
    return curves


def run_ablation(which: str, cfg: ExperimentConfig,
                 settings: Iterable[dict[str, Any]] | None = None) -> dict[str, list[LearningCurve]]:
    """Sweep DD-OPG hyperparameters over an ablation grid; curves per setting and seed.

    ``settings`` replaces the sweep's default grid (a list of override dicts).
    """
    if which not in ABLATIONS:
        raise UsageError(f"unknown sweep {which!r}; choose from {sorted(ABLATIONS)}")
    settings = tuple(ABLATIONS[which] if settings is None else settings)
    out = Path(cfg.out) / which
    agent_cfgs = {setting_label(o): cfg.agent_config("ddopg", o) for o in settings}
    jobs = [(cfg.env, "ddopg", acfg, s, cfg.record_time) for acfg in agent_cfgs.values() for s in cfg.seeds]
    results = iter(_run_jobs(jobs, cfg.workers))
    curves: dict[str, list[LearningCurve]] = {}
    for label, acfg in agent_cfgs.items():
        folder = out / label
        folder.mkdir(parents=True, exist_ok=True)
        curves[label] = []
        for seed in cfg.seeds:
            curve = next(results)
            (folder / f"ddopg_seed{seed}.csv").write_text(format_curve(curve))
            curves[label].append(curve)
        (folder / "manifest.txt").write_text(_manifest(_config_lines(cfg, {"ddopg": acfg})))
    (out / "summary.csv").write_text(summarize(curves, cfg.grid_points))
    return curves


# -- command line ------------------------------------------------------------------


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--env")
    p.add_argument("--seeds", help="comma-separated seed list")
    p.add_argument("--out")
    p.add_argument("--max-steps", type=int, help="environment-step budget per run")
    p.add_argument("--workers", type=int)
    p.add_argument("--no-timing", action="store_true", help="write 0 in the seconds column")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="extra config entry, e.g. agent.ddopg.n_max=20")


def _resolve(args, defaults: dict[str, str]) -> ExperimentConfig:
    values = dict(defaults)
    if args.config:
        values.update(parse_config_text(Path(args.config).read_text()))
    for item in args.set:
        values.update(parse_config_text(item))
    flags = {"env": args.env, "seeds": args.seeds, "out": args.out,
             "budget.max_steps": args.max_steps, "workers": args.workers,
             "agents": getattr(args, "agents", None)}
    for key, value in flags.items():
        if value is not None:
            values[key] = str(value)
    if args.no_timing:
        values["record_time"] = "false"
    return build_config(values)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="ddopg", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    bench = sub.add_parser("benchmark", help="learning curves for several agents and seeds")
    _common(bench)
    bench.add_argument("--agents", help="comma-separated agents (ddopg, reinforce)")
    abl = sub.add_parser("ablation", help="DD-OPG hyperparameter sweep on cartpole")
    _common(abl)
    abl.add_argument("--sweep", required=True, help=f"one of {', '.join(ABLATIONS)}")
    sub.add_parser("selftest", help="run the built-in oracle and finite-difference checks")

    args = parser.parse_args(argv)
    if args.command == "selftest":
        from .selftest import run_selftest
        return 0 if run_selftest() else 1
    try:
        if args.command == "benchmark":
            cfg = _resolve(args, {})
            curves = run_benchmark(cfg)
        else:
            cfg = _resolve(args, {"env": "cartpole", "agents": "ddopg",
                                  "seeds": ",".join(str(s) for s in PAPER_SEEDS[:3])})
            curves = run_ablation(args.sweep, cfg)
    except UsageError as exc:
        parser.error(str(exc))
    for label, cs in curves.items():
        finals = [c.returns[-1] for c in cs]
        print(f"{label}: final return mean {np.mean(finals):.2f} over {len(cs)} runs")
    return 0


if __name__ == "__main__":
    sys.exit(main())
