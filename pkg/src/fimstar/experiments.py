"""Experiment orchestration: seeded runs, per-seed CSV logs, aggregation, complexity.

Every run derives three independent generators from its seed (task sampling,
network initialisation, action/minibatch sampling). Arms that share a seed
therefore see exactly the same sequence of tasks, whatever their policy.

Output layout::

    <out>/<experiment>/<series>/seed_<k>.csv
"""

from __future__ import annotations

import csv
import io
import math
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .agent import LOG_COLUMNS, make_agent, train
from .config import ScenarioConfig
from .env import FimStarEnv, layouts_for

EXPERIMENTS = ("lr_sweep", "user_sweep", "variant_compare", "power_curve")
LR_GRID = (0.99, 0.1, 0.001, 1e-5)
USER_GRID = (4, 6, 8)
PLOT_COLUMNS = ("episode", "series", "mean", "stderr")


@dataclass(frozen=True)
class Arm:
    """One curve of an experiment: a config plus the policy and RIS variant to run."""

    series: str
    config: ScenarioConfig
    policy: str
    ris_mode: str


def _lr_label(lr: float) -> str:
    return f"lr_{lr:g}"


def plan(name: str, cfg: ScenarioConfig) -> list[Arm]:
    """Arms of a named experiment, in output order."""
    mode, policy = cfg.training.ris_mode, cfg.training.policy
    if name in ("lr_sweep", "power_curve"):
        return [Arm(_lr_label(lr), cfg.replace(agent={"lr_actor": lr}), policy, mode) for lr in LR_GRID]
    if name == "user_sweep":
        arms = []
        for u in USER_GRID:
            c = cfg.replace(system={"u_t": u // 2, "u_r": u - u // 2})
            arms.append(Arm(f"users_{u}", c, policy, mode))
        return arms
    if name == "variant_compare":
        return [
            Arm("meta_sac_star", cfg, "meta_sac", "star"),
            Arm("meta_sac_d_ris", cfg, "meta_sac", "d_ris"),
            Arm("meta_sac_none", cfg, "meta_sac", "none"),
            Arm("sac_star", cfg, "sac", "star"),
            Arm("random_star", cfg, "random", "star"),
        ]
    raise ValueError(f"unknown experiment {name!r}; expected one of {EXPERIMENTS}")


def seed_streams(seed: int) -> tuple[np.random.Generator, np.random.Generator, np.random.Generator]:
    """(task, init, sampling) generators for one seed."""
    task, init, sampling = np.random.SeedSequence(seed).spawn(3)
    return np.random.default_rng(task), np.random.default_rng(init), np.random.default_rng(sampling)


def run_arm(arm: Arm, seed: int) -> list[dict]:
    """Train one arm for one seed and return its per-episode log."""
    cfg = arm.config
    env = FimStarEnv(cfg, arm.ris_mode)
    task_rng, init_rng, rng = seed_streams(seed)
    bundle = None
    if arm.policy != "random":
        bundle = make_agent(cfg, env.state_dim, env.action_dim, init_rng,
                            meta_critic=arm.policy == "meta_sac")
    return train(bundle, env, cfg.training.episodes, rng, task_rng=task_rng,
                 policy=arm.policy, gradient_steps=cfg.training.g_max)


def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def rows_to_csv(rows: list[dict], columns=LOG_COLUMNS) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row[c]) if not isinstance(row[c], str) else row[c] for c in columns])
    return buf.getvalue()


def write_atomic(path: Path, text: str) -> None:
    """Write via a temporary file in the same directory, then rename over ``path``."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _job(args) -> tuple[str, int, str]:
    arm, seed = args
    return arm.series, seed, rows_to_csv(run_arm(arm, seed))


def run_experiment(name: str, config: ScenarioConfig, seeds, out_dir, workers: int | None = None,
                   series: list[str] | None = None) -> dict[str, list[Path]]:
    """Run every (arm, seed) of an experiment and write one CSV per pair.

    ``series`` restricts the run to a subset of arms. Returns the written paths
    keyed by series name, seeds in the given order.
    """
    arms = plan(name, config)
    if series is not None:
        unknown = set(series) - {a.series for a in arms}
        if unknown:
            raise ValueError(f"{name} has no series {sorted(unknown)}")
        arms = [a for a in arms if a.series in series]
    seeds = [int(s) for s in seeds]
    if not seeds:
        raise ValueError("need at least one seed")
    root = Path(out_dir) / name
    write_atomic(root / "config.yaml", config.dump())
    jobs = [(arm, seed) for arm in arms for seed in seeds]
    workers = config.training.workers if workers is None else workers
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_job, jobs))
    else:
        results = [_job(j) for j in jobs]
    paths: dict[str, list[Path]] = {a.series: [] for a in arms}
    for label, seed, text in results:
        path = root / label / f"seed_{seed}.csv"
        write_atomic(path, text)
        paths[label].append(path)
    return paths


# ---------------------------------------------------------------- reporting

def read_log(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != LOG_COLUMNS:
            raise ValueError(f"{path}: header {header} does not match {LOG_COLUMNS}")
        data = np.array([[float(x) for x in row] for row in reader], dtype=float).reshape(-1, len(LOG_COLUMNS))
    return {c: data[:, i] for i, c in enumerate(LOG_COLUMNS)}


def final_window(path, metric: str = "ee", window: int = 50) -> float:
    values = read_log(path)[metric]
    if values.size == 0:
        raise ValueError(f"{path}: empty log")
    return float(np.mean(values[-window:]))


def emit_plot_data(paths, metric: str = "ee", out=None) -> str:
    """Long-format mean and standard error over seeds, one row per (episode, series).

    The series of a CSV is the name of its parent directory. Standard error is
    the sample standard deviation (ddof=1) over sqrt(n); zero for one seed.
    """
    paths = [Path(p) for p in paths]
    if not paths:
        raise ValueError("emit_plot_data needs at least one input file")
    if metric not in LOG_COLUMNS or metric == "episode":
        raise ValueError(f"unknown metric {metric!r}")
    groups: dict[str, list[dict]] = {}
    for p in paths:
        groups.setdefault(p.parent.name, []).append(read_log(p))
    rows = []
    for label in sorted(groups):
        logs = groups[label]
        episodes = logs[0]["episode"]
        for log in logs[1:]:
            if log["episode"].shape != episodes.shape or np.any(log["episode"] != episodes):
                raise ValueError(f"series {label!r}: seed files cover different episodes")
        stack = np.stack([log[metric] for log in logs])
        mean = stack.mean(axis=0)
        if len(logs) > 1:
            stderr = stack.std(axis=0, ddof=1) / math.sqrt(len(logs))
        else:
            stderr = np.zeros_like(mean)
        for e, m, s in zip(episodes, mean, stderr):
            rows.append({"episode": int(e), "series": label, "mean": m, "stderr": s})
    text = rows_to_csv(rows, PLOT_COLUMNS)
    if out is not None:
        write_atomic(Path(out), text)
    return text


def layer_products(widths) -> int:
    """Sum over consecutive layers of nu_l * nu_{l+1} (weights only)."""
    widths = [int(w) for w in widths]
    return sum(a * b for a, b in zip(widths[:-1], widths[1:]))


def network_widths(cfg: ScenarioConfig) -> dict[str, list[int]]:
    s_layout, a_layout = layouts_for(cfg)
    s, a = s_layout.size, a_layout.size
    ag = cfg.agent
    widths = {
        "actor": [s, *ag.actor_hidden, 2 * a],
        "critic": [s + a, *ag.critic_hidden, 1],
    }
    if ag.meta_critic:
        widths["meta_critic"] = [s + a, *ag.meta_hidden, 1]
    return widths


def complexity_report(cfg: ScenarioConfig) -> dict:
    """Per-network layer widths, weight-product sums and parameter counts."""
    s_layout, a_layout = layouts_for(cfg)
    nets = {}
    for name, widths in network_widths(cfg).items():
        products = layer_products(widths)
        nets[name] = {
            "widths": widths,
            "macs": products,
            "params": products + sum(widths[1:]),
        }
    return {
        "state_dim": s_layout.size,
        "action_dim": a_layout.size,
        "networks": nets,
        "total_macs": sum(n["macs"] for n in nets.values()),
        "total_params": sum(n["params"] for n in nets.values()),
    }
