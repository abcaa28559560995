"""Experiment orchestration: schemes and baselines, sweeps, export, plots.

Scheme 1 is the plain alternating loop (convex transmit stage + hybrid
learner).  Scheme 2 meta-trains across placement tasks and then adapts on a
held-out task; each baseline is Scheme 2 with exactly one documented
modification (linear harvester / pinned splits / frozen random phases /
passive surface).
"""

from __future__ import annotations

import copy
import csv
import hashlib
import json
import time
from dataclasses import asdict, dataclass

import numpy as np

from . import config as cfgmod
from .agents import mds_train
from .convex import ConvexStage, CvxpyBackend
from .env import SwiptEnv, TaskSpec
from .meta import meta_adapt, meta_train, sample_tasks
from .rng import named_stream

__all__ = [
    "ResultRecord",
    "CSV_COLUMNS",
    "scheme_modifications",
    "run_scheme",
    "sweep",
    "export",
    "import_records",
    "records_digest",
    "plot",
]

CSV_COLUMNS = ["scheme", "sweep_param", "sweep_value", "seed", "episode",
               "mean_reward", "mean_ee_bits_per_hz_per_watt",
               "violation_rate", "wallclock_s"]


@dataclass
class ResultRecord:
    scheme: str
    sweep_param: str
    sweep_value: float
    seed: int
    episode: int
    mean_reward: float
    mean_ee_bits_per_hz_per_watt: float
    violation_rate: float
    wallclock_s: float


def scheme_modifications(scheme: str) -> dict:
    """The single documented config delta of each baseline relative to the
    meta-trained scheme (empty for the two proposed schemes)."""
    deltas = {
        "scheme1": {},
        "scheme2": {},
        "baseline1": {"eh.model": "linear"},
        "baseline2": {"solver.rho_fixed": 0.5},
        "baseline3": {"env.phase_override": "seeded-random"},
        "baseline4": {"system.ris_mode": "passive"},
    }
    if scheme not in deltas:
        raise ValueError(f"unknown scheme {scheme!r}")
    return deltas[scheme]


def _apply_scheme(cfg: dict, scheme: str) -> dict:
    out = copy.deepcopy(cfg)
    out["scheme"] = scheme
    if scheme == "baseline1":
        out["eh"]["model"] = "linear"
    elif scheme == "baseline2":
        out["solver"]["rho_fixed"] = 0.5
    elif scheme == "baseline4":
        out["system"]["ris_mode"] = "passive"
    return out


def _make_env_factory(cfg: dict, seed: int):
    params = cfgmod.build_system_params(cfg)
    eh = cfgmod.build_eh(cfg)
    geometry = cfgmod.build_geometry(cfg)
    fading = cfgmod.build_fading(cfg, seed=seed)
    scheme = cfg["scheme"]
    env_kwargs = {"episode_steps": cfg["env"]["episode_steps"]}
    if scheme == "baseline3":
        env_kwargs["phase_override_seed"] = seed
    if scheme == "baseline4":
        env_kwargs["gain_override"] = 1.0

    def factory(task: TaskSpec) -> SwiptEnv:
        return SwiptEnv(params, eh, geometry, fading, **env_kwargs)

    solver = ConvexStage(params, eh, epsilon=cfg["solver"]["epsilon"],
                         k_max=cfg["solver"]["k_max"],
                         backend=CvxpyBackend(),
                         fix_rho=cfg["solver"]["rho_fixed"])
    return factory, solver


def _records_from_log(log, cfg: dict, seed: int, wallclock: float,
                      sweep_param: str = "", sweep_value: float = float("nan")):
    records = []
    for r in log.records:
        records.append(ResultRecord(
            scheme=cfg["scheme"], sweep_param=sweep_param,
            sweep_value=sweep_value, seed=seed, episode=r["episode"],
            mean_reward=r["mean_reward"],
            mean_ee_bits_per_hz_per_watt=r["mean_ee"],
            violation_rate=r["violation_rate"], wallclock_s=wallclock))
    return records


def run_scheme(cfg: dict, sweep_param: str = "",
               sweep_value: float = float("nan")) -> list[ResultRecord]:
    """Run the configured scheme for every seed; returns the record stream.

    Scheme 1 logs its training episodes; Scheme 2 and the baselines log the
    adaptation phase that follows meta-training.
    """
    cfgmod.validate_config(cfg)
    scheme = cfg["scheme"]
    cfg = _apply_scheme(cfg, scheme)
    records = []
    for seed in cfg["seeds"]:
        started = time.perf_counter()
        factory, solver = _make_env_factory(cfg, seed)
        hyper = cfgmod.build_agent_hyper(cfg)
        if scheme == "scheme1":
            task = sample_tasks(1, named_stream(seed, "bench-task"))[0]
            env = factory(task)
            _, log = mds_train(env, solver, task, cfg["episodes"], hyper,
                               seed=seed)
        else:
            meta_hyper = cfgmod.build_meta_hyper(cfg)
            tasks = sample_tasks(cfg["meta"]["z_tasks"],
                                 named_stream(seed, "bench-meta-tasks"))
            ckpt, _ = meta_train(tasks, factory, solver,
                                 cfg["meta"]["episodes_train"], hyper,
                                 meta_hyper, seed=seed)
            held_out = sample_tasks(1, named_stream(seed, "bench-heldout"))[0]
            _, log = meta_adapt(ckpt, held_out, factory, solver,
                                cfg["meta"]["episodes_adapt"], meta_hyper,
                                seed=seed)
        wallclock = time.perf_counter() - started
        records.extend(_records_from_log(log, cfg, seed, wallclock,
                                         sweep_param, sweep_value))
    return records


def sweep(cfg: dict, parameter: str | None = None,
          values: list | None = None) -> list[ResultRecord]:
    """One full run per value of the swept config path, records tagged."""
    parameter = parameter if parameter is not None else cfg["sweep"]["parameter"]
    values = values if values is not None else cfg["sweep"]["values"]
    if not values:
        return []
    if parameter is None:
        raise cfgmod.ConfigError("sweep.parameter is not set")
    records = []
    for value in values:
        point = copy.deepcopy(cfg)
        cfgmod.set_by_path(point, parameter, value)
        cfgmod.validate_config(point)
        records.extend(run_scheme(point, sweep_param=parameter,
                                  sweep_value=float(value)))
    return records


# --------------------------------------------------------------------- export

def export(records: list[ResultRecord], path, format: str = "csv") -> None:
    """Byte-stable CSV (documented column order) or JSON."""
    if format == "csv":
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_COLUMNS)
            for r in records:
                row = asdict(r)
                writer.writerow([repr(row[c]) if isinstance(row[c], float)
                                 else row[c] for c in CSV_COLUMNS])
    elif format == "json":
        with open(path, "w") as fh:
            json.dump([asdict(r) for r in records], fh, indent=1,
                      sort_keys=True)
    else:
        raise ValueError(f"unknown export format {format!r}")


def _coerce(name: str, raw: str):
    if name in ("seed", "episode"):
        return int(raw)
    if name in ("scheme", "sweep_param"):
        return raw
    return float(raw)


def import_records(path, format: str = "csv") -> list[ResultRecord]:
    if format == "json":
        with open(path) as fh:
            return [ResultRecord(**row) for row in json.load(fh)]
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(ResultRecord(**{c: _coerce(c, row[c])
                                       for c in CSV_COLUMNS}))
    return out


def records_digest(records: list[ResultRecord]) -> str:
    """Content hash for reproducibility checks; wallclock is excluded since
    timing varies across identical runs."""
    payload = []
    for r in records:
        row = asdict(r)
        row.pop("wallclock_s")
        payload.append([row[k] for k in sorted(row)])
    blob = json.dumps(payload).encode()
    return hashlib.sha256(blob).hexdigest()


# ---------------------------------------------------------------------- plots

def plot(records: list[ResultRecord], figure_id: str, path) -> None:
    """Render one of the report figures as a raster image."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if not records:
        raise ValueError("no records to plot")
    schemes = sorted({r.scheme for r in records})
    fig, ax = plt.subplots(figsize=(6.0, 4.0), dpi=130)
    if figure_id == "reward_vs_episode":
        for scheme in schemes:
            sub = [r for r in records if r.scheme == scheme]
            episodes = sorted({r.episode for r in sub})
            means = [np.mean([r.mean_reward for r in sub if r.episode == e])
                     for e in episodes]
            ax.plot(episodes, means, label=scheme)
        ax.set_xlabel("episode")
        ax.set_ylabel("average reward")
    elif figure_id == "ee_vs_sweep":
        for scheme in schemes:
            sub = [r for r in records if r.scheme == scheme]
            values = sorted({r.sweep_value for r in sub})
            means = []
            for v in values:
                at_v = [r for r in sub if r.sweep_value == v]
                last = max(r.episode for r in at_v)
                tail = [r.mean_ee_bits_per_hz_per_watt for r in at_v
                        if r.episode >= 0.9 * last]
                means.append(np.mean(tail))
            ax.plot(values, means, marker="o", label=scheme)
        param = next((r.sweep_param for r in records if r.sweep_param), "value")
        ax.set_xlabel(param)
        ax.set_ylabel("average EE (bits/s/Hz/W)")
    else:
        raise ValueError(f"unknown figure id {figure_id!r}")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
