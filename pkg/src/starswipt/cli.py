"""Command-line entry point.

Subcommands: ``validate-config``, ``simulate`` (one-shot transmit-stage solve
and metric report), ``train`` (run the configured scheme), ``adapt``
(adaptation from a saved checkpoint), ``sweep``, and ``plot``.

Exit codes: 0 ok, 2 config error, 3 infeasible, 4 training diverged.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_DIVERGED = 4


def _add_config_args(parser):
    parser.add_argument("-c", "--config", required=True,
                        help="YAML experiment config")
    parser.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="PATH=VALUE",
                        help="override a config key by dotted path")


def _load(args):
    from . import config as cfgmod

    cfg = cfgmod.load_config(args.config)
    if args.overrides:
        cfg = cfgmod.apply_overrides(cfg, args.overrides)
    return cfg


def _cmd_validate(args) -> int:
    _load(args)
    print("config ok")
    return EXIT_OK


def _cmd_simulate(args) -> int:
    """Build one channel realization and solve the transmit stage once."""
    import numpy as np

    from . import config as cfgmod
    from .bench import _make_env_factory
    from .meta import sample_tasks
    from .model import check_constraints, link_metrics
    from .rng import named_stream

    cfg = _load(args)
    seed = cfg["seeds"][0]
    factory, solver = _make_env_factory(cfg, seed)
    task = sample_tasks(1, named_stream(seed, "bench-task"))[0]
    env = factory(task)
    ch = env.channels(task)
    from .model import neutral_ris_config
    ris = env._apply_overrides(neutral_ris_config(env.params))
    outcome = solver.solve(ch, ris)
    if outcome.status == "infeasible":
        print("transmit stage infeasible for this configuration")
        report = check_constraints(ch, ris, *env._default_transmit(ch),
                                   env.params, env.eh)
        violated = report.violated()
        if violated:
            print(f"first violated constraint at the reference point: C{violated[0]}")
        return EXIT_INFEASIBLE
    metrics = link_metrics(ch, ris, outcome.bf, outcome.ps, env.params, env.eh)
    print(f"solver status: {outcome.status} after {outcome.iterations} iterations")
    print(f"ratio parameter: {outcome.mu_star:.6g}")
    print(f"sum rate: {metrics.rate:.6g} bits/s/Hz")
    print(f"total power: {metrics.power:.6g} W")
    print(f"energy efficiency: {metrics.ee:.6g} bits/s/Hz/W")
    print(f"surface output power: {metrics.p_out:.6g} W")
    report = check_constraints(ch, ris, outcome.bf, outcome.ps, env.params, env.eh)
    print(f"constraint violations: {report.violation_count}")
    return EXIT_OK


def _cmd_train(args) -> int:
    from .bench import export, records_digest, run_scheme

    cfg = _load(args)
    out_dir = Path(cfg["output_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    records = run_scheme(cfg)
    csv_path = out_dir / f"{cfg['scheme']}_records.csv"
    export(records, csv_path, "csv")
    print(f"wrote {len(records)} records to {csv_path}")
    print(f"records digest: {records_digest(records)}")
    return EXIT_OK


def _cmd_adapt(args) -> int:
    from .bench import _make_env_factory, _records_from_log, export
    from .meta import load_checkpoint, meta_adapt, sample_tasks
    from . import config as cfgmod
    from .rng import named_stream

    cfg = _load(args)
    seed = cfg["seeds"][0]
    factory, solver = _make_env_factory(cfg, seed)
    checkpoint = load_checkpoint(args.checkpoint)
    task = sample_tasks(1, named_stream(seed, "bench-heldout"))[0]
    _, log = meta_adapt(checkpoint, task, factory, solver,
                        cfg["meta"]["episodes_adapt"],
                        cfgmod.build_meta_hyper(cfg), seed=seed)
    out_dir = Path(cfg["output_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    records = _records_from_log(log, cfg, seed, 0.0)
    export(records, out_dir / "adapt_records.csv", "csv")
    print(f"wrote {len(records)} records to {out_dir / 'adapt_records.csv'}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    from .bench import export, records_digest, sweep

    cfg = _load(args)
    records = sweep(cfg)
    if not records:
        print("empty sweep value list; nothing to run")
        return EXIT_OK
    out_dir = Path(cfg["output_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "sweep_records.csv"
    export(records, csv_path, "csv")
    print(f"wrote {len(records)} records to {csv_path}")
    print(f"records digest: {records_digest(records)}")
    return EXIT_OK


def _cmd_plot(args) -> int:
    from .bench import import_records, plot

    records = import_records(args.records)
    plot(records, args.figure, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="starswipt",
        description="energy-efficiency toolkit for an amplifying dual-sided "
                    "surface aided SWIPT downlink")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate-config", help="check a config file")
    _add_config_args(p)
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("simulate", help="one-shot transmit-stage solve")
    _add_config_args(p)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("train", help="run the configured scheme")
    _add_config_args(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("adapt", help="adapt from a meta-trained checkpoint")
    _add_config_args(p)
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=_cmd_adapt)

    p = sub.add_parser("sweep", help="run the configured parameter sweep")
    _add_config_args(p)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("plot", help="render a figure from exported records")
    p.add_argument("--records", required=True, help="records CSV")
    p.add_argument("--figure", required=True,
                   choices=["reward_vs_episode", "ee_vs_sweep"])
    p.add_argument("--out", required=True, help="output image path")
    p.set_defaults(func=_cmd_plot)

    args = parser.parse_args(argv)
    from . import config as cfgmod
    from .agents import TrainingDivergedError
    from .convex import RecoveryFailedError

    try:
        return args.func(args)
    except cfgmod.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingDivergedError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except RecoveryFailedError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
