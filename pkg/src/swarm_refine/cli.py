"""Command-line experiment runner.

Subcommands::

    swarm-refine single  [--seed S] [--runs K] [--snapshot-epoch E] ...
    swarm-refine cohort  [--seed S] [--runs K] ...
    swarm-refine sweep   [--seed S] [--runs K] [--fractions 0,0.1,...] ...

Effective configuration = built-in defaults, then ``--config FILE``, then
per-field flags. ``--seed S --runs K`` expands to seeds ``S .. S+K-1``.
Independent runs go to a process pool capped by ``SWARM_REFINE_THREADS``;
results are gathered in seed order, so output does not depend on it.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from .sim.config import ConfigError, SwarmConfig, config_keys, flat_items, format_value, load_config, parse_value
from .sim.metrics import EpochMetrics, aggregate_runs
from .sim.world import simulate

THREADS_ENV = "SWARM_REFINE_THREADS"
DEFAULT_FRACTIONS = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5)
SINGLE_HEADER = "epoch,mean_local_error_m,mean_refined_error_m,p10_refined,p90_refined,n_flagged"
SWEEP_HEADER = "fraction,trust,final_epoch_mean_error_m,p10,p90"
MAX_SEED = 2**64 - 1

# keys with a dedicated shared flag instead of a generated one
_SHARED = {"seed": "--seed", "n_epochs": "--epochs"}


class UsageError(Exception):
    pass


# runs


def _run_job(job: tuple[SwarmConfig, Optional[int]]):
    config, snapshot_epoch = job
    res = simulate(config, snapshot_epoch=snapshot_epoch)
    return res.metrics, res.snapshot


def thread_count() -> int:
    raw = os.environ.get(THREADS_ENV, "").strip()
    if not raw:
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise UsageError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return n


def run_jobs(jobs: Sequence[tuple[SwarmConfig, Optional[int]]], workers: Optional[int] = None) -> list:
    """Run jobs, returning results in input order whatever the worker count."""
    workers = min(workers or thread_count(), len(jobs))
    if workers <= 1:
        return [_run_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_job, jobs, chunksize=max(1, len(jobs) // (4 * workers))))


def seed_list(seed: int, runs: int) -> list[int]:
    if runs < 1:
        raise ConfigError({"runs": "must be >= 1"})
    if seed + runs - 1 > MAX_SEED:
        raise ConfigError({"seed": f"seed + runs - 1 exceeds {MAX_SEED}"})
    return list(range(seed, seed + runs))


# formatting


def _f(x: float) -> str:
    return f"{x:.6f}"


def config_comment(config: SwarmConfig, extra: dict[str, Any]) -> str:
    lines = [f"# {k} = {v}" for k, v in extra.items()]
    lines += [f"# {k} = {format_value(v)}" for k, v in flat_items(config).items()]
    return "\n".join(line.rstrip() for line in lines) + "\n"


def epoch_rows(runs: Sequence[Sequence[EpochMetrics]]) -> list[dict[str, Any]]:
    """Per-epoch aggregate over seeds (mean, 10th/90th percentile of refined)."""
    rows = []
    for t in range(len(runs[0])):
        local = np.array([r[t].mean_local_error_honest for r in runs])
        refined = np.array([r[t].mean_refined_error_honest for r in runs])
        flagged = np.array([r[t].flagged_count for r in runs], dtype=float)
        rows.append({
            "epoch": runs[0][t].epoch,
            "mean_local_error_m": float(local.mean()),
            "mean_refined_error_m": float(refined.mean()),
            "p10_refined": float(np.percentile(refined, 10)),
            "p90_refined": float(np.percentile(refined, 90)),
            "n_flagged": float(flagged.mean()),
        })
    return rows


def epoch_csv(rows: list[dict[str, Any]]) -> str:
    out = [SINGLE_HEADER]
    for r in rows:
        out.append(",".join([
            str(r["epoch"]),
            _f(r["mean_local_error_m"]),
            _f(r["mean_refined_error_m"]),
            _f(r["p10_refined"]),
            _f(r["p90_refined"]),
            f"{r['n_flagged']:.6g}",
        ]))
    return "\n".join(out) + "\n"


def sweep_csv(rows: list[dict[str, Any]]) -> str:
    out = [SWEEP_HEADER]
    for r in rows:
        out.append(",".join([
            f"{r['fraction']:.2f}",
            r["trust"],
            _f(r["final_epoch_mean_error_m"]),
            _f(r["p10"]),
            _f(r["p90"]),
        ]))
    return "\n".join(out) + "\n"


def _json(doc: Any) -> str:
    return json.dumps(doc, indent=2) + "\n"


# modes


def run_single(config: SwarmConfig, seeds: list[int], fmt: str, snapshot_epoch: Optional[int]):
    if snapshot_epoch is not None and not 0 <= snapshot_epoch < config.n_epochs:
        raise ConfigError({"snapshot_epoch": f"must lie in [0, {config.n_epochs})"})
    # the snapshot comes from the first seed only
    jobs = [(dataclasses.replace(config, seed=s), snapshot_epoch if i == 0 else None) for i, s in enumerate(seeds)]
    results = run_jobs(jobs)
    runs = [m for m, _ in results]
    rows = epoch_rows(runs) if config.n_epochs else []
    if fmt == "csv":
        text = epoch_csv(rows)
    else:
        text = {"epochs": rows}
    snapshot = results[0][1]
    return text, (None if snapshot is None else _json({"seed": seeds[0], **snapshot.to_json()}))


def run_cohort(config: SwarmConfig, seeds: list[int], fmt: str):
    runs = [m for m, _ in run_jobs([(dataclasses.replace(config, seed=s), None) for s in seeds])]
    if fmt == "csv":
        return epoch_csv(epoch_rows(runs) if config.n_epochs else [])
    summary = aggregate_runs(runs, config.cold_start_epochs)
    summary["seeds"] = seeds
    return summary


def run_sweep(config: SwarmConfig, seeds: list[int], fmt: str, fractions: Sequence[float], modes: Sequence[bool]):
    if config.n_epochs < 1:
        raise ConfigError({"n_epochs": "sweep needs at least one epoch"})
    cells = [(f, tr) for f in fractions for tr in modes]
    jobs = []
    for f, tr in cells:
        cfg = dataclasses.replace(
            config, malicious_fraction=f, trust=dataclasses.replace(config.trust, enabled=tr)
        )
        jobs += [(dataclasses.replace(cfg, seed=s), None) for s in seeds]
    results = run_jobs(jobs)
    rows = []
    for k, (f, tr) in enumerate(cells):
        final = np.array([m[-1].mean_refined_error_honest for m, _ in results[k * len(seeds):(k + 1) * len(seeds)]])
        rows.append({
            "fraction": f,
            "trust": "on" if tr else "off",
            "final_epoch_mean_error_m": float(final.mean()),
            "p10": float(np.percentile(final, 10)),
            "p90": float(np.percentile(final, 90)),
        })
    return sweep_csv(rows) if fmt == "csv" else {"rows": rows}


# argument parsing


def _flag_names(key: str) -> list[str]:
    names = [f"--{key}"]
    if "_" in key:
        names.append(f"--{key.replace('_', '-')}")
    return names


def _parse_fractions(text: str) -> list[float]:
    try:
        fr = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ConfigError({"fractions": f"not a list of numbers: {text!r}"}) from None
    if not fr:
        raise ConfigError({"fractions": "needs at least one value"})
    bad = [f for f in fr if not 0.0 <= f <= 0.5]
    if bad:
        raise ConfigError({"fractions": f"values must lie in [0, 0.5], got {bad}"})
    return fr


def build_parser() -> argparse.ArgumentParser:
    defaults = flat_items(SwarmConfig())
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("run options")
    g.add_argument("--config", metavar="PATH", help="flat key = value config file")
    g.add_argument("--seed", metavar="U64", help=f"base seed (default: {defaults['seed']})")
    g.add_argument("--runs", metavar="N", type=int, default=None, help="number of consecutive seeds")
    g.add_argument("--epochs", "--n-epochs", "--n_epochs", dest="n_epochs", metavar="N",
                   help=f"epochs per run (default: {defaults['n_epochs']})")
    g.add_argument("--out", metavar="PATH", help="output file (default: stdout)")
    g.add_argument("--format", choices=("csv", "json"), help="output format")
    g.add_argument("--no-trust", action="store_true", help="disable trust weighting")
    g.add_argument("--snapshot-epoch", metavar="N", type=int, help="single: also write a position snapshot")
    g.add_argument("--snapshot-out", metavar="PATH", help="snapshot file (default: --out with suffix .snapshot.json)")

    cfg = common.add_argument_group("config fields")
    for key, value in defaults.items():
        if key in _SHARED:
            continue
        cfg.add_argument(*_flag_names(key), dest=f"cfg_{key}", metavar="VALUE",
                         help=f"(default: {format_value(value)})")

    parser = argparse.ArgumentParser(
        prog="swarm-refine", description="Seeded multi-UAV position refinement experiments."
    )
    sub = parser.add_subparsers(dest="mode", required=True, metavar="{single,cohort,sweep}")
    sub.add_parser("single", parents=[common], help="per-epoch error table (default 1 seed)")
    sub.add_parser("cohort", parents=[common], help="cold-start cohort summary (default 100 seeds)")
    sp = sub.add_parser("sweep", parents=[common], help="malicious-fraction sweep, trust on and off (default 100 seeds)")
    sp.add_argument("--fractions", default=",".join(str(f) for f in DEFAULT_FRACTIONS),
                    help="comma-separated malicious fractions (default: %(default)s)")
    return parser


def _overrides(args: argparse.Namespace) -> dict[str, Any]:
    raw: dict[str, str] = {}
    for key in config_keys():
        if key in _SHARED:
            val = getattr(args, key, None)
        else:
            val = getattr(args, f"cfg_{key}", None)
        if val is not None:
            raw[key] = val
    out: dict[str, Any] = {}
    problems: dict[str, str] = {}
    for key, text in raw.items():
        try:
            out[key] = parse_value(key, text)
        except ValueError as exc:
            problems[key] = str(exc)
    if args.no_trust:
        out["trust"] = False
    if problems:
        raise ConfigError(problems)
    return out


def _write(path: Optional[str], text: str, stdout) -> None:
    if path is None:
        stdout.write(text)
        return
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise UsageError(f"cannot write output file {path}: {exc.strerror or exc}") from None


def execute(args: argparse.Namespace, stdout=None) -> None:
    stdout = stdout or sys.stdout
    config = load_config(args.config, _overrides(args))
    runs = args.runs if args.runs is not None else (1 if args.mode == "single" else 100)
    seeds = seed_list(config.seed, runs)
    fmt = args.format or ("json" if args.mode == "cohort" else "csv")

    header = {"mode": args.mode, "runs": runs}
    snapshot_text = None
    if args.mode == "single":
        body, snapshot_text = run_single(config, seeds, fmt, args.snapshot_epoch)
    elif args.mode == "cohort":
        body = run_cohort(config, seeds, fmt)
    else:
        fractions = _parse_fractions(args.fractions)
        modes = (False,) if args.no_trust else (True, False)
        header["fractions"] = ",".join(str(f) for f in fractions)
        body = run_sweep(config, seeds, fmt, fractions, modes)

    if fmt == "csv":
        text = config_comment(config, header) + body
    else:
        text = _json({**header, "config": flat_items(config), **body})
    if snapshot_text is not None:
        snap_path = args.snapshot_out or (str(Path(args.out).with_suffix(".snapshot.json")) if args.out else None)
        if snap_path is None:
            raise UsageError("--snapshot-epoch needs --out or --snapshot-out")
        _write(snap_path, snapshot_text, stdout)
    _write(args.out, text, stdout)


def main(argv: Optional[Sequence[str]] = None, stdout=None, stderr=None) -> int:
    stderr = stderr or sys.stderr
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        execute(args, stdout=stdout)
    except ConfigError as exc:
        print(f"swarm-refine: error: {exc} (field: {', '.join(exc.fields)})", file=stderr)
        return 2
    except (UsageError, OSError) as exc:
        print(f"swarm-refine: error: {exc}", file=stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
