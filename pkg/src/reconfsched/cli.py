"""Command-line entry point: ``reconfsched {run,sweep,decompose,match,presets}``.

Exit status: 0 success, 1 bad configuration or input, 2 runtime failure,
3 a sweep finished with failed rows.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .bvn import ScalingError, birkhoff_decompose, line_deviation, sinkhorn_scale, top_q
from .config import ConfigError, ExperimentConfig, SweepPoint, admissible, expand, load_config, preset_names, preset_text
from .core import ContractError
from .engine import run
from .matching import max_weight_assignment
from .traffic import read_matrix_csv

log = logging.getLogger("reconfsched")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_PARTIAL = 0, 1, 2, 3

SWEEP_COLUMNS = ["policy", "rho", "delta_r", "delta_m", "delta", "gamma", "T", "W", "seed",
                 "mean_queue_length", "duty_cycle", "reconfig_count", "drop_count", "verdict",
                 "effective_load", "wall_ms", "status", "error"]


def fmt(x) -> str:
    """Stable text form: ints as-is, floats as their shortest round-trip repr."""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return "" if x is None else str(x)


def write_rows(path: Path, columns: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(row.get(c, "")) for c in columns])


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    params = cfg.params
    if args.horizon is not None:
        warmup = args.warmup if args.warmup is not None else args.horizon // 10
        params = replace(params, horizon=args.horizon, warmup=warmup)
    elif args.warmup is not None:
        params = replace(params, warmup=args.warmup)
    if args.trace:
        params = replace(params, trace=True)
    seeds = cfg.seeds
    if args.seeds:
        seeds = tuple(int(s) for s in args.seeds.split(","))
    return replace(cfg, params=replace(params, seed=seeds[0]), seeds=seeds)


def _out_dir(cfg: ExperimentConfig, args) -> Path:
    out = Path(args.out or cfg.output or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


# --- run ----------------------------------------------------------------------------


def cmd_run(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    params, seed = cfg.params, cfg.seed
    lam = cfg.traffic.matrix(params.n, seed)
    ok, rho = admissible(lam)
    if not ok:
        print(f"error: inadmissible traffic, load(lambda) = {rho:.6g} >= 1", file=sys.stderr)
        return EXIT_CONFIG
    metrics, trace = run(params, cfg.policy, lam)
    out = _out_dir(cfg, args)
    row = {"name": cfg.name, "policy": cfg.policy.name, "seed": seed, **metrics.row()}
    write_rows(out / "metrics.csv", list(row), [row])
    write_rows(out / "samples.csv", ["t", "total_queue"],
               ({"t": int(t), "total_queue": int(v)} for t, v in metrics.samples))
    if trace is not None:
        trace.write_csv(out / "trace.csv")
    print(f"{cfg.policy.name} seed={seed} load={metrics.effective_load:.4g} "
          f"mean_queue_length={metrics.mean_queue_length:.6g} duty_cycle={metrics.duty_cycle:.4f} "
          f"reconfigs={metrics.reconfig_count} drops={metrics.drop_count} verdict={metrics.verdict}")
    if cfg.policy.kind == "adaptive" and metrics.verdict == "stable" and metrics.duty_cycle <= metrics.effective_load:
        print(f"note: duty cycle {metrics.duty_cycle:.4f} does not exceed load {metrics.effective_load:.4f}",
              file=sys.stderr)
    return EXIT_OK


# --- sweep --------------------------------------------------------------------------


def run_point(point: SweepPoint, timing: bool = False) -> dict:
    row = dict(point.labels)
    try:
        lam = point.rates()
        ok, rho = admissible(lam)
        row["effective_load"] = rho
        if not ok:
            row.update(status="skipped", error=f"load(lambda) = {rho:.6g} >= 1")
            log.warning("skipping %s: load %.6g is not admissible", point.labels, rho)
            return row
        start = time.perf_counter()
        m, _ = run(replace(point.params, trace=False), point.policy, lam)
        wall = (time.perf_counter() - start) * 1e3
        row.update(mean_queue_length=m.mean_queue_length, duty_cycle=m.duty_cycle,
                   reconfig_count=m.reconfig_count, drop_count=m.drop_count, verdict=m.verdict,
                   status="ok", wall_ms=round(wall, 3) if timing else "")
    except Exception as exc:  # recorded per row; the sweep carries on
        row.update(status="error", error=f"{type(exc).__name__}: {exc}")
    return row


def _run_indexed(job):
    point, timing = job
    return point.index, run_point(point, timing)


def sweep_rows(cfg: ExperimentConfig, jobs: int = 1, timing: bool = False) -> list[dict]:
    points = expand(cfg)
    work = [(p, timing) for p in points]
    if jobs <= 1 or len(work) <= 1:
        results = [_run_indexed(w) for w in work]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_indexed, work))
    results.sort(key=lambda r: r[0])
    return [row for _, row in results]


def cmd_sweep(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    if not cfg.sweep:
        raise ConfigError("a sweep needs at least one axis under 'sweep'", args.config)
    jobs = args.jobs or os.cpu_count() or 1
    rows = sweep_rows(cfg, jobs, args.timing)
    out = _out_dir(cfg, args)
    write_rows(out / "sweep.csv", SWEEP_COLUMNS, rows)
    failed = [r for r in rows if r["status"] == "error"]
    skipped = sum(r["status"] == "skipped" for r in rows)
    print(f"{len(rows)} rows written to {out / 'sweep.csv'} ({len(failed)} failed, {skipped} skipped)")
    for r in failed:
        print(f"failed: {r['policy']} seed={r['seed']}: {r['error']}", file=sys.stderr)
    return EXIT_PARTIAL if failed else EXIT_OK


# --- matrices -----------------------------------------------------------------------


def _perm_text(perm) -> str:
    return " ".join(str(int(j) + 1) for j in perm)


def cmd_decompose(args) -> int:
    M = read_matrix_csv(args.matrix)
    scaled = sinkhorn_scale(M)
    d = birkhoff_decompose(scaled)
    recon = float(np.abs(d.reconstruct() - scaled.b).max())
    if args.q is not None:
        d = top_q(d, args.q)
    print(f"terms: {len(d)}")
    print(f"line-sum residual: {line_deviation(scaled.b):.3e}")
    print(f"reconstruction residual: {recon:.3e}")
    rows = [{"alpha": float(a), "permutation": _perm_text(p)} for a, p in zip(d.alphas, d.perms)]
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_rows(out / "decomposition.csv", ["alpha", "permutation"], rows)
    else:
        for r in rows:
            print(f"{fmt(r['alpha'])},{r['permutation']}")
    return EXIT_OK


def cmd_match(args) -> int:
    M = read_matrix_csv(args.matrix)
    if np.any(M < 0):
        raise ContractError(f"{args.matrix}: weights must be nonnegative")
    sched, total = max_weight_assignment(M)
    print(_perm_text(sched.perm()))
    print(fmt(int(total)) if float(total).is_integer() else fmt(total))
    return EXIT_OK


# --- presets ------------------------------------------------------------------------


def cmd_presets(args) -> int:
    if args.action == "list":
        import json

        for name in preset_names():
            desc = json.loads(preset_text(name)).get("description", "")
            print(f"{name:16s} {desc}")
        return EXIT_OK
    sys.stdout.write(preset_text(args.name))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="reconfsched", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    def experiment(p):
        p.add_argument("--config", required=True, help="config file or bundled preset name")
        p.add_argument("--out", help="output directory (default: config 'output' or cwd)")
        p.add_argument("--seeds", help="comma-separated seeds overriding the config")
        p.add_argument("--horizon", type=int, help="override horizon (warmup becomes horizon/10)")
        p.add_argument("--warmup", type=int, help="override warmup")
        p.add_argument("--trace", action="store_true", help="write the per-slot event trace")

    p = sub.add_parser("run", help="one simulation (first seed)")
    experiment(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="Cartesian product of sweep axes and seeds")
    experiment(p)
    p.add_argument("--jobs", type=int, default=None, help="parallel worker processes (default: cores)")
    p.add_argument("--timing", action="store_true", help="fill wall_ms (makes output nondeterministic)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("decompose", help="scale a matrix and print its BvN decomposition")
    p.add_argument("matrix", help="square nonnegative CSV matrix")
    p.add_argument("-q", type=int, default=None, help="keep only the q largest terms")
    p.add_argument("--out", help="write decomposition.csv here instead of stdout")
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("match", help="maximum-weight assignment of a CSV grid")
    p.add_argument("matrix")
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("presets", help="bundled experiment configs")
    ps = p.add_subparsers(dest="action", required=True)
    ps.add_parser("list")
    show = ps.add_parser("show")
    show.add_argument("name")
    p.set_defaults(func=cmd_presets)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ContractError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ScalingError, OverflowError, RuntimeError, OSError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
