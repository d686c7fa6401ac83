"""Command-line experiment runner.

    glauber-vlasov validate <config.json>
    glauber-vlasov run <config.json> --out <dir> [--threads N] [--seed S]
    glauber-vlasov plot <dir>

``run`` exits 0 iff every asserted bound passes, 1 if any bound fails and 2
on configuration or usage errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import platform
import sys
import time
from pathlib import Path

import matplotlib
import numpy as np
import scipy

from . import __version__
from .config import ConfigError, ExperimentConfig, load_config, validate_config
from .experiments import BOUND_COLUMNS, ExperimentResult, Table, run
from .plotting import emit_plot_data

__all__ = ["main", "run_experiment", "validate_config", "emit_plot_data", "ExperimentError"]

log = logging.getLogger("glauber_vlasov")


class ExperimentError(RuntimeError):
    """A module error raised while running a named experiment."""


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def provenance(cfg: ExperimentConfig) -> dict:
    return {
        "config": cfg.to_dict(),
        "seed": cfg.simulation.seed,
        "threads": cfg.simulation.processes,
        "code_version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "matplotlib": matplotlib.__version__,
    }


def run_experiment(cfg: ExperimentConfig, out_dir, parts=None) -> ExperimentResult:
    """Run ``cfg.experiment`` and write its artifacts into ``out_dir``.

    Files: ``bounds.csv`` (one row per asserted bound), ``summary.json``,
    ``provenance.json``, ``config.json`` (the fully defaulted config) and one
    CSV per result table.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        result = run(cfg, parts)
    except Exception as exc:
        raise ExperimentError(f"experiment {cfg.experiment!r} ({cfg.name}) failed: {exc}") from exc

    bounds = Table(BOUND_COLUMNS, [c.csv_row(cfg.experiment) for c in result.checks])
    bounds.write_csv(out / "bounds.csv")
    for name, table in result.tables.items():
        table.write_csv(out / f"{name}.csv")
    summary = {
        "experiment": cfg.experiment,
        "name": cfg.name,
        "passed": result.passed,
        "n_bounds": len(result.checks),
        "n_failed": len(result.failed()),
        "predicates": cfg.predicates,
        "warnings": list(cfg.warnings),
        "bounds": [c.summary_entry() for c in result.checks],
        "info": _jsonable(result.info),
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    (out / "provenance.json").write_text(json.dumps(provenance(cfg), indent=2) + "\n")
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2) + "\n")
    return result


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="glauber-vlasov", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)
    v = sub.add_parser("validate", help="check a config and print it with all defaults filled in")
    v.add_argument("config", type=Path)
    r = sub.add_parser("run", help="run the experiment named in a config")
    r.add_argument("config", type=Path)
    r.add_argument("--out", type=Path, required=True, help="artifact directory")
    r.add_argument("--threads", type=int, default=None, help="worker processes for particle simulations")
    r.add_argument("--seed", type=int, default=None, help="override simulation.seed")
    r.add_argument("--no-plots", action="store_true", help="skip plot data and figures")
    p = sub.add_parser("plot", help="(re)build plot data and figures for an artifact directory")
    p.add_argument("dir", type=Path)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        if args.command == "plot":
            for path in emit_plot_data(args.dir):
                print(path)
            return 0
        cfg = load_config(args.config)
        if args.command == "validate":
            for w in cfg.warnings:
                print(f"warning: {w} (operators remain evaluable)", file=sys.stderr)
            print(json.dumps(cfg.to_dict(), indent=2))
            return 0
        if args.threads is not None:
            if args.threads < 1:
                raise ConfigError("--threads must be positive")
            cfg = cfg.with_processes(args.threads)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        for w in cfg.warnings:
            log.warning("%s (run permitted)", w)
        start = time.perf_counter()
        result = run_experiment(cfg, args.out)
        log.info("%s finished in %.1f s", cfg.experiment, time.perf_counter() - start)
        if not args.no_plots:
            emit_plot_data(args.out)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ExperimentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for c in result.checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name} [{c.norm_name}] measured={c.measured:.6g} "
              f"{c.relation} bound={c.bound:.6g} tol={c.tolerance:.3g}")
    print(f"{cfg.experiment}: {len(result.checks) - len(result.failed())}/{len(result.checks)} bounds pass")
    return 0 if result.passed else 1


if __name__ == "__main__":
    sys.exit(main())
