"""``simulate``: run the Monte Carlo comparison and write CSV (and optionally SVG) output."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .config import SimConfig, load_config
from .errors import AcquisitionError, ConfigError, FilterError, StatisticsError
from .harness import ESTIMATORS, MseReport, run_experiment

log = logging.getLogger("bemimm")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
FULL_RUNS = 1000


def _float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from exc


def _name_list(text: str) -> tuple[str, ...]:
    names = tuple(v.strip().lower() for v in text.split(",") if v.strip())
    bad = [n for n in names if n not in ESTIMATORS]
    if bad or not names:
        raise argparse.ArgumentTypeError(
            f"unknown estimator(s) {bad or text!r}; choose from {','.join(ESTIMATORS)}")
    return names


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="simulate",
        description="MSE versus Eb/N0 of BEM Kalman channel trackers on a basis-switching channel.",
    )
    p.add_argument("--config", type=Path, help="YAML file with SimConfig fields")
    p.add_argument("--ebn0", type=_float_list, help="Eb/N0 grid in dB, e.g. 5,10,15,20,25")
    p.add_argument("--runs", type=int, help="Monte Carlo runs per grid point")
    p.add_argument("--full", action="store_true", help=f"use {FULL_RUNS} runs")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--estimators", type=_name_list, default=("imm", "concat"),
                   help="comma-separated subset of " + ",".join(ESTIMATORS))
    p.add_argument("--genie", action="store_true", help="track with the true symbols instead of decisions")
    p.add_argument("--workers", type=int, help="worker processes")
    p.add_argument("--out", type=Path, default=Path("results"), help="output directory")
    p.add_argument("--plot", action="store_true", help="also write SVG plots (needs matplotlib)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def resolve_config(args) -> SimConfig:
    cfg = load_config(args.config) if args.config else SimConfig()
    changes = {}
    if args.ebn0:
        changes["ebn0_grid_db"] = args.ebn0
    if args.full:
        changes["mc_runs"] = FULL_RUNS
    if args.runs is not None:
        changes["mc_runs"] = args.runs
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.workers is not None:
        changes["workers"] = args.workers
    return cfg.with_(**changes) if changes else cfg


def write_plots(report: MseReport, out_dir: Path) -> list[Path]:
    import matplotlib

    matplotlib.use("svg")
    import matplotlib.pyplot as plt

    paths = []
    fig, ax = plt.subplots(figsize=(5, 4))
    grid = np.asarray(report.ebn0_grid_db)
    for name in report.estimators:
        ax.semilogy(grid, report.most_significant(name), marker="o", label=name)
    ax.set_xlabel("Eb/N0 (dB)")
    ax.set_ylabel("MSE of tap 0")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    paths.append(out_dir / "mse.svg")
    fig.savefig(paths[-1])
    plt.close(fig)

    traces = {k: v for k, v in report.mode_trace.items() if k[0] == "imm"}
    if traces:
        fig, ax = plt.subplots(figsize=(5, 4))
        for (_, e), tr in sorted(traces.items()):
            ax.plot(tr[:, 0], label=f"mu1, {e:g} dB")
            ax.plot(tr[:, 1], linestyle="--", label=f"mu2, {e:g} dB")
        ax.set_xlabel("OFDM symbol index")
        ax.set_ylabel("mode probability")
        ax.set_ylim(-0.02, 1.02)
        ax.legend(fontsize="small")
        paths.append(out_dir / "mode_trace.svg")
        fig.savefig(paths[-1])
        plt.close(fig)
    return paths


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    def progress(done, total):
        log.info("run %d/%d", done, total)

    try:
        report = run_experiment(cfg, args.estimators, genie=args.genie, progress=progress)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FilterError, StatisticsError, AcquisitionError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC

    if report.runs_completed == 0:
        print("interrupted before any run finished; nothing written", file=sys.stderr)
        return 130
    mse_path, trace_path = report.write(args.out)
    print(f"wrote {mse_path} and {trace_path} ({report.runs_completed} runs)")
    if args.plot:
        for p in write_plots(report, args.out):
            print(f"wrote {p}")
    if report.interrupted:
        print(f"interrupted: partial results from {report.runs_completed} of {cfg.mc_runs} runs",
              file=sys.stderr)
        return 130
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
