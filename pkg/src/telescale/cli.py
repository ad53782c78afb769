"""``telescale`` command line: classify, simulate, verify, ingest, plot.

Exit codes: 0 success, 1 error, 2 no prediction (the boundary case
``alpha_R == alpha_D``).
"""
from __future__ import annotations

import argparse
import logging
import re
import sys
from pathlib import Path

from .config import ConfigError, ExperimentConfig, load_config
from .experiment import MissingInputError, regime_for, resolve_threads, run_simulation, run_verify, write_verdicts
from .ingest import MODES, FlowParseError, bucket_bytes, diagnose, parse_flows
from .svgplot import SeriesFormatError, render_files
from .tabular import write_table
from .traffic import SessionBudgetError

EXIT_OK, EXIT_ERROR, EXIT_BOUNDARY = 0, 1, 2

log = logging.getLogger("telescale")


class UsageError(Exception):
    pass


def _config(args) -> ExperimentConfig:
    if not args.config:
        raise UsageError("--config is required")
    cfg = load_config(args.config)
    return cfg.with_overrides(seed=getattr(args, "seed", None))


def _out_dir(args, cfg: ExperimentConfig | None = None) -> Path:
    out = args.out or (cfg.output if cfg else None)
    if not out:
        raise UsageError("no output directory: pass --out or set output in the config")
    return Path(out)


def cmd_classify(args) -> int:
    cfg = _config(args)
    report = regime_for(cfg)
    if report is None:
        raise ConfigError("every stream has zero intensity; nothing to classify")
    text = report.to_text()
    sys.stdout.write(text)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "regime.txt").write_text(text)
    return EXIT_OK if report.predicts else EXIT_BOUNDARY


def cmd_simulate(args) -> int:
    cfg = _config(args)
    out = _out_dir(args, cfg)
    threads = resolve_threads(args.threads, cfg.threads)
    run_simulation(cfg, out, threads)
    log.info("wrote %d horizon(s) x %d replication(s) to %s", len(cfg.T), cfg.replications, out)
    report = regime_for(cfg)
    return EXIT_BOUNDARY if report is not None and not report.predicts else EXIT_OK


def cmd_verify(args) -> int:
    cfg = _config(args)
    out = _out_dir(args, cfg)
    rows, report = run_verify(cfg, out)
    with open(out / "verdict.tsv", "w") as fh:
        write_verdicts(fh, rows, report)
    for c in rows:
        sys.stdout.write(f"{'PASS' if c.passed else 'FAIL'} T={c.T:g} {c.check}: observed {c.observed:.6g}, expected {c.expected} ({c.note})\n")
    return EXIT_BOUNDARY if report is not None and not report.predicts else EXIT_OK


def _safe(tag: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]", "_", tag)


def cmd_ingest(args) -> int:
    out = _out_dir(args)
    with open(args.input) as fh:
        records = parse_flows(fh)
    series = bucket_bytes(records, args.window, args.mode, until=args.until)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "windows.tsv", "w") as fh:
        series.write(fh)
    names = [*series.protocols, "aggregate"] if series.n_windows else []
    summary = {k: [] for k in ("series", "n", "ad_statistic", "ad_band", "hill_k_lo", "hill_k_hi", "hill_alpha", "qq_log_slope")}
    for name in names:
        totals = series.total() if name == "aggregate" else series.series(name)
        d = diagnose(name, totals, args.period)
        stem = _safe(name)
        if d.qq_normal is not None:
            with open(out / f"qq_normal_{stem}.tsv", "w") as fh:
                d.qq_normal.write(fh, series=stem)
        if d.qq_log is not None:
            with open(out / f"qq_log_{stem}.tsv", "w") as fh:
                d.qq_log.write(fh, kind="qq_log", series=stem)
        if d.hill is not None:
            with open(out / f"hill_{stem}.tsv", "w") as fh:
                d.hill.write(fh, series=stem)
        k_lo, k_hi = d.hill_region or ("-", "-")
        row = (name, d.n, d.ad.adjusted if d.ad else "-", d.ad.band if d.ad else "-", k_lo, k_hi,
               "-" if d.hill_alpha is None else d.hill_alpha, d.qq_log.slope if d.qq_log else "-")
        for key, v in zip(summary, row):
            summary[key].append(v)
        sys.stdout.write(f"{name}: windows={d.n} ad_band={row[3]} hill_alpha={row[6]}\n")
    with open(out / "diagnostics.tsv", "w") as fh:
        write_table(fh, summary, {"kind": "ingest", "window": args.window, "mode": args.mode})
    return EXIT_OK


def cmd_plot(args) -> int:
    out = _out_dir(args)
    for path in render_files(args.files, out):
        sys.stdout.write(f"{path}\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="telescale", description="Scaling limits of heavy-tailed session traffic: simulation and diagnostics.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def experiment(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--out", help="output directory (default: config output)")
        p.add_argument("--seed", type=int, help="override the config master seed")
        p.add_argument("--threads", type=int, help=f"worker processes (env TELESCALE_THREADS takes precedence)")
        p.set_defaults(func=func)
        return p

    experiment("classify", cmd_classify, "report the scenario and predicted limit law")
    experiment("simulate", cmd_simulate, "simulate centered, scaled cumulative load paths")
    experiment("verify", cmd_verify, "check simulated marginals against the predicted limit")

    p = sub.add_parser("ingest", help="bucket flow records into windows and run tail and normality diagnostics")
    p.add_argument("input", help="delimited flow file with start, duration, bytes, protocol columns")
    p.add_argument("--out", required=True)
    p.add_argument("--window", type=float, default=3600.0, help="window length in seconds")
    p.add_argument("--mode", choices=MODES, default="start-window", help="byte attribution for flows spanning windows")
    p.add_argument("--period", type=int, default=None, help="seasonal period in windows (default: linear detrend only)")
    p.add_argument("--until", type=float, default=None, help="capture end in seconds; windows from 0 up to it are kept, bytes outside are dropped")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("plot", help="render series files as SVG")
    p.add_argument("files", nargs="+")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, UsageError, FlowParseError, SeriesFormatError, MissingInputError, SessionBudgetError, OSError, ValueError) as exc:
        sys.stderr.write(f"telescale {args.command}: error: {exc}\n")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
