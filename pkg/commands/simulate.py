"""simulate 子命令：長時間模擬並輸出 series.csv"""
import logging
from pathlib import Path

from diagnostics import fit_series, theorem_report
from errors import FitError
from parser import load_config, to_scenario
from services.writers import emit_loglog_svg, write_json, write_series_csv, write_workbook
from solver import prepare_scenario, run as run_scenario

logger = logging.getLogger(__name__)


def register(subparsers):
    """註冊子命令"""
    p = subparsers.add_parser("simulate", help="evolve a scenario and write series.csv")
    p.add_argument("--config", required=True, help="run configuration (TOML)")
    p.add_argument("--out", default=None, help="output directory (default: output.directory)")
    p.add_argument("--xlsx", action="store_true", help="also write a styled Excel workbook")
    p.set_defaults(handler=run)


def run(args) -> int:
    cfg = load_config(args.config)
    spec = to_scenario(cfg)
    out = Path(args.out or cfg.output.directory)

    profile, corr = prepare_scenario(spec)
    series = run_scenario(spec, profile, corr)
    write_series_csv(out / "series.csv", series)

    residual_l1 = [r["l1"] for r in series.residuals]
    write_json(out / "run.json", {
        "closure": spec.closure_name,
        "wave_strength": spec.wave_strength,
        "x0": series.x0,
        "complete": series.complete,
        "samples": len(series.records),
        "max_abs_u": series.max_abs_u,
        "max_abs_mass_residual": max((abs(r.mass_residual) for r in series.records), default=0.0),
        "max_residual_l1": max(residual_l1, default=0.0),
    })

    report = None
    if cfg.output.xlsx or args.xlsx or cfg.output.svg:
        end = spec.end_time
        window = tuple(cfg.rates.window) if cfg.rates.window else (end / 10.0, end)
        try:
            fits = fit_series(series, window, cfg.rates.targets == "improved")
            report = theorem_report(fits, cfg.rates.targets == "improved")
        except FitError as exc:
            logger.warning("rate fit skipped: %s", exc)
            fits = None
        if cfg.output.svg:
            emit_loglog_svg(out / "series.svg", series, fits=fits)
    if cfg.output.xlsx or args.xlsx:
        write_workbook(out / "series.xlsx", series, report)

    state = "complete" if series.complete else "INCOMPLETE (wall-clock budget)"
    print(f"simulate: {len(series.records)} samples, x0={series.x0:.6g}, {state}")
    return 0
