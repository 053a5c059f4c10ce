"""rates 子命令：由 series.csv 擬合衰減指數"""
import logging
from pathlib import Path

from config import OUTPUT_DIR
from diagnostics import fit_series, theorem_report
from errors import ConfigError
from services.writers import emit_loglog_svg, read_series_csv, write_rates_csv, write_workbook

logger = logging.getLogger(__name__)


def register(subparsers):
    """註冊子命令"""
    p = subparsers.add_parser("rates", help="fit decay exponents from series.csv")
    p.add_argument("--series", required=True, help="series.csv written by simulate")
    p.add_argument("--targets", choices=("improved", "base"), default="improved")
    p.add_argument("--out", default=OUTPUT_DIR, help="output directory")
    p.add_argument("--window", nargs=2, type=float, metavar=("T_LO", "T_HI"), default=None)
    p.add_argument("--no-svg", action="store_true", help="skip rates.svg")
    p.add_argument("--xlsx", action="store_true", help="also write rates.xlsx")
    p.set_defaults(handler=run)


def run(args) -> int:
    series = read_series_csv(args.series)
    if not series.records:
        raise ConfigError([f"{args.series} holds no samples"])
    end = float(series.times[-1])
    window = tuple(args.window) if args.window else (end / 10.0, end)
    if not 0 <= window[0] < window[1]:
        raise ConfigError(["window must satisfy 0 <= T_LO < T_HI"])

    improved = args.targets == "improved"
    fits = fit_series(series, window, improved)
    report = theorem_report(fits, improved)

    out = Path(args.out)
    write_rates_csv(out / "rates.csv", fits)
    if not args.no_svg:
        emit_loglog_svg(out / "rates.svg", series, fits=fits)
    if args.xlsx:
        write_workbook(out / "rates.xlsx", series, report)

    print(f"rates ({args.targets}, window [{window[0]:g}, {window[1]:g}])")
    for row in report["rows"]:
        flag = ("PASS" if row["pass"] else "FAIL") if row["gated"] else "info"
        print(f"  {row['quantity']:<8} {row['exponent']:+.4f}  target {row['target']:+.4f} ±{row['tolerance']:.2f} ({row['mode']})  {flag}")
    print("overall:", "PASS" if report["passed"] else "FAIL")
    return 0 if report["passed"] else 1
