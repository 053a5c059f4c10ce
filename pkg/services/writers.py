"""CSV / SVG / Excel 輸出（輸出內容只由輸入決定）"""
import csv
import json
import logging
from contextlib import contextmanager
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from diagnostics import SERIES_COLUMNS, DiagnosticsSeries, NormRecord, RateFit
from diffusion_wave import WaveProfile
from errors import ConfigError

logger = logging.getLogger(__name__)

PROFILE_COLUMNS = ("xi", "phi", "dphi", "d2phi", "d3phi", "d4phi")
RATES_COLUMNS = ("quantity", "exponent", "target", "tolerance", "pass", "r_squared", "mode", "gated")
PLOT_COLUMNS = ("l2_V", "l2_Vx", "l2_Vxx", "l2_z", "l2_zx", "l2_heat")


def _fmt(value) -> str:
    """17 位有效數字"""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, str):
        return value
    return format(float(value), ".17g")


@contextmanager
def _open_for_write(path, mode: str = "w"):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        handle = open(path, mode, newline="" if "b" not in mode else None, encoding=None if "b" in mode else "utf-8")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc
    with handle:
        yield handle


def _write_rows(path, header: Sequence[str], rows: Iterable[Sequence]):
    with _open_for_write(path) as f:
        writer = csv.writer(f, lineterminator="\n")
        # 寫入標頭
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    logger.info("wrote %s", path)


def write_profile_csv(path, profile: WaveProfile):
    """剖面 xi, phi, dphi, ..., d4phi"""
    columns = (profile.xi_grid,) + profile.derivatives
    _write_rows(path, PROFILE_COLUMNS, zip(*columns))


def write_series_csv(path, series: DiagnosticsSeries):
    """範數時間序列"""
    _write_rows(path, SERIES_COLUMNS, series.rows())


def read_series_csv(path) -> DiagnosticsSeries:
    """讀回 series.csv"""
    path = Path(path)
    try:
        with open(path, newline="", encoding="utf-8") as f:
            reader = csv.DictReader(f)
            missing = [c for c in SERIES_COLUMNS if c not in (reader.fieldnames or [])]
            if missing:
                raise ConfigError([f"{path}: missing columns {missing}"])
            records = [NormRecord(**{c: float(row[c]) for c in SERIES_COLUMNS}) for row in reader]
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc.strerror}") from exc
    return DiagnosticsSeries(records=records)


def write_rates_csv(path, fits: Sequence[RateFit]):
    """擬合結果"""
    rows = [
        (fit.quantity, fit.exponent, fit.target_exponent, fit.tolerance, fit.passed, fit.r_squared, fit.mode, fit.gated)
        for fit in fits
    ]
    _write_rows(path, RATES_COLUMNS, rows)


def write_json(path, payload: dict):
    with _open_for_write(path) as f:
        f.write(json.dumps(payload, indent=2, sort_keys=True, default=_fmt))
        f.write("\n")
    logger.info("wrote %s", path)


def emit_loglog_svg(path, series: DiagnosticsSeries, columns: Sequence[str] = PLOT_COLUMNS, fits: Optional[Sequence[RateFit]] = None):
    """log-log 折線圖：範數對 1+t"""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    # 固定 SVG 內部 id
    matplotlib.rcParams["svg.hashsalt"] = "diffwave"
    fitted = {fit.quantity: fit for fit in fits or ()}

    fig, ax = plt.subplots(figsize=(7, 5))
    one_plus_t = 1.0 + series.times
    for name in columns:
        values = series.column(name)
        mask = values > 0
        if mask.sum() < 2:
            continue
        label = name
        if name in fitted:
            label = f"{name} (slope {fitted[name].exponent:.3f}, target {fitted[name].target_exponent:g})"
        ax.loglog(one_plus_t[mask], values[mask], marker=".", linewidth=1.0, label=label)
    ax.set_xlabel("1 + t")
    ax.set_ylabel("norm")
    ax.set_title("perturbation norms")
    ax.grid(True, which="both", linewidth=0.3)
    if ax.lines:
        ax.legend(fontsize=8)

    with _open_for_write(path, "wb") as f:
        fig.savefig(f, format="svg", metadata={"Date": None})
    plt.close(fig)
    logger.info("wrote %s", path)


def write_workbook(path, series: DiagnosticsSeries, report: Optional[dict] = None):
    """兩個工作表（series、rates）的 Excel 檔"""
    from openpyxl import Workbook
    from openpyxl.styles import Alignment, Border, Font, PatternFill, Side

    wb = Workbook()
    ws = wb.active
    ws.title = "series"

    # 樣式設定
    header_font = Font(bold=True, color="FFFFFF")
    header_fill = PatternFill(start_color="4A90D9", end_color="4A90D9", fill_type="solid")
    header_alignment = Alignment(horizontal="center", vertical="center")
    thin_border = Border(
        left=Side(style="thin"),
        right=Side(style="thin"),
        top=Side(style="thin"),
        bottom=Side(style="thin"),
    )

    def _header(sheet, headers):
        for col, header in enumerate(headers, 1):
            cell = sheet.cell(row=1, column=col, value=header)
            cell.font = header_font
            cell.fill = header_fill
            cell.alignment = header_alignment
            cell.border = thin_border
            sheet.column_dimensions[cell.column_letter].width = 14

    _header(ws, SERIES_COLUMNS)
    for row, values in enumerate(series.rows(), 2):
        for col, value in enumerate(values, 1):
            cell = ws.cell(row=row, column=col, value=float(value))
            cell.border = thin_border
            cell.number_format = "0.000000E+00"

    if report is not None:
        rs = wb.create_sheet("rates")
        headers = ["quantity", "exponent", "target", "tolerance", "mode", "r_squared", "pass", "gated"]
        _header(rs, headers)
        pass_fill = PatternFill(start_color="E8F5E9", end_color="E8F5E9", fill_type="solid")
        fail_fill = PatternFill(start_color="FFEBEE", end_color="FFEBEE", fill_type="solid")
        for row, item in enumerate(report["rows"], 2):
            fill = pass_fill if item["pass"] else fail_fill
            for col, key in enumerate(headers, 1):
                cell = rs.cell(row=row, column=col, value=item[key])
                cell.border = thin_border
                cell.fill = fill
                if key in ("exponent", "target", "tolerance", "r_squared"):
                    cell.alignment = Alignment(horizontal="right")
        rs.column_dimensions["A"].width = 12

    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        wb.save(path)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc
    logger.info("wrote %s", path)
