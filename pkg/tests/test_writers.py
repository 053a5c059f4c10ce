import json

import numpy as np
import pytest
from openpyxl import load_workbook

from diagnostics import SERIES_COLUMNS, DiagnosticsSeries, NormRecord, fit_series, theorem_report
from errors import ConfigError
from services.writers import (
    PROFILE_COLUMNS,
    RATES_COLUMNS,
    emit_loglog_svg,
    read_series_csv,
    write_json,
    write_profile_csv,
    write_rates_csv,
    write_series_csv,
    write_workbook,
)


def decaying_series(n=40):
    times = np.linspace(0.0, 500.0, n)
    records = [
        NormRecord(
            t=float(t),
            l2_V=(1 + t) ** -0.25, l2_Vx=(1 + t) ** -0.75, l2_Vxx=(1 + t) ** -1.25, l2_Vxxx=(1 + t) ** -1.75,
            l2_z=(1 + t) ** -1.25, l2_zx=(1 + t) ** -1.75, l2_zxx=(1 + t) ** -2.25,
            l2_heat=0.3 * (1 + t) ** -0.25,
        )
        for t in times
    ]
    return DiagnosticsSeries(records=records)


def test_empty_series_writes_header_only(tmp_path):
    path = tmp_path / "series.csv"
    write_series_csv(path, DiagnosticsSeries())
    assert path.read_text().splitlines() == [",".join(SERIES_COLUMNS)]


def test_two_point_series(tmp_path):
    path = tmp_path / "out" / "series.csv"
    write_series_csv(path, decaying_series(2))
    assert len(path.read_text().splitlines()) == 3


def test_series_header_lists_base_columns_first(tmp_path):
    path = tmp_path / "series.csv"
    write_series_csv(path, DiagnosticsSeries())
    header = path.read_text().splitlines()[0].split(",")
    assert header[:11] == [
        "t", "l2_V", "l2_Vx", "l2_Vxx", "l2_Vxxx", "l2_z", "l2_zx", "l2_zxx", "linf_V", "linf_z", "mass_residual",
    ]
    assert header[11:] == ["l2_zt", "l2_zxt", "l2_ztt", "l2_heat"]


def test_series_values_read_back_exactly(tmp_path):
    path = tmp_path / "series.csv"
    series = decaying_series(5)
    write_series_csv(path, series)
    assert read_series_csv(path).rows() == series.rows()


def test_series_missing_columns(tmp_path):
    path = tmp_path / "series.csv"
    path.write_text("t,l2_V\n0,1\n")
    with pytest.raises(ConfigError):
        read_series_csv(path)


def test_profile_csv(tmp_path, m1_profile):
    path = tmp_path / "profile.csv"
    write_profile_csv(path, m1_profile)
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(PROFILE_COLUMNS)
    assert len(lines) == len(m1_profile.xi_grid) + 1


def test_rates_csv(tmp_path):
    fits = fit_series(decaying_series(), (50.0, 500.0), True)
    path = tmp_path / "rates.csv"
    write_rates_csv(path, fits)
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(RATES_COLUMNS)
    assert lines[1].startswith("l2_V,")


def test_unwritable_path_names_the_path(tmp_path):
    blocker = tmp_path / "file.txt"
    blocker.write_text("")
    target = blocker / "series.csv"
    with pytest.raises(OSError) as info:
        write_series_csv(target, DiagnosticsSeries())
    assert str(target) in str(info.value)


def test_svg_is_byte_identical(tmp_path):
    series = decaying_series()
    fits = fit_series(series, (50.0, 500.0), True)
    first, second = tmp_path / "a.svg", tmp_path / "b.svg"
    emit_loglog_svg(first, series, fits=fits)
    emit_loglog_svg(second, series, fits=fits)
    assert first.read_bytes() == second.read_bytes()
    assert b"<svg" in first.read_bytes()


def test_workbook_sheets(tmp_path):
    series = decaying_series()
    report = theorem_report(fit_series(series, (50.0, 500.0), True), True)
    path = tmp_path / "rates.xlsx"
    write_workbook(path, series, report)
    wb = load_workbook(path)
    assert wb.sheetnames == ["series", "rates"]
    assert wb["series"].cell(row=1, column=1).value == "t"
    assert wb["series"].max_row == len(series.records) + 1
    assert wb["rates"].cell(row=2, column=1).value == "l2_V"


def test_json_is_sorted(tmp_path):
    path = tmp_path / "run.json"
    write_json(path, {"b": 1, "a": np.float64(0.5), "ok": True})
    text = path.read_text()
    assert text.index('"a"') < text.index('"b"')
    assert json.loads(text)["a"] == 0.5
