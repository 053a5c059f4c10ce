import numpy as np
import pytest
from scipy.integrate import trapezoid

from closures import gamma_law_closure
from corrections import CorrectionField, compute_shift_x0, eval_uhat, eval_vhat, make_mollifier
from diagnostics import (
    DiagnosticsSeries,
    NormRecord,
    PerturbationFields,
    ResidualReport,
    SERIES_COLUMNS,
    build_fields,
    centered_derivative,
    conserved_mass,
    decay_targets,
    field_norms,
    fit_decay_rate,
    fit_series,
    l2_norm,
    monotone_decay_ok,
    refinement_ratio,
    residual_check,
    sobolev_ratio,
    theorem_report,
    time_derivative_norms,
)
from diffusion_wave import eval_ubar, eval_vbar
from errors import DomainError, FitError
from solver import FarField, Perturbation, ScenarioSpec, SimState, build_initial_data, cfl_dt, prepare_scenario, step


def make_fields(x, V=None, z=None, t=0.0):
    zeros = np.zeros_like(x)
    V = zeros if V is None else V
    z = zeros if z is None else z
    return PerturbationFields(x=x, t=t, V=V, Vx=np.gradient(V, x), Vxx=zeros, Vxxx=zeros, z=z, zx=zeros, zxx=zeros)


def synthetic_series(l1_condition=True, times=None, overrides=None):
    """各欄位恰為目標冪次的合成序列"""
    times = np.linspace(0.0, 500.0, 60) if times is None else times
    targets = decay_targets(l1_condition)
    overrides = overrides or {}
    records = []
    for t in times:
        values = {name: (1.0 + t) ** spec["target"] for name, spec in targets.items()}
        values.update({name: (1.0 + t) ** power for name, power in overrides.items()})
        records.append(NormRecord(t=float(t), **values))
    return DiagnosticsSeries(records=records)


def test_centered_derivative_accuracy():
    x = np.linspace(0.0, 2.0 * np.pi, 401)
    dx = x[1] - x[0]
    first = centered_derivative(np.sin(x), dx, 1)
    second = centered_derivative(np.sin(x), dx, 2)
    assert np.max(np.abs(first[2:-2] - np.cos(x[2:-2]))) < 1e-8
    assert np.max(np.abs(second[2:-2] + np.sin(x[2:-2]))) < 1e-7
    assert np.max(np.abs(first - np.cos(x))) < 1e-3
    with pytest.raises(DomainError):
        centered_derivative(np.ones(4), 0.1)
    with pytest.raises(DomainError):
        centered_derivative(np.ones(10), 0.1, order=3)


def test_gaussian_l2_norm():
    x = np.linspace(-10.0, 10.0, 4001)
    assert l2_norm(np.exp(-x ** 2), x) == pytest.approx((np.pi / 2.0) ** 0.25, rel=1e-10)


def test_zero_fields_have_zero_norms():
    x = np.linspace(-5.0, 5.0, 101)
    fields = make_fields(x)
    assert all(value == 0.0 for value in field_norms(fields).values())
    assert sobolev_ratio(fields) == 0.0
    assert conserved_mass(fields) == 0.0


def test_sobolev_ratio_bounded():
    x = np.linspace(-10.0, 10.0, 4001)
    fields = make_fields(x, V=np.exp(-x ** 2))
    assert 0.0 < sobolev_ratio(fields) <= 1.0


def test_exact_initial_data_has_no_perturbation(gamma_profile):
    closure = gamma_law_closure(2.0, 1.0)
    corr = CorrectionField(0.0, 0.05, 1.0, make_mollifier("bump"))
    n, half = 400, 40.0
    x = -half + (np.arange(n) + 0.5) * (2.0 * half / n)
    state = SimState(
        x_left=-half, x_right=half, n_cells=n,
        v=eval_vbar(gamma_profile, x, 0.0) + eval_vhat(corr, x, 0.0),
        u=eval_ubar(gamma_profile, x, 0.0) + eval_uhat(corr, x, 0.0),
        t=0.0, closure=closure, far_field=FarField(1.0, 1.1, 0.0, 0.05),
    )
    fields = build_fields(state, gamma_profile, 0.0, corr)
    assert np.max(np.abs(fields.V)) < 1e-12
    assert np.max(np.abs(fields.z)) < 1e-12


def test_time_derivative_norms_of_linear_motion():
    x = np.linspace(-5.0, 5.0, 201)
    shape = np.exp(-x ** 2)
    dt = 0.1
    snapshots = [make_fields(x, z=(1.0 + 2.0 * k * dt) * shape, t=k * dt) for k in range(3)]
    norms = time_derivative_norms(snapshots, dt)
    assert norms["l2_zt"] == pytest.approx(2.0 * l2_norm(shape, x), rel=1e-10)
    assert norms["l2_ztt"] < 1e-10


def constant_states(dt=0.1):
    closure = gamma_law_closure(2.0, 1.0)
    n = 64
    return [
        SimState(-10.0, 10.0, n, np.ones(n), np.zeros(n), k * dt, closure, FarField(1.0, 1.0, 0.0, 0.0))
        for k in range(3)
    ]


def test_residual_of_constant_state_vanishes(constant_profile):
    corr = CorrectionField(0.0, 0.0, 1.0, make_mollifier("bump"))
    report = residual_check(constant_states(), constant_profile, 0.0, corr)
    assert report.max_abs_residual < 1e-10
    # g ≡ 0
    assert np.all(report.F2 == 0.0)


def test_residual_requires_uniform_spacing(constant_profile):
    corr = CorrectionField(0.0, 0.0, 1.0, make_mollifier("bump"))
    states = constant_states()
    states[2] = SimState(-10.0, 10.0, 64, np.ones(64), np.zeros(64), 0.5, states[0].closure, states[0].far_field)
    with pytest.raises(DomainError):
        residual_check(states, constant_profile, 0.0, corr)


def m1_residual_at(n_cells, t=1.0):
    """M1 情境推進到 t，再以兩個探測步算 V 方程式殘差"""
    spec = ScenarioSpec(
        closure_name="m1", closure_params={"sigma": 1.0},
        v_minus=1.0, v_plus=1.1, u_minus=0.0, u_plus=0.05,
        perturbation=Perturbation(amplitude=0.01, width=2.0),
        x_max=40.0, n_cells=n_cells, end_time=t, samples=2, profile_cells=1024,
    )
    profile, corr = prepare_scenario(spec)
    state = build_initial_data(spec, profile, corr)
    x0 = compute_shift_x0(state.v, state.centers, profile, corr)
    while state.t < t - 1e-12:
        state = step(state, min(cfl_dt(state, spec.cfl), t - state.t))
    dt = cfl_dt(state, spec.cfl)
    s1 = step(state, dt)
    return residual_check((state, s1, step(s1, dt)), profile, x0, corr)


@pytest.fixture(scope="module")
def m1_residuals():
    return m1_residual_at(1024), m1_residual_at(2048)


def test_residual_shrinks_at_second_order(m1_residuals):
    coarse, fine = m1_residuals
    assert refinement_ratio(coarse, fine) >= 3.5


def test_forcing_balances_discrete_operator(m1_residuals):
    _, fine = m1_residuals
    assert np.max(np.abs(fine.F2)) > 0
    forcing = trapezoid(np.abs(fine.F1 + fine.F2), x=fine.x)
    assert fine.l1_residual < 0.05 * forcing



def test_refinement_ratio():
    def report(l1, l2, peak):
        empty = np.zeros(1)
        return ResidualReport(empty, empty, empty, empty, peak, l2, l1)

    coarse, fine = report(4.0, 2.0, 1.0), report(1.0, 0.5, 0.5)
    assert refinement_ratio(coarse, fine) == pytest.approx(4.0)
    assert refinement_ratio(coarse, fine, "max") == pytest.approx(2.0)
    assert refinement_ratio(coarse, report(0.0, 0.0, 0.0)) == float("inf")


def test_fit_exact_power_laws():
    times = np.linspace(0.0, 500.0, 40)
    fit = fit_decay_rate(times, (1.0 + times) ** -0.75, (50.0, 500.0), -0.75, 0.1)
    assert fit.exponent == pytest.approx(-0.75, abs=1e-12)
    assert fit.passed

    fit = fit_decay_rate(times, 5.0 * (1.0 + times) ** -1.25, (50.0, 500.0), -1.25, 0.1)
    assert fit.exponent == pytest.approx(-1.25, abs=1e-12)
    assert fit.intercept == pytest.approx(np.log(5.0), abs=1e-10)
    assert fit.r_squared == pytest.approx(1.0)


def test_fit_modes():
    times = np.linspace(0.0, 500.0, 40)
    faster = (1.0 + times) ** -1.0
    assert not fit_decay_rate(times, faster, (50.0, 500.0), -0.5, 0.1).passed
    assert fit_decay_rate(times, faster, (50.0, 500.0), -0.5, 0.1, mode="upper").passed
    with pytest.raises(DomainError):
        fit_decay_rate(times, faster, (50.0, 500.0), -0.5, 0.1, mode="lower")


def test_fit_errors():
    times = np.linspace(0.0, 500.0, 40)
    with pytest.raises(FitError):
        fit_decay_rate(times, np.ones_like(times), (450.0, 500.0), -0.5, 0.1)
    values = (1.0 + times) ** -0.5
    values[-3] = 0.0
    with pytest.raises(FitError):
        fit_decay_rate(times, values, (50.0, 500.0), -0.5, 0.1)


def test_decay_targets():
    improved = decay_targets(True)
    assert improved["l2_z"]["target"] == pytest.approx(-1.25)
    assert improved["l2_Vx"]["target"] == pytest.approx(-0.75)
    assert improved["l2_V"]["gated"] and improved["l2_V"]["mode"] == "two_sided"
    assert not improved["l2_Vxxx"]["gated"]

    base = decay_targets(False)
    assert base["l2_Vx"]["target"] == pytest.approx(-0.5)
    assert base["l2_Vx"]["mode"] == "upper" and base["l2_Vx"]["gated"]
    assert not base["l2_V"]["gated"]
    assert base["l2_Vxx"]["mode"] == "upper"


@pytest.mark.parametrize("l1_condition", [True, False])
def test_synthetic_exact_rates_pass(l1_condition):
    series = synthetic_series(l1_condition)
    fits = fit_series(series, (50.0, 500.0), l1_condition)
    report = theorem_report(fits, l1_condition)
    assert report["passed"]
    assert {row["quantity"] for row in report["rows"]} == set(decay_targets(l1_condition))


def test_slow_decay_fails_report():
    series = synthetic_series(True, overrides={"l2_V": 0.0001})
    report = theorem_report(fit_series(series, (50.0, 500.0), True), True)
    assert not report["passed"]
    failed = [row["quantity"] for row in report["rows"] if row["gated"] and not row["pass"]]
    assert failed == ["l2_V"]


def test_missing_time_derivatives_are_skipped():
    times = np.linspace(0.0, 500.0, 60)
    series = synthetic_series(True, times)
    for record in series.records:
        record.l2_zt = record.l2_zxt = record.l2_ztt = 0.0
    fits = fit_series(series, (50.0, 500.0), True)
    assert "l2_zt" not in {fit.quantity for fit in fits}
    assert theorem_report(fits, True)["passed"]


def test_theorem_report_requires_spatial_fits():
    fits = fit_series(synthetic_series(True), (50.0, 500.0), True)
    with pytest.raises(DomainError):
        theorem_report([fit for fit in fits if fit.quantity != "l2_z"], True)


def test_monotone_decay():
    times = np.linspace(0.0, 100.0, 50)
    values = (1.0 + times) ** -0.5
    assert monotone_decay_ok(times, values)
    values[30] *= 1.05
    assert not monotone_decay_ok(times, values)


def test_series_columns():
    series = synthetic_series(True, times=np.array([0.0, 1.0]))
    assert SERIES_COLUMNS[0] == "t"
    assert len(series.rows()) == 2 and len(series.rows()[0]) == len(SERIES_COLUMNS)
    with pytest.raises(DomainError):
        series.column("l2_w")
