"""Lagrangian 座標下的有限體積求解器（MUSCL-Hancock + LLF，Strang 分裂阻尼）"""
import logging
import time
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid
from scipy.interpolate import PchipInterpolator

from closures import M1_FLUX_LIMIT, ModelClosure, build_closure, characteristic_speeds, max_wave_speed
from config import (
    DEFAULT_CFL,
    DEFAULT_N_CELLS,
    DEFAULT_PROFILE_CELLS,
    DEFAULT_PROFILE_TOL,
    DEFAULT_SAMPLES,
    DEFAULT_XI_FACTOR,
    MAX_AMPLITUDE,
    MAX_WAVE_STRENGTH,
)
from corrections import CorrectionField, compute_shift_x0, eval_uhat, eval_vhat, make_mollifier, template_values
from diagnostics import (
    DiagnosticsSeries,
    NormRecord,
    build_fields,
    conserved_mass,
    field_norms,
    residual_check,
    time_derivative_norms,
)
from diffusion_wave import WaveProfile, eval_ubar, eval_vbar, solve_profile
from errors import BlowUpError, DegenerateWaveError, DomainError, ScenarioError

logger = logging.getLogger(__name__)

N_GHOST = 2


@dataclass(frozen=True)
class FarField:
    """遠場狀態 (v±, u±)，速度依 e^{−αt} 衰減"""
    v_minus: float
    v_plus: float
    u_minus: float
    u_plus: float


@dataclass(frozen=True)
class SimState:
    """均勻網格上的格平均 (v, u)"""
    x_left: float
    x_right: float
    n_cells: int
    v: np.ndarray
    u: np.ndarray
    t: float
    closure: ModelClosure = field(repr=False)
    far_field: FarField = FarField(1.0, 1.0, 0.0, 0.0)

    def __post_init__(self):
        if len(self.v) != self.n_cells or len(self.u) != self.n_cells:
            raise DomainError(f"field length mismatch: v={len(self.v)}, u={len(self.u)}, n_cells={self.n_cells}")

    @property
    def dx(self) -> float:
        return (self.x_right - self.x_left) / self.n_cells

    @property
    def centers(self) -> np.ndarray:
        return self.x_left + (np.arange(self.n_cells) + 0.5) * self.dx


@dataclass(frozen=True)
class Perturbation:
    """緊支撐擾動，amplitude 為峰值"""
    amplitude: float = 0.0
    u_amplitude: float = 0.0
    shape: str = "bump"
    center: float = 0.0
    width: float = 1.0

    @property
    def support(self) -> Tuple[float, float]:
        return (self.center - self.width, self.center + self.width)

    def values(self, x, amplitude: float) -> np.ndarray:
        s = (np.asarray(x, dtype=float) - self.center) / self.width
        peak = float(template_values(self.shape, 0.0))
        return amplitude * template_values(self.shape, s) / peak


@dataclass(frozen=True)
class ScenarioSpec:
    """一次模擬的完整參數"""
    closure_name: str = "m1"
    closure_params: dict = field(default_factory=dict)
    v_minus: float = 1.0
    v_plus: float = 1.1
    u_minus: float = 0.0
    u_plus: float = 0.05
    perturbation: Perturbation = Perturbation()
    x_max: Optional[float] = None
    n_cells: int = DEFAULT_N_CELLS
    end_time: float = 500.0
    cfl: float = DEFAULT_CFL
    samples: int = DEFAULT_SAMPLES
    wall_clock: Optional[float] = None
    mollifier_shape: str = "bump"
    mollifier_center: float = 0.0
    mollifier_half_width: float = 1.0
    profile_cells: int = DEFAULT_PROFILE_CELLS
    profile_tol: float = DEFAULT_PROFILE_TOL
    profile_xi_factor: float = DEFAULT_XI_FACTOR
    profile_richardson: bool = False
    profile_shift: float = 0.0
    lookahead: bool = True

    @property
    def wave_strength(self) -> float:
        """δ = |v₊−v₋| + |u₊−u₋|"""
        return abs(self.v_plus - self.v_minus) + abs(self.u_plus - self.u_minus)

    def closure(self) -> ModelClosure:
        return build_closure(self.closure_name, **self.closure_params)

    @property
    def far_field(self) -> FarField:
        return FarField(self.v_minus, self.v_plus, self.u_minus, self.u_plus)

    def domain_half_width(self) -> float:
        """L = 10√(1+T)·max|λ| + 擾動延伸"""
        if self.x_max is not None:
            return float(self.x_max)
        c = self.closure()
        speed = max_wave_speed(c, np.array([self.v_minus, self.v_plus]), np.array([self.u_minus, self.u_plus]))
        reach = max(
            abs(self.perturbation.center) + self.perturbation.width,
            abs(self.mollifier_center) + self.mollifier_half_width,
            abs(self.profile_shift),
        )
        return 10.0 * np.sqrt(1.0 + self.end_time) * speed + reach

    def validate(self):
        """收集所有違反的前提，一次拋出"""
        errors = []
        if not 0.0 < self.cfl < 1.0:
            errors.append("cfl must lie in (0,1)")
        if self.end_time < 0:
            errors.append("end_time must be non-negative")
        if self.n_cells < 16:
            errors.append("n_cells must be at least 16")
        if self.wave_strength > MAX_WAVE_STRENGTH:
            errors.append(f"wave strength {self.wave_strength:.4g} exceeds cap {MAX_WAVE_STRENGTH}")
        for label, amp in (("amplitude", self.perturbation.amplitude), ("u_amplitude", self.perturbation.u_amplitude)):
            if abs(amp) > MAX_AMPLITUDE:
                errors.append(f"perturbation {label} {amp} exceeds cap {MAX_AMPLITUDE}")
        if self.perturbation.width <= 0:
            errors.append("perturbation width must be positive")
        if not errors:
            half = self.domain_half_width()
            lo, hi = self.perturbation.support
            if self.perturbation.amplitude or self.perturbation.u_amplitude:
                if lo <= -half or hi >= half:
                    errors.append(f"perturbation support [{lo}, {hi}] not strictly inside domain [-{half}, {half}]")
            m_lo = self.mollifier_center - self.mollifier_half_width
            m_hi = self.mollifier_center + self.mollifier_half_width
            if m_lo <= -half or m_hi >= half:
                errors.append(f"mollifier support [{m_lo}, {m_hi}] not strictly inside domain")
        if errors:
            raise ScenarioError("; ".join(errors))


def prepare_scenario(spec: ScenarioSpec) -> Tuple[WaveProfile, CorrectionField]:
    """求剖面並建立修正場"""
    spec.validate()
    c = spec.closure()
    profile = solve_profile(
        c,
        spec.v_minus,
        spec.v_plus,
        c.alpha,
        xi_max=spec.profile_xi_factor / np.sqrt(c.alpha),
        n_cells=spec.profile_cells,
        tol=spec.profile_tol,
        richardson=spec.profile_richardson,
    )
    mollifier = make_mollifier(spec.mollifier_shape, spec.mollifier_center, spec.mollifier_half_width)
    corr = CorrectionField(u_minus=spec.u_minus, u_plus=spec.u_plus, alpha=c.alpha, mollifier=mollifier)
    return profile, corr


def lagrangian_transform(rho0, u0, x, n_cells: Optional[int] = None):
    """Euler 座標 → 質量座標 m(x) = ∫₀ˣ ρ dy，回傳 (m 網格, v₀, u₀)"""
    rho0 = np.asarray(rho0, dtype=float)
    u0 = np.asarray(u0, dtype=float)
    x = np.asarray(x, dtype=float)
    if np.any(rho0 <= 0):
        raise DomainError("density must be strictly positive for the Lagrangian transform")
    mass = cumulative_trapezoid(rho0, x=x, initial=0.0)
    if x[0] <= 0.0 <= x[-1]:
        mass -= np.interp(0.0, x, mass)
    grid = np.linspace(mass[0], mass[-1], n_cells or len(x))
    v0 = PchipInterpolator(mass, 1.0 / rho0)(grid)
    u_l = PchipInterpolator(mass, u0)(grid)
    return grid, v0, u_l


def eulerian_transform(m, v, u, x_grid=None):
    """質量座標 → Euler 座標 x(m) = ∫₀ᵐ v，回傳 (x 網格, ρ, u)"""
    m = np.asarray(m, dtype=float)
    v = np.asarray(v, dtype=float)
    if np.any(v <= 0):
        raise DomainError("specific volume must be strictly positive for the Eulerian transform")
    position = cumulative_trapezoid(v, x=m, initial=0.0)
    if m[0] <= 0.0 <= m[-1]:
        position -= np.interp(0.0, m, position)
    if x_grid is None:
        x_grid = np.linspace(position[0], position[-1], len(m))
    x_grid = np.asarray(x_grid, dtype=float)
    rho = PchipInterpolator(position, 1.0 / v)(x_grid)
    u_e = PchipInterpolator(position, np.asarray(u, dtype=float))(x_grid)
    return x_grid, rho, u_e


def build_initial_data(spec: ScenarioSpec, profile: WaveProfile, corr: CorrectionField) -> SimState:
    """v₀ = v̄(·,0) + v̂(·,0) + 擾動，u₀ = ū(·,0) + û(·,0) + 擾動"""
    spec.validate()
    c = profile.closure
    half = spec.domain_half_width()
    dx = 2.0 * half / spec.n_cells
    x = -half + (np.arange(spec.n_cells) + 0.5) * dx
    shifted = x - spec.profile_shift

    v = eval_vbar(profile, shifted, 0.0) + eval_vhat(corr, x, 0.0)
    u = eval_ubar(profile, shifted, 0.0) + eval_uhat(corr, x, 0.0)
    pert = spec.perturbation
    if pert.amplitude:
        v = v + pert.values(x, pert.amplitude)
    if pert.u_amplitude:
        u = u + pert.values(x, pert.u_amplitude)

    v_lo, v_hi = c.v_range
    u_lo, u_hi = c.u_range
    bad_v = np.flatnonzero((v <= v_lo) | (v >= v_hi))
    bad_u = np.flatnonzero((u <= u_lo) | (u >= u_hi))
    if bad_v.size or bad_u.size:
        cell = int(bad_v[0] if bad_v.size else bad_u[0])
        raise ScenarioError(
            f"initial state leaves the admissible box at cell {cell} (v={v[cell]:.6g}, u={u[cell]:.6g})"
        )

    return SimState(
        x_left=-half,
        x_right=half,
        n_cells=spec.n_cells,
        v=v,
        u=u,
        t=0.0,
        closure=c,
        far_field=spec.far_field,
    )


def cfl_dt(state: SimState, cfl: float) -> float:
    """dt = cfl·dx / max|λ|"""
    speed = max_wave_speed(state.closure, state.v, state.u)
    if speed <= 0:
        raise DomainError("maximum characteristic speed vanished")
    return cfl * state.dx / speed


def _minmod(a, b):
    return 0.5 * (np.sign(a) + np.sign(b)) * np.minimum(np.abs(a), np.abs(b))


def _flux(c: ModelClosure, v, u):
    return -u, c.momentum_flux(v, u)


def _local_speed(c: ModelClosure, v, u):
    lam_minus, lam_plus = characteristic_speeds(c, v, u)
    return np.maximum(np.abs(lam_minus), np.abs(lam_plus))


def _hyperbolic_update(state: SimState, v, u, dt: float, t_mid: float, volume_factor: float):
    """MUSCL-Hancock + 局部 Lax–Friedrichs 的一次守恆更新"""
    c = state.closure
    ff = state.far_field
    decay = np.exp(-c.alpha * t_mid)

    # 鬼格：遠場狀態
    vg = np.concatenate(([ff.v_minus] * N_GHOST, v, [ff.v_plus] * N_GHOST))
    ug = np.concatenate(([ff.u_minus * decay] * N_GHOST, u, [ff.u_plus * decay] * N_GHOST))

    dv = _minmod(vg[1:-1] - vg[:-2], vg[2:] - vg[1:-1])
    du = _minmod(ug[1:-1] - ug[:-2], ug[2:] - ug[1:-1])
    v_l, v_r = vg[1:-1] - 0.5 * dv, vg[1:-1] + 0.5 * dv
    u_l, u_r = ug[1:-1] - 0.5 * du, ug[1:-1] + 0.5 * du

    # 半步預測
    fl_v, fl_u = _flux(c, v_l, u_l)
    fr_v, fr_u = _flux(c, v_r, u_r)
    ratio = 0.5 * dt / state.dx
    v_l, v_r = v_l + ratio * (fl_v - fr_v), v_r + ratio * (fl_v - fr_v)
    u_l, u_r = u_l + ratio * (fl_u - fr_u), u_r + ratio * (fl_u - fr_u)

    # 介面 i+1/2：左態 = 格 i 的右緣，右態 = 格 i+1 的左緣
    left_v, left_u = v_r[:-1], u_r[:-1]
    right_v, right_u = v_l[1:], u_l[1:]
    lf_v, lf_u = _flux(c, left_v, left_u)
    rf_v, rf_u = _flux(c, right_v, right_u)
    a = np.maximum(_local_speed(c, left_v, left_u), _local_speed(c, right_v, right_u))
    flux_v = (0.5 * (lf_v + rf_v) - 0.5 * a * (right_v - left_v)) * volume_factor
    flux_u = 0.5 * (lf_u + rf_u) - 0.5 * a * (right_u - left_u)

    scale = dt / state.dx
    return v - scale * np.diff(flux_v), u - scale * np.diff(flux_u)


def _check_admissible(state: SimState, v, u, t: float):
    bad = np.flatnonzero(~np.isfinite(v) | ~np.isfinite(u) | (v <= 0))
    if bad.size:
        raise BlowUpError(int(bad[0]), t)
    if state.closure.has_flux_correction:
        over = np.flatnonzero(np.abs(u) >= M1_FLUX_LIMIT)
        if over.size:
            raise BlowUpError(int(over[0]), t, reason=f"|u| reached the flux limit {M1_FLUX_LIMIT:.6f}")


def step(state: SimState, dt: float, validate: bool = True) -> SimState:
    """Strang 分裂：半步阻尼、雙曲步、半步阻尼"""
    if dt <= 0:
        raise DomainError(f"time step must be positive, got {dt}")
    if validate and dt > cfl_dt(state, 1.0) * (1.0 + 1e-12):
        raise DomainError(f"time step {dt:.6g} violates the CFL limit {cfl_dt(state, 1.0):.6g}")

    alpha = state.closure.alpha
    half_decay = np.exp(-0.5 * alpha * dt)
    theta = 0.5 * alpha * dt
    # 遠場通量在步內的時間平均 sinh(θ)/θ
    volume_factor = np.sinh(theta) / theta if theta > 0 else 1.0

    u = state.u * half_decay
    v, u = _hyperbolic_update(state, state.v, u, dt, state.t + 0.5 * dt, volume_factor)
    u = u * half_decay
    t_new = state.t + dt
    _check_admissible(state, v, u, t_new)
    return replace(state, v=v, u=u, t=t_new)


def sample_times(end_time: float, samples: int = DEFAULT_SAMPLES) -> np.ndarray:
    """t = 0 加上 log(1+t) 均勻分布的取樣點"""
    if end_time <= 0 or samples < 2:
        return np.array([0.0])
    times = np.expm1(np.linspace(0.0, np.log1p(end_time), samples))
    times[0] = 0.0
    times[-1] = end_time
    return times


def heat_kernel(x, t: float, dp_plus: float):
    """G(x,t) = (4πDt)^{−1/2} exp(−x²/(4Dt))，D = −dp_plus；阻尼 α ≠ 1 時由呼叫端傳入 p'(v₊)/α"""
    if t <= 0:
        raise DomainError(f"heat kernel needs t > 0, got {t}")
    if dp_plus >= 0:
        raise DomainError(f"heat kernel needs p'(v+) < 0, got {dp_plus}")
    diffusivity = -dp_plus
    x = np.asarray(x, dtype=float)
    values = np.exp(-x ** 2 / (4.0 * diffusivity * t)) / np.sqrt(4.0 * np.pi * diffusivity * t)
    return values if values.ndim else float(values)


def heat_kernel_l2(t: float, dp_plus: float) -> float:
    """‖G(·,t)‖_{L²} = (8πDt)^{−1/4}"""
    if t <= 0:
        raise DomainError(f"heat kernel needs t > 0, got {t}")
    diffusivity = -dp_plus
    return float((8.0 * np.pi * diffusivity * t) ** -0.25)


def _record(state, profile, x0, corr, heat_mass, dp_plus, lookahead_states=None) -> Tuple[NormRecord, Optional[dict]]:
    fields = build_fields(state, profile, x0, corr)
    record = NormRecord(t=state.t, mass_residual=conserved_mass(fields), **field_norms(fields))
    record.l2_heat = abs(heat_mass) * heat_kernel_l2(1.0 + state.t, dp_plus / profile.alpha)
    residual = None
    if lookahead_states is not None:
        s1, s2 = lookahead_states
        f1 = build_fields(s1, profile, x0, corr)
        f2 = build_fields(s2, profile, x0, corr)
        for key, value in time_derivative_norms((fields, f1, f2), s1.t - state.t).items():
            setattr(record, key, value)
        report = residual_check((state, s1, s2), profile, x0, corr)
        residual = {
            "t": s1.t,
            "max": report.max_abs_residual,
            "l2": report.l2_residual,
            "l1": report.l1_residual,
        }
    return record, residual


def run(
    spec: ScenarioSpec,
    profile: WaveProfile,
    corr: CorrectionField,
    times: Optional[Sequence[float]] = None,
) -> DiagnosticsSeries:
    """時間推進並在每個取樣時間記錄擾動範數"""
    state = build_initial_data(spec, profile, corr)
    times = sample_times(spec.end_time, spec.samples) if times is None else np.sort(np.asarray(times, dtype=float))
    x = state.centers
    try:
        x0 = compute_shift_x0(state.v, x, profile, corr)
    except DegenerateWaveError:
        x0 = 0.0

    closure = profile.closure
    dp_plus = float(closure.dp(profile.v_plus))
    initial = build_fields(state, profile, x0, corr)
    heat_mass = float(trapezoid(initial.V + initial.z / closure.alpha, x=x))

    series = DiagnosticsSeries(x0=x0, heat_mass=heat_mass)
    warned = False
    started = time.monotonic()
    n_steps = 0
    logger.info(
        "run %s: n=%d L=%.4g T=%g x0=%.6g delta=%.4g",
        closure.name, spec.n_cells, state.x_right, spec.end_time, x0, spec.wave_strength,
    )

    for target in times:
        while state.t < target - 1e-12 * max(1.0, target):
            dt = min(cfl_dt(state, spec.cfl), target - state.t)
            state = step(state, dt, validate=False)
            n_steps += 1
            peak_u = float(np.max(np.abs(state.u)))
            series.max_abs_u = max(series.max_abs_u, peak_u)
            if closure.has_flux_correction and peak_u > 1.0 and not warned:
                logger.warning("|u| = %.4f exceeds 1 at t=%.4g (outside the physical M1 range)", peak_u, state.t)
                warned = True
            if spec.wall_clock is not None and time.monotonic() - started > spec.wall_clock:
                logger.warning("wall-clock budget %.1fs exhausted at t=%.4g; series incomplete", spec.wall_clock, state.t)
                series.complete = False
                return series

        lookahead_states = None
        if spec.lookahead:
            dt = cfl_dt(state, spec.cfl)
            s1 = step(state, dt, validate=False)
            lookahead_states = (s1, step(s1, dt, validate=False))
        record, residual = _record(state, profile, x0, corr, heat_mass, dp_plus, lookahead_states)
        series.records.append(record)
        if residual is not None:
            series.residuals.append(residual)
        logger.debug("sample t=%.6g l2_V=%.3e l2_z=%.3e mass=%.2e", record.t, record.l2_V, record.l2_z, record.mass_residual)

    logger.info("run finished: %d steps, %d samples", n_steps, len(series.records))
    return series
