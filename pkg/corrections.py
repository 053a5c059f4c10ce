"""磨光函數 m₀、平移量 x₀ 與指數衰減修正 (v̂, û)"""
import logging
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
from scipy.integrate import cumulative_simpson, quad, trapezoid
from scipy.interpolate import CubicHermiteSpline

from diffusion_wave import WaveProfile, eval_vbar
from errors import DegenerateWaveError, DomainError

logger = logging.getLogger(__name__)

MOLLIFIER_SHAPES = ("bump", "cosine")
TABLE_POINTS = 4097


def _bump(s, order: int = 0):
    """exp(−1/(1−s²)) 及其對 s 的導數，支撐外為 0"""
    s = np.asarray(s, dtype=float)
    inside = np.abs(s) < 1.0
    sc = np.where(inside, s, 0.0)
    one_minus = 1.0 - sc ** 2
    base = np.where(inside, np.exp(-1.0 / one_minus), 0.0)
    if order == 0:
        return base
    q = -2.0 * sc / one_minus ** 2
    if order == 1:
        return base * q
    dq = -2.0 / one_minus ** 2 - 8.0 * sc ** 2 / one_minus ** 3
    return base * (q ** 2 + dq)


def _cosine(s, order: int = 0):
    """cos²(πs/2) 及其導數"""
    s = np.asarray(s, dtype=float)
    inside = np.abs(s) < 1.0
    if order == 0:
        values = np.cos(0.5 * np.pi * s) ** 2
    elif order == 1:
        values = -0.5 * np.pi * np.sin(np.pi * s)
    else:
        values = -0.5 * np.pi ** 2 * np.cos(np.pi * s)
    return np.where(inside, values, 0.0)


_SHAPES = {"bump": _bump, "cosine": _cosine}


def template_values(shape: str, s, order: int = 0):
    """未正規化模板（支撐 [−1, 1]）"""
    if shape not in _SHAPES:
        raise DomainError(f"unknown template shape '{shape}', expected one of {list(MOLLIFIER_SHAPES)}")
    return _SHAPES[shape](s, order)


@lru_cache(maxsize=None)
def raw_integral(shape: str) -> float:
    """未正規化模板在 [−1, 1] 的積分"""
    value, _ = quad(lambda s: float(_SHAPES[shape](s)), -1.0, 1.0, epsabs=1e-14, epsrel=1e-13, limit=200)
    return value


@dataclass(frozen=True)
class Mollifier:
    """緊支撐、積分為 1 的 m₀"""
    shape: str
    center: float
    half_width: float
    normalization: float

    @property
    def support(self):
        return (self.center - self.half_width, self.center + self.half_width)

    def __call__(self, x, order: int = 0):
        """m₀ 的 order 階導數（order ≤ 2）"""
        if order not in (0, 1, 2):
            raise DomainError(f"mollifier derivative order {order} not supported")
        s = (np.asarray(x, dtype=float) - self.center) / self.half_width
        values = self.normalization * _SHAPES[self.shape](s, order) / self.half_width ** (order + 1)
        return values if values.ndim else float(values)

    @cached_property
    def _table(self) -> CubicHermiteSpline:
        s = np.linspace(-1.0, 1.0, TABLE_POINTS)
        template = _SHAPES[self.shape](s)
        cumulative = cumulative_simpson(template, x=s, initial=0.0)
        total = cumulative[-1]
        return CubicHermiteSpline(s, cumulative / total, template / total)

    def cumulative(self, x):
        """M₀(x) = ∫_{−∞}^x m₀"""
        s = (np.asarray(x, dtype=float) - self.center) / self.half_width
        values = np.where(s <= -1.0, 0.0, np.where(s >= 1.0, 1.0, self._table(np.clip(s, -1.0, 1.0))))
        return values if values.ndim else float(values)


def make_mollifier(shape: str = "bump", center: float = 0.0, half_width: float = 1.0) -> Mollifier:
    """建立正規化後的磨光函數"""
    if shape not in _SHAPES:
        raise DomainError(f"unknown mollifier shape '{shape}', expected one of {list(MOLLIFIER_SHAPES)}")
    if half_width <= 0:
        raise DomainError(f"half_width must be positive, got {half_width}")
    return Mollifier(
        shape=shape,
        center=float(center),
        half_width=float(half_width),
        normalization=1.0 / raw_integral(shape),
    )


@dataclass(frozen=True)
class CorrectionField:
    """v̂ = (Δu/(−α))e^{−αt}m₀，û = e^{−αt}[u₋ + Δu·M₀]"""
    u_minus: float
    u_plus: float
    alpha: float
    mollifier: Mollifier

    @property
    def jump(self) -> float:
        return self.u_plus - self.u_minus

    @property
    def mass(self) -> float:
        """∫ v̂(x, 0) dx"""
        return self.jump / (-self.alpha)

    def cumulative(self, x):
        return self.mollifier.cumulative(x)


def _check_time(t: float):
    if t < 0:
        raise DomainError(f"time must be non-negative, got {t}")


def eval_vhat(corr: CorrectionField, x, t: float, dx_order: int = 0, dt_order: int = 0):
    """∂ₓᵏ∂ₜʲ v̂(x,t)"""
    _check_time(t)
    decay = (-corr.alpha) ** dt_order * np.exp(-corr.alpha * t)
    values = corr.mass * decay * np.asarray(corr.mollifier(x, dx_order))
    return values if values.ndim else float(values)


def eval_uhat(corr: CorrectionField, x, t: float, dx_order: int = 0, dt_order: int = 0):
    """∂ₓᵏ∂ₜʲ û(x,t)"""
    _check_time(t)
    if dx_order > 3:
        raise DomainError(f"uhat derivative order {dx_order} not supported")
    decay = (-corr.alpha) ** dt_order * np.exp(-corr.alpha * t)
    if dx_order == 0:
        values = decay * (corr.u_minus + corr.jump * np.asarray(corr.cumulative(x)))
    else:
        values = decay * corr.jump * np.asarray(corr.mollifier(x, dx_order - 1))
    return values if values.ndim else float(values)


def verify_correction_system(corr: CorrectionField, grid, t: float) -> float:
    """max(|v̂_t − û_x|, |û_t + αû|)"""
    grid = np.asarray(grid, dtype=float)
    continuity = eval_vhat(corr, grid, t, dt_order=1) - eval_uhat(corr, grid, t, dx_order=1)
    damping = eval_uhat(corr, grid, t, dt_order=1) + corr.alpha * eval_uhat(corr, grid, t)
    return float(max(np.max(np.abs(continuity)), np.max(np.abs(damping))))


def compute_shift_x0(v0, x, profile: WaveProfile, corr: CorrectionField) -> float:
    """選 x₀ 使 ∫[v₀ − v̄(·+x₀, 0) − v̂(·, 0)] dx = 0"""
    strength = profile.v_plus - profile.v_minus
    if strength == 0:
        raise DegenerateWaveError(
            "v_plus equals v_minus: no diffusion wave to shift, use the constant-state scenario"
        )
    x = np.asarray(x, dtype=float)
    excess = trapezoid(np.asarray(v0, dtype=float) - eval_vbar(profile, x, 0.0) - eval_vhat(corr, x, 0.0), x=x)
    x0 = excess / strength
    logger.debug("shift x0 = %.12g (excess %.6e)", x0, excess)
    return float(x0)


def correction_decay(corr: CorrectionField, dx_order: int, dt_order: int, times, x, which: str = "vhat"):
    """‖∂ₓᵏ∂ₜʲ v̂(t)‖_∞ 或 û 的對應值"""
    evaluator = {"vhat": eval_vhat, "uhat": eval_uhat}[which]
    return np.array([float(np.max(np.abs(evaluator(corr, x, t, dx_order, dt_order)))) for t in times])
