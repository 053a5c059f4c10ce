"""本構函數 p(v)、g(u)、f(v) 與 M1 / γ-law / 線性壓力預設"""
import logging
from dataclasses import dataclass
from typing import Callable, Tuple

import numpy as np

from errors import DomainError, HyperbolicityError

logger = logging.getLogger(__name__)

Evaluator = Callable[[np.ndarray], np.ndarray]

# M1 的 √(4−3u²) 在 |u| = 2/√3 失效
M1_FLUX_LIMIT = 2.0 / np.sqrt(3.0)
FLUX_CORRECTED = ("m1",)


@dataclass(frozen=True)
class ModelClosure:
    """v_t − u_x = 0, u_t + (p(v) − g(u)f(v))_x = −αu 的本構函數"""
    name: str
    alpha: float
    p: Evaluator
    dp: Evaluator
    d2p: Evaluator
    d3p: Evaluator
    d4p: Evaluator
    g: Evaluator
    dg: Evaluator
    d2g: Evaluator
    f: Evaluator
    df: Evaluator
    v_range: Tuple[float, float]
    u_range: Tuple[float, float]

    @property
    def has_flux_correction(self) -> bool:
        """g ≢ 0 時才有 (g f)_x 項"""
        return self.name in FLUX_CORRECTED

    def momentum_flux(self, v, u):
        """動量通量 p(v) − g(u)f(v)"""
        return self.p(v) - self.g(u) * self.f(v)


@dataclass(frozen=True)
class AssumptionReport:
    """在狀態盒上取樣得到的假設檢查結果"""
    hyperbolic_ok: bool
    sign_ok: bool
    smoothness_ok: bool
    min_discriminant: float
    min_gfprime_minus_pprime: float


def _zeros(x):
    return np.zeros_like(np.asarray(x, dtype=float))


def _ones(x):
    return np.ones_like(np.asarray(x, dtype=float))


def m1_closure(sigma: float = 1.0) -> ModelClosure:
    """M1 輻射傳輸模型（c = 1，α = σ）"""
    if sigma <= 0:
        raise DomainError(f"sigma must be positive, got {sigma}")

    def _s(u):
        return np.sqrt(4.0 - 3.0 * np.asarray(u, dtype=float) ** 2)

    def _h(u):
        s = _s(u)
        return s / (2.0 + s)

    def _dh(u):
        u = np.asarray(u, dtype=float)
        s = _s(u)
        return -6.0 * u / (s * (2.0 + s) ** 2)

    def _d2h(u):
        u = np.asarray(u, dtype=float)
        s = _s(u)
        q = s * (2.0 + s) ** 2
        return -6.0 / q - 18.0 * u ** 2 * (2.0 + s) * (2.0 + 3.0 * s) / (s * q ** 2)

    def g(u):
        u = np.asarray(u, dtype=float)
        return u ** 2 * _h(u)

    def dg(u):
        u = np.asarray(u, dtype=float)
        return 2.0 * u * _h(u) + u ** 2 * _dh(u)

    def d2g(u):
        u = np.asarray(u, dtype=float)
        return 2.0 * _h(u) + 4.0 * u * _dh(u) + u ** 2 * _d2h(u)

    return ModelClosure(
        name="m1",
        alpha=float(sigma),
        p=lambda v: 1.0 / (3.0 * np.asarray(v, dtype=float)),
        dp=lambda v: -1.0 / (3.0 * np.asarray(v, dtype=float) ** 2),
        d2p=lambda v: 2.0 / (3.0 * np.asarray(v, dtype=float) ** 3),
        d3p=lambda v: -2.0 / np.asarray(v, dtype=float) ** 4,
        d4p=lambda v: 8.0 / np.asarray(v, dtype=float) ** 5,
        g=g,
        dg=dg,
        d2g=d2g,
        f=lambda v: 1.0 / np.asarray(v, dtype=float),
        df=lambda v: -1.0 / np.asarray(v, dtype=float) ** 2,
        v_range=(0.05, 20.0),
        u_range=(-0.99, 0.99),
    )


def gamma_law_closure(gamma: float = 2.0, alpha: float = 1.0) -> ModelClosure:
    """等熵氣體 p(v) = v^{−γ}，g ≡ 0，f ≡ 1"""
    if gamma < 1:
        raise DomainError(f"gamma must be >= 1, got {gamma}")
    if alpha <= 0:
        raise DomainError(f"alpha must be positive, got {alpha}")
    gm = float(gamma)

    def _power(coef, shift):
        return lambda v: coef * np.asarray(v, dtype=float) ** (-gm - shift)

    return ModelClosure(
        name="gamma_law",
        alpha=float(alpha),
        p=_power(1.0, 0),
        dp=_power(-gm, 1),
        d2p=_power(gm * (gm + 1), 2),
        d3p=_power(-gm * (gm + 1) * (gm + 2), 3),
        d4p=_power(gm * (gm + 1) * (gm + 2) * (gm + 3), 4),
        g=_zeros,
        dg=_zeros,
        d2g=_zeros,
        f=_ones,
        df=_zeros,
        v_range=(0.05, 20.0),
        u_range=(-10.0, 10.0),
    )


def linear_closure(alpha: float = 1.0) -> ModelClosure:
    """線性壓力 p(v) = −v，剖面有 erf 解析解"""
    if alpha <= 0:
        raise DomainError(f"alpha must be positive, got {alpha}")
    return ModelClosure(
        name="linear",
        alpha=float(alpha),
        p=lambda v: -np.asarray(v, dtype=float),
        dp=lambda v: -_ones(v),
        d2p=_zeros,
        d3p=_zeros,
        d4p=_zeros,
        g=_zeros,
        dg=_zeros,
        d2g=_zeros,
        f=_ones,
        df=_zeros,
        v_range=(0.05, 20.0),
        u_range=(-10.0, 10.0),
    )


CLOSURES = {
    "m1": lambda params: m1_closure(params.get("sigma", 1.0)),
    "gamma_law": lambda params: gamma_law_closure(params.get("gamma", 2.0), params.get("alpha", 1.0)),
    "linear": lambda params: linear_closure(params.get("alpha", 1.0)),
}


def build_closure(name: str, **params) -> ModelClosure:
    """依名稱建立 closure"""
    if name not in CLOSURES:
        raise DomainError(f"unknown closure '{name}', expected one of {sorted(CLOSURES)}")
    return CLOSURES[name](params)


def eddington_factor(u):
    """χ(u) = (3+4u²)/(5+2√(4−3u²))"""
    u = np.asarray(u, dtype=float)
    if np.any(np.abs(u) > 1.0):
        raise DomainError("eddington factor requires |u| <= 1")
    chi = (3.0 + 4.0 * u ** 2) / (5.0 + 2.0 * np.sqrt(4.0 - 3.0 * u ** 2))
    return chi if chi.ndim else float(chi)


def radiative_pressure_1d(rho, u):
    """一維輻射壓 P = χ(u)ρ"""
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0):
        raise DomainError("radiative energy density must be non-negative")
    pressure = eddington_factor(u) * rho
    return pressure if np.ndim(pressure) else float(pressure)


def _check_box(name: str, box, admissible):
    lo, hi = float(box[0]), float(box[1])
    if lo > hi:
        raise DomainError(f"empty {name} box [{lo}, {hi}]")
    if lo < admissible[0] or hi > admissible[1]:
        raise DomainError(f"{name} box [{lo}, {hi}] leaves the admissible range {list(admissible)}")
    return lo, hi


def discriminant(c: ModelClosure, v, u):
    """特徵方程式 λ² + λg'f + p' − gf' = 0 的判別式"""
    return (c.dg(u) * c.f(v)) ** 2 - 4.0 * (c.dp(v) - c.g(u) * c.df(v))


def check_assumptions(c: ModelClosure, v_box, u_box, n_samples: int = 256) -> AssumptionReport:
    """在 v_box × u_box 上密集取樣檢查雙曲性與符號條件（非嚴格證明）"""
    if n_samples < 2:
        raise DomainError("n_samples must be at least 2 per axis")
    v_lo, v_hi = _check_box("v", v_box, c.v_range)
    u_lo, u_hi = _check_box("u", u_box, c.u_range)

    vv, uu = np.meshgrid(np.linspace(v_lo, v_hi, n_samples), np.linspace(u_lo, u_hi, n_samples))
    disc = discriminant(c, vv, uu)
    sign_field = c.g(uu) * c.df(vv) - c.dp(vv)

    values = [c.p(vv), c.dp(vv), c.d2p(vv), c.g(uu), c.dg(uu), c.d2g(uu), c.f(vv), c.df(vv)]
    finite = all(np.all(np.isfinite(val)) for val in values)
    origin_ok = abs(float(c.g(0.0))) < 1e-14 and abs(float(c.dg(0.0))) < 1e-14

    min_disc = float(np.min(disc))
    min_sign = float(np.min(sign_field))
    report = AssumptionReport(
        hyperbolic_ok=min_disc > 0,
        sign_ok=min_sign > 0,
        smoothness_ok=finite and origin_ok and bool(np.all(c.dp(vv) < 0)),
        min_discriminant=min_disc,
        min_gfprime_minus_pprime=min_sign,
    )
    logger.debug("assumptions on v%s u%s: %s", (v_lo, v_hi), (u_lo, u_hi), report)
    return report


def characteristic_speeds(c: ModelClosure, v, u):
    """通量 (−u, p − gf) 的 Jacobian 特徵值 (λ₋, λ₊)"""
    v = np.asarray(v, dtype=float)
    u = np.asarray(u, dtype=float)
    disc = discriminant(c, v, u)
    if not np.all(disc >= 0):
        shape = np.broadcast(v, u).shape
        disc_b = np.broadcast_to(disc, shape)
        bad = int(np.flatnonzero(~(disc_b >= 0))[0])
        raise HyperbolicityError(
            float(np.broadcast_to(v, shape).flat[bad]),
            float(np.broadcast_to(u, shape).flat[bad]),
            float(disc_b.flat[bad]),
        )
    root = np.sqrt(disc)
    trace = -c.dg(u) * c.f(v)
    lam_minus = 0.5 * (trace - root)
    lam_plus = 0.5 * (trace + root)
    if lam_minus.ndim == 0:
        return float(lam_minus), float(lam_plus)
    return lam_minus, lam_plus


def max_wave_speed(c: ModelClosure, v, u) -> float:
    """所有格點上最大的 |λ|"""
    lam_minus, lam_plus = characteristic_speeds(c, v, u)
    return float(np.max(np.maximum(np.abs(lam_minus), np.abs(lam_plus))))
