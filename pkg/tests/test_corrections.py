from dataclasses import replace

import numpy as np
import pytest
from scipy.integrate import quad, trapezoid

from corrections import (
    CorrectionField,
    compute_shift_x0,
    correction_decay,
    eval_uhat,
    eval_vhat,
    make_mollifier,
    raw_integral,
    template_values,
    verify_correction_system,
)
from diffusion_wave import eval_vbar
from errors import DegenerateWaveError, DomainError
from solver import Perturbation


def test_raw_template_integrals():
    assert raw_integral("bump") == pytest.approx(0.4439938161680794, rel=1e-10)
    # ∫cos²(πs/2) ds over [−1, 1]
    assert raw_integral("cosine") == pytest.approx(1.0, rel=1e-12)


@pytest.mark.parametrize("shape", ["bump", "cosine"])
@pytest.mark.parametrize("center,half_width", [(0.0, 1.0), (1.5, 2.5), (-3.0, 0.4)])
def test_mollifier_has_unit_mass(shape, center, half_width):
    m = make_mollifier(shape, center, half_width)
    lo, hi = m.support
    total, _ = quad(lambda x: m(x), lo, hi, epsabs=1e-13, epsrel=1e-13, limit=200)
    assert total == pytest.approx(1.0, abs=1e-10)
    assert m.cumulative(center) == pytest.approx(0.5, abs=1e-9)
    assert m.cumulative(lo - 1.0) == 0.0
    assert m.cumulative(hi + 1.0) == 1.0


def test_mollifier_vanishes_outside_support():
    m = make_mollifier("bump", 0.5, 2.0)
    eps = 1e-9
    assert m(2.5 + eps) == 0.0
    assert m(-1.5 - eps) == 0.0
    assert m(2.5 + eps, order=2) == 0.0
    assert m(0.5) == pytest.approx(np.exp(-1.0) / raw_integral("bump") / 2.0)


def test_mollifier_derivative_matches_finite_difference():
    m = make_mollifier("cosine", 0.0, 1.5)
    x, h = 0.4, 1e-6
    assert m(x, order=1) == pytest.approx((m(x + h) - m(x - h)) / (2 * h), rel=1e-7)
    assert m(x, order=2) == pytest.approx((m(x + h, 1) - m(x - h, 1)) / (2 * h), rel=1e-6)


def test_mollifier_argument_errors():
    with pytest.raises(DomainError):
        make_mollifier("triangle")
    with pytest.raises(DomainError):
        make_mollifier("bump", half_width=0.0)
    with pytest.raises(DomainError):
        make_mollifier("bump")(0.0, order=3)
    with pytest.raises(DomainError):
        template_values("triangle", 0.0)


def test_vhat_vanishes_without_velocity_jump():
    corr = CorrectionField(0.2, 0.2, 1.0, make_mollifier("bump"))
    x = np.linspace(-3.0, 3.0, 61)
    assert np.all(eval_vhat(corr, x, 0.7) == 0.0)
    assert corr.mass == 0.0


def test_vhat_at_center():
    corr = CorrectionField(0.0, 0.1, 1.0, make_mollifier("bump"))
    m = corr.mollifier
    assert eval_vhat(corr, 0.0, 0.0) == pytest.approx(-0.1 * m(0.0), rel=1e-14)


def test_vhat_bound_for_large_time():
    corr = CorrectionField(-0.1, 0.2, 2.0, make_mollifier("cosine", 0.0, 0.5))
    x = np.linspace(-1.0, 1.0, 401)
    peak = np.max(corr.mollifier(x))
    for t in (1.0, 5.0, 20.0):
        bound = 0.3 * peak * np.exp(-2.0 * t) / 2.0
        assert np.max(np.abs(eval_vhat(corr, x, t))) <= bound * (1 + 1e-12)


def test_uhat_far_field_and_center():
    corr = CorrectionField(-0.05, 0.15, 1.5, make_mollifier("bump", 1.0, 0.5))
    t = 0.8
    decay = np.exp(-1.5 * t)
    assert eval_uhat(corr, -4.0, t) == pytest.approx(-0.05 * decay, rel=1e-14)
    assert eval_uhat(corr, 6.0, t) == pytest.approx(0.15 * decay, rel=1e-14)
    assert eval_uhat(corr, 1.0, t) == pytest.approx(decay * 0.05, abs=1e-10)
    with pytest.raises(DomainError):
        eval_uhat(corr, 0.0, t, dx_order=4)
    with pytest.raises(DomainError):
        eval_uhat(corr, 0.0, -1.0)


def test_correction_system_identity():
    corr = CorrectionField(0.1, -0.3, 0.7, make_mollifier("cosine", 0.5, 1.2))
    grid = np.linspace(-3.0, 3.0, 601)
    assert verify_correction_system(corr, grid, 0.0) < 1e-12
    same = CorrectionField(0.1, 0.1, 0.7, make_mollifier("bump"))
    assert verify_correction_system(same, grid, 2.0) < 1e-15


def test_correction_system_randomized():
    """隨機參數下兩條恆等式都應只剩捨入誤差"""
    rng = np.random.default_rng(7)
    for _ in range(100):
        u_minus, u_plus = rng.uniform(-0.5, 0.5, size=2)
        center = rng.uniform(-2.0, 2.0)
        half_width = rng.uniform(0.5, 3.0)
        shape = ("bump", "cosine")[int(rng.integers(2))]
        corr = CorrectionField(float(u_minus), float(u_plus), float(rng.uniform(0.2, 3.0)),
                               make_mollifier(shape, center, half_width))
        grid = np.linspace(center - 2.0 * half_width, center + 2.0 * half_width, 401)
        assert verify_correction_system(corr, grid, float(rng.uniform(0.0, 5.0))) < 1e-12


@pytest.fixture(scope="module")
def shift_grid():
    return np.linspace(-60.0, 60.0, 24001)


def test_shift_vanishes_for_exact_data(gamma_profile, bump_correction, shift_grid):
    x = shift_grid
    v0 = eval_vbar(gamma_profile, x, 0.0) + eval_vhat(bump_correction, x, 0.0)
    assert compute_shift_x0(v0, x, gamma_profile, bump_correction) == pytest.approx(0.0, abs=1e-10)


def test_shift_recovers_translation(gamma_profile, bump_correction, shift_grid):
    x = shift_grid
    a = 0.6
    v0 = eval_vbar(gamma_profile, x - a, 0.0) + eval_vhat(bump_correction, x, 0.0)
    assert compute_shift_x0(v0, x, gamma_profile, bump_correction) == pytest.approx(-a, abs=1e-8)


def test_shift_from_added_mass(gamma_profile, bump_correction, shift_grid):
    x = shift_grid
    bump = Perturbation(amplitude=0.01, width=2.0).values(x, 0.01)
    mass = trapezoid(bump, x=x)
    v0 = eval_vbar(gamma_profile, x, 0.0) + eval_vhat(bump_correction, x, 0.0) + bump
    expected = mass / (gamma_profile.v_plus - gamma_profile.v_minus)
    assert compute_shift_x0(v0, x, gamma_profile, bump_correction) == pytest.approx(expected, abs=1e-9)


def test_shift_requires_a_wave(constant_profile, bump_correction):
    x = np.linspace(-10.0, 10.0, 101)
    with pytest.raises(DegenerateWaveError):
        compute_shift_x0(np.ones_like(x), x, constant_profile, bump_correction)
    with pytest.raises(ZeroDivisionError):
        compute_shift_x0(np.ones_like(x), x, constant_profile, bump_correction)


def test_correction_decay_is_exponential(bump_correction):
    x = np.linspace(-2.0, 2.0, 201)
    values = correction_decay(bump_correction, 0, 0, [0.0, 1.0, 2.0], x)
    assert values[1] / values[0] == pytest.approx(np.exp(-1.0), rel=1e-12)
    assert values[2] / values[0] == pytest.approx(np.exp(-2.0), rel=1e-12)
    velocity = correction_decay(bump_correction, 1, 0, [0.0, 1.0], x, which="uhat")
    assert velocity[1] / velocity[0] == pytest.approx(np.exp(-1.0), rel=1e-12)


def test_shift_integrates_correction_on_grid(gamma_profile, bump_correction, shift_grid):
    x = shift_grid
    v0 = eval_vbar(gamma_profile, x, 0.0) + eval_vhat(bump_correction, x, 0.0)
    m = bump_correction.mollifier
    half_mass = CorrectionField(
        bump_correction.u_minus, bump_correction.u_plus, bump_correction.alpha,
        replace(m, normalization=0.5 * m.normalization),
    )
    # ∫v̂ 只剩 −0.025，多出的 −0.025 要由平移吸收
    assert compute_shift_x0(v0, x, gamma_profile, half_mass) == pytest.approx(-0.25, abs=1e-9)


@pytest.mark.parametrize("shape", ["bump", "cosine"])
def test_mollifier_grid_quadrature_is_unit(shape, shift_grid):
    m = make_mollifier(shape)
    assert trapezoid(m(shift_grid), x=shift_grid) == pytest.approx(1.0, abs=1e-12)
