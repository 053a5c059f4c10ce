import pytest

from closures import gamma_law_closure, linear_closure, m1_closure
from corrections import CorrectionField, make_mollifier
from diffusion_wave import solve_profile


@pytest.fixture(scope="session")
def linear_profile():
    """p(v) = −v，v: 1 → 1.2，有 erf 解析解"""
    return solve_profile(linear_closure(1.0), 1.0, 1.2, 1.0, n_cells=4096)


@pytest.fixture(scope="session")
def m1_profile():
    return solve_profile(m1_closure(1.0), 1.0, 1.2, 1.0, n_cells=2048)


@pytest.fixture(scope="session")
def m1_fine_profile():
    """Richardson 外插的 M1 剖面，供一階積分關係檢查"""
    return solve_profile(m1_closure(1.0), 1.0, 1.2, 1.0, n_cells=4096, richardson=True)


@pytest.fixture(scope="session")
def gamma_profile():
    return solve_profile(gamma_law_closure(2.0, 1.0), 1.0, 1.1, 1.0, n_cells=2048)


@pytest.fixture(scope="session")
def constant_profile():
    return solve_profile(gamma_law_closure(2.0, 1.0), 1.0, 1.0, 1.0, n_cells=256)


@pytest.fixture
def bump_correction():
    return CorrectionField(u_minus=0.0, u_plus=0.05, alpha=1.0, mollifier=make_mollifier("bump"))


@pytest.fixture
def write_config(tmp_path):
    """把 TOML 文字寫入暫存檔並回傳路徑"""
    def _write(text: str, name: str = "run.toml"):
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return path
    return _write
