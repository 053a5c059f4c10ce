"""錯誤類別與對應的結束碼"""

EXIT_OK = 0
EXIT_CRITERION = 1
EXIT_USAGE = 2
EXIT_NUMERICAL = 3


class DiffwaveError(Exception):
    """所有領域錯誤的基底"""
    exit_code = EXIT_NUMERICAL


class ConfigError(DiffwaveError):
    """設定檔驗證失敗（一次列出所有錯誤）"""
    exit_code = EXIT_USAGE

    def __init__(self, errors: list):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {e}" for e in self.errors))


class DomainError(DiffwaveError, ValueError):
    """參數落在函式定義域之外"""
    exit_code = EXIT_USAGE


class HyperbolicityError(DiffwaveError):
    """特徵速度不再是實數"""

    def __init__(self, v: float, u: float, discriminant: float):
        self.v = v
        self.u = u
        self.discriminant = discriminant
        super().__init__(
            f"loss of hyperbolicity at state (v={v:.6g}, u={u:.6g}): discriminant {discriminant:.3e} < 0"
        )


class ProfileSolveError(DiffwaveError):
    """剖面 Newton 迭代未收斂"""

    def __init__(self, iterations: int, residual: float):
        self.iterations = iterations
        self.residual = residual
        super().__init__(f"profile Newton iteration did not converge after {iterations} steps (residual {residual:.3e})")


class DegenerateWaveError(DiffwaveError, ZeroDivisionError):
    """v₊ = v₋ 時沒有擴散波可用"""
    exit_code = EXIT_USAGE


class ScenarioError(DiffwaveError):
    """初始資料不合法"""
    exit_code = EXIT_USAGE


class BlowUpError(DiffwaveError):
    """時間推進產生 NaN 或非正比容"""

    def __init__(self, cell: int, t: float, reason: str = "non-finite or non-positive v"):
        self.cell = cell
        self.t = t
        super().__init__(f"numerical blow-up in cell {cell} at t={t:.6g}: {reason}")


class FitError(DiffwaveError):
    """衰減率擬合無法進行"""
    exit_code = EXIT_CRITERION
