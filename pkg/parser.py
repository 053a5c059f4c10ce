"""設定檔解析：TOML 文字 → RunConfig（pydantic 驗證，一次列出所有錯誤）"""
import copy
import difflib
import json
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from config import DEFAULT_CFL, DEFAULT_N_CELLS, DEFAULT_PROFILE_CELLS, DEFAULT_PROFILE_TOL, DEFAULT_SAMPLES, DEFAULT_XI_FACTOR, OUTPUT_DIR
from errors import ConfigError
from solver import Perturbation, ScenarioSpec


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ClosureSection(_Section):
    name: Literal["m1", "gamma_law", "linear"] = "m1"
    sigma: float = Field(1.0, gt=0)
    gamma: float = Field(2.0, ge=1)
    alpha: float = Field(1.0, gt=0)

    def params(self) -> dict:
        """建立 closure 所需的參數"""
        if self.name == "m1":
            return {"sigma": self.sigma}
        if self.name == "gamma_law":
            return {"gamma": self.gamma, "alpha": self.alpha}
        return {"alpha": self.alpha}


class PerturbationSection(_Section):
    amplitude: float = 0.0
    u_amplitude: float = 0.0
    shape: Literal["bump", "cosine"] = "bump"
    center: float = 0.0
    width: float = Field(1.0, gt=0)


class ScenarioSection(_Section):
    preset: Optional[str] = None
    v_minus: float = Field(gt=0)
    v_plus: float = Field(gt=0)
    u_minus: float = 0.0
    u_plus: float = 0.0
    profile_shift: float = 0.0
    perturbation: PerturbationSection = PerturbationSection()


class GridSection(_Section):
    n_cells: int = Field(DEFAULT_N_CELLS, ge=16)
    x_max: Optional[float] = Field(None, gt=0)


class TimeSection(_Section):
    end: float = Field(500.0, ge=0)
    cfl: float = DEFAULT_CFL
    samples: int = Field(DEFAULT_SAMPLES, ge=2)
    wall_clock: Optional[float] = Field(None, gt=0)
    lookahead: bool = True

    @field_validator("cfl")
    @classmethod
    def _cfl_range(cls, value: float) -> float:
        if not 0.0 < value < 1.0:
            raise ValueError("cfl must lie in (0,1)")
        return value


class ProfileSection(_Section):
    n_cells: int = Field(DEFAULT_PROFILE_CELLS, ge=64)
    tol: float = Field(DEFAULT_PROFILE_TOL, gt=0)
    xi_factor: float = Field(DEFAULT_XI_FACTOR, ge=8)
    richardson: bool = False


class MollifierSection(_Section):
    shape: Literal["bump", "cosine"] = "bump"
    center: float = 0.0
    half_width: float = Field(1.0, gt=0)


class RatesSection(_Section):
    targets: Literal["improved", "base"] = "improved"
    window: Optional[List[float]] = None

    @field_validator("window")
    @classmethod
    def _window_order(cls, value):
        if value is not None and (len(value) != 2 or not 0 <= value[0] < value[1]):
            raise ValueError("window must be [t_lo, t_hi] with 0 <= t_lo < t_hi")
        return value


class OutputSection(_Section):
    directory: str = OUTPUT_DIR
    svg: bool = True
    xlsx: bool = False


class RunConfig(_Section):
    """完整的執行設定"""
    seed: int = 0
    closure: ClosureSection = ClosureSection()
    scenario: ScenarioSection
    grid: GridSection = GridSection()
    time: TimeSection = TimeSection()
    profile: ProfileSection = ProfileSection()
    mollifier: MollifierSection = MollifierSection()
    rates: RatesSection = RatesSection()
    output: OutputSection = OutputSection()


# 情境預設值（明確寫出的鍵會覆蓋）
PRESETS = {
    "m1-default": {
        "closure": {"name": "m1", "sigma": 1.0},
        "scenario": {
            "v_minus": 1.0, "v_plus": 1.1, "u_minus": 0.0, "u_plus": 0.05,
            "perturbation": {"amplitude": 0.01, "shape": "bump", "center": 0.0, "width": 2.0},
        },
        "grid": {"n_cells": 8192},
        "time": {"end": 500.0},
    },
    "gamma-default": {
        "closure": {"name": "gamma_law", "gamma": 2.0, "alpha": 1.0},
        "scenario": {
            "v_minus": 1.0, "v_plus": 1.1, "u_minus": 0.0, "u_plus": 0.0,
            "perturbation": {"amplitude": 0.01, "shape": "bump", "center": 0.0, "width": 2.0},
        },
        "grid": {"n_cells": 8192},
        "time": {"end": 500.0},
    },
    "constant-state": {
        "closure": {"name": "gamma_law", "gamma": 2.0, "alpha": 1.0},
        "scenario": {"v_minus": 1.0, "v_plus": 1.0, "u_minus": 0.0, "u_plus": 0.0},
        "grid": {"n_cells": 1024},
        "time": {"end": 10.0, "samples": 16},
    },
    "m1-smoke": {
        "closure": {"name": "m1", "sigma": 1.0},
        "scenario": {
            "v_minus": 1.0, "v_plus": 1.1, "u_minus": 0.0, "u_plus": 0.05,
            "perturbation": {"amplitude": 0.01, "shape": "bump", "center": 0.0, "width": 2.0},
        },
        "grid": {"n_cells": 1024},
        "time": {"end": 20.0, "samples": 24},
    },
}


def _deep_merge(base: dict, override: dict) -> dict:
    """override 覆蓋 base（巢狀 dict 逐層合併）"""
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def _unknown_keys(data: dict, model: type, prefix: str = "") -> List[str]:
    """找出未定義的鍵並建議最接近的合法鍵"""
    errors = []
    valid = model.model_fields
    for key, value in data.items():
        path = f"{prefix}{key}"
        if key not in valid:
            guess = difflib.get_close_matches(key, list(valid), n=1)
            hint = f" (did you mean '{prefix}{guess[0]}'?)" if guess else ""
            errors.append(f"unknown key '{path}'{hint}")
            continue
        annotation = valid[key].annotation
        if isinstance(value, dict) and isinstance(annotation, type) and issubclass(annotation, BaseModel):
            errors.extend(_unknown_keys(value, annotation, prefix=f"{path}."))
    return errors


def _expand_shorthand(data: dict, errors: List[str]) -> dict:
    """closure = "m1"、scenario = "m1-default" 的簡寫與預設值展開"""
    data = dict(data)
    if isinstance(data.get("closure"), str):
        data["closure"] = {"name": data["closure"]}
    if isinstance(data.get("scenario"), str):
        data["scenario"] = {"preset": data["scenario"]}

    preset = (data.get("scenario") or {}).get("preset") if isinstance(data.get("scenario"), dict) else None
    if preset is not None:
        if preset not in PRESETS:
            guess = difflib.get_close_matches(str(preset), list(PRESETS), n=1)
            hint = f" (did you mean '{guess[0]}'?)" if guess else ""
            errors.append(f"unknown scenario preset '{preset}'{hint}")
        else:
            data = _deep_merge(PRESETS[preset], data)
    return data


def _format_error(error: dict) -> str:
    path = ".".join(str(part) for part in error["loc"])
    if error["type"] == "missing":
        return f"missing required key '{path}'"
    message = error["msg"]
    if message.startswith("Value error, "):
        message = message[len("Value error, "):]
    return f"{path}: {message}"


def parse_config(text: str) -> RunConfig:
    """解析並驗證設定文字；錯誤全部收集後一次拋出 ConfigError"""
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([f"syntax error: {exc}"]) from exc

    errors: List[str] = []
    data = _expand_shorthand(data, errors)
    errors.extend(_unknown_keys(data, RunConfig))
    try:
        cfg = RunConfig.model_validate(data)
    except ValidationError as exc:
        errors.extend(_format_error(e) for e in exc.errors() if e["type"] != "extra_forbidden")
        raise ConfigError(errors) from None
    if errors:
        raise ConfigError(errors)
    return cfg


def load_config(path) -> RunConfig:
    """讀取設定檔"""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError([f"cannot read config file {path}: {exc.strerror}"]) from exc
    return parse_config(text)


def _toml_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return repr(value)
    if isinstance(value, str):
        return json.dumps(value, ensure_ascii=False)
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    raise TypeError(f"cannot serialize {type(value).__name__}")


def _emit_table(lines: List[str], name: str, table: dict):
    scalars = {k: v for k, v in table.items() if not isinstance(v, dict) and v is not None}
    nested = {k: v for k, v in table.items() if isinstance(v, dict)}
    lines.append(f"[{name}]")
    for key, value in scalars.items():
        lines.append(f"{key} = {_toml_value(value)}")
    lines.append("")
    for key, value in nested.items():
        _emit_table(lines, f"{name}.{key}", value)


def serialize_config(cfg: RunConfig) -> str:
    """RunConfig → TOML 文字，parse_config 可還原"""
    data = cfg.model_dump()
    lines = [f"seed = {data.pop('seed')}", ""]
    for section, table in data.items():
        _emit_table(lines, section, table)
    return "\n".join(lines)


def to_scenario(cfg: RunConfig) -> ScenarioSpec:
    """RunConfig → ScenarioSpec"""
    sc = cfg.scenario
    pert = sc.perturbation
    return ScenarioSpec(
        closure_name=cfg.closure.name,
        closure_params=cfg.closure.params(),
        v_minus=sc.v_minus,
        v_plus=sc.v_plus,
        u_minus=sc.u_minus,
        u_plus=sc.u_plus,
        perturbation=Perturbation(
            amplitude=pert.amplitude,
            u_amplitude=pert.u_amplitude,
            shape=pert.shape,
            center=pert.center,
            width=pert.width,
        ),
        x_max=cfg.grid.x_max,
        n_cells=cfg.grid.n_cells,
        end_time=cfg.time.end,
        cfl=cfg.time.cfl,
        samples=cfg.time.samples,
        wall_clock=cfg.time.wall_clock,
        mollifier_shape=cfg.mollifier.shape,
        mollifier_center=cfg.mollifier.center,
        mollifier_half_width=cfg.mollifier.half_width,
        profile_cells=cfg.profile.n_cells,
        profile_tol=cfg.profile.tol,
        profile_xi_factor=cfg.profile.xi_factor,
        profile_richardson=cfg.profile.richardson,
        profile_shift=sc.profile_shift,
        lookahead=cfg.time.lookahead,
    )
