from __future__ import annotations

import json
import re
import typing
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any

from .errors import ConfigError, DomainError
from .geometry import REFINE_CHOICES, GeneratingCurve, build_mesh
from .quadrature import QuadratureSettings
from .scenarios import EQUILIBRIUM_PRESETS, get_scenario, initial_shape
from .solver import SimParams

SHAPE_KEYS = ("inner_radius", "outer_radius", "cap_length", "sphere_radius", "disk_radius", "area", "cap_angle")
QUADRATURE_KEYS = ("gauss_points", "alpert_order", "alpert_panels", "far_points", "near_ratio")


@dataclass
class SimConfig:
    scenario: str = "annulus"
    preset: str | None = None
    inner_radius: float | None = None
    outer_radius: float | None = None
    cap_length: float | None = None
    sphere_radius: float | None = None
    disk_radius: float | None = None
    area: float | None = None
    cap_angle: float | None = None
    beta: float = 1.0
    gamma_g: float = 0.0
    gamma_l: float = 0.0
    H0: float = 0.0
    bending: bool = True
    area_correction: bool = True
    dt: float = 0.01
    t_end: float = 1.0
    stop_tol: float = 1e-6
    min_hole_radius: float | None = None
    max_steps: int | None = None
    N: int = 32
    epsilon: float = 1e-3
    refine_at: str | None = None
    gauss_points: int = 4
    alpert_order: int = 8
    alpert_panels: int = 2
    far_points: int = 8
    near_ratio: float = 1.0
    output_dir: str = "output"
    snapshot_every: int = 1
    deterministic: bool = True

    @classmethod
    def from_dict(cls, values: dict[str, Any]) -> "SimConfig":
        known = {key: values[key] for key in cls.__dataclass_fields__ if key in values}
        return cls(**known)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def shape_params(self) -> dict[str, float]:
        return {key: getattr(self, key) for key in SHAPE_KEYS if getattr(self, key) is not None}

    def quadrature(self) -> QuadratureSettings:
        return QuadratureSettings(**{key: getattr(self, key) for key in QUADRATURE_KEYS})

    def sim_params(self) -> SimParams:
        return SimParams(
            beta=self.beta,
            gamma_g=self.gamma_g,
            gamma_l=self.gamma_l,
            H0=self.H0,
            dt=self.dt,
            N=self.N,
            epsilon=self.epsilon,
            stop_tol=self.stop_tol,
            t_end=self.t_end,
            min_hole_radius=self.min_hole_radius,
            bending=self.bending,
            area_correction=self.area_correction,
            max_steps=self.max_steps,
            quadrature=self.quadrature(),
        )

    def initial_curve(self) -> GeneratingCurve:
        refine_at = self.refine_at or get_scenario(self.scenario).refine_at
        mesh = build_mesh(self.N, self.epsilon, refine_at)
        return initial_shape(self.scenario, self.shape_params(), mesh=mesh)


def apply_preset(values: dict[str, Any]) -> dict[str, Any]:
    """Fill scenario, area and material ratios from a named equilibrium preset; explicit keys win."""
    name = values.get("preset")
    if name is None:
        return dict(values)
    if name not in EQUILIBRIUM_PRESETS:
        raise ConfigError(f"unknown preset '{name}'; choose one of {sorted(EQUILIBRIUM_PRESETS)}", key="preset")
    case = EQUILIBRIUM_PRESETS[name]
    merged: dict[str, Any] = {
        "scenario": "cup",
        "area": case.area,
        "gamma_g": case.gamma_g,
        "H0": case.H0,
        "gamma_l": case.gamma_l,
    }
    merged.update(values)
    return merged


def _accepts(hint: Any, value: Any) -> bool:
    if value is None:
        return type(None) in typing.get_args(hint)
    options = typing.get_args(hint) or (hint,)
    for option in options:
        if option is bool and isinstance(value, bool):
            return True
        if option is int and isinstance(value, int) and not isinstance(value, bool):
            return True
        if option is float and isinstance(value, (int, float)) and not isinstance(value, bool):
            return True
        if option is str and isinstance(value, str):
            return True
    return False


def _line_of(text: str, key: str) -> int | None:
    match = re.search(rf'"{re.escape(key)}"\s*:', text)
    if match is None:
        return None
    return text.count("\n", 0, match.start()) + 1


def _check_invariants(config: SimConfig) -> None:
    checks = [
        ("dt", config.dt > 0.0, "dt must be positive"),
        ("t_end", config.t_end > 0.0, "t_end must be positive"),
        ("N", config.N >= 4, "N must be at least 4"),
        ("beta", config.beta >= 0.0, "beta must be non-negative"),
        ("stop_tol", config.stop_tol > 0.0, "stop_tol must be positive"),
        ("epsilon", 0.0 <= config.epsilon <= 1.0, "epsilon must lie in [0, 1]"),
        ("snapshot_every", config.snapshot_every >= 1, "snapshot_every must be >= 1"),
        ("deterministic", config.deterministic, "the pipeline is always deterministic"),
        ("refine_at", config.refine_at is None or config.refine_at in REFINE_CHOICES, f"refine_at must be one of {REFINE_CHOICES}"),
        ("max_steps", config.max_steps is None or config.max_steps >= 1, "max_steps must be >= 1"),
        ("min_hole_radius", config.min_hole_radius is None or config.min_hole_radius >= 0.0, "min_hole_radius must be non-negative"),
    ]
    for key, ok, message in checks:
        if not ok:
            raise ConfigError(message, key=key)


def validate_config(config: SimConfig) -> SimConfig:
    """Build every derived object once so invalid values surface before a run starts."""
    _check_invariants(config)
    get_scenario(config.scenario)
    try:
        config.sim_params()
    except DomainError as exc:
        raise ConfigError(str(exc)) from exc
    config.initial_curve()
    return config


def config_from_mapping(values: dict[str, Any], text: str | None = None) -> SimConfig:
    """Typed, validated SimConfig from a mapping; ``text`` lets errors carry the source line."""
    hints = typing.get_type_hints(SimConfig)

    def fail(message: str, key: str | None) -> ConfigError:
        line = _line_of(text, key) if text is not None and key is not None else None
        return ConfigError(message, key=key, line=line)

    for key, value in values.items():
        if key not in hints:
            raise fail("unknown configuration key", key)
        if not _accepts(hints[key], value):
            raise fail(f"expected {hints[key]}, got {type(value).__name__}", key)
    try:
        merged = apply_preset(values)
        return validate_config(SimConfig.from_dict(merged))
    except ConfigError as exc:
        raise fail(exc.reason, exc.key) from exc


def parse_config(path: str | Path) -> SimConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc.msg}", line=exc.lineno) from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must contain a JSON object")
    return config_from_mapping(data, text)


def save_config(config: SimConfig, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(config.to_dict(), ensure_ascii=False, indent=2),
        encoding="utf-8",
    )
