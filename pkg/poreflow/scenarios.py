from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

import numpy as np

from .errors import ConfigError
from .geometry import GeneratingCurve, ReferenceMesh, build_mesh


def annulus(mesh: ReferenceMesh, inner_radius: float = 1.0, outer_radius: float = 2.0) -> GeneratingCurve:
    if not 0.0 < inner_radius < outer_radius:
        raise ConfigError(
            f"annulus needs 0 < inner_radius < outer_radius, got {inner_radius}, {outer_radius}",
            key="inner_radius",
        )
    width = outer_radius - inner_radius
    return GeneratingCurve.from_function(mesh, lambda a: (inner_radius + width * a, np.zeros_like(a)))


def spherical_cap(mesh: ReferenceMesh, cap_length: float = 0.9 * math.pi, sphere_radius: float = 1.0) -> GeneratingCurve:
    """X = R (sin(s/R), -cos(s/R)) for s in [0, cap_length], pole at alpha = 0."""
    if sphere_radius <= 0.0:
        raise ConfigError("sphere_radius must be positive", key="sphere_radius")
    if not 0.0 < cap_length / sphere_radius < math.pi:
        raise ConfigError("cap_length / sphere_radius must lie in (0, pi)", key="cap_length")

    def fn(alpha: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        angle = alpha * cap_length / sphere_radius
        return sphere_radius * np.sin(angle), -sphere_radius * np.cos(angle)

    return GeneratingCurve.from_function(mesh, fn, axis_ends=("start",))


def flat_disk(mesh: ReferenceMesh, disk_radius: float = 2.0) -> GeneratingCurve:
    if disk_radius <= 0.0:
        raise ConfigError("disk_radius must be positive", key="disk_radius")
    return GeneratingCurve.from_function(mesh, lambda a: (disk_radius * a, np.zeros_like(a)), axis_ends=("start",))


def biconcave(mesh: ReferenceMesh) -> GeneratingCurve:
    """Red-cell profile with a small pore at the top, axis at alpha = 0."""

    def fn(alpha: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        eta = 0.475 * (1.0 - np.cos(np.pi * alpha))
        u = 2.0 * eta - 1.0
        r = 2.0 * np.sqrt(np.clip(eta * (1.0 - eta), 0.0, None))
        z = 0.7 * u - 0.6 * u**3 + 0.05 * u**5
        return r, z

    return GeneratingCurve.from_function(mesh, fn, axis_ends=("start",))


def cup(mesh: ReferenceMesh, area: float = 27.61, cap_angle: float = 0.7 * math.pi) -> GeneratingCurve:
    """Spherical cup of opening ``cap_angle`` scaled so its area equals ``area``."""
    if area <= 0.0:
        raise ConfigError("area must be positive", key="area")
    if not 0.0 < cap_angle < math.pi:
        raise ConfigError("cap_angle must lie in (0, pi)", key="cap_angle")
    radius = math.sqrt(area / (2.0 * math.pi * (1.0 - math.cos(cap_angle))))
    return spherical_cap(mesh, cap_length=cap_angle * radius, sphere_radius=radius)


@dataclass(frozen=True)
class Scenario:
    name: str
    builder: Callable[..., GeneratingCurve]
    refine_at: str
    defaults: dict[str, float] = field(default_factory=dict)
    exact_area: Callable[..., float] | None = None

    def resolve(self, params: Mapping[str, Any]) -> dict[str, float]:
        unknown = set(params) - set(self.defaults)
        if unknown:
            key = sorted(unknown)[0]
            raise ConfigError(f"parameter not used by scenario '{self.name}'", key=key)
        merged = dict(self.defaults)
        merged.update({k: float(v) for k, v in params.items()})
        return merged


SCENARIOS: dict[str, Scenario] = {
    "annulus": Scenario(
        name="annulus",
        builder=annulus,
        refine_at="both",
        defaults={"inner_radius": 1.0, "outer_radius": 2.0},
        exact_area=lambda inner_radius, outer_radius: math.pi * (outer_radius**2 - inner_radius**2),
    ),
    "spherical_cap": Scenario(
        name="spherical_cap",
        builder=spherical_cap,
        refine_at="end",
        defaults={"cap_length": 0.9 * math.pi, "sphere_radius": 1.0},
        exact_area=lambda cap_length, sphere_radius: 2.0
        * math.pi
        * sphere_radius**2
        * (1.0 - math.cos(cap_length / sphere_radius)),
    ),
    "flat_disk": Scenario(
        name="flat_disk",
        builder=flat_disk,
        refine_at="end",
        defaults={"disk_radius": 2.0},
        exact_area=lambda disk_radius: math.pi * disk_radius**2,
    ),
    "biconcave": Scenario(name="biconcave", builder=biconcave, refine_at="end"),
    "cup": Scenario(
        name="cup",
        builder=cup,
        refine_at="end",
        defaults={"area": 27.61, "cap_angle": 0.7 * math.pi},
        exact_area=lambda area, cap_angle: area,
    ),
}


@dataclass(frozen=True)
class EquilibriumPreset:
    gamma_g: float
    H0: float
    gamma_l: float
    area: float


# equilibrium-shape cases with L = 1 um, so c0 and the reduced line tension carry over directly
EQUILIBRIUM_PRESETS: dict[str, EquilibriumPreset] = {
    "equilibrium_1": EquilibriumPreset(gamma_g=-0.122, H0=0.2, gamma_l=0.65, area=27.61),
    "equilibrium_2": EquilibriumPreset(gamma_g=-0.122, H0=0.2, gamma_l=0.78, area=23.15),
    "equilibrium_3": EquilibriumPreset(gamma_g=-0.122, H0=0.2, gamma_l=0.79, area=18.42),
}


def get_scenario(name: str) -> Scenario:
    try:
        return SCENARIOS[name]
    except KeyError:
        raise ConfigError(f"unknown scenario '{name}'; choose one of {sorted(SCENARIOS)}", key="scenario") from None


def initial_shape(
    name: str,
    params: Mapping[str, Any] | None = None,
    mesh: ReferenceMesh | None = None,
    N: int = 32,
    epsilon: float = 1e-3,
    refine_at: str | None = None,
) -> GeneratingCurve:
    """P2 interpolant of the named closed-form shape on a graded mesh."""
    scenario = get_scenario(name)
    values = scenario.resolve(params or {})
    if mesh is None:
        mesh = build_mesh(N, epsilon, refine_at or scenario.refine_at)
    return scenario.builder(mesh, **values)


def exact_area(name: str, params: Mapping[str, Any] | None = None) -> float | None:
    scenario = get_scenario(name)
    if scenario.exact_area is None:
        return None
    return scenario.exact_area(**scenario.resolve(params or {}))
