from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .errors import DomainError, GeometryError
from .fem import cell_geometry
from .geometry import GeneratingCurve, curvatures

if TYPE_CHECKING:
    from .solver import SimParams, SystemState

logger = logging.getLogger("poreflow.diagnostics")

ENERGY_GAUSS_POINTS = 6
PLANAR_TOL = 1e-8


@dataclass(frozen=True)
class EnergyParts:
    bending: float
    gaussian: float
    line: float

    @property
    def total(self) -> float:
        return self.bending + self.gaussian + self.line


def curve_energy(curve: GeneratingCurve, H0: float, gamma_g: float, gamma_l: float) -> EnergyParts:
    """Helfrich energy of the surface of revolution with curvatures taken from the curve."""
    geo = cell_geometry(curve, ENERGY_GAUSS_POINTS)
    H, K = curvatures(curve, geo.alpha.ravel())
    measure = 2.0 * math.pi * geo.measure.ravel()
    edge_length = sum(2.0 * math.pi * curve.endpoint(end)[0] for end in curve.open_ends)
    return EnergyParts(
        bending=float(measure @ (H - H0) ** 2),
        gaussian=float(gamma_g * (measure @ K)),
        line=float(gamma_l * edge_length),
    )


def total_energy(state: "SystemState", params: "SimParams") -> EnergyParts:
    parts = curve_energy(state.curve, params.H0, params.gamma_g, params.gamma_l)
    if not params.bending:
        return EnergyParts(bending=0.0, gaussian=0.0, line=parts.line)
    return parts


def curve_area(curve: GeneratingCurve, gauss_points: int = ENERGY_GAUSS_POINTS) -> float:
    geo = cell_geometry(curve, gauss_points)
    return float(2.0 * math.pi * geo.measure.sum())


def area(state: "SystemState") -> float:
    return curve_area(state.curve)


def hole_radius(state: "SystemState") -> dict[str, float]:
    """X^r at each open-edge dof."""
    curve = state.curve
    return {end: float(curve.endpoint(end)[0]) for end in curve.open_ends}


def hole_area(state: "SystemState", reference_radius: float, end: str = "start") -> float:
    """pi r_edge^2 normalized by pi R_ref^2."""
    radius = hole_radius(state).get(end)
    if radius is None:
        raise GeometryError(f"no open edge at '{end}'")
    return (radius / reference_radius) ** 2


def _annular_samples(state: "SystemState") -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    curve = state.base
    geo = cell_geometry(curve, ENERGY_GAUSS_POINTS)
    z = curve.xz
    if np.ptp(z) > PLANAR_TOL * max(1.0, float(np.max(np.abs(curve.xr)))):
        logger.warning("F estimate requested for a non-planar state (z spread %.3e)", float(np.ptp(z)))
    r = geo.xr.ravel()
    dr = (geo.weights * geo.jac).ravel()
    ur = state.U.evaluate(geo.alpha.ravel())[0]
    return r, dr, ur


def f_estimate(state: "SystemState") -> float:
    """Ratio of int r^2 U^r dr to int r dr over the annulus."""
    r, dr, ur = _annular_samples(state)
    return float((dr @ (r * r * ur)) / (dr @ r))


def velocity_error(state: "SystemState", F: float | None = None) -> float:
    """Weighted L2 deviation of U^r from F / r."""
    r, dr, ur = _annular_samples(state)
    if F is None:
        F = float((dr @ (r * r * ur)) / (dr @ r))
    return float(math.sqrt(dr @ (r * (ur - F / r) ** 2)))


def radial_flux_spread(state: "SystemState") -> float:
    """std / mean of r U^r over the velocity dofs of a planar state."""
    r = state.base.xr
    flux = r * state.U.component(0)
    mean = float(np.mean(flux))
    if mean == 0.0:
        return math.inf if np.any(flux) else 0.0
    return float(np.std(flux) / abs(mean))


@dataclass(frozen=True)
class NondimensionalParams:
    beta: float
    gamma_g: float
    gamma_l: float
    H0: float
    time_scale: float


def nondimensionalize(
    L: float,
    mu: float,
    mu_gamma: float,
    gamma: float,
    alpha: float,
    alpha_g: float = 0.0,
    c0: float = 0.0,
) -> NondimensionalParams:
    if L <= 0.0 or mu <= 0.0 or alpha <= 0.0:
        raise DomainError(f"L, mu and alpha must be positive (got {L}, {mu}, {alpha})")
    if mu_gamma < 0.0:
        raise DomainError("membrane viscosity must be non-negative")
    return NondimensionalParams(
        beta=mu_gamma / (L * mu),
        gamma_g=alpha_g / alpha,
        gamma_l=gamma * L / alpha,
        H0=L * c0,
        time_scale=L**3 * mu / alpha,
    )


def line_tension_time(mu: float, radius: float, gamma: float) -> float:
    """Relaxation time mu R^2 / gamma of a pore of radius R."""
    if mu <= 0.0 or radius <= 0.0 or gamma <= 0.0:
        raise DomainError("mu, radius and gamma must be positive")
    return mu * radius**2 / gamma


def boundary_layer_width(state: "SystemState", end: str = "end", fraction: float = 0.9) -> float:
    """Arc length from the edge over which H climbs from its edge value to its plateau.

    The plateau is the median of H on the half of the curve away from the edge; the width
    is measured to the first dof where |H - H_edge| reaches ``fraction`` of the jump.
    """
    curve = state.curve
    s = curve.dof_arc_length()
    H = state.H.component(0)
    if end == "start":
        s = s[-1] - s[::-1]
        H = H[::-1]
    s_edge = s[-1]
    distance = s_edge - s
    h_edge = H[-1]
    plateau = float(np.median(H[distance >= 0.5 * s_edge]))
    jump = plateau - h_edge
    if abs(jump) < 1e-12:
        return 0.0
    progress = (H - h_edge) / jump
    for i in range(len(H) - 1, 0, -1):
        if progress[i - 1] >= fraction:
            p0, p1 = progress[i - 1], progress[i]
            w = (fraction - p1) / (p0 - p1) if p0 != p1 else 0.0
            return float(distance[i] + w * (distance[i - 1] - distance[i]))
    return float(distance[0])


@dataclass(frozen=True)
class EdgeProfile:
    values: np.ndarray
    sign_changes: int
    monotone: bool
    max_abs: float


def density_edge_profile(state: "SystemState", count: int = 5, end: str = "end") -> EdgeProfile:
    """Last ``count`` vertex values of xi^r approaching an open edge, edge value last."""
    xi_r = state.xi.component(0)[0::2]
    tail = xi_r[-count:] if end == "end" else xi_r[:count][::-1]
    signs = np.sign(tail[tail != 0.0])
    changes = int(np.count_nonzero(np.diff(signs)))
    steps = np.diff(np.abs(tail))
    monotone = changes == 0 and bool(np.all(steps >= 0.0) or np.all(steps <= 0.0))
    return EdgeProfile(values=tail.copy(), sign_changes=changes, monotone=monotone, max_abs=float(np.max(np.abs(tail))))
