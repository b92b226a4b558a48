from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import AxisSingularityError, ConfigError, DomainError, GeometryError
from .fem import ENDS, locate, p2_shape
from .quadrature import gauss_rule

REFINE_CHOICES = ("start", "end", "both", "none")
AXIS_TOL = 1e-12
JACOBIAN_TOL = 1e-12


def _phi(eta):
    return np.cos(0.5 * np.pi * (1.0 - eta))


def graded_map(eta, epsilon: float, refine_at: str = "end"):
    """Regularized grading map (1 - eps) Phi(eta) + eps eta, clustering at ``refine_at``."""
    eta_arr = np.asarray(eta, dtype=float)
    if np.any(eta_arr < 0.0) or np.any(eta_arr > 1.0) or not np.all(np.isfinite(eta_arr)):
        raise DomainError(f"eta must lie in [0, 1], got {eta}")
    if not 0.0 <= epsilon <= 1.0:
        raise DomainError(f"epsilon must lie in [0, 1], got {epsilon}")
    if refine_at not in REFINE_CHOICES:
        raise DomainError(f"refine_at must be one of {REFINE_CHOICES}, got '{refine_at}'")

    if refine_at == "end":
        base = _phi(eta_arr)
    elif refine_at == "start":
        base = 1.0 - _phi(1.0 - eta_arr)
    elif refine_at == "both":
        lower = 0.5 * (1.0 - _phi(1.0 - 2.0 * np.minimum(eta_arr, 0.5)))
        upper = 0.5 + 0.5 * _phi(2.0 * np.maximum(eta_arr, 0.5) - 1.0)
        base = np.where(eta_arr <= 0.5, lower, upper)
    else:
        base = eta_arr
    alpha = (1.0 - epsilon) * base + epsilon * eta_arr
    # pin the endpoints against rounding in cos
    alpha = np.where(eta_arr == 0.0, 0.0, np.where(eta_arr == 1.0, 1.0, alpha))
    return float(alpha) if np.ndim(eta) == 0 else alpha


@dataclass(frozen=True, eq=False)
class ReferenceMesh:
    nodes: np.ndarray
    refinement_ends: str
    epsilon: float

    @property
    def n_cells(self) -> int:
        return len(self.nodes) - 1

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.nodes)


def build_mesh(N: int, epsilon: float = 1e-3, refine_at: str = "end") -> ReferenceMesh:
    if N < 2:
        raise ConfigError(f"a mesh needs at least 2 cells, got {N}", key="N")
    if refine_at not in REFINE_CHOICES:
        raise ConfigError(f"refine_at must be one of {REFINE_CHOICES}", key="refine_at")
    if not 0.0 <= epsilon <= 1.0:
        raise ConfigError("epsilon must lie in [0, 1]", key="epsilon")
    nodes = graded_map(np.arange(N + 1) / N, epsilon, refine_at)
    if np.any(np.diff(nodes) <= 0.0):
        raise ConfigError("grading produced coincident nodes; increase epsilon or reduce N", key="epsilon")
    nodes.setflags(write=False)
    return ReferenceMesh(nodes=nodes, refinement_ends=refine_at, epsilon=float(epsilon))


def p2_dof_alpha(mesh: ReferenceMesh) -> np.ndarray:
    out = np.empty(2 * mesh.n_cells + 1)
    out[0::2] = mesh.nodes
    out[1::2] = 0.5 * (mesh.nodes[:-1] + mesh.nodes[1:])
    return out


@dataclass(frozen=True, eq=False)
class GeneratingCurve:
    """P2 generating curve X(alpha) = (X^r, X^z) over a reference mesh.

    ``axis_ends`` lists the endpoints lying on the symmetry axis; all other endpoints are
    open edges of the membrane.
    """

    mesh: ReferenceMesh
    xr: np.ndarray
    xz: np.ndarray
    axis_ends: tuple[str, ...] = field(default=())

    def __post_init__(self) -> None:
        n = 2 * self.mesh.n_cells + 1
        if self.xr.shape != (n,) or self.xz.shape != (n,):
            raise GeometryError(f"curve needs {n} P2 coefficients per component")
        for end in self.axis_ends:
            if end not in ENDS:
                raise GeometryError(f"unknown axis endpoint '{end}'")
            if self.xr[0 if end == "start" else -1] != 0.0:
                raise GeometryError(f"radial coefficient at axis endpoint '{end}' must be exactly 0")

    @classmethod
    def from_function(
        cls,
        mesh: ReferenceMesh,
        fn: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]],
        axis_ends: Sequence[str] = (),
    ) -> "GeneratingCurve":
        """P2 interpolant of ``fn`` at the dof positions; axis coefficients are pinned to 0."""
        r, z = fn(p2_dof_alpha(mesh))
        xr = np.array(r, dtype=float)
        xz = np.array(z, dtype=float)
        for end in axis_ends:
            xr[0 if end == "start" else -1] = 0.0
        return cls(mesh=mesh, xr=xr, xz=xz, axis_ends=tuple(axis_ends))

    def with_coefficients(self, xr: np.ndarray, xz: np.ndarray) -> "GeneratingCurve":
        return GeneratingCurve(mesh=self.mesh, xr=np.asarray(xr, float), xz=np.asarray(xz, float), axis_ends=self.axis_ends)

    @property
    def open_ends(self) -> tuple[str, ...]:
        return tuple(end for end in ENDS if end not in self.axis_ends)

    @property
    def dof_alpha(self) -> np.ndarray:
        return p2_dof_alpha(self.mesh)

    def evaluate(self, alpha) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """X, X_alpha, X_alphaalpha at alpha; each of shape (2, m)."""
        alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
        cell, t = locate(self.mesh.nodes, alpha)
        h = self.mesh.widths[cell]
        values, first, second = p2_shape(t)
        dofs = 2 * cell[None, :] + np.arange(3)[:, None]
        out = []
        for coeffs in (self.xr, self.xz):
            c = coeffs[dofs]
            out.append(((c * values).sum(axis=0), (c * first).sum(axis=0) / h, (c * second).sum(axis=0) / h**2))
        x = np.stack([out[0][0], out[1][0]])
        xa = np.stack([out[0][1], out[1][1]])
        xaa = np.stack([out[0][2], out[1][2]])
        return x, xa, xaa

    def endpoint(self, end: str) -> np.ndarray:
        if end not in ENDS:
            raise GeometryError(f"unknown endpoint '{end}'")
        i = 0 if end == "start" else -1
        return np.array([self.xr[i], self.xz[i]])

    def arc_length(self, gauss_points: int = 8) -> np.ndarray:
        """Cumulative arc length at the mesh nodes."""
        rule = gauss_rule(gauss_points)
        t = 0.5 * (rule.nodes + 1.0)
        nodes = self.mesh.nodes
        alpha = (nodes[:-1, None] + self.mesh.widths[:, None] * t[None, :]).ravel()
        _, xa, _ = self.evaluate(alpha)
        jac = np.hypot(xa[0], xa[1]).reshape(self.mesh.n_cells, -1)
        per_cell = 0.5 * self.mesh.widths * (jac @ rule.weights)
        return np.concatenate([[0.0], np.cumsum(per_cell)])

    def dof_arc_length(self, gauss_points: int = 8) -> np.ndarray:
        """Arc length at every P2 dof, midpoints integrated over the half cell."""
        rule = gauss_rule(gauss_points)
        t = 0.5 * (rule.nodes + 1.0)
        nodes = self.mesh.nodes
        half = 0.5 * self.mesh.widths
        alpha = (nodes[:-1, None] + half[:, None] * t[None, :]).ravel()
        _, xa, _ = self.evaluate(alpha)
        jac = np.hypot(xa[0], xa[1]).reshape(self.mesh.n_cells, -1)
        first_half = 0.5 * half * (jac @ rule.weights)
        vertices = self.arc_length(gauss_points)
        out = np.empty(2 * self.mesh.n_cells + 1)
        out[0::2] = vertices
        out[1::2] = vertices[:-1] + first_half
        return out


@dataclass(frozen=True)
class EdgeFrame:
    nu: np.ndarray
    kappa_n: float
    kappa_g: float
    end: str


def _unit_derivatives(curve: GeneratingCurve, alpha) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    x, xa, xaa = curve.evaluate(alpha)
    jac = np.hypot(xa[0], xa[1])
    if np.any(jac <= JACOBIAN_TOL):
        raise GeometryError(f"degenerate parametrization: |X_alpha| = {float(jac.min()):.3e}")
    return x, xa, xaa, jac


def normal_and_tangent(curve: GeneratingCurve, alpha) -> tuple[np.ndarray, np.ndarray]:
    """Unit tangent and the normal obtained by rotating it by -pi/2; shape (2,) or (2, m)."""
    _, xa, _, jac = _unit_derivatives(curve, alpha)
    tau = xa / jac
    n = np.stack([tau[1], -tau[0]])
    if np.ndim(alpha) == 0:
        return n[:, 0], tau[:, 0]
    return n, tau


def curvatures(curve: GeneratingCurve, alpha):
    x, xa, xaa, jac = _unit_derivatives(curve, alpha)
    if np.any(x[0] <= AXIS_TOL):
        raise AxisSingularityError("curvatures are singular on the axis; use pole_curvatures for the limit")
    cross = (xa[0] * xaa[1] - xa[1] * xaa[0]) / jac**3
    meridian = xa[1] / jac / x[0]
    H = 0.5 * (cross + meridian)
    K = meridian * cross
    if np.ndim(alpha) == 0:
        return float(H[0]), float(K[0])
    return H, K


def pole_curvatures(curve: GeneratingCurve, end: str) -> tuple[float, float]:
    """H and K at an axis endpoint through the limit of X^z_s / X^r."""
    if end not in curve.axis_ends:
        raise GeometryError(f"endpoint '{end}' is not on the axis")
    alpha = 0.0 if end == "start" else 1.0
    _, xa, xaa, jac = _unit_derivatives(curve, alpha)
    xa, xaa, jac = xa[:, 0], xaa[:, 0], float(jac[0])
    if abs(xa[0]) <= JACOBIAN_TOL:
        raise AxisSingularityError("curve meets the axis tangentially")
    cross = (xa[0] * xaa[1] - xa[1] * xaa[0]) / jac**3
    # d/dalpha (X^z_alpha / J) over d/dalpha X^r
    limit = (xaa[1] / jac - xa[1] * (xa @ xaa) / jac**3) / xa[0]
    return float(0.5 * (cross + limit)), float(limit * cross)


def geometric_curvatures(curve: GeneratingCurve, alpha: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """H and K at arbitrary points, switching to the pole limit at axis endpoints."""
    alpha = np.asarray(alpha, dtype=float)
    H = np.empty_like(alpha)
    K = np.empty_like(alpha)
    on_axis = np.zeros(alpha.shape, dtype=bool)
    for end in curve.axis_ends:
        at = alpha == (0.0 if end == "start" else 1.0)
        if np.any(at):
            H[at], K[at] = pole_curvatures(curve, end)
            on_axis |= at
    if np.any(~on_axis):
        H[~on_axis], K[~on_axis] = curvatures(curve, alpha[~on_axis])
    return H, K


def edge_frame(curve: GeneratingCurve, end: str) -> EdgeFrame:
    """Outward conormal and edge curvatures at an open endpoint.

    nu and kappa_g flip with the endpoint; kappa_n is the edge curvature vector projected on
    the fixed weak-form normal, so it takes the same branch at both ends.
    """
    if end not in ENDS:
        raise GeometryError(f"unknown endpoint '{end}'")
    if end in curve.axis_ends:
        raise GeometryError(f"endpoint '{end}' lies on the axis; no edge exists there")
    alpha = 0.0 if end == "start" else 1.0
    x, xa, _, jac = _unit_derivatives(curve, alpha)
    xr = float(x[0, 0])
    if xr <= AXIS_TOL:
        raise AxisSingularityError(f"edge at '{end}' has collapsed onto the axis")
    tau = xa[:, 0] / float(jac[0])
    sign = 1.0 if end == "end" else -1.0
    return EdgeFrame(
        nu=sign * tau,
        kappa_n=tau[1] / xr,
        kappa_g=sign * tau[0] / xr,
        end=end,
    )


@dataclass(frozen=True)
class MeshQuality:
    min_jacobian: float
    max_length_ratio: float
    min_radius: float


def mesh_quality(curve: GeneratingCurve, gauss_points: int = 4) -> MeshQuality:
    """Minimum |X_alpha| and X^r at Gauss nodes, and the spread of |X_alpha| between cells."""
    rule = gauss_rule(gauss_points)
    t = 0.5 * (rule.nodes + 1.0)
    nodes = curve.mesh.nodes
    alpha = (nodes[:-1, None] + curve.mesh.widths[:, None] * t[None, :]).ravel()
    x, xa, _ = curve.evaluate(alpha)
    jac = np.hypot(xa[0], xa[1])
    stretch = jac.reshape(curve.mesh.n_cells, -1).mean(axis=1)
    return MeshQuality(
        min_jacobian=float(jac.min()),
        max_length_ratio=float(stretch.max() / max(stretch.min(), np.finfo(float).tiny)),
        min_radius=float(x[0].min()),
    )


def check_quality(curve: GeneratingCurve, max_ratio: float = 1e3) -> MeshQuality:
    quality = mesh_quality(curve)
    if quality.min_jacobian <= JACOBIAN_TOL:
        raise GeometryError(f"mesh degenerated: min |X_alpha| = {quality.min_jacobian:.3e}")
    if quality.min_radius <= 0.0:
        raise GeometryError(f"curve crossed the axis: min X^r = {quality.min_radius:.3e}")
    if quality.max_length_ratio > max_ratio:
        raise GeometryError(f"cell stretching ratio {quality.max_length_ratio:.3e} exceeds {max_ratio:.0e}")
    open_radii = [curve.endpoint(end)[0] for end in curve.open_ends]
    if any(r <= AXIS_TOL for r in open_radii):
        raise GeometryError("an open edge reached the axis")
    return quality

