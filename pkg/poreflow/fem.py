from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Sequence

import numpy as np
from scipy import sparse

from .errors import ConfigError
from .quadrature import gauss_rule

if TYPE_CHECKING:
    from .geometry import GeneratingCurve, ReferenceMesh

logger = logging.getLogger("poreflow.fem")

ENDS = ("start", "end")


def p2_shape(t: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Quadratic Lagrange basis on [0, 1] with local nodes 0, 1/2, 1.

    Returns values, first and second derivatives, each of shape (3,) + t.shape.
    """
    t = np.asarray(t, dtype=float)
    values = np.stack([(1.0 - t) * (1.0 - 2.0 * t), 4.0 * t * (1.0 - t), t * (2.0 * t - 1.0)])
    first = np.stack([4.0 * t - 3.0, 4.0 - 8.0 * t, 4.0 * t - 1.0])
    second = np.stack([np.full_like(t, 4.0), np.full_like(t, -8.0), np.full_like(t, 4.0)])
    return values, first, second


def p1_shape(t: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    t = np.asarray(t, dtype=float)
    values = np.stack([1.0 - t, t])
    first = np.stack([np.full_like(t, -1.0), np.full_like(t, 1.0)])
    return values, first, np.zeros_like(first)


def locate(nodes: np.ndarray, alpha: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Cell index and local coordinate of each alpha; alpha = 1 belongs to the last cell."""
    alpha = np.asarray(alpha, dtype=float)
    cell = np.clip(np.searchsorted(nodes, alpha, side="right") - 1, 0, len(nodes) - 2)
    width = nodes[cell + 1] - nodes[cell]
    return cell, (alpha - nodes[cell]) / width


@dataclass(frozen=True)
class AxisZero:
    """Homogeneous constraint at axis endpoints (radial components of V_d fields)."""

    ends: tuple[str, ...]


@dataclass(frozen=True)
class Dirichlet:
    end: str
    value: float


Constraint = AxisZero | Dirichlet


@dataclass(frozen=True)
class DofLayout:
    mesh: "ReferenceMesh"
    degree: int
    constraints: dict[int, float] = field(default_factory=dict)

    @property
    def n_cells(self) -> int:
        return len(self.mesh.nodes) - 1

    @property
    def n_dofs(self) -> int:
        return self.degree * self.n_cells + 1

    @property
    def dof_alpha(self) -> np.ndarray:
        nodes = self.mesh.nodes
        if self.degree == 1:
            return nodes.copy()
        out = np.empty(self.n_dofs)
        out[0::2] = nodes
        out[1::2] = 0.5 * (nodes[:-1] + nodes[1:])
        return out

    @property
    def cell_dofs(self) -> np.ndarray:
        base = self.degree * np.arange(self.n_cells)
        return base[:, None] + np.arange(self.degree + 1)[None, :]

    @property
    def free_dofs(self) -> np.ndarray:
        mask = np.ones(self.n_dofs, dtype=bool)
        mask[list(self.constraints)] = False
        return np.flatnonzero(mask)

    @property
    def n_free(self) -> int:
        return self.n_dofs - len(self.constraints)

    def end_dof(self, end: str) -> int:
        if end not in ENDS:
            raise ConfigError(f"unknown endpoint '{end}'", key="end")
        return 0 if end == "start" else self.n_dofs - 1

    def shape(self, t: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return p2_shape(t) if self.degree == 2 else p1_shape(t)

    def basis_at(self, alpha: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Global dof indices (m, degree+1) and basis values (m, degree+1) at points alpha."""
        cell, t = locate(self.mesh.nodes, alpha)
        values, _, _ = self.shape(t)
        return self.cell_dofs[cell], values.T

    def expand(self, free_values: np.ndarray) -> np.ndarray:
        full = np.zeros(self.n_dofs)
        full[self.free_dofs] = free_values
        for dof, value in self.constraints.items():
            full[dof] = value
        return full


def build_space(
    mesh: "ReferenceMesh",
    degree: int,
    constraints: Sequence[Constraint] = (),
    axis_ends: Sequence[str] = (),
) -> DofLayout:
    if degree not in (1, 2):
        raise ConfigError(f"only P1 and P2 spaces are supported, got degree {degree}", key="degree")
    layout = DofLayout(mesh=mesh, degree=degree)
    fixed: dict[int, float] = {}
    for item in constraints:
        if isinstance(item, AxisZero):
            for end in item.ends:
                fixed[layout.end_dof(end)] = 0.0
        elif isinstance(item, Dirichlet):
            if item.end in axis_ends:
                raise ConfigError(f"Dirichlet data prescribed on the axis endpoint '{item.end}'", key="end")
            fixed[layout.end_dof(item.end)] = float(item.value)
        else:
            raise ConfigError(f"unknown constraint {item!r}")
    return DofLayout(mesh=mesh, degree=degree, constraints=fixed)


@dataclass(frozen=True)
class FieldVector:
    """Coefficients over one layout per component, interleaved as ``2 * dof + component``."""

    layouts: tuple[DofLayout, ...]
    coefficients: np.ndarray

    def __post_init__(self) -> None:
        expected = self.components * self.layouts[0].n_dofs
        if self.coefficients.shape != (expected,):
            raise ConfigError(f"field has {self.coefficients.size} coefficients, expected {expected}")

    @property
    def components(self) -> int:
        return len(self.layouts)

    @property
    def layout(self) -> DofLayout:
        return self.layouts[0]

    def component(self, index: int) -> np.ndarray:
        return self.coefficients[index :: self.components]

    @classmethod
    def from_components(cls, layouts: Sequence[DofLayout], *values: np.ndarray) -> "FieldVector":
        stacked = np.column_stack([np.asarray(v, dtype=float) for v in values]).ravel()
        return cls(layouts=tuple(layouts), coefficients=stacked)

    @classmethod
    def zeros(cls, layouts: Sequence[DofLayout]) -> "FieldVector":
        return cls(layouts=tuple(layouts), coefficients=np.zeros(len(layouts) * layouts[0].n_dofs))

    def evaluate(self, alpha: np.ndarray) -> np.ndarray:
        dofs, values = self.layout.basis_at(alpha)
        return np.stack([(self.component(i)[dofs] * values).sum(axis=1) for i in range(self.components)])

    def constraint_violation(self) -> float:
        worst = 0.0
        for i, layout in enumerate(self.layouts):
            coeffs = self.component(i)
            for dof, value in layout.constraints.items():
                worst = max(worst, abs(coeffs[dof] - value))
        return worst


class FormKind(str, Enum):
    MASS_WEIGHTED = "mass_weighted"
    STIFFNESS_WEIGHTED = "stiffness_weighted"
    SURFACE_DIVERGENCE = "surface_divergence"
    TANGENTIAL_RATE = "tangential_rate"
    AZIMUTHAL_RATE = "azimuthal_rate"
    NORMAL_PROJECTION = "normal_projection"


@dataclass(frozen=True)
class CellGeometry:
    """Curve data at Gauss nodes of every cell, arrays of shape (cells, points)."""

    t: np.ndarray
    weights: np.ndarray
    alpha: np.ndarray
    xr: np.ndarray
    jac: np.ndarray
    tangent: np.ndarray
    normal: np.ndarray

    @property
    def measure(self) -> np.ndarray:
        return self.weights * self.xr * self.jac


def cell_geometry(curve: "GeneratingCurve", gauss_points: int = 4) -> CellGeometry:
    rule = gauss_rule(gauss_points)
    t = 0.5 * (rule.nodes + 1.0)
    nodes = curve.mesh.nodes
    width = np.diff(nodes)
    alpha = nodes[:-1, None] + width[:, None] * t[None, :]
    x, xa, _ = curve.evaluate(alpha.ravel())
    jac = np.hypot(xa[0], xa[1])
    tangent = xa / jac
    return CellGeometry(
        t=t,
        weights=0.5 * rule.weights[None, :] * width[:, None],
        alpha=alpha,
        xr=x[0].reshape(alpha.shape),
        jac=jac.reshape(alpha.shape),
        tangent=tangent.reshape((2,) + alpha.shape),
        # weak-form normal, oriented so that H = n . Hvec is +1 on the unit sphere
        normal=np.stack([-tangent[1], tangent[0]]).reshape((2,) + alpha.shape),
    )


def _local_shapes(layout: DofLayout, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    values, first, _ = layout.shape(t)
    width = np.diff(layout.mesh.nodes)
    # derivative with respect to alpha, per cell
    return values, first[None, :, :] / width[:, None, None]


def _assemble_terms(
    trial: DofLayout,
    test: DofLayout,
    terms: list[tuple[np.ndarray, bool, bool]],
    t: np.ndarray,
) -> sparse.csr_matrix:
    trial_v, trial_d = _local_shapes(trial, t)
    test_v, test_d = _local_shapes(test, t)
    n_cells = trial.n_cells
    local = np.zeros((n_cells, test.degree + 1, trial.degree + 1))
    for coef, test_deriv, trial_deriv in terms:
        a = test_d if test_deriv else np.broadcast_to(test_v, (n_cells,) + test_v.shape)
        b = trial_d if trial_deriv else np.broadcast_to(trial_v, (n_cells,) + trial_v.shape)
        local += np.einsum("cq,ciq,cjq->cij", coef, a, b)
    rows = np.repeat(test.cell_dofs[:, :, None], trial.degree + 1, axis=2)
    cols = np.repeat(trial.cell_dofs[:, None, :], test.degree + 1, axis=1)
    matrix = sparse.coo_matrix(
        (local.ravel(), (rows.ravel(), cols.ravel())), shape=(test.n_dofs, trial.n_dofs)
    )
    return matrix.tocsr()


def assemble_weighted_form(
    trial: DofLayout,
    test: DofLayout,
    curve: "GeneratingCurve",
    form: FormKind | str,
    *,
    trial_component: int = 0,
    test_component: int = 0,
    component: int = 0,
    normal: np.ndarray | None = None,
    gauss_points: int = 4,
    geometry: CellGeometry | None = None,
) -> sparse.csr_matrix:
    """Scalar block of one weighted curve form, measure X^r |X_alpha| d alpha.

    Components select the (r, z) entry for the vector-valued forms: for tangential_rate the
    block pairs psi^a with U^b where a, b are the test and trial components; for
    surface_divergence the trial is the velocity component and the test the P1 multiplier;
    for normal_projection ``component`` selects the entry of ``normal`` (shape
    (2, cells, points)), which defaults to the weak-form surface normal of ``curve``.
    """
    form = FormKind(form)
    if trial.mesh is not test.mesh or trial.mesh is not curve.mesh:
        raise ConfigError("trial, test and curve must share one reference mesh")
    geo = geometry or cell_geometry(curve, gauss_points)
    measure = geo.measure
    xr_j = geo.weights * geo.xr / geo.jac
    tangent = geo.tangent

    if form is FormKind.MASS_WEIGHTED:
        terms = [(measure, False, False)]
    elif form is FormKind.STIFFNESS_WEIGHTED:
        terms = [(xr_j, True, True)]
    elif form is FormKind.TANGENTIAL_RATE:
        coef = xr_j * tangent[test_component] * tangent[trial_component]
        terms = [(coef, True, True)]
    elif form is FormKind.AZIMUTHAL_RATE:
        terms = [(geo.weights * geo.jac / geo.xr, False, False)]
    elif form is FormKind.SURFACE_DIVERGENCE:
        terms = [(geo.weights * geo.xr * tangent[trial_component], False, True)]
        if trial_component == 0:
            terms.append((geo.weights * geo.jac, False, False))
    else:
        n = geo.normal if normal is None else normal
        terms = [(measure * n[component], False, False)]
    return _assemble_terms(trial, test, terms, geo.t)


def assemble_load(test: DofLayout, values: np.ndarray, geometry: CellGeometry) -> np.ndarray:
    """Vector <chi_i, f> for f sampled at the Gauss nodes of ``geometry``."""
    shapes, _, _ = test.shape(geometry.t)
    local = np.einsum("cq,iq->ci", geometry.measure * values, shapes)
    out = np.zeros(test.n_dofs)
    np.add.at(out, test.cell_dofs.ravel(), local.ravel())
    return out


def boundary_load(
    test: DofLayout,
    curve: "GeneratingCurve",
    edge_values: dict[str, float | Sequence[float]],
) -> np.ndarray:
    """Point functional at open-edge dofs weighted by X^r at the edge.

    Scalar payloads give a vector of length n_dofs; 2-vector payloads an interleaved vector
    of length 2 * n_dofs.
    """
    if not edge_values:
        return np.zeros(test.n_dofs)
    vector = any(np.ndim(v) == 1 for v in edge_values.values())
    components = 2 if vector else 1
    out = np.zeros(components * test.n_dofs)
    for end, payload in edge_values.items():
        if end in curve.axis_ends:
            raise ConfigError(f"no edge exists at the axis endpoint '{end}'", key="end")
        dof = test.end_dof(end)
        xr = curve.endpoint(end)[0]
        payload = np.atleast_1d(np.asarray(payload, dtype=float))
        if payload.size == 1 and components == 2:
            payload = np.repeat(payload, 2)
        out[components * dof : components * dof + components] += xr * payload
    return out
