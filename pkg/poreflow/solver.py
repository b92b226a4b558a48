from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as sla

from .diagnostics import EnergyParts, area, hole_radius, total_energy
from .errors import DomainError, PoreflowError, SolverError
from .fem import (
    AxisZero,
    Dirichlet,
    DofLayout,
    FieldVector,
    FormKind,
    assemble_load,
    assemble_weighted_form,
    boundary_load,
    build_space,
    cell_geometry,
)
from .geometry import GeneratingCurve, check_quality, curvatures, edge_frame, geometric_curvatures, normal_and_tangent
from .quadrature import QuadratureSettings, singular_pair_assembly

if TYPE_CHECKING:
    from .config import SimConfig

logger = logging.getLogger("poreflow.solver")

BACKWARD_ERROR_TOL = 1e-10
ENERGY_SLACK = 1e-8
DENSE_CONDITION_LIMIT = 6000


@dataclass(frozen=True)
class SimParams:
    beta: float = 1.0
    gamma_g: float = 0.0
    gamma_l: float = 0.0
    H0: float = 0.0
    dt: float = 0.01
    N: int = 32
    epsilon: float = 1e-3
    stop_tol: float = 1e-6
    t_end: float = 1.0
    min_hole_radius: float | None = None
    bending: bool = True
    area_correction: bool = True
    max_steps: int | None = None
    quadrature: QuadratureSettings = field(default_factory=QuadratureSettings)

    def __post_init__(self) -> None:
        if not self.dt > 0.0:
            raise DomainError(f"dt must be positive, got {self.dt}")
        if self.N < 4:
            raise DomainError(f"N must be at least 4, got {self.N}")
        if self.beta < 0.0:
            raise DomainError(f"beta must be non-negative, got {self.beta}")
        if not self.stop_tol > 0.0:
            raise DomainError(f"stop_tol must be positive, got {self.stop_tol}")
        if self.min_hole_radius is not None and self.min_hole_radius < 0.0:
            raise DomainError("min_hole_radius must be non-negative")


@dataclass(frozen=True)
class Spaces:
    """Layouts of one time level; the H layout carries this step's Dirichlet values."""

    p2: DofLayout
    p2_axis: DofLayout
    p1: DofLayout
    h: DofLayout

    @classmethod
    def build(cls, curve: GeneratingCurve, edge_h: dict[str, float]) -> "Spaces":
        mesh = curve.mesh
        axis = curve.axis_ends
        return cls(
            p2=build_space(mesh, 2),
            p2_axis=build_space(mesh, 2, [AxisZero(axis)]),
            p1=build_space(mesh, 1),
            h=build_space(mesh, 2, [Dirichlet(end, value) for end, value in edge_h.items()], axis_ends=axis),
        )

    @property
    def velocity(self) -> tuple[DofLayout, DofLayout]:
        return (self.p2_axis, self.p2)


@dataclass(frozen=True)
class SystemState:
    t: float
    step: int
    curve: GeneratingCurve
    base: GeneratingCurve
    xi: FieldVector
    U: FieldVector
    P: FieldVector
    Hvec: FieldVector
    H: FieldVector
    g: FieldVector
    # <Q, 1> per P1 hat function at time zero
    reference_measure: np.ndarray | None = field(default=None, compare=False)

    @property
    def X(self) -> GeneratingCurve:
        return self.curve


def local_measure(curve: GeneratingCurve, gauss_points: int = 4) -> np.ndarray:
    """Area weights <Q, 1> of the P1 hat functions (without the 2 pi factor)."""
    geo = cell_geometry(curve, gauss_points)
    return assemble_load(build_space(curve.mesh, 1), np.ones_like(geo.xr), geo)


def edge_curvature_targets(curve: GeneratingCurve, params: SimParams) -> dict[str, float]:
    """Dirichlet value H0 - gamma_g kappa_n at each open edge."""
    return {end: params.H0 - params.gamma_g * edge_frame(curve, end).kappa_n for end in curve.open_ends}


def initial_state(curve: GeneratingCurve, params: SimParams, t: float = 0.0) -> SystemState:
    """Time level zero: curvature fields from the curve, flow fields at rest."""
    edge_h = edge_curvature_targets(curve, params)
    spaces = Spaces.build(curve, edge_h)
    alpha = curve.dof_alpha
    H, _ = geometric_curvatures(curve, alpha)
    for end, value in edge_h.items():
        H[spaces.h.end_dof(end)] = value
    n, _ = normal_and_tangent(curve, alpha)
    hvec_r = -H * n[0]
    hvec_z = -H * n[1]
    for end in curve.axis_ends:
        hvec_r[spaces.p2_axis.end_dof(end)] = 0.0
    return SystemState(
        t=t,
        step=0,
        curve=curve,
        base=curve,
        xi=FieldVector.zeros((spaces.p2, spaces.p2)),
        U=FieldVector.zeros(spaces.velocity),
        P=FieldVector.zeros((spaces.p1,)),
        Hvec=FieldVector.from_components(spaces.velocity, hvec_r, hvec_z),
        H=FieldVector.from_components((spaces.h,), H),
        g=FieldVector.zeros((spaces.p2,)),
        reference_measure=local_measure(curve, params.quadrature.gauss_points),
    )


@dataclass(frozen=True)
class BlockLayout:
    """Offsets of the blocked unknown vector (xi, U, P, X, Hvec, H, g)."""

    n2: int
    n1: int

    @property
    def xi(self) -> int:
        return 0

    @property
    def U(self) -> int:
        return 2 * self.n2

    @property
    def P(self) -> int:
        return 4 * self.n2

    @property
    def X(self) -> int:
        return 4 * self.n2 + self.n1

    @property
    def Hvec(self) -> int:
        return 6 * self.n2 + self.n1

    @property
    def H(self) -> int:
        return 8 * self.n2 + self.n1

    @property
    def g(self) -> int:
        return 9 * self.n2 + self.n1

    @property
    def size(self) -> int:
        return 10 * self.n2 + self.n1

    def vector(self, offset: int, component: int) -> np.ndarray:
        return offset + 2 * np.arange(self.n2) + component

    def scalar(self, offset: int, count: int) -> np.ndarray:
        return offset + np.arange(count)


@dataclass
class StepSystem:
    matrix: sparse.csc_matrix
    rhs: np.ndarray
    free: np.ndarray
    fixed: np.ndarray
    fixed_values: np.ndarray
    blocks: BlockLayout
    spaces: Spaces
    bem_asymmetry: float


class _Builder:
    def __init__(self, size: int) -> None:
        self.size = size
        self.rows: list[np.ndarray] = []
        self.cols: list[np.ndarray] = []
        self.vals: list[np.ndarray] = []
        self.rhs = np.zeros(size)

    def add(self, block, row_idx: np.ndarray, col_idx: np.ndarray, scale: float = 1.0) -> None:
        coo = sparse.coo_matrix(block)
        self.rows.append(row_idx[coo.row])
        self.cols.append(col_idx[coo.col])
        self.vals.append(scale * coo.data)

    def matrix(self) -> sparse.csr_matrix:
        return sparse.coo_matrix(
            (np.concatenate(self.vals), (np.concatenate(self.rows), np.concatenate(self.cols))),
            shape=(self.size, self.size),
        ).tocsr()


def _edge_loads(state: SystemState, params: SimParams) -> tuple[dict, dict, dict]:
    """Per-edge payloads: edge force along nu, the conormal nu itself, and -gamma_l kappa_n."""
    curve = state.curve
    h_layout = state.H.layout
    force, conormal, moment = {}, {}, {}
    for end in curve.open_ends:
        frame = edge_frame(curve, end)
        magnitude = params.gamma_l * frame.kappa_g
        if params.bending:
            H_edge = state.H.component(0)[h_layout.end_dof(end)]
            _, K_edge = curvatures(curve, 0.0 if end == "start" else 1.0)
            magnitude += (H_edge - params.H0) ** 2 + params.gamma_g * K_edge
        force[end] = -magnitude * frame.nu
        conormal[end] = frame.nu
        moment[end] = -params.gamma_l * frame.kappa_n
    return force, conormal, moment


def assemble_step(state: SystemState, params: SimParams) -> StepSystem:
    """Monolithic linear system of one semi-implicit step on the geometry of ``state``."""
    curve = state.curve
    check_quality(curve)
    edge_h = edge_curvature_targets(curve, params)
    spaces = Spaces.build(curve, edge_h)
    p2, p1 = spaces.p2, spaces.p1
    n2, n1 = p2.n_dofs, p1.n_dofs
    blocks = BlockLayout(n2=n2, n1=n1)
    builder = _Builder(blocks.size)
    geo = cell_geometry(curve, params.quadrature.gauss_points)

    def form(kind: FormKind, trial: DofLayout = p2, test: DofLayout = p2, **kw) -> sparse.csr_matrix:
        return assemble_weighted_form(trial, test, curve, kind, geometry=geo, **kw)

    mass = form(FormKind.MASS_WEIGHTED)
    stiffness = form(FormKind.STIFFNESS_WEIGHTED)
    azimuthal = form(FormKind.AZIMUTHAL_RATE)
    divergence = [form(FormKind.SURFACE_DIVERGENCE, trial=p2, test=p1, trial_component=a) for a in range(2)]
    normal = [form(FormKind.NORMAL_PROJECTION, component=a) for a in range(2)]

    bem = singular_pair_assembly(curve, p2, settings=params.quadrature)
    all_xi = np.arange(2 * n2)
    scalar_p = blocks.scalar(blocks.P, n1)
    scalar_h = blocks.scalar(blocks.H, n2)
    scalar_g = blocks.scalar(blocks.g, n2)
    force, conormal, moment = _edge_loads(state, params)

    # single layer
    builder.add(bem.matrix, blocks.xi + all_xi, blocks.xi + all_xi, -1.0)
    for a in range(2):
        builder.add(mass, blocks.vector(blocks.xi, a), blocks.vector(blocks.U, a))

    # momentum
    for a in range(2):
        rows = blocks.vector(blocks.U, a)
        builder.add(mass, rows, blocks.vector(blocks.xi, a))
        for b in range(2):
            rate = form(FormKind.TANGENTIAL_RATE, test_component=a, trial_component=b)
            builder.add(rate, rows, blocks.vector(blocks.U, b), 2.0 * params.beta)
        builder.add(divergence[a].T, rows, scalar_p, -1.0)
        builder.add(normal[a], rows, scalar_g)
    builder.add(azimuthal, blocks.vector(blocks.U, 0), blocks.vector(blocks.U, 0), 2.0 * params.beta)
    if force:
        builder.rhs[blocks.U : blocks.U + 2 * n2] += boundary_load(p2, curve, force)

    # inextensibility
    for a in range(2):
        builder.add(divergence[a], scalar_p, blocks.vector(blocks.U, a), -1.0)
    if params.area_correction and state.reference_measure is not None:
        # nodes are material, so this pulls each local area back to its initial value
        drift = local_measure(curve, params.quadrature.gauss_points) - state.reference_measure
        builder.rhs[scalar_p] = drift / params.dt

    # kinematics, nodal
    all_x = blocks.X + all_xi
    builder.add(sparse.identity(2 * n2), all_x, all_x)
    builder.add(sparse.identity(2 * n2), all_x, blocks.U + all_xi, -params.dt)
    builder.rhs[all_x] = np.column_stack([curve.xr, curve.xz]).ravel()

    # curvature vector
    for a in range(2):
        rows = blocks.vector(blocks.Hvec, a)
        builder.add(mass, rows, blocks.vector(blocks.Hvec, a), 2.0)
        builder.add(stiffness, rows, blocks.vector(blocks.X, a))
    builder.add(azimuthal, blocks.vector(blocks.Hvec, 0), blocks.vector(blocks.X, 0))
    if conormal:
        builder.rhs[blocks.Hvec : blocks.Hvec + 2 * n2] += boundary_load(p2, curve, conormal)

    # H = n . Hvec
    builder.add(mass, scalar_h, scalar_h)
    for a in range(2):
        builder.add(normal[a].T, scalar_h, blocks.vector(blocks.Hvec, a), -1.0)

    # normal bending force
    builder.add(mass, scalar_g, scalar_g)
    if moment:
        builder.rhs[scalar_g] += boundary_load(p2, curve, moment)
    if params.bending:
        builder.add(stiffness, scalar_g, scalar_h)
        H_old = state.H.evaluate(geo.alpha.ravel())[0].reshape(geo.alpha.shape)
        _, K_old = curvatures(curve, geo.alpha.ravel())
        K_old = K_old.reshape(geo.alpha.shape)
        cubic = 2.0 * (H_old - params.H0) * (H_old**2 + H_old * params.H0 - K_old)
        builder.rhs[scalar_g] += assemble_load(p2, cubic, geo)

    full = builder.matrix()
    fixed_map: dict[int, float] = {}
    for end in curve.axis_ends:
        dof = p2.end_dof(end)
        for offset in (blocks.U, blocks.X, blocks.Hvec):
            fixed_map[offset + 2 * dof] = 0.0
    for dof, value in spaces.h.constraints.items():
        fixed_map[blocks.H + dof] = value
    fixed = np.array(sorted(fixed_map), dtype=int)
    fixed_values = np.array([fixed_map[i] for i in fixed])
    mask = np.ones(blocks.size, dtype=bool)
    mask[fixed] = False
    free = np.flatnonzero(mask)

    reduced_rows = full[free]
    rhs = builder.rhs[free] - reduced_rows[:, fixed] @ fixed_values
    matrix = reduced_rows[:, free].tocsc()
    logger.debug("assembled step system: %d unknowns, %d non-zeros", matrix.shape[0], matrix.nnz)
    return StepSystem(
        matrix=matrix,
        rhs=rhs,
        free=free,
        fixed=fixed,
        fixed_values=fixed_values,
        blocks=blocks,
        spaces=spaces,
        bem_asymmetry=bem.asymmetry,
    )


def _condition_estimate(matrix: sparse.spmatrix) -> float | None:
    if matrix.shape[0] > DENSE_CONDITION_LIMIT:
        return None
    try:
        return float(np.linalg.cond(matrix.toarray()))
    except np.linalg.LinAlgError:
        return math.inf


def _backward_error(matrix: sparse.spmatrix, x: np.ndarray, rhs: np.ndarray) -> float:
    residual = rhs - matrix @ x
    scale = sla.norm(matrix, np.inf) * np.linalg.norm(x, np.inf) + np.linalg.norm(rhs, np.inf)
    if scale == 0.0:
        return 0.0
    return float(np.linalg.norm(residual, np.inf) / scale)


def solve_system(system: StepSystem) -> np.ndarray:
    """Direct sparse LU with one round of iterative refinement; returns the full unknown vector."""
    try:
        lu = sla.splu(system.matrix)
    except RuntimeError as exc:
        raise SolverError(f"step matrix is singular: {exc}", condition=_condition_estimate(system.matrix)) from exc
    x = lu.solve(system.rhs)
    if not np.all(np.isfinite(x)):
        raise SolverError("direct solve produced non-finite values", condition=_condition_estimate(system.matrix))
    error = _backward_error(system.matrix, x, system.rhs)
    if error > BACKWARD_ERROR_TOL:
        x = x + lu.solve(system.rhs - system.matrix @ x)
        error = _backward_error(system.matrix, x, system.rhs)
        if error > BACKWARD_ERROR_TOL:
            raise SolverError(f"backward error {error:.2e} after refinement", condition=_condition_estimate(system.matrix))
    full = np.zeros(system.blocks.size)
    full[system.free] = x
    full[system.fixed] = system.fixed_values
    return full


def solve_step(state: SystemState, params: SimParams) -> SystemState:
    system = assemble_step(state, params)
    full = solve_system(system)
    blocks, spaces = system.blocks, system.spaces
    n2, n1 = blocks.n2, blocks.n1

    def take(offset: int, count: int) -> np.ndarray:
        return full[offset : offset + count].copy()

    x_new = take(blocks.X, 2 * n2)
    curve = state.curve.with_coefficients(x_new[0::2], x_new[1::2])
    return SystemState(
        t=state.t + params.dt,
        step=state.step + 1,
        curve=curve,
        base=state.curve,
        xi=FieldVector((spaces.p2, spaces.p2), take(blocks.xi, 2 * n2)),
        U=FieldVector(spaces.velocity, take(blocks.U, 2 * n2)),
        P=FieldVector((spaces.p1,), take(blocks.P, n1)),
        Hvec=FieldVector(spaces.velocity, take(blocks.Hvec, 2 * n2)),
        H=FieldVector((spaces.h,), take(blocks.H, n2)),
        g=FieldVector((spaces.p2,), take(blocks.g, n2)),
        reference_measure=state.reference_measure,
    )


def inextensibility_residual(state: SystemState, gauss_points: int = 4, dt: float | None = None) -> float:
    """max |<Q, X_s . U_s + U^r / X^r>| over P1 hat functions on the solve geometry.

    With ``dt`` the area-correction target (reference - current) / dt is subtracted first.
    """
    curve = state.base
    geo = cell_geometry(curve, gauss_points)
    p2 = build_space(curve.mesh, 2)
    p1 = build_space(curve.mesh, 1)
    total = np.zeros(p1.n_dofs)
    for a in range(2):
        block = assemble_weighted_form(p2, p1, curve, FormKind.SURFACE_DIVERGENCE, trial_component=a, geometry=geo)
        total += block @ state.U.component(a)
    if dt is not None and state.reference_measure is not None:
        total -= (state.reference_measure - local_measure(curve, gauss_points)) / dt
    return float(np.max(np.abs(total)))


def recover_curvature(
    curve: GeneratingCurve,
    edge_values: dict[str, float],
    gauss_points: int = 4,
) -> tuple[FieldVector, FieldVector]:
    """Curvature-vector and mean-curvature rows alone with the curve frozen."""
    spaces = Spaces.build(curve, edge_values)
    p2 = spaces.p2
    n2 = p2.n_dofs
    geo = cell_geometry(curve, gauss_points)

    def form(kind: FormKind, **kw) -> sparse.csr_matrix:
        return assemble_weighted_form(p2, p2, curve, kind, geometry=geo, **kw)

    mass = form(FormKind.MASS_WEIGHTED)
    stiffness = form(FormKind.STIFFNESS_WEIGHTED)
    azimuthal = form(FormKind.AZIMUTHAL_RATE)
    conormal = {end: edge_frame(curve, end).nu for end in curve.open_ends}
    load = boundary_load(p2, curve, conormal)

    hvec = []
    for a, coords in enumerate((curve.xr, curve.xz)):
        rhs = load[a::2] - stiffness @ coords
        if a == 0:
            rhs = rhs - azimuthal @ coords
        layout = spaces.velocity[a]
        free = layout.free_dofs
        values = np.zeros(n2)
        values[free] = sla.spsolve((2.0 * mass)[free][:, free].tocsc(), rhs[free])
        hvec.append(values)

    projected = sum(form(FormKind.NORMAL_PROJECTION, component=a).T @ hvec[a] for a in range(2))
    h_layout = spaces.h
    free = h_layout.free_dofs
    fixed = np.array(sorted(h_layout.constraints), dtype=int)
    values = np.zeros(n2)
    values[fixed] = [h_layout.constraints[i] for i in fixed]
    rhs = projected[free] - mass[free][:, fixed] @ values[fixed]
    values[free] = sla.spsolve(mass[free][:, free].tocsc(), rhs)
    return (
        FieldVector.from_components(spaces.velocity, *hvec),
        FieldVector.from_components((h_layout,), values),
    )


@dataclass(frozen=True)
class SeriesRow:
    t: float
    step: int
    energy: EnergyParts
    area: float
    hole_radii: dict[str, float]


@dataclass
class RunResult:
    snapshots: list[SystemState] = field(default_factory=list)
    series: list[SeriesRow] = field(default_factory=list)
    stop_reason: str = "t_end"
    failure: str | None = None
    energy_increases: int = 0
    steps: int = 0

    @property
    def final(self) -> SystemState:
        return self.snapshots[-1]


SnapshotHook = Callable[[SystemState, SeriesRow], None]


def _series_row(state: SystemState, params: SimParams) -> SeriesRow:
    return SeriesRow(
        t=state.t,
        step=state.step,
        energy=total_energy(state, params),
        area=area(state),
        hole_radii=hole_radius(state),
    )


def simulate(
    curve: GeneratingCurve,
    params: SimParams,
    snapshot_every: int = 1,
    on_snapshot: SnapshotHook | None = None,
) -> RunResult:
    """Time loop from ``curve`` until t_end, energy stagnation or pore closure."""
    if snapshot_every < 1:
        raise DomainError("snapshot_every must be >= 1")
    result = RunResult()
    state = initial_state(curve, params)

    def record(row: SeriesRow) -> None:
        result.snapshots.append(state)
        result.series.append(row)
        if on_snapshot is not None:
            on_snapshot(state, row)

    row = _series_row(state, params)
    record(row)
    energy = row.energy.total
    radii = row.hole_radii
    guard = params.min_hole_radius
    if guard is None and radii:
        guard = 1e-2 * min(radii.values())
    logger.info("start: E=%.10g A=%.10g edges=%s", energy, row.area, radii)

    n_steps = int(math.ceil(params.t_end / params.dt - 1e-9))
    if params.max_steps is not None:
        n_steps = min(n_steps, params.max_steps)
    result.stop_reason = "t_end" if params.max_steps is None or n_steps < params.max_steps else "max_steps"
    recorded = True
    for _ in range(n_steps):
        try:
            new_state = solve_step(state, params)
            new_row = _series_row(new_state, params)
        except PoreflowError as exc:
            result.failure = f"{type(exc).__name__}: {exc}"
            result.stop_reason = "failure"
            logger.error("step %d failed at t=%.6g: %s", state.step + 1, state.t, exc)
            break
        new_energy = new_row.energy.total
        if new_energy > energy + ENERGY_SLACK * abs(energy):
            result.energy_increases += 1
            logger.warning("energy increased at t=%.6g: %.12g -> %.12g", new_state.t, energy, new_energy)
        change = abs(new_energy - energy) / abs(energy) if energy != 0.0 else abs(new_energy - energy)
        state, row, energy = new_state, new_row, new_energy
        result.steps += 1
        recorded = state.step % snapshot_every == 0
        if recorded:
            record(row)
            logger.info("t=%.6g E=%.10g A=%.10g edges=%s", state.t, energy, row.area, row.hole_radii)
        else:
            logger.debug("t=%.6g E=%.10g", state.t, energy)
        if change < params.stop_tol:
            result.stop_reason = "energy_converged"
            break
        if guard is not None and row.hole_radii and min(row.hole_radii.values()) < guard:
            result.stop_reason = "hole_closed"
            break
    if not recorded:
        record(row)
    logger.info("stopped after %d steps: %s", result.steps, result.stop_reason)
    return result


def run(config: "SimConfig", on_snapshot: SnapshotHook | None = None) -> RunResult:
    params = config.sim_params()
    curve = config.initial_curve()
    return simulate(curve, params, snapshot_every=config.snapshot_every, on_snapshot=on_snapshot)


__all__ = [
    "RunResult",
    "SeriesRow",
    "SimParams",
    "StepSystem",
    "SystemState",
    "assemble_step",
    "initial_state",
    "local_measure",
    "recover_curvature",
    "run",
    "simulate",
    "solve_step",
]
