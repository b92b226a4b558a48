import numpy as np
import pytest

from poreflow import solver
from poreflow.diagnostics import f_estimate, radial_flux_spread
from poreflow.errors import DomainError, SolverError
from poreflow.scenarios import initial_shape
from poreflow.solver import (
    SimParams,
    assemble_step,
    edge_curvature_targets,
    inextensibility_residual,
    initial_state,
    local_measure,
    simulate,
    solve_step,
)

LINE_TENSION_ONLY = SimParams(beta=1.0, gamma_l=1.0, bending=False)


def one_annulus_step(N: int = 32):
    curve = initial_shape("annulus", N=N)
    return solve_step(initial_state(curve, LINE_TENSION_ONLY), LINE_TENSION_ONLY)


def test_sim_params_reject_bad_values() -> None:
    with pytest.raises(DomainError):
        SimParams(dt=0.0)
    with pytest.raises(DomainError):
        SimParams(N=3)
    with pytest.raises(DomainError):
        SimParams(beta=-0.1)
    with pytest.raises(DomainError):
        SimParams(min_hole_radius=-1.0)


def test_initial_state_honours_edge_and_axis_values(cap_curve) -> None:
    params = SimParams(H0=0.2, gamma_g=0.5)
    state = initial_state(cap_curve, params)
    targets = edge_curvature_targets(cap_curve, params)

    assert state.H.component(0)[state.H.layout.end_dof("end")] == targets["end"]
    assert state.Hvec.component(0)[state.U.layouts[0].end_dof("start")] == 0.0
    assert np.all(state.U.coefficients == 0.0)
    assert state.X is state.curve


def test_cap_system_size_drops_fixed_dofs(cap_curve) -> None:
    state = initial_state(cap_curve, SimParams())
    system = assemble_step(state, SimParams())

    # 10 * 33 + 17 unknowns, minus three axis r-components and one edge H value
    assert system.blocks.size == 347
    assert system.matrix.shape == (343, 343)
    assert len(system.fixed) == 4
    assert system.bem_asymmetry <= 1e-8


def test_flat_disk_is_at_rest() -> None:
    curve = initial_shape("flat_disk", N=16)
    params = SimParams()
    new = solve_step(initial_state(curve, params), params)

    assert np.max(np.abs(new.U.coefficients)) <= 1e-8
    assert np.max(np.abs(new.curve.xr - curve.xr)) <= 1e-10


def test_flat_disk_run_stops_on_energy() -> None:
    curve = initial_shape("flat_disk", N=16)
    result = simulate(curve, SimParams())

    assert result.stop_reason == "energy_converged"
    assert result.steps == 1
    assert result.failure is None
    assert len(result.series) == len(result.snapshots) == 2


def test_annulus_step_is_radial_and_closes_pore() -> None:
    new = one_annulus_step()
    ur = new.U.component(0)
    uz = new.U.component(1)

    assert f_estimate(new) < 0.0
    assert new.curve.endpoint("start")[0] < 1.0
    assert radial_flux_spread(new) <= 0.01
    assert np.max(np.abs(uz)) <= 1e-8 * np.max(np.abs(ur))


def test_step_satisfies_nodal_kinematics_and_inextensibility() -> None:
    new = one_annulus_step()
    dt = LINE_TENSION_ONLY.dt

    assert np.max(np.abs(new.curve.xr - new.base.xr - dt * new.U.component(0))) <= 1e-8
    assert np.max(np.abs(new.curve.xz - new.base.xz - dt * new.U.component(1))) <= 1e-8
    assert inextensibility_residual(new) <= 1e-10
    assert new.step == 1
    assert new.t == pytest.approx(dt)


def test_cap_step_keeps_constraints_exact(cap_curve) -> None:
    params = SimParams(H0=0.2, gamma_g=0.5, gamma_l=0.3, dt=1e-3)
    new = solve_step(initial_state(cap_curve, params), params)
    targets = edge_curvature_targets(new.base, params)
    axis = new.U.layouts[0].end_dof("start")

    assert new.H.component(0)[new.H.layout.end_dof("end")] == targets["end"]
    assert new.U.component(0)[axis] == 0.0
    assert new.curve.xr[axis] == 0.0
    assert new.Hvec.component(0)[axis] == 0.0
    assert new.H.constraint_violation() == 0.0


def test_cap_bending_energy_decreases(cap_curve) -> None:
    result = simulate(cap_curve, SimParams(dt=1e-3, max_steps=2))

    energies = [row.energy.total for row in result.series]
    assert result.failure is None
    assert energies[1] < energies[0]
    assert result.energy_increases == 0


def test_run_stops_at_max_steps_and_thins_snapshots() -> None:
    curve = initial_shape("annulus", N=8)
    params = SimParams(gamma_l=1.0, bending=False, max_steps=3)
    seen = []
    result = simulate(curve, params, snapshot_every=2, on_snapshot=lambda state, row: seen.append(row.step))

    assert result.stop_reason == "max_steps"
    assert result.steps == 3
    assert [state.step for state in result.snapshots] == [0, 2, 3]
    assert seen == [0, 2, 3]
    assert [row.step for row in result.series] == seen


def test_run_stops_when_pore_is_below_guard() -> None:
    curve = initial_shape("annulus", N=8)
    result = simulate(curve, SimParams(gamma_l=1.0, bending=False, min_hole_radius=1.5))

    assert result.stop_reason == "hole_closed"
    assert result.steps == 1


def test_failed_step_truncates_trajectory(monkeypatch, annulus_curve) -> None:
    def broken(state, params):
        raise SolverError("step matrix is singular", condition=1e18)

    monkeypatch.setattr(solver, "solve_step", broken)
    result = simulate(annulus_curve, LINE_TENSION_ONLY)

    assert result.stop_reason == "failure"
    assert "SolverError" in result.failure
    assert result.steps == 0
    assert len(result.snapshots) == 1


def test_snapshot_every_must_be_positive(annulus_curve) -> None:
    with pytest.raises(DomainError):
        simulate(annulus_curve, LINE_TENSION_ONLY, snapshot_every=0)


def test_line_tension_moment_survives_without_bending(cap_curve) -> None:
    params = SimParams(gamma_l=0.5, bending=False, dt=1e-3, max_steps=3)
    result = simulate(cap_curve, params)
    moved = result.snapshots[1]

    assert result.failure is None
    assert result.energy_increases == 0
    assert np.max(np.abs(moved.g.coefficients)) > 0.0
    assert moved.curve.endpoint("end")[0] < cap_curve.endpoint("end")[0]


def test_area_correction_holds_local_measures(cap_curve) -> None:
    drifts = {}
    for corrected in (True, False):
        params = SimParams(gamma_l=0.5, dt=0.01, area_correction=corrected)
        state = initial_state(cap_curve, params)
        reference = state.reference_measure
        for _ in range(5):
            state = solve_step(state, params)
        drifts[corrected] = np.max(np.abs(local_measure(state.curve) - reference)) / np.max(reference)
        if corrected:
            assert inextensibility_residual(state, dt=params.dt) <= 1e-10

    assert drifts[True] < drifts[False]
    assert drifts[True] <= 1e-3
