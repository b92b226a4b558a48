from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .config import SimConfig, validate_config
from .diagnostics import (
    boundary_layer_width,
    curve_area,
    curve_energy,
    f_estimate,
    hole_area,
    line_tension_time,
    velocity_error,
)
from .errors import ConfigError, PoreflowError
from .fem import cell_geometry
from .geometry import build_mesh
from .output import Provenance, write_table
from .quadrature import alpert_log_rule, gauss_rule
from .scenarios import spherical_cap
from .solver import initial_state, recover_curvature, run, solve_step
from .special import (
    axisym_kernel,
    elliptic_ke,
    elliptic_ke_reference,
    imn,
    imn_reference,
    ring_kernel_reference,
)

logger = logging.getLogger("poreflow.studies")

STUDY_KINDS = ("convergence", "width", "viscosity", "boundary_layer")
DEFAULT_GRIDS: dict[str, tuple[float, ...]] = {
    "convergence": (4, 8, 16, 32, 64, 128),
    "width": (16, 32, 64, 128),
    "viscosity": (0.0, 0.1, 0.3, 0.5),
    "boundary_layer": (1.0, 0.1, 0.01),
}


def observed_orders(sizes: Sequence[float], errors: Sequence[float]) -> list[float]:
    """log2-style slopes between consecutive (N, error) pairs; nan where undefined."""
    out = [math.nan]
    for (n0, e0), (n1, e1) in zip(zip(sizes, errors), zip(sizes[1:], errors[1:])):
        if e0 > 0.0 and e1 > 0.0 and math.isfinite(e0) and math.isfinite(e1):
            out.append(math.log(e0 / e1) / math.log(n1 / n0))
        else:
            out.append(math.nan)
    return out


def one_step_annulus(config: SimConfig, N: int, refine_at: str):
    """State after a single solve on the configured annulus."""
    cfg = replace(config, scenario="annulus", N=int(N), refine_at=refine_at)
    params = cfg.sim_params()
    return solve_step(initial_state(cfg.initial_curve(), params), params)


def convergence_study(config: SimConfig, grid: Sequence[float]) -> tuple[list[str], list[list[object]]]:
    sizes = [int(n) for n in grid]
    errors: dict[str, list[float]] = {"both": [], "none": []}
    flux: list[float] = []
    status: list[str] = []
    for N in sizes:
        reasons = []
        for mesh_kind in ("both", "none"):
            try:
                state = one_step_annulus(config, N, mesh_kind)
                errors[mesh_kind].append(velocity_error(state))
                if mesh_kind == "both":
                    flux.append(f_estimate(state))
            except PoreflowError as exc:
                logger.warning("convergence run N=%d (%s) failed: %s", N, mesh_kind, exc)
                errors[mesh_kind].append(math.nan)
                if mesh_kind == "both":
                    flux.append(math.nan)
                reasons.append(f"{mesh_kind}: {exc}")
        status.append("; ".join(reasons) or "ok")
        logger.info("N=%d graded=%.3e uniform=%.3e", N, errors["both"][-1], errors["none"][-1])
    graded_order = observed_orders(sizes, errors["both"])
    uniform_order = observed_orders(sizes, errors["none"])
    columns = ["N", "error_graded", "order_graded", "error_uniform", "order_uniform", "F_graded", "status"]
    rows = [
        [N, errors["both"][i], graded_order[i], errors["none"][i], uniform_order[i], flux[i], status[i]]
        for i, N in enumerate(sizes)
    ]
    return columns, rows


def _annulus_sweep(
    config: SimConfig,
    label: str,
    values: Sequence[float],
    adjust: Callable[[SimConfig, float], SimConfig],
) -> tuple[list[str], list[list[object]]]:
    """F_h and normalized hole area against t / tau for one annulus run per value."""
    columns = [label, "t", "t_over_tau", "F_h", "hole_area", "status"]
    rows: list[list[object]] = []
    for value in values:
        try:
            cfg = validate_config(adjust(replace(config, scenario="annulus"), float(value)))
            inner = cfg.shape_params().get("inner_radius", 1.0)
            tau = line_tension_time(1.0, inner, cfg.gamma_l)
            result = run(cfg)
        except PoreflowError as exc:
            logger.warning("%s=%g failed before stepping: %s", label, value, exc)
            rows.append([float(value), math.nan, math.nan, math.nan, math.nan, str(exc)])
            continue
        status = result.failure or result.stop_reason
        for state in result.snapshots[1:]:
            rows.append(
                [
                    float(value),
                    state.t,
                    state.t / tau,
                    f_estimate(state),
                    hole_area(state, inner),
                    status,
                ]
            )
        if len(result.snapshots) == 1:
            rows.append([float(value), 0.0, 0.0, math.nan, 1.0, status])
    return columns, rows


def width_study(config: SimConfig, grid: Sequence[float]) -> tuple[list[str], list[list[object]]]:
    return _annulus_sweep(
        config,
        "outer_radius",
        grid,
        lambda cfg, value: replace(cfg, outer_radius=value, bending=False),
    )


def viscosity_study(config: SimConfig, grid: Sequence[float]) -> tuple[list[str], list[list[object]]]:
    return _annulus_sweep(
        config,
        "beta",
        grid,
        lambda cfg, value: replace(cfg, beta=value, bending=False),
    )


def boundary_layer_study(config: SimConfig, grid: Sequence[float]) -> tuple[list[str], list[list[object]]]:
    """H(s) profiles of spherical-cap runs for each inverse line tension."""
    columns = ["inverse_gamma_l", "t", "s", "H", "layer_width", "status"]
    rows: list[list[object]] = []
    for inverse in grid:
        if inverse <= 0.0:
            raise ConfigError("inverse line tensions must be positive", key="grid")
        try:
            cfg = validate_config(replace(config, scenario="spherical_cap", gamma_l=1.0 / float(inverse)))
            result = run(cfg)
        except PoreflowError as exc:
            rows.append([float(inverse), math.nan, math.nan, math.nan, math.nan, str(exc)])
            continue
        status = result.failure or result.stop_reason
        for state in result.snapshots:
            width = boundary_layer_width(state)
            s = state.curve.dof_arc_length()
            for s_i, h_i in zip(s, state.H.component(0)):
                rows.append([float(inverse), state.t, float(s_i), float(h_i), width, status])
    return columns, rows


STUDIES: dict[str, Callable[[SimConfig, Sequence[float]], tuple[list[str], list[list[object]]]]] = {
    "convergence": convergence_study,
    "width": width_study,
    "viscosity": viscosity_study,
    "boundary_layer": boundary_layer_study,
}


def run_study(
    kind: str,
    config: SimConfig,
    output_dir: str | Path | None = None,
    grid: Sequence[float] | None = None,
) -> Path:
    if kind not in STUDIES:
        raise ConfigError(f"unknown study '{kind}'; choose one of {STUDY_KINDS}", key="study")
    values = tuple(grid) if grid else DEFAULT_GRIDS[kind]
    if not values:
        raise ConfigError("study grid is empty", key="grid")
    logger.info("study %s over %s", kind, values)
    columns, rows = STUDIES[kind](config, values)
    target = Path(output_dir or config.output_dir) / f"study_{kind}.tsv"
    return write_table(target, columns, rows, Provenance.from_config(config), title=f"study {kind}")


@dataclass(frozen=True)
class OracleResult:
    name: str
    passed: bool
    value: float
    threshold: float
    detail: str = ""


def _check(name: str, value: float, threshold: float, detail: str = "", larger_is_better: bool = False) -> OracleResult:
    passed = value >= threshold if larger_is_better else value <= threshold
    return OracleResult(name=name, passed=bool(passed), value=float(value), threshold=threshold, detail=detail)


def check_elliptic() -> OracleResult:
    worst = 0.0
    for k in [0.1 * i for i in range(10)] + [0.99]:
        agm, ref = elliptic_ke(k), elliptic_ke_reference(k)
        worst = max(worst, abs(agm.K_val - ref.K_val) / ref.K_val, abs(agm.E_val - ref.E_val) / ref.E_val)
    return _check("elliptic_agm", worst, 1e-12, "K, E against adaptive quadrature")


def check_imn() -> OracleResult:
    worst = 0.0
    radii = np.linspace(0.5, 2.5, 5)
    heights = np.linspace(0.3, 1.5, 5)
    for r1 in radii:
        for r2 in radii:
            for z in heights:
                for m in (1, 3):
                    for n in (0, 1, 2):
                        ref = imn_reference(m, n, r1, r2, z)
                        worst = max(worst, abs(imn(m, n, r1, r2, z) - ref) / abs(ref))
    return _check("ring_integrals", worst, 1e-10, "I_mn on a 5x5x5 grid")


def check_kernel(samples: int = 50) -> OracleResult:
    rng = np.random.default_rng(20240611)
    worst = 0.0
    for _ in range(samples):
        r, rp = rng.uniform(0.5, 2.0, size=2)
        dz = rng.uniform(0.5, 1.5)
        S = axisym_kernel(r, rp, dz).S
        ref = ring_kernel_reference(r, rp, dz)
        worst = max(worst, float(np.max(np.abs(S - ref)) / np.max(np.abs(ref))))
    return _check("ring_kernel", worst, 1e-9, f"{samples} separated samples")


def check_gauss() -> OracleResult:
    worst = 0.0
    for n in range(1, 11):
        rule = gauss_rule(n)
        for p in range(2 * n):
            exact = 2.0 / (p + 1) if p % 2 == 0 else 0.0
            worst = max(worst, abs(float(rule.weights @ rule.nodes**p) - exact))
    return _check("gauss_exactness", worst, 1e-14, "monomials to degree 2n-1")


SIN_LOG_INTEGRAL = sum((-1) ** (k + 1) / (math.factorial(2 * k + 1) * (2 * k + 2) ** 2) for k in range(12))


def log_rule_errors(order: int, panels: Sequence[int]) -> list[float]:
    errors = []
    for n in panels:
        rule = alpert_log_rule(order, n)
        errors.append(abs(float(rule.weights @ (np.sin(rule.nodes) * np.log(rule.nodes))) - SIN_LOG_INTEGRAL))
    return errors


LOG_TEST_INTEGRALS: tuple[tuple[Callable[[np.ndarray], np.ndarray], float], ...] = (
    (np.log, -1.0),
    (lambda x: x * np.log(x), -0.25),
    (lambda x: np.sin(x) * np.log(x), SIN_LOG_INTEGRAL),
)


def log_monomial_errors(order: int, panels: Sequence[int]) -> list[float]:
    """Errors on x^(order-1) log x, the first term the corrected panel misses."""
    p = order - 1
    exact = -1.0 / (p + 1) ** 2
    errors = []
    for n in panels:
        rule = alpert_log_rule(order, n)
        errors.append(abs(float(rule.weights @ (rule.nodes**p * np.log(rule.nodes))) - exact))
    return errors


def check_log_rule(order: int = 8, panels: Sequence[int] = (1, 2, 4)) -> OracleResult:
    rule = alpert_log_rule(order, 2)
    plain = max(abs(float(rule.weights @ f(rule.nodes)) - exact) for f, exact in LOG_TEST_INTEGRALS)
    slope = observed_orders(list(panels), log_monomial_errors(order, panels))[-1]
    passed = plain <= 1e-10 and abs(slope - order) <= 0.3
    return OracleResult(
        name="log_rule_order",
        passed=passed,
        value=slope,
        threshold=float(order),
        detail=f"worst test-integral error {plain:.1e}",
    )


def cap_curvature_error(N: int, refine_at: str = "none") -> float:
    """Weighted L2 error of H recovered on the frozen unit-sphere cap."""
    curve = spherical_cap(build_mesh(N, 1e-3, refine_at))
    _, H = recover_curvature(curve, {"end": 1.0})
    geo = cell_geometry(curve, 6)
    values = H.evaluate(geo.alpha.ravel())[0]
    return float(math.sqrt(geo.measure.ravel() @ (values - 1.0) ** 2))


def check_curvature_recovery(sizes: Sequence[int] = (8, 16, 32, 64)) -> OracleResult:
    errors = [cap_curvature_error(N) for N in sizes]
    order = min(observed_orders(list(sizes), errors)[1:])
    return _check("curvature_recovery", order, 2.0, f"errors {', '.join(f'{e:.2e}' for e in errors)}", larger_is_better=True)


def check_cap_measures() -> OracleResult:
    curve = spherical_cap(build_mesh(32, 1e-3, "end"))
    exact = 2.0 * math.pi * (1.0 + math.cos(0.1 * math.pi))
    parts = curve_energy(curve, H0=0.0, gamma_g=0.0, gamma_l=1.0)
    worst = max(
        abs(curve_area(curve) - exact) / exact,
        abs(parts.bending - exact) / exact,
        abs(parts.line - 2.0 * math.pi * math.sin(0.9 * math.pi)),
    )
    return _check("cap_area_energy", worst, 2e-3, "area, bending and line energy of the 0.9 pi cap")


ORACLES: tuple[Callable[[], OracleResult], ...] = (
    check_elliptic,
    check_imn,
    check_kernel,
    check_gauss,
    check_log_rule,
    check_curvature_recovery,
    check_cap_measures,
)


def run_validation() -> list[OracleResult]:
    results = []
    for oracle in ORACLES:
        try:
            result = oracle()
        except Exception as exc:
            logger.exception("oracle %s raised", oracle.__name__)
            result = OracleResult(
                name=oracle.__name__.removeprefix("check_"),
                passed=False,
                value=math.nan,
                threshold=math.nan,
                detail=f"{type(exc).__name__}: {exc}",
            )
        level = logging.INFO if result.passed else logging.WARNING
        logger.log(level, "%s: %s (%.3e vs %.3e) %s", result.name, "ok" if result.passed else "FAIL", result.value, result.threshold, result.detail)
        results.append(result)
    return results
