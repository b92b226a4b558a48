import math

import numpy as np
import pytest

from poreflow.errors import AxisSingularityError, ConfigError, DomainError, GeometryError
from poreflow.geometry import (
    GeneratingCurve,
    build_mesh,
    check_quality,
    curvatures,
    edge_frame,
    geometric_curvatures,
    graded_map,
    mesh_quality,
    normal_and_tangent,
    pole_curvatures,
)


def test_graded_map_pins_endpoints_and_is_monotone() -> None:
    eta = np.linspace(0.0, 1.0, 33)
    for refine_at in ("start", "end", "both", "none"):
        alpha = graded_map(eta, 1e-3, refine_at)
        assert alpha[0] == 0.0
        assert alpha[-1] == 1.0
        assert np.all(np.diff(alpha) > 0.0)


def test_graded_map_clusters_toward_refined_end() -> None:
    mesh = build_mesh(32, 1e-3, "end")
    assert mesh.widths[-1] < 0.05 * mesh.widths[0]
    both = build_mesh(32, 1e-3, "both")
    assert both.widths[0] == pytest.approx(both.widths[-1], rel=1e-10)
    assert both.widths[0] < both.widths[16]


def test_epsilon_one_gives_uniform_mesh() -> None:
    mesh = build_mesh(8, 1.0, "end")
    assert mesh.widths == pytest.approx(np.full(8, 1 / 8))


def test_graded_map_rejects_bad_input() -> None:
    with pytest.raises(DomainError):
        graded_map(1.5, 1e-3)
    with pytest.raises(DomainError):
        graded_map(0.5, 1e-3, "middle")


def test_build_mesh_needs_two_cells() -> None:
    with pytest.raises(ConfigError) as info:
        build_mesh(1)
    assert info.value.key == "N"


def test_cap_endpoint_and_curvatures(cap_curve) -> None:
    assert cap_curve.endpoint("end")[0] == pytest.approx(math.sin(0.9 * math.pi), abs=1e-14)
    alpha = np.linspace(0.05, 1.0, 12)
    H, K = curvatures(cap_curve, alpha)
    assert H == pytest.approx(np.ones_like(alpha), abs=1e-2)
    assert K == pytest.approx(np.ones_like(alpha), abs=2e-2)
    H_pole, K_pole = pole_curvatures(cap_curve, "start")
    assert H_pole == pytest.approx(1.0, abs=3e-2)
    assert K_pole == pytest.approx(1.0, abs=6e-2)


def test_curvatures_refuse_the_axis(cap_curve) -> None:
    with pytest.raises(AxisSingularityError):
        curvatures(cap_curve, 0.0)
    H, _ = geometric_curvatures(cap_curve, np.array([0.0, 0.5]))
    assert np.all(np.isfinite(H))


def test_normal_is_tangent_rotated_clockwise(annulus_curve) -> None:
    n, tau = normal_and_tangent(annulus_curve, 0.3)
    assert tau == pytest.approx([1.0, 0.0])
    assert n == pytest.approx([0.0, -1.0])


def test_annulus_edge_frames(annulus_curve) -> None:
    inner = edge_frame(annulus_curve, "start")
    outer = edge_frame(annulus_curve, "end")
    assert inner.nu == pytest.approx([-1.0, 0.0])
    assert inner.kappa_g == pytest.approx(-1.0)
    assert outer.nu == pytest.approx([1.0, 0.0])
    assert outer.kappa_g == pytest.approx(0.5)
    assert outer.kappa_n == pytest.approx(0.0)


def test_edge_frame_refuses_axis_end(cap_curve) -> None:
    with pytest.raises(GeometryError):
        edge_frame(cap_curve, "start")


def test_axis_coefficient_must_be_exactly_zero(cap_curve) -> None:
    xr = cap_curve.xr.copy()
    xr[0] = 1e-16
    with pytest.raises(GeometryError):
        GeneratingCurve(mesh=cap_curve.mesh, xr=xr, xz=cap_curve.xz, axis_ends=("start",))


def test_quality_monitor_flags_crossing_the_axis(annulus_curve) -> None:
    assert mesh_quality(annulus_curve).min_radius == pytest.approx(1.0, abs=1e-2)
    crossed = annulus_curve.with_coefficients(annulus_curve.xr - 1.5, annulus_curve.xz)
    with pytest.raises(GeometryError):
        check_quality(crossed)


def test_arc_length_of_annulus(annulus_curve) -> None:
    s = annulus_curve.arc_length()
    assert s[-1] == pytest.approx(1.0, rel=1e-12)
    dof_s = annulus_curve.dof_arc_length()
    assert dof_s == pytest.approx(annulus_curve.xr - 1.0, abs=1e-12)


def spherical_band(N: int = 32) -> GeneratingCurve:
    mesh = build_mesh(N, 1e-3, "both")

    def fn(alpha: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        s = (0.2 + 0.6 * alpha) * math.pi
        return np.sin(s), -np.cos(s)

    return GeneratingCurve.from_function(mesh, fn)


def test_band_edges_share_the_normal_curvature_branch() -> None:
    band = spherical_band()
    for end in ("start", "end"):
        assert edge_frame(band, end).kappa_n == pytest.approx(1.0, rel=1e-4)


def test_edge_curvatures_reproduce_the_edge_length_variation() -> None:
    # r (kappa_g nu - kappa_n n) is the gradient of the edge circumference / 2 pi, i.e. e_r
    band = spherical_band()
    for end in ("start", "end"):
        frame = edge_frame(band, end)
        n, _ = normal_and_tangent(band, 0.0 if end == "start" else 1.0)
        r = band.endpoint(end)[0]
        gradient = r * (frame.kappa_g * frame.nu + frame.kappa_n * n)
        assert gradient == pytest.approx([1.0, 0.0], abs=1e-12)
