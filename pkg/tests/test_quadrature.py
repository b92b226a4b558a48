import math

import numpy as np
import pytest

from poreflow.errors import ConfigError
from poreflow.fem import build_space
from poreflow.quadrature import QuadratureSettings, alpert_log_rule, gauss_rule, singular_pair_assembly
from poreflow.studies import (
    LOG_TEST_INTEGRALS,
    SIN_LOG_INTEGRAL,
    check_log_rule,
    log_monomial_errors,
    log_rule_errors,
    observed_orders,
)


def test_gauss_small_rules() -> None:
    one = gauss_rule(1)
    assert one.nodes.tolist() == [0.0]
    assert one.weights.tolist() == pytest.approx([2.0])
    two = gauss_rule(2)
    assert two.nodes == pytest.approx([-1 / math.sqrt(3), 1 / math.sqrt(3)], abs=1e-15)
    assert two.weights == pytest.approx([1.0, 1.0], abs=1e-15)
    three = gauss_rule(3)
    assert float(three.weights @ three.nodes**4) == pytest.approx(0.4, abs=1e-15)


def test_gauss_exact_to_degree_two_n_minus_one() -> None:
    for n in range(1, 9):
        rule = gauss_rule(n)
        assert rule.exactness_degree == 2 * n - 1
        for p in range(2 * n):
            exact = 2.0 / (p + 1) if p % 2 == 0 else 0.0
            assert abs(float(rule.weights @ rule.nodes**p) - exact) <= 1e-14


def test_gauss_rule_needs_a_point() -> None:
    with pytest.raises(ConfigError):
        gauss_rule(0)


def test_log_rule_plain_integrals() -> None:
    rule = alpert_log_rule(8, 2)
    assert float(rule.weights @ np.log(rule.nodes)) == pytest.approx(-1.0, abs=1e-10)
    assert float(rule.weights @ (rule.nodes * np.log(rule.nodes))) == pytest.approx(-0.25, abs=1e-10)


def test_sin_log_series_value() -> None:
    assert SIN_LOG_INTEGRAL == pytest.approx(-0.2398117, abs=1e-7)


def test_log_rule_reaches_nominal_order() -> None:
    panels = [2, 4, 8, 16]
    slopes = observed_orders(panels, log_rule_errors(4, panels))
    assert abs(slopes[-1] - 4.0) <= 0.3


def test_log_rule_rejects_unsupported_order() -> None:
    with pytest.raises(ConfigError):
        alpert_log_rule(11, 2)
    with pytest.raises(ConfigError):
        QuadratureSettings(alpert_order=1)


def test_single_layer_block_is_symmetric_and_dissipative(cap_curve) -> None:
    layout = build_space(cap_curve.mesh, 2)
    block = singular_pair_assembly(cap_curve, layout)
    M = block.matrix
    assert M.shape == (2 * layout.n_dofs, 2 * layout.n_dofs)
    assert np.array_equal(M, M.T)
    assert block.asymmetry <= 1e-8
    eigenvalues = np.linalg.eigvalsh(M)
    assert eigenvalues.min() >= -1e-8 * np.abs(eigenvalues).max()


def test_order_eight_rule_on_the_log_test_integrals() -> None:
    for panels in (1, 2, 4):
        rule = alpert_log_rule(8, panels)
        for integrand, exact in LOG_TEST_INTEGRALS:
            assert float(rule.weights @ integrand(rule.nodes)) == pytest.approx(exact, abs=1e-10)


def test_order_eight_rule_reaches_nominal_order() -> None:
    panels = [1, 2, 4]
    slopes = observed_orders(panels, log_monomial_errors(8, panels))
    assert all(abs(slope - 8.0) <= 0.3 for slope in slopes[1:])
    assert check_log_rule().passed


def test_single_layer_block_settles_under_panel_doubling(cap_curve) -> None:
    layout = build_space(cap_curve.mesh, 2)
    coarse = singular_pair_assembly(cap_curve, layout).matrix
    fine = singular_pair_assembly(cap_curve, layout, settings=QuadratureSettings(alpert_panels=4)).matrix
    assert np.max(np.abs(fine - coarse)) <= 1e-8 * np.max(np.abs(coarse))


def test_raw_block_is_symmetric_on_the_annulus(annulus_curve) -> None:
    layout = build_space(annulus_curve.mesh, 2)
    block = singular_pair_assembly(annulus_curve, layout, symmetrize=False)
    assert block.asymmetry <= 1e-8
