import math

import numpy as np
import pytest

from poreflow.errors import DomainError, SingularityError
from poreflow.special import (
    axisym_kernel,
    elliptic_ke,
    elliptic_ke_reference,
    imn,
    imn_reference,
    kernel_matrix,
    ring_kernel_reference,
    stokeslet,
)


def test_elliptic_matches_quadrature_oracle() -> None:
    for k in [0.1 * i for i in range(10)] + [0.99]:
        agm = elliptic_ke(k)
        ref = elliptic_ke_reference(k)
        assert agm.K_val == pytest.approx(ref.K_val, rel=1e-12)
        assert agm.E_val == pytest.approx(ref.E_val, rel=1e-12)


def test_elliptic_at_zero_modulus() -> None:
    pair = elliptic_ke(0.0)
    assert pair.K_val == pytest.approx(math.pi / 2, rel=1e-15)
    assert pair.E_val == pytest.approx(math.pi / 2, rel=1e-15)


def test_elliptic_rejects_bad_modulus() -> None:
    with pytest.raises(SingularityError):
        elliptic_ke(1.0)
    with pytest.raises(DomainError):
        elliptic_ke(-0.1)


def test_ring_integrals_match_split_oracle() -> None:
    for r1, r2, z in [(0.5, 1.0, 0.3), (1.0, 1.2, 0.05), (2.5, 0.5, 1.5), (1.0, 1.0, 0.2)]:
        for m in (1, 3):
            for n in (0, 1, 2):
                assert imn(m, n, r1, r2, z) == pytest.approx(imn_reference(m, n, r1, r2, z), rel=1e-10)


def test_ring_integrals_vectorized_agree_with_scalar() -> None:
    r1 = np.array([0.5, 1.0, 2.0])
    r2 = np.array([1.0, 1.1, 0.7])
    z = np.array([0.4, 0.02, 1.0])
    values = imn(3, 1, r1, r2, z)
    for i in range(3):
        assert values[i] == pytest.approx(imn(3, 1, r1[i], r2[i], z[i]), rel=1e-14)


def test_ring_integrals_reject_unknown_index() -> None:
    with pytest.raises(DomainError):
        imn(2, 0, 1.0, 1.0, 1.0)


def test_kernel_matches_azimuthal_stokeslet_integral() -> None:
    rng = np.random.default_rng(7)
    for _ in range(6):
        r, rp = rng.uniform(0.5, 2.0, size=2)
        dz = rng.uniform(0.5, 1.5)
        ref = ring_kernel_reference(r, rp, dz)
        S = axisym_kernel(r, rp, dz).S
        assert np.max(np.abs(S - ref)) <= 1e-9 * np.max(np.abs(ref))


def test_kernel_near_coincidence_stays_accurate() -> None:
    ref = ring_kernel_reference(1.0, 1.001, 0.001)
    S = axisym_kernel(1.0, 1.001, 0.001).S
    assert np.max(np.abs(S - ref)) <= 1e-7 * np.max(np.abs(ref))


def test_kernel_refuses_coincident_points() -> None:
    with pytest.raises(SingularityError):
        kernel_matrix(1.0, 1.0, 0.0)


def test_stokeslet_is_symmetric_and_singular_at_origin() -> None:
    G = stokeslet([0.3, -0.2, 0.5])
    assert np.allclose(G, G.T)
    with pytest.raises(SingularityError):
        stokeslet([0.0, 0.0, 0.0])


def test_stokeslet_values_parity_and_homogeneity() -> None:
    G = stokeslet([1.0, 0.0, 0.0])
    assert G[0, 0] == pytest.approx(-1.0 / (4.0 * math.pi), rel=1e-15)
    assert G[1, 1] == pytest.approx(-1.0 / (8.0 * math.pi), rel=1e-15)
    assert G[2, 2] == pytest.approx(-1.0 / (8.0 * math.pi), rel=1e-15)
    assert G[0, 1] == G[0, 2] == G[1, 2] == 0.0

    x = np.array([0.3, -0.2, 0.7])
    np.testing.assert_allclose(stokeslet(-x), stokeslet(x), rtol=1e-15)
    y = np.array([1.0, 1.0, 0.0])
    np.testing.assert_allclose(stokeslet(2.0 * y), 0.5 * stokeslet(y), rtol=1e-14, atol=1e-18)


def test_kernel_seen_from_the_axis_is_a_ring_average() -> None:
    S = axisym_kernel(1.0, 0.0, 0.0).S

    assert S[1, 1] == pytest.approx(2.0 * math.pi, rel=1e-13)
    assert abs(S[0, 0]) <= 1e-13
    assert S[0, 1] == 0.0
    assert S[1, 0] == 0.0


def test_kernel_grows_logarithmically_at_coincidence() -> None:
    near = axisym_kernel(1.0, 1.0, 1e-4).S
    far = axisym_kernel(1.0, 1.0, 1e-3).S

    # S_zz ~ 2 log(8 / dz) + 2 on the unit ring
    assert near[1, 1] - far[1, 1] == pytest.approx(2.0 * math.log(10.0), abs=1e-4)
    assert near[1, 1] == pytest.approx(2.0 * math.log(8e4) + 2.0, abs=1e-4)
