from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate
from scipy import special as sps

from .errors import DomainError, SingularityError

MODULUS_LIMIT = 1.0 - 1e-14
# kernel evaluation refuses only when the points coincide to rounding
COINCIDENCE_TOL = 1e-28
SMALL_MODULUS = 0.25
THETA_POINTS = 32
_AGM_MAX_ITER = 60
# quad refuses epsabs=0 with epsrel below 50 machine epsilons
REFERENCE_QUAD = dict(epsabs=1e-15, epsrel=1e-13, limit=200)


@dataclass(frozen=True)
class EllipticPair:
    K_val: float
    E_val: float
    k: float


@dataclass(frozen=True)
class KernelSample:
    S: np.ndarray
    r: float
    rp: float
    dz: float


def _agm_ke(k2: np.ndarray, kc2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Complete integrals K, E from the squared modulus and its complement.

    Taking the complement directly keeps K accurate when k is within rounding of 1.
    """
    a = np.ones_like(kc2)
    b = np.sqrt(kc2)
    c2_sum = 0.5 * k2
    power = 0.5
    for _ in range(_AGM_MAX_ITER):
        c = 0.5 * (a - b)
        a, b = 0.5 * (a + b), np.sqrt(a * b)
        power *= 2.0
        c2_sum = c2_sum + power * c * c
        if np.all(np.abs(c) <= 1e-17 * a):
            break
    K = math.pi / (2.0 * a)
    return K, K * (1.0 - c2_sum)


def elliptic_ke(k: float) -> EllipticPair:
    if not np.isfinite(k) or k < 0.0:
        raise DomainError(f"elliptic modulus must lie in [0, 1), got {k}")
    if k >= MODULUS_LIMIT:
        raise SingularityError(f"K(k) diverges as k -> 1 (k={k!r})")
    k2 = k * k
    K, E = _agm_ke(np.asarray(k2), np.asarray(1.0 - k2))
    return EllipticPair(K_val=float(K), E_val=float(E), k=float(k))


def elliptic_ke_reference(k: float) -> EllipticPair:
    """Adaptive quadrature of the defining integrals, kept as an independent oracle."""
    k2 = k * k
    K, _ = integrate.quad(lambda t: (1.0 - k2 * math.sin(t) ** 2) ** -0.5, 0.0, math.pi / 2, **REFERENCE_QUAD)
    E, _ = integrate.quad(lambda t: (1.0 - k2 * math.sin(t) ** 2) ** 0.5, 0.0, math.pi / 2, **REFERENCE_QUAD)
    return EllipticPair(K_val=K, E_val=E, k=k)


@lru_cache(maxsize=4)
def _theta_rule(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = sps.roots_legendre(n)
    theta = 0.25 * math.pi * (x + 1.0)
    return np.sin(theta) ** 2, 0.25 * math.pi * w


@dataclass(frozen=True)
class _RingGeometry:
    rho_plus2: np.ndarray
    rho_minus2: np.ndarray
    k2: np.ndarray
    kc2: np.ndarray


def _ring_geometry(r1, r2, zhat) -> _RingGeometry:
    r1 = np.asarray(r1, dtype=float)
    r2 = np.asarray(r2, dtype=float)
    zhat = np.asarray(zhat, dtype=float)
    if np.any(r1 < 0.0) or np.any(r2 < 0.0):
        raise DomainError("ring radii must be non-negative")
    z2 = zhat * zhat
    rho_plus2 = (r1 + r2) ** 2 + z2
    rho_minus2 = (r1 - r2) ** 2 + z2
    if np.any(rho_plus2 <= 0.0):
        raise SingularityError("both rings degenerate to the same point on the axis")
    kc2 = rho_minus2 / rho_plus2
    if np.any(kc2 <= COINCIDENCE_TOL):
        raise SingularityError("coincident source and target points; use the singular quadrature path")
    k2 = 4.0 * r1 * r2 / rho_plus2
    return _RingGeometry(rho_plus2, rho_minus2, k2, kc2)


def _theta_integrals(k2: np.ndarray) -> dict[tuple[int, int], np.ndarray]:
    """int_0^{pi/2} (2 sin^2 - 1)^n D^{-m/2} dtheta with D = 1 - k^2 sin^2, by Gauss-Legendre."""
    s2, w = _theta_rule(THETA_POINTS)
    d = 1.0 - k2[..., None] * s2
    c = 2.0 * s2 - 1.0
    inv_sqrt = d ** -0.5
    inv_cube = inv_sqrt / d
    out = {}
    for n in range(3):
        cn = c**n
        out[(1, n)] = (cn * inv_sqrt) @ w
        out[(3, n)] = (cn * inv_cube) @ w
    return out


def _closed_integrals(k2: np.ndarray, kc2: np.ndarray) -> dict[tuple[int, int], np.ndarray]:
    """Same integrals in closed form through K and E; used for k^2 >= SMALL_MODULUS."""
    K, E = _agm_ke(k2, kc2)
    safe = np.where(k2 > 0.0, k2, 1.0)
    c = (2.0 - k2) / safe
    d = 2.0 / safe
    j_m32 = E / kc2
    j_m12 = K
    j_p12 = E
    j_p32 = (2.0 * (2.0 - k2) * E - kc2 * K) / 3.0
    return {
        (1, 0): j_m12,
        (1, 1): c * j_m12 - d * j_p12,
        (1, 2): c * c * j_m12 - 2.0 * c * d * j_p12 + d * d * j_p32,
        (3, 0): j_m32,
        (3, 1): c * j_m32 - d * j_m12,
        (3, 2): c * c * j_m32 - 2.0 * c * d * j_m12 + d * d * j_p12,
    }


def imn(m: int, n: int, r1, r2, zhat):
    """Ring integral of cos^n(w) / (r1^2 + r2^2 + zhat^2 - 2 r1 r2 cos w)^(m/2) over [0, 2 pi)."""
    if m not in (1, 3) or n not in (0, 1, 2):
        raise DomainError(f"I_mn is defined for m in {{1, 3}} and n in {{0, 1, 2}}, got ({m}, {n})")
    scalar = np.ndim(r1) == 0 and np.ndim(r2) == 0 and np.ndim(zhat) == 0
    r1, r2, zhat = np.broadcast_arrays(np.asarray(r1, float), np.asarray(r2, float), np.asarray(zhat, float))
    geo = _ring_geometry(r1, r2, zhat)
    k2 = np.atleast_1d(geo.k2)
    kc2 = np.atleast_1d(geo.kc2)
    value = np.empty_like(k2)
    small = k2 < SMALL_MODULUS
    if np.any(small):
        value[small] = _theta_integrals(k2[small])[(m, n)]
    if np.any(~small):
        value[~small] = _closed_integrals(k2[~small], kc2[~small])[(m, n)]
    value = 4.0 * value / np.atleast_1d(geo.rho_plus2) ** (0.5 * m)
    return float(value[0]) if scalar else value.reshape(geo.k2.shape)


def imn_reference(m: int, n: int, r1: float, r2: float, zhat: float) -> float:
    """Split form with the two moduli k1, k2, integrated adaptively.

    Independent of the closed-form table in ``imn``.
    """
    rho_minus2 = (r1 - r2) ** 2 + zhat**2
    rho_plus2 = (r1 + r2) ** 2 + zhat**2
    if rho_minus2 == 0.0:
        raise SingularityError("coincident point")
    k1sq = -4.0 * r1 * r2 / rho_minus2
    k2sq = 4.0 * r1 * r2 / rho_plus2

    def first(t: float) -> float:
        s2 = math.sin(t) ** 2
        return (1.0 - 2.0 * s2) ** n * (1.0 - k1sq * s2) ** (-0.5 * m)

    def second(t: float) -> float:
        s2 = math.sin(t) ** 2
        return (2.0 * s2 - 1.0) ** n * (1.0 - k2sq * s2) ** (-0.5 * m)

    opts = dict(epsabs=0.0, epsrel=1e-13, limit=400)
    i1, _ = integrate.quad(first, 0.0, math.pi / 2, **opts)
    i2, _ = integrate.quad(second, 0.0, math.pi / 2, **opts)
    return 2.0 / rho_minus2 ** (0.5 * m) * i1 + 2.0 / rho_plus2 ** (0.5 * m) * i2


def stokeslet(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (3,):
        raise DomainError("stokeslet expects a 3-vector")
    dist = float(np.linalg.norm(x))
    if dist == 0.0:
        raise SingularityError("Stokeslet is singular at the origin")
    return -(np.eye(3) / dist + np.outer(x, x) / dist**3) / (8.0 * math.pi)


def kernel_matrix(r, rp, dz) -> np.ndarray:
    """Vectorized reduced single-layer kernel, shape (..., 2, 2) with components (r, z).

    Near coincidence the entries are regrouped so the 1/(1 - k^2) poles of I_30, I_31 and
    I_32 cancel analytically; far apart the ring integrals are evaluated directly.
    """
    r, rp, dz = np.broadcast_arrays(np.asarray(r, float), np.asarray(rp, float), np.asarray(dz, float))
    shape = r.shape
    r = r.ravel()
    rp = rp.ravel()
    dz = dz.ravel()
    geo = _ring_geometry(r, rp, dz)
    out = np.empty((r.size, 2, 2))

    small = geo.k2 < SMALL_MODULUS
    if np.any(small):
        idx = np.flatnonzero(small)
        ints = _theta_integrals(geo.k2[idx])
        scale1 = 4.0 / np.sqrt(geo.rho_plus2[idx])
        scale3 = scale1 / geo.rho_plus2[idx]
        i10 = scale1 * ints[(1, 0)]
        i11 = scale1 * ints[(1, 1)]
        i30 = scale3 * ints[(3, 0)]
        i31 = scale3 * ints[(3, 1)]
        i32 = scale3 * ints[(3, 2)]
        a, b, z = r[idx], rp[idx], dz[idx]
        out[idx, 0, 0] = i11 + (a * a + b * b) * i31 - a * b * (i30 + i32)
        out[idx, 0, 1] = z * (a * i30 - b * i31)
        out[idx, 1, 0] = z * (a * i31 - b * i30)
        out[idx, 1, 1] = i10 + z * z * i30

    if np.any(~small):
        idx = np.flatnonzero(~small)
        k2 = geo.k2[idx]
        kc2 = geo.kc2[idx]
        rho_p2 = geo.rho_plus2[idx]
        rho_m2 = geo.rho_minus2[idx]
        a, b, z = r[idx], rp[idx], dz[idx]
        K, E = _agm_ke(k2, kc2)
        c = (2.0 - k2) / k2
        d = 2.0 / k2
        scale1 = 4.0 / np.sqrt(rho_p2)
        scale3 = scale1 / rho_p2
        i10 = scale1 * K
        i11 = scale1 * (c * K - d * E)
        # I_31, I_32 without their E/(1-k^2) parts
        reg31 = -scale3 * d * K
        reg32 = scale3 * (d * d * E - 2.0 * c * d * K)
        z2_over = z * z / rho_m2
        out[idx, 0, 0] = (
            i11
            + (a * a + b * b) * reg31
            - a * b * reg32
            + scale1 * E / k2
            - scale1 * (2.0 - k2) * E / k2 * z2_over
        )
        out[idx, 0, 1] = scale1 * E * z * (a * a - b * b - z * z) / (2.0 * a * rho_m2) - z * b * reg31
        out[idx, 1, 0] = scale1 * E * z * (a * a - b * b + z * z) / (2.0 * b * rho_m2) + z * a * reg31
        out[idx, 1, 1] = i10 + scale1 * E * z2_over

    return out.reshape(shape + (2, 2))


def axisym_kernel(r: float, rp: float, dz: float) -> KernelSample:
    S = kernel_matrix(r, rp, dz)
    return KernelSample(S=S.reshape(2, 2), r=float(r), rp=float(rp), dz=float(dz))


def ring_kernel_reference(r: float, rp: float, dz: float) -> np.ndarray:
    """Azimuthal integral of -8 pi G projected on (e_r, e_z) at target and source."""

    def entry(a: int, b: int, phi: float) -> float:
        c, s = math.cos(phi), math.sin(phi)
        x = np.array([r - rp * c, -rp * s, dz])
        T = -8.0 * math.pi * stokeslet(x)
        e_target = (np.array([1.0, 0.0, 0.0]), np.array([0.0, 0.0, 1.0]))[a]
        e_source = (np.array([c, s, 0.0]), np.array([0.0, 0.0, 1.0]))[b]
        return float(e_target @ T @ e_source)

    S = np.empty((2, 2))
    for a in range(2):
        for b in range(2):
            S[a, b], _ = integrate.quad(lambda p: entry(a, b, p), 0.0, 2.0 * math.pi, epsabs=1e-14, epsrel=1e-13, limit=400)
    return S
