from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import TYPE_CHECKING, Callable

import numpy as np
from scipy import special as sps

from .errors import ConfigError, QuadratureWarning
from .special import kernel_matrix

if TYPE_CHECKING:
    from .fem import DofLayout
    from .geometry import GeneratingCurve, ReferenceMesh

logger = logging.getLogger("poreflow.quadrature")

ALPERT_ORDERS = tuple(range(2, 11))
INV_8PI = 1.0 / (8.0 * math.pi)


@dataclass(frozen=True)
class QuadRule:
    nodes: np.ndarray
    weights: np.ndarray
    exactness_degree: int
    kind: str

    def mapped(self, a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
        """Nodes and weights transported to [a, b].

        Gauss rules live on [-1, 1], log rules on (0, 1] with the singular point at 0.
        For log rules ``a`` is the singular endpoint and ``b`` may lie on either side.
        """
        if self.kind == "gauss":
            half = 0.5 * (b - a)
            return a + half * (self.nodes + 1.0), abs(half) * self.weights
        return a + (b - a) * self.nodes, abs(b - a) * self.weights


@lru_cache(maxsize=64)
def _legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    nodes, weights = sps.roots_legendre(n)
    return np.asarray(nodes, dtype=float), np.asarray(weights, dtype=float)


def gauss_rule(n: int) -> QuadRule:
    if n < 1:
        raise ConfigError("Gauss rule needs at least one point", key="gauss_points")
    nodes, weights = _legendre(int(n))
    return QuadRule(nodes=nodes.copy(), weights=weights.copy(), exactness_degree=2 * n - 1, kind="gauss")


def _shifted_legendre_log_moment(p: int) -> float:
    # integral of P~_p(t) log t over (0, 1)
    if p == 0:
        return -1.0
    return (-1.0) ** (p + 1) / (p * (p + 1))


@lru_cache(maxsize=16)
def _corrected_panel(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Endpoint-corrected rule on (0, 1] exact for t^p (p <= q) and t^p log t (p < q)."""
    q = order - 1
    count = 2 * q + 1
    ref_nodes, _ = _legendre(count)
    t = 0.5 * (ref_nodes + 1.0)

    rows = []
    rhs = []
    for p in range(q + 1):
        rows.append(sps.eval_sh_legendre(p, t))
        rhs.append(1.0 if p == 0 else 0.0)
    log_t = np.log(t)
    for p in range(q):
        rows.append(sps.eval_sh_legendre(p, t) * log_t)
        rhs.append(_shifted_legendre_log_moment(p))
    weights = np.linalg.solve(np.vstack(rows), np.asarray(rhs))
    return t, weights


def alpert_log_rule(order: int = 8, n: int = 2) -> QuadRule:
    """Rule for phi(x) log x + psi(x) on (0, 1] built from ``n`` panels.

    The panel touching the singular endpoint carries moment-corrected weights, the other
    panels use Gauss-Legendre with ``max(order + 2, 10)`` points. The error decays like
    ``n**-order`` for smooth phi and psi.
    """
    if order not in ALPERT_ORDERS:
        raise ConfigError(f"unsupported log-rule order {order}; choose one of {ALPERT_ORDERS}", key="alpert_order")
    if n < 1:
        raise ConfigError("log rule needs at least one panel", key="alpert_panels")

    h = 1.0 / n
    t, w = _corrected_panel(order)
    nodes = [t * h]
    weights = [w * h]
    smooth = gauss_rule(max(order + 2, 10))
    for k in range(1, n):
        x, wx = smooth.mapped(k * h, (k + 1) * h)
        nodes.append(x)
        weights.append(wx)
    return QuadRule(
        nodes=np.concatenate(nodes),
        weights=np.concatenate(weights),
        exactness_degree=order - 1,
        kind="alpert_log",
    )


@dataclass(frozen=True)
class QuadratureSettings:
    gauss_points: int = 4
    alpert_order: int = 8
    alpert_panels: int = 2
    far_points: int = 8
    near_ratio: float = 1.0
    max_bisections: int = 40

    def __post_init__(self) -> None:
        if self.gauss_points < 1:
            raise ConfigError("gauss_points must be >= 1", key="gauss_points")
        if self.alpert_order not in ALPERT_ORDERS:
            raise ConfigError(f"alpert_order must be one of {ALPERT_ORDERS}", key="alpert_order")
        if self.alpert_panels < 1:
            raise ConfigError("alpert_panels must be >= 1", key="alpert_panels")
        if self.far_points < 2:
            raise ConfigError("far_points must be >= 2", key="far_points")


def _graded_panels(a: float, b: float, target: float, ratio: float, depth: int) -> list[tuple[float, float]]:
    """Bisect [a, b] until every panel is at least ``ratio`` widths away from ``target``."""
    out: list[tuple[float, float]] = []
    stack = [(a, b, 0)]
    while stack:
        lo, hi, level = stack.pop()
        width = hi - lo
        dist = max(lo - target, target - hi, 0.0)
        if dist >= ratio * width or level >= depth:
            out.append((lo, hi))
            continue
        mid = 0.5 * (lo + hi)
        stack.append((mid, hi, level + 1))
        stack.append((lo, mid, level + 1))
    out.sort()
    return out


@dataclass
class SingleLayerRules:
    """Geometry-independent outer/inner nodes for one reference mesh.

    The outer integrand picks up (t - a) log|t - a| terms at every mesh node, so each cell
    is split at its midpoint and both halves use the log rule anchored at the cell end.
    Built once per mesh and reused at every step because the mesh is Lagrangian.
    """

    outer_alpha: np.ndarray
    outer_weight: np.ndarray
    outer_cell: np.ndarray
    inner_owner: np.ndarray
    inner_alpha: np.ndarray
    inner_weight: np.ndarray
    settings: QuadratureSettings
    chunks: list[tuple[int, int, int, int]] = field(default_factory=list)

    @classmethod
    def build(cls, mesh: "ReferenceMesh", settings: QuadratureSettings) -> "SingleLayerRules":
        nodes = mesh.nodes
        n_cells = len(nodes) - 1
        far = gauss_rule(settings.far_points)
        log_rule = alpert_log_rule(settings.alpert_order, settings.alpert_panels)

        outer_alpha = []
        outer_weight = []
        outer_cell = []
        for c in range(n_cells):
            mid = 0.5 * (nodes[c] + nodes[c + 1])
            for end in (nodes[c], nodes[c + 1]):
                x, w = log_rule.mapped(end, mid)
                outer_alpha.append(x)
                outer_weight.append(w)
                outer_cell.append(np.full(len(x), c))
        outer_alpha_arr = np.concatenate(outer_alpha)
        outer_weight_arr = np.concatenate(outer_weight)
        outer_cell_arr = np.concatenate(outer_cell)

        far_x = []
        far_w = []
        for c in range(n_cells):
            x, w = far.mapped(nodes[c], nodes[c + 1])
            far_x.append(x)
            far_w.append(w)
        far_x_arr = np.stack(far_x)
        far_w_arr = np.stack(far_w)

        owners = []
        alphas = []
        weights = []
        for q, (aq, cq) in enumerate(zip(outer_alpha_arr, outer_cell_arr)):
            parts_x = []
            parts_w = []
            lo, hi = nodes[cq], nodes[cq + 1]
            for end in (lo, hi):
                x, w = log_rule.mapped(aq, end)
                parts_x.append(x)
                parts_w.append(w)
            for c in range(n_cells):
                if c == cq:
                    continue
                a, b = nodes[c], nodes[c + 1]
                dist = max(a - aq, aq - b, 0.0)
                if dist >= settings.near_ratio * (b - a):
                    parts_x.append(far_x_arr[c])
                    parts_w.append(far_w_arr[c])
                    continue
                for pa, pb in _graded_panels(a, b, aq, settings.near_ratio, settings.max_bisections):
                    x, w = far.mapped(pa, pb)
                    parts_x.append(x)
                    parts_w.append(w)
            x = np.concatenate(parts_x)
            owners.append(np.full(len(x), q))
            alphas.append(x)
            weights.append(np.concatenate(parts_w))

        rules = cls(
            outer_alpha=outer_alpha_arr,
            outer_weight=outer_weight_arr,
            outer_cell=outer_cell_arr,
            inner_owner=np.concatenate(owners),
            inner_alpha=np.clip(np.concatenate(alphas), 0.0, 1.0),
            inner_weight=np.concatenate(weights),
            settings=settings,
        )
        rules.chunks = rules._split_chunks(max_pairs=200_000)
        logger.debug(
            "single-layer rules: %d outer nodes, %d inner pairs",
            len(outer_alpha_arr),
            len(rules.inner_alpha),
        )
        return rules

    def _split_chunks(self, max_pairs: int) -> list[tuple[int, int, int, int]]:
        bounds = np.searchsorted(self.inner_owner, np.arange(len(self.outer_alpha) + 1))
        chunks = []
        start = 0
        while start < len(self.outer_alpha):
            stop = start + 1
            while stop < len(self.outer_alpha) and bounds[stop + 1] - bounds[start] <= max_pairs:
                stop += 1
            chunks.append((start, stop, int(bounds[start]), int(bounds[stop])))
            start = stop
        return chunks


_RULE_CACHE: dict[tuple[int, QuadratureSettings], tuple["ReferenceMesh", SingleLayerRules]] = {}


def single_layer_rules(mesh: "ReferenceMesh", settings: QuadratureSettings) -> SingleLayerRules:
    key = (id(mesh), settings)
    cached = _RULE_CACHE.get(key)
    if cached is not None and cached[0] is mesh:
        return cached[1]
    rules = SingleLayerRules.build(mesh, settings)
    if len(_RULE_CACHE) > 16:
        _RULE_CACHE.clear()
    _RULE_CACHE[key] = (mesh, rules)
    return rules


@dataclass(frozen=True)
class SingleLayerBlock:
    matrix: np.ndarray
    asymmetry: float


KernelFn = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


def singular_pair_assembly(
    curve: "GeneratingCurve",
    densities: "DofLayout",
    kernel: KernelFn = kernel_matrix,
    settings: QuadratureSettings | None = None,
    symmetrize: bool = True,
    asymmetry_tol: float = 1e-8,
) -> SingleLayerBlock:
    """Galerkin matrix of <phi_i e_a, S[phi_j e_b]>_C for P2 densities.

    Rows and columns are interleaved as ``2 * dof + component`` with components (r, z).
    The factor 1/(8 pi) of the reduced single layer is included.
    """
    settings = settings or QuadratureSettings()
    rules = single_layer_rules(densities.mesh, settings)
    n = densities.n_dofs
    size = 2 * n

    ox, oxa, _ = curve.evaluate(rules.outer_alpha)
    outer_r = ox[0]
    outer_z = ox[1]
    outer_j = np.hypot(oxa[0], oxa[1])
    outer_scale = rules.outer_weight * outer_r * outer_j * INV_8PI
    outer_dofs, outer_phi = densities.basis_at(rules.outer_alpha)

    matrix = np.zeros((size, size))
    for q0, q1, p0, p1 in rules.chunks:
        owner = rules.inner_owner[p0:p1]
        alpha = rules.inner_alpha[p0:p1]
        ix, ixa, _ = curve.evaluate(alpha)
        inner_scale = rules.inner_weight[p0:p1] * ix[0] * np.hypot(ixa[0], ixa[1])
        s = kernel(outer_r[owner], ix[0], outer_z[owner] - ix[1]) * inner_scale[:, None, None]
        inner_dofs, inner_phi = densities.basis_at(alpha)

        local = owner - q0
        rows = q1 - q0
        reduced = np.zeros((rows, 2, size))
        for a in range(2):
            for b in range(2):
                for k in range(inner_dofs.shape[1]):
                    flat = local * size + 2 * inner_dofs[:, k] + b
                    reduced[:, a, :] += np.bincount(
                        flat, weights=s[:, a, b] * inner_phi[:, k], minlength=rows * size
                    ).reshape(rows, size)

        weights = outer_scale[q0:q1]
        for k in range(outer_dofs.shape[1]):
            coef = (outer_phi[q0:q1, k] * weights)[:, None]
            for a in range(2):
                np.add.at(matrix, 2 * outer_dofs[q0:q1, k] + a, coef * reduced[:, a, :])

    scale = np.max(np.abs(matrix)) or 1.0
    asymmetry = float(np.max(np.abs(matrix - matrix.T)) / scale)
    if asymmetry > asymmetry_tol:
        warnings.warn(
            f"single-layer block asymmetry {asymmetry:.2e} exceeds {asymmetry_tol:.0e}; "
            "increase alpert_order or alpert_panels",
            QuadratureWarning,
            stacklevel=2,
        )
    if symmetrize:
        matrix = 0.5 * (matrix + matrix.T)
    return SingleLayerBlock(matrix=matrix, asymmetry=asymmetry)
