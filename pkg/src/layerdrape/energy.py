"""Draping energy terms with analytic gradients.

Every term maps deformed vertex positions to (scalar value, per-vertex
gradient). Nearest-neighbor assignments, interaction pair sets, and the
holding mask are refreshed once per solver iteration and treated as constants
inside a single evaluation; each term therefore accepts its correspondence
data as an optional argument so callers (the solver, and the finite-difference
oracle) can pin them explicitly.

Sign conventions: body/garment distances d = (x - p_ref) . n_ref are positive
outside the reference surface; collision terms penalize max(eps - d, 0)^3.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ValidationError
from .mesh import Hinges, RestFrame, hinge_angle_gradients, scatter_add, vertex_normals
from .mesh import mean_edge_length as _mean_edge_length
from .spatial import UniformGrid, build_index, pairs_within

COINCIDENT_TOL = 1e-9


@dataclass
class MaterialParams:
    """Cloth material and interaction constants.

    lame_lambda / lame_mu are the membrane Lame constants (N/m^2-ish, folded
    with thickness into per-face volume); bending_stiffness multiplies squared
    hinge angles; area_density is kg/m^2. epsilon_* are the collision shell
    offsets (m); interaction_radius bounds both the repulsive pair search and
    the layer-order pairing.
    """

    lame_lambda: float = 4.44e4
    lame_mu: float = 2.36e4
    bending_stiffness: float = 5e-3
    area_density: float = 0.15
    thickness: float = 3e-4
    epsilon_body: float = 4e-3
    epsilon_garment: float = 2e-3
    interaction_radius: float = 0.1
    gravity: tuple[float, float, float] = (0.0, -9.81, 0.0)

    def validate(self) -> None:
        positive = (
            "lame_mu", "bending_stiffness", "area_density",
            "thickness", "epsilon_body", "epsilon_garment", "interaction_radius",
        )
        for name in positive:
            v = getattr(self, name)
            if not (v > 0.0) or not np.isfinite(v):
                raise ValidationError(f"material parameter {name} must be positive, got {v}")
        # zero is admissible for the first Lame parameter (zero transverse
        # contraction); the shear modulus above keeps the energy positive
        if self.lame_lambda < 0.0 or not np.isfinite(self.lame_lambda):
            raise ValidationError(
                f"material parameter lame_lambda must be non-negative, got {self.lame_lambda}"
            )

    def gravity_vec(self) -> np.ndarray:
        return np.asarray(self.gravity, dtype=np.float64)


@dataclass
class LossWeights:
    """Weights of the combined objectives; all must be non-negative."""

    strain: float = 1.0
    bending: float = 5.0
    gravity: float = 1.0
    collision: float = 250.0
    repulsive: float = 1e-3
    holding: float = 100.0
    multi_collision: float = 250.0
    distance: float = 25000.0

    def validate(self) -> None:
        for name, v in self.__dict__.items():
            if v < 0.0 or not np.isfinite(v):
                raise ValidationError(f"loss weight {name} must be >= 0, got {v}")


@dataclass
class EnergyGrad:
    """Scalar energy plus gradient w.r.t. the primary positions argument.

    grad_other carries the gradient w.r.t. the second surface for pair terms
    (layer collision: the lower garment; distance: the outer garment).
    terms is the per-term breakdown populated by the combined losses.
    """

    value: float
    grad: np.ndarray
    grad_other: np.ndarray | None = None
    terms: dict[str, float] | None = None


@dataclass
class SurfaceProxy:
    """Frozen snapshot of a collision reference surface.

    positions/normals are per-vertex; the grid indexes the positions. Normals
    enter collision terms by value (their derivative is dropped), so a proxy
    built at the current iterate gives the frozen-correspondence semantics.
    """

    positions: np.ndarray
    normals: np.ndarray
    grid: UniformGrid | None = None

    @classmethod
    def from_surface(
        cls, positions: np.ndarray, faces: np.ndarray, cell: float | None = None
    ) -> "SurfaceProxy":
        normals = vertex_normals(positions, faces)
        if cell is None:
            cell = 2.0 * _mean_edge_length(positions, faces)
        return cls(positions, normals, build_index(positions, cell))

    def nearest(self, queries: np.ndarray) -> np.ndarray:
        if self.grid is None:
            raise ValidationError("proxy has no spatial index; pass assignments explicitly")
        ids, _ = self.grid.nearest_many(queries)
        return ids

    def signed_distances(self, queries: np.ndarray, assignment: np.ndarray) -> np.ndarray:
        diff = queries - self.positions[assignment]
        return np.einsum("ij,ij->i", diff, self.normals[assignment])


# ---------------------------------------------------------------------------
# Single-garment terms.
# ---------------------------------------------------------------------------

def strain(positions: np.ndarray, rest: RestFrame, material: MaterialParams) -> EnergyGrad:
    """Membrane energy: per face (l/2 tr(E)^2 + mu tr(E^2)) * area * thickness,
    E the 2x2 Green strain of the 3x2 deformation gradient. Zero at rest."""
    f = rest.faces
    d = np.stack(
        [positions[f[:, 1]] - positions[f[:, 0]], positions[f[:, 2]] - positions[f[:, 0]]],
        axis=2,
    )
    fgrad = d @ rest.dm_inv  # (F, 3, 2)
    ftf = np.einsum("fia,fib->fab", fgrad, fgrad)
    e = 0.5 * (ftf - np.eye(2))
    tr = e[:, 0, 0] + e[:, 1, 1]
    tr_e2 = np.einsum("fab,fba->f", e, e)
    vol = rest.areas * material.thickness
    lam, mu = material.lame_lambda, material.lame_mu
    value = float(np.sum((0.5 * lam * tr**2 + mu * tr_e2) * vol))
    # dE/dF = vol * (lam tr(E) F + 2 mu F E); chain through D = F Dm_inv^-1.
    p = vol[:, None, None] * (
        lam * tr[:, None, None] * fgrad + 2.0 * mu * np.einsum("fia,fab->fib", fgrad, e)
    )
    g_edges = np.einsum("fib,fab->fia", p, rest.dm_inv)  # (F, 3, 2): columns for x1, x2
    grad = np.zeros_like(positions)
    scatter_add(grad, f[:, 1], g_edges[:, :, 0])
    scatter_add(grad, f[:, 2], g_edges[:, :, 1])
    scatter_add(grad, f[:, 0], -(g_edges[:, :, 0] + g_edges[:, :, 1]))
    return EnergyGrad(value, grad)


def bending(positions: np.ndarray, hinges: Hinges, material: MaterialParams) -> EnergyGrad:
    """Hinge energy (k/2) alpha^2 summed over interior edges."""
    grad = np.zeros_like(positions)
    if len(hinges) == 0:
        return EnergyGrad(0.0, grad)
    alpha, ga, gb, gc, gd = hinge_angle_gradients(positions, hinges)
    k = material.bending_stiffness
    value = float(0.5 * k * np.sum(alpha**2))
    coef = (k * alpha)[:, None]
    scatter_add(grad, hinges.edge_a, coef * ga)
    scatter_add(grad, hinges.edge_b, coef * gb)
    scatter_add(grad, hinges.flap_c, coef * gc)
    scatter_add(grad, hinges.flap_d, coef * gd)
    return EnergyGrad(value, grad)


def gravity(positions: np.ndarray, masses: np.ndarray, material: MaterialParams) -> EnergyGrad:
    """Potential -sum m g.x; linear, so the gradient is constant."""
    g = material.gravity_vec()
    value = float(-np.sum(masses * (positions @ g)))
    grad = -masses[:, None] * g[None, :]
    return EnergyGrad(value, np.broadcast_to(grad, positions.shape).copy())


def body_collision(
    positions: np.ndarray,
    proxy: SurfaceProxy,
    material: MaterialParams,
    assignment: np.ndarray | None = None,
) -> EnergyGrad:
    """Cubic hinge-loss shell around the body: sum max(eps_b - d, 0)^3."""
    if assignment is None:
        assignment = proxy.nearest(positions)
    d = proxy.signed_distances(positions, assignment)
    gap = np.maximum(material.epsilon_body - d, 0.0)
    value = float(np.sum(gap**3))
    grad = -3.0 * (gap**2)[:, None] * proxy.normals[assignment]
    return EnergyGrad(value, grad)


def repulsive(
    positions: np.ndarray,
    excluded_edge_keys: np.ndarray,
    material: MaterialParams,
    pairs: tuple[np.ndarray, np.ndarray] | None = None,
) -> EnergyGrad:
    """Self-spreading term: -log(|xi - xj|^2) over non-edge pairs within radius.

    The active pair set is part of the frozen correspondence data. Raises
    ValidationError when an active pair is (numerically) coincident.
    """
    if pairs is None:
        pairs = repulsive_pairs(positions, excluded_edge_keys, material)
    i, j = pairs
    grad = np.zeros_like(positions)
    if len(i) == 0:
        return EnergyGrad(0.0, grad)
    diff = positions[i] - positions[j]
    d2 = np.einsum("ij,ij->i", diff, diff)
    if np.any(d2 < COINCIDENT_TOL * COINCIDENT_TOL):
        k = int(np.argmin(d2))
        raise ValidationError(
            f"coincident repulsive pair ({i[k]}, {j[k]}) at distance {np.sqrt(d2[k]):.3e}"
        )
    value = float(-np.sum(np.log(d2)))
    coef = (-2.0 / d2)[:, None] * diff
    scatter_add(grad, i, coef)
    scatter_add(grad, j, -coef)
    return EnergyGrad(value, grad)


def repulsive_pairs(
    positions: np.ndarray, excluded_edge_keys: np.ndarray, material: MaterialParams
) -> tuple[np.ndarray, np.ndarray]:
    """All non-edge vertex pairs closer than the interaction radius."""
    i, j = pairs_within(positions, material.interaction_radius)
    if len(i) == 0 or len(excluded_edge_keys) == 0:
        return i, j
    keys = i * np.int64(len(positions)) + j
    # excluded_edge_keys is sorted, so membership is a searchsorted probe
    pos = np.clip(np.searchsorted(excluded_edge_keys, keys), 0, len(excluded_edge_keys) - 1)
    keep = excluded_edge_keys[pos] != keys
    return i[keep], j[keep]


def holding_mask(rest_positions: np.ndarray) -> np.ndarray:
    """Flag exactly ceil(0.1 N) vertices with the largest rest height.

    Height ties break toward the lower vertex index so the mask is unique.
    """
    n = len(rest_positions)
    k = int(np.ceil(0.1 * n))
    order = np.lexsort((np.arange(n), -rest_positions[:, 1]))
    mask = np.zeros(n, dtype=bool)
    mask[order[:k]] = True
    return mask


def holding(displacements: np.ndarray, mask: np.ndarray) -> EnergyGrad:
    """Anchor masked vertices vertically: sum over mask of dy^2."""
    dy = displacements[:, 1] * mask
    value = float(np.sum(dy**2))
    grad = np.zeros_like(displacements)
    grad[:, 1] = 2.0 * dy
    return EnergyGrad(value, grad)


# ---------------------------------------------------------------------------
# Cross-layer terms.
# ---------------------------------------------------------------------------

def multi_collision(
    upper_positions: np.ndarray,
    lower_proxy: SurfaceProxy,
    material: MaterialParams,
    assignment: np.ndarray | None = None,
) -> EnergyGrad:
    """Keep an upper layer outside its lower layer's eps_g shell.

    grad is w.r.t. the upper positions; grad_other w.r.t. the lower surface
    positions (assignments and normals held fixed).
    """
    if assignment is None:
        assignment = lower_proxy.nearest(upper_positions)
    d = lower_proxy.signed_distances(upper_positions, assignment)
    gap = np.maximum(material.epsilon_garment - d, 0.0)
    value = float(np.sum(gap**3))
    normals = lower_proxy.normals[assignment]
    coef = 3.0 * (gap**2)[:, None] * normals
    grad_other = np.zeros_like(lower_proxy.positions)
    scatter_add(grad_other, assignment, coef)
    return EnergyGrad(value, -coef, grad_other)


def distance_loss(
    inner_positions: np.ndarray,
    outer_positions: np.ndarray,
    body_proxy: SurfaceProxy,
    material: MaterialParams,
    assign_inner: np.ndarray | None = None,
    assign_outer: np.ndarray | None = None,
) -> EnergyGrad:
    """Penalize layer-order inversions against the body.

    Vertex pairs (one inner, one outer) that share a nearest body vertex and
    both sit within the interaction radius contribute max(d_in - d_out, 0)^3.
    grad is w.r.t. the inner garment, grad_other w.r.t. the outer.
    """
    if assign_inner is None:
        assign_inner = body_proxy.nearest(inner_positions)
    if assign_outer is None:
        assign_outer = body_proxy.nearest(outer_positions)
    d_in = body_proxy.signed_distances(inner_positions, assign_inner)
    d_out = body_proxy.signed_distances(outer_positions, assign_outer)
    pi, pj = matched_body_pairs(
        assign_inner, d_in, assign_outer, d_out, material.interaction_radius
    )
    grad_in = np.zeros_like(inner_positions)
    grad_out = np.zeros_like(outer_positions)
    if len(pi) == 0:
        return EnergyGrad(0.0, grad_in, grad_out)
    viol = np.maximum(d_in[pi] - d_out[pj], 0.0)
    value = float(np.sum(viol**3))
    coef = 3.0 * (viol**2)[:, None] * body_proxy.normals[assign_inner[pi]]
    scatter_add(grad_in, pi, coef)
    scatter_add(grad_out, pj, -coef)
    return EnergyGrad(value, grad_in, grad_out)


def matched_body_pairs(
    assign_inner: np.ndarray,
    d_in: np.ndarray,
    assign_outer: np.ndarray,
    d_out: np.ndarray,
    radius: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Index pairs (inner grid, outer grid) sharing a body vertex, both within radius."""
    cand_i = np.nonzero(d_in < radius)[0]
    cand_j = np.nonzero(d_out < radius)[0]
    if len(cand_i) == 0 or len(cand_j) == 0:
        empty = np.empty(0, dtype=np.int64)
        return empty, empty
    bi = assign_inner[cand_i]
    bj = assign_outer[cand_j]
    order_i = np.argsort(bi, kind="stable")
    order_j = np.argsort(bj, kind="stable")
    bi_s, bj_s = bi[order_i], bj[order_j]
    common = np.intersect1d(bi_s, bj_s)
    if len(common) == 0:
        empty = np.empty(0, dtype=np.int64)
        return empty, empty
    i_start = np.searchsorted(bi_s, common, side="left")
    i_end = np.searchsorted(bi_s, common, side="right")
    j_start = np.searchsorted(bj_s, common, side="left")
    j_end = np.searchsorted(bj_s, common, side="right")
    ci = i_end - i_start
    cj = j_end - j_start
    total = ci * cj
    group = np.repeat(np.arange(len(common)), total)
    starts = np.cumsum(total) - total
    within = np.arange(int(total.sum())) - np.repeat(starts, total)
    pi = cand_i[order_i[i_start[group] + within // cj[group]]]
    pj = cand_j[order_j[j_start[group] + within % cj[group]]]
    return pi, pj


# ---------------------------------------------------------------------------
# Combined objectives.
# ---------------------------------------------------------------------------

@dataclass
class GarmentEnergyState:
    """One garment's inputs to the combined losses, all in posed space.

    displacements is positions minus the garment's skinned rest (the vertical
    slip the holding term sees). Static topology data (rest frames, hinges,
    masses, edge keys, mask) is precomputed once per garment.
    """

    positions: np.ndarray
    displacements: np.ndarray
    rest: RestFrame
    hinges: Hinges
    masses: np.ndarray
    edge_keys: np.ndarray
    mask: np.ndarray
    held: bool
    material: MaterialParams


@dataclass
class Correspondences:
    """Frozen per-iteration assignments for one garment."""

    body: np.ndarray | None = None
    pairs: tuple[np.ndarray, np.ndarray] | None = None


@dataclass
class PairTerms:
    """Cross-layer term values for one ordered garment pair (value bookkeeping)."""

    inner: int
    outer: int
    collision: float
    distance: float


def single_loss(
    state: GarmentEnergyState,
    body_proxy: SurfaceProxy,
    weights: LossWeights,
    corr: Correspondences | None = None,
) -> EnergyGrad:
    """Weighted sum of the six single-garment terms (holding only when held)."""
    corr = corr or Correspondences()
    mat = state.material
    e_s = strain(state.positions, state.rest, mat)
    e_b = bending(state.positions, state.hinges, mat)
    e_g = gravity(state.positions, state.masses, mat)
    e_c = body_collision(state.positions, body_proxy, mat, corr.body)
    e_r = repulsive(state.positions, state.edge_keys, mat, corr.pairs)
    e_h = holding(state.displacements, state.mask) if state.held else EnergyGrad(
        0.0, np.zeros_like(state.positions)
    )
    terms = {
        "strain": e_s.value,
        "bending": e_b.value,
        "gravity": e_g.value,
        "collision_gb": e_c.value,
        "repulsive": e_r.value,
        "holding": e_h.value,
    }
    value = (
        weights.strain * e_s.value
        + weights.bending * e_b.value
        + weights.gravity * e_g.value
        + weights.collision * e_c.value
        + weights.repulsive * e_r.value
        + weights.holding * e_h.value
    )
    grad = (
        weights.strain * e_s.grad
        + weights.bending * e_b.grad
        + weights.gravity * e_g.grad
        + weights.collision * e_c.grad
        + weights.repulsive * e_r.grad
        + weights.holding * e_h.grad
    )
    return EnergyGrad(float(value), grad, terms=terms)


def multi_loss(
    states: list[GarmentEnergyState],
    body_proxy: SurfaceProxy,
    weights: LossWeights,
    corr: list[Correspondences] | None = None,
    lower_proxies: list[SurfaceProxy] | None = None,
) -> tuple[list[EnergyGrad], list[PairTerms]]:
    """Stack objective: per-garment single losses plus all ordered pair terms.

    states are ordered innermost first. lower_proxies[i] is garment i's current
    surface snapshot (needed when M >= 2). Pair values are attributed to the
    outer garment's terms (collision_gg, distance); gradients flow to both
    garments of each pair. With a single garment this reduces exactly to
    single_loss.
    """
    m = len(states)
    if corr is None:
        corr = [Correspondences() for _ in range(m)]
    results = [single_loss(states[k], body_proxy, weights, corr[k]) for k in range(m)]
    for r in results:
        r.terms["collision_gg"] = 0.0
        r.terms["distance"] = 0.0
    pair_terms: list[PairTerms] = []
    if m == 1:
        return results, pair_terms
    if lower_proxies is None or any(p is None for p in lower_proxies[: m - 1]):
        raise ValidationError("multi_loss needs a surface proxy per lower garment")
    body_assign = [
        c.body if c.body is not None else body_proxy.nearest(s.positions)
        for c, s in zip(corr, states)
    ]
    for j in range(1, m):
        for i in range(j):
            mc = multi_collision(states[j].positions, lower_proxies[i], states[j].material)
            dl = distance_loss(
                states[i].positions,
                states[j].positions,
                body_proxy,
                states[j].material,
                body_assign[i],
                body_assign[j],
            )
            results[j].value += weights.multi_collision * mc.value + weights.distance * dl.value
            results[j].grad += weights.multi_collision * mc.grad + weights.distance * dl.grad_other
            results[i].grad += weights.multi_collision * mc.grad_other + weights.distance * dl.grad
            results[j].terms["collision_gg"] += mc.value
            results[j].terms["distance"] += dl.value
            pair_terms.append(PairTerms(i, j, mc.value, dl.value))
    return results, pair_terms


# ---------------------------------------------------------------------------
# Numeric gradient oracle.
# ---------------------------------------------------------------------------

def finite_diff_grad(fn, positions: np.ndarray, step: float) -> np.ndarray:
    """Central-difference gradient of fn(positions) -> float, one coordinate at a time.

    fn must hold its correspondences fixed; pair it with the explicit
    assignment arguments of the energy terms.
    """
    x = np.array(positions, dtype=np.float64)
    grad = np.zeros_like(x)
    for i in range(x.shape[0]):
        for c in range(x.shape[1]):
            old = x[i, c]
            x[i, c] = old + step
            e_plus = fn(x)
            x[i, c] = old - step
            e_minus = fn(x)
            x[i, c] = old
            grad[i, c] = (e_plus - e_minus) / (2.0 * step)
    return grad


def merge_material(base: MaterialParams, overrides: dict | None) -> MaterialParams:
    """Per-garment material override helper (validated copy)."""
    if not overrides:
        out = replace(base)
    else:
        valid = {f for f in MaterialParams.__dataclass_fields__}
        bad = set(overrides) - valid
        if bad:
            raise ValidationError(f"unknown material parameters: {sorted(bad)}")
        if "gravity" in overrides:
            overrides = dict(overrides)
            overrides["gravity"] = tuple(overrides["gravity"])
        out = replace(base, **overrides)
    out.validate()
    return out
