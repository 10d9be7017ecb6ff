"""Finite-difference verification harness for every energy term.

Builds small seeded fixtures (jittered structured meshes, so the topology is
always valid while the geometry is random), freezes each term's
correspondences, and compares the analytic gradient against central
differences. The CLI's gradcheck verb and the acceptance tests both run
through here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import energy
from .errors import ConfigError
from .mesh import TriangleMesh, build_hinges, edge_keys, rest_frames, vertex_masses
from .primitives import sheet

TERM_NAMES = (
    "strain",
    "bending",
    "gravity",
    "collision",
    "repulsive",
    "holding",
    "multi_collision",
    "distance",
)

PASS_THRESHOLD = 1e-4
GRAVITY_THRESHOLD = 1e-10


@dataclass
class TermCheck:
    term: str
    max_rel_error: float
    threshold: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.threshold


def _rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(float(np.max(np.abs(analytic))), 1e-12)
    return float(np.max(np.abs(analytic - numeric))) / scale


def _jittered_sheet(size: int, rng: np.random.Generator) -> TriangleMesh:
    """Grid sheet with at least `size` vertices, randomly jittered.

    The jitter stays small next to the edge length so faces never degenerate,
    keeping every seeded fixture a valid mesh."""
    n = max(2, int(np.ceil(np.sqrt(size))))
    base = sheet(1.0, 1.0, n, n)
    edge = 1.0 / (n - 1)
    verts = base.vertices + rng.normal(0.0, 0.15 * edge, size=base.vertices.shape)
    return TriangleMesh(verts, base.faces)


def _check_strain(size, rng, step, mat):
    mesh = _jittered_sheet(size, rng)
    rest = rest_frames(mesh)
    pos = mesh.vertices + rng.normal(0.0, 0.03, mesh.vertices.shape)
    an = energy.strain(pos, rest, mat)
    fd = energy.finite_diff_grad(lambda x: energy.strain(x, rest, mat).value, pos, step)
    return _rel_error(an.grad, fd)


def _check_bending(size, rng, step, mat):
    mesh = _jittered_sheet(size, rng)
    hinges = build_hinges(mesh)
    pos = mesh.vertices + rng.normal(0.0, 0.05, mesh.vertices.shape)
    an = energy.bending(pos, hinges, mat)
    fd = energy.finite_diff_grad(lambda x: energy.bending(x, hinges, mat).value, pos, step)
    return _rel_error(an.grad, fd)


def _check_gravity(size, rng, step, mat):
    mesh = _jittered_sheet(size, rng)
    masses = vertex_masses(mesh, mat.area_density)
    pos = mesh.vertices + rng.normal(0.0, 0.05, mesh.vertices.shape)
    an = energy.gravity(pos, masses, mat)
    # the potential is linear, so a larger step has zero truncation error and
    # far less cancellation; tiny steps would drown the 1e-10 target in roundoff
    fd = energy.finite_diff_grad(
        lambda x: energy.gravity(x, masses, mat).value, pos, max(step, 1e-3)
    )
    return _rel_error(an.grad, fd)


def _check_collision(size, rng, step, mat):
    ground = _jittered_sheet(max(size, 64), rng)
    proxy = energy.SurfaceProxy.from_surface(ground.vertices, ground.faces)
    size = min(size, len(ground.vertices))
    pos = ground.vertices[:size] + np.array([0.0, 1.0, 0.0]) * rng.uniform(
        -0.5 * mat.epsilon_body, 1.5 * mat.epsilon_body, size=(size, 1)
    )
    assign = proxy.nearest(pos)
    an = energy.body_collision(pos, proxy, mat, assign)
    fd = energy.finite_diff_grad(
        lambda x: energy.body_collision(x, proxy, mat, assign).value, pos, step
    )
    return _rel_error(an.grad, fd)


def _check_repulsive(size, rng, step, mat):
    mesh = _jittered_sheet(size, rng)
    scale = 0.05  # shrink so plenty of pairs sit inside the interaction radius
    pos = mesh.vertices * scale + rng.normal(0.0, 0.002, mesh.vertices.shape)
    keys = edge_keys(mesh.faces, mesh.num_vertices)
    pairs = energy.repulsive_pairs(pos, keys, mat)
    an = energy.repulsive(pos, keys, mat, pairs)
    fd = energy.finite_diff_grad(
        lambda x: energy.repulsive(x, keys, mat, pairs).value, pos, step
    )
    return _rel_error(an.grad, fd)


def _check_holding(size, rng, step, mat):
    mesh = _jittered_sheet(size, rng)
    mask = energy.holding_mask(mesh.vertices)
    disp = rng.normal(0.0, 0.01, mesh.vertices.shape)
    an = energy.holding(disp, mask)
    fd = energy.finite_diff_grad(lambda x: energy.holding(x, mask).value, disp, step)
    return _rel_error(an.grad, fd)


def _check_multi_collision(size, rng, step, mat):
    lower = _jittered_sheet(max(size, 64), rng)
    proxy = energy.SurfaceProxy.from_surface(lower.vertices, lower.faces)
    size = min(size, len(lower.vertices))
    upper = lower.vertices[:size] + np.array([0.0, 1.0, 0.0]) * rng.uniform(
        -0.5 * mat.epsilon_garment, 1.5 * mat.epsilon_garment, size=(size, 1)
    )
    assign = proxy.nearest(upper)
    an = energy.multi_collision(upper, proxy, mat, assign)
    fd_upper = energy.finite_diff_grad(
        lambda x: energy.multi_collision(x, proxy, mat, assign).value, upper, step
    )
    frozen_normals = proxy.normals.copy()

    def lower_value(x):
        snap = energy.SurfaceProxy(x, frozen_normals, None)
        return energy.multi_collision(upper, snap, mat, assign).value

    fd_lower = energy.finite_diff_grad(lower_value, proxy.positions, step)
    return max(_rel_error(an.grad, fd_upper), _rel_error(an.grad_other, fd_lower))


def _check_distance(size, rng, step, mat):
    body = _jittered_sheet(max(size, 64), rng)
    proxy = energy.SurfaceProxy.from_surface(body.vertices, body.faces)
    k = min(size, len(body.vertices))
    inner = body.vertices[:k] + np.array([0.0, 1.0, 0.0]) * rng.uniform(0.01, 0.05, (k, 1))
    outer = body.vertices[:k] + np.array([0.0, 1.0, 0.0]) * rng.uniform(0.01, 0.05, (k, 1))
    a_in, a_out = proxy.nearest(inner), proxy.nearest(outer)
    an = energy.distance_loss(inner, outer, proxy, mat, a_in, a_out)
    fd_in = energy.finite_diff_grad(
        lambda x: energy.distance_loss(x, outer, proxy, mat, a_in, a_out).value, inner, step
    )
    fd_out = energy.finite_diff_grad(
        lambda x: energy.distance_loss(inner, x, proxy, mat, a_in, a_out).value, outer, step
    )
    return max(_rel_error(an.grad, fd_in), _rel_error(an.grad_other, fd_out))


_CHECKS = {
    "strain": _check_strain,
    "bending": _check_bending,
    "gravity": _check_gravity,
    "collision": _check_collision,
    "repulsive": _check_repulsive,
    "holding": _check_holding,
    "multi_collision": _check_multi_collision,
    "distance": _check_distance,
}


def run_gradcheck(
    terms: list[str] | None = None,
    size: int = 80,
    seed: int = 0,
    step: float = 1e-6,
) -> list[TermCheck]:
    """Check the selected terms (default: all) and return per-term results."""
    if terms is None or terms == ["all"]:
        terms = list(TERM_NAMES)
    unknown = [t for t in terms if t not in _CHECKS]
    if unknown:
        raise ConfigError(f"unknown gradcheck terms: {unknown}; valid: {list(TERM_NAMES)}")
    if not 4 <= size <= 100_000:
        raise ConfigError(f"gradcheck size out of range: {size}")
    mat = energy.MaterialParams()
    results = []
    for term in terms:
        rng = np.random.default_rng(np.random.SeedSequence([seed, TERM_NAMES.index(term)]))
        err = _CHECKS[term](size, rng, step, mat)
        threshold = GRAVITY_THRESHOLD if term == "gravity" else PASS_THRESHOLD
        results.append(TermCheck(term, err, threshold))
    return results
