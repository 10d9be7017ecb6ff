"""Quasi-static draping by direct first-order minimization.

Two phases over a stack of garments:

1. drape_single fits one garment to the body by optimizing a canonical-space
   displacement field (plus small skinning-weight refinements) against the
   single-garment objective, walking the pose from near-rest to the target in
   progressive stages, each warm-starting the next.
2. untangle fixes the single-drape results and jointly optimizes per-garment
   interaction displacements against the stack objective with all cross-layer
   terms.

Positions are produced by skinning canonical points, so gradients computed in
posed space are pulled back through the per-vertex skinning Jacobian. Nearest
neighbor assignments and pair sets refresh every iteration; the body surface
snapshot refreshes per pose stage (the body only moves between stages).
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, replace

import numpy as np

from .energy import (
    GarmentEnergyState,
    LossWeights,
    MaterialParams,
    SurfaceProxy,
    holding,
    holding_mask,
    multi_loss,
    single_loss,
)
from .errors import SolverDivergence, ValidationError
from .mesh import RestFrame, TriangleMesh, build_hinges, edge_keys, rest_frames, vertex_masses
from .postprocess import EnergyReport
from .rig import (
    Pose,
    RiggedBody,
    SkinningWeights,
    blend_matrices,
    forward_kinematics,
    init_garment_weights,
    lbs,
    project_weights,
    project_weights_grad,
    scale_pose,
    shape_body,
)

logger = logging.getLogger(__name__)

ADAM_EPS = 1e-8


@dataclass
class SolverConfig:
    """Optimization knobs. iterations counts steps per pose stage; the weight
    field uses its own (much smaller) learning rate. tolerance is the relative
    drop of the best objective over a trailing window that counts as
    converged."""

    iterations: int = 2000
    untangle_iterations: int = 1500
    learning_rate: float = 1e-3
    weight_learning_rate: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    clip_norm: float = 1.0
    stages: int = 5
    tolerance: float = 1e-6
    tolerance_window: int = 100
    log_every: int = 200

    def validate(self) -> None:
        if self.iterations < 0 or self.untangle_iterations < 0:
            raise ValidationError("iteration counts must be non-negative")
        if not (self.learning_rate > 0.0) or not (self.weight_learning_rate > 0.0):
            raise ValidationError("learning rates must be positive")
        if not (self.clip_norm > 0.0):
            raise ValidationError("clip norm must be positive")
        if not (0.0 <= self.beta1 < 1.0) or not (0.0 <= self.beta2 < 1.0):
            raise ValidationError("moment decay rates must lie in [0, 1)")
        if self.stages < 1:
            raise ValidationError("need at least one pose stage")
        if self.tolerance < 0.0 or self.tolerance_window < 1:
            raise ValidationError("bad convergence tolerance settings")


@dataclass
class Garment:
    """One garment: canonical rest mesh, materials, skinning, and the two
    displacement fields the solver phases own (delta_single for the fit to the
    body, delta_multi for interaction with other layers)."""

    name: str
    mesh: TriangleMesh
    material: MaterialParams
    held: bool
    skin: SkinningWeights
    delta_single: np.ndarray
    delta_multi: np.ndarray
    rest: RestFrame
    hinges: object
    masses: np.ndarray
    edge_keys: np.ndarray
    hold_mask: np.ndarray

    @classmethod
    def prepare(
        cls,
        name: str,
        mesh: TriangleMesh,
        body: RiggedBody,
        material: MaterialParams | None = None,
        held: bool | None = None,
        smoothing_rounds: int = 50,
    ) -> "Garment":
        material = material if material is not None else MaterialParams()
        material.validate()
        skin = init_garment_weights(mesh, body, smoothing_rounds)
        if held is None:
            collar = body.landmarks.get("collarbone_y")
            if collar is None:
                raise ValidationError(
                    "body has no collarbone_y landmark; set held explicitly"
                )
            held = float(mesh.vertices[:, 1].max()) < collar
        n = mesh.num_vertices
        return cls(
            name=name,
            mesh=mesh,
            material=material,
            held=bool(held),
            skin=skin,
            delta_single=np.zeros((n, 3)),
            delta_multi=np.zeros((n, 3)),
            rest=rest_frames(mesh),
            hinges=build_hinges(mesh),
            masses=vertex_masses(mesh, material.area_density),
            edge_keys=edge_keys(mesh.faces, n),
            hold_mask=holding_mask(mesh.vertices),
        )

    def validate(self) -> None:
        n = self.mesh.num_vertices
        for fname in ("delta_single", "delta_multi"):
            d = getattr(self, fname)
            if d.shape != (n, 3):
                raise ValidationError(f"{fname} shape {d.shape} does not match {n} vertices")
            if not np.all(np.isfinite(d)):
                raise ValidationError(f"{fname} contains non-finite entries")

    def copy(self) -> "Garment":
        return replace(
            self,
            skin=self.skin.copy(),
            delta_single=self.delta_single.copy(),
            delta_multi=self.delta_multi.copy(),
        )

    def energy_state(self, posed: np.ndarray, displacements: np.ndarray) -> GarmentEnergyState:
        return GarmentEnergyState(
            positions=posed,
            displacements=displacements,
            rest=self.rest,
            hinges=self.hinges,
            masses=self.masses,
            edge_keys=self.edge_keys,
            mask=self.hold_mask,
            held=self.held,
            material=self.material,
        )


@dataclass
class LayerStack:
    """Ordered garments, innermost first. posed caches the current deformed
    positions per garment once a solve or audit has produced them."""

    garments: list[Garment]
    posed: list[np.ndarray] | None = None

    def __post_init__(self):
        if not self.garments:
            raise ValidationError("layer stack is empty")

    def copy(self) -> "LayerStack":
        return LayerStack(
            [g.copy() for g in self.garments],
            None if self.posed is None else [p.copy() for p in self.posed],
        )


# ---------------------------------------------------------------------------
# Optimizer.
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    """Parameters together with their first/second moment estimates."""

    params: np.ndarray
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def init(cls, params: np.ndarray) -> "AdamState":
        return cls(params.copy(), np.zeros_like(params), np.zeros_like(params))


def clip_gradients(grads: list[np.ndarray], clip_norm: float) -> float:
    """Scale the blocks in place so their joint Euclidean norm is at most
    clip_norm. Returns the pre-clip norm."""
    total = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))
    if total > clip_norm:
        scale = clip_norm / total
        for g in grads:
            g *= scale
    return total


def optimizer_step(
    state: AdamState,
    gradient: np.ndarray,
    config: SolverConfig,
    learning_rate: float | None = None,
) -> AdamState:
    """One clipped, bias-corrected adaptive-moment update, in place."""
    if not np.all(np.isfinite(gradient)):
        raise SolverDivergence("non-finite gradient", {"step": state.step})
    lr = config.learning_rate if learning_rate is None else learning_rate
    g = np.array(gradient, dtype=np.float64)
    clip_gradients([g], config.clip_norm)
    state.step += 1
    b1, b2 = config.beta1, config.beta2
    state.m = b1 * state.m + (1.0 - b1) * g
    state.v = b2 * state.v + (1.0 - b2) * g * g
    m_hat = state.m / (1.0 - b1**state.step)
    v_hat = state.v / (1.0 - b2**state.step)
    state.params = state.params - lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
    return state


# ---------------------------------------------------------------------------
# Pose handling.
# ---------------------------------------------------------------------------

def pose_schedule(target: Pose, stages: int) -> list[Pose]:
    """Poses scaled by k/stages for k = 1..stages; the last is the target."""
    if stages < 1:
        raise ValidationError("pose schedule needs at least one stage")
    return [scale_pose(target, k / stages) for k in range(1, stages + 1)]


def posed_state(
    garment: Garment, body: RiggedBody, beta: np.ndarray, pose: Pose
) -> np.ndarray:
    """Skin the garment's canonical state (rest + both displacement fields)."""
    _, joints = shape_body(body, beta)
    rt = forward_kinematics(body, joints, pose)
    x = garment.mesh.vertices + garment.delta_single + garment.delta_multi
    return lbs(x, garment.skin.effective(), rt)


def _posed_body(body: RiggedBody, shaped_verts: np.ndarray, rt) -> TriangleMesh:
    return TriangleMesh(lbs(shaped_verts, body.weights, rt), body.mesh.faces)


# ---------------------------------------------------------------------------
# Phase 1: single-garment drape.
# ---------------------------------------------------------------------------

def _converged(best_values: list[float], config: SolverConfig) -> bool:
    w = config.tolerance_window
    if len(best_values) <= w:
        return False
    old = best_values[-w - 1]
    new = best_values[-1]
    return (old - new) <= config.tolerance * max(abs(old), 1e-30)


def _log_progress(phase, name, stage, stages, it, total, value, terms, config):
    if it % config.log_every != 0 and it != total - 1:
        return
    parts = [
        f"phase={phase}",
        f"garment={name}",
        f"stage={stage}/{stages}",
        f"iter={it}/{total}",
        f"loss={value:.6e}",
    ]
    parts += [f"{k}={v:.6e}" for k, v in terms.items()]
    logger.info(" ".join(parts))


def _single_value_grads(garment, x_rest, x_base, delta, wdelta, rt, proxy, weights):
    """Objective, displacement gradient, raw weight-delta gradient, terms.

    posed = A(w) y + b(w) with y = x_base + delta; displacement seen by the
    holding term is A (y - x_rest). The weight derivative of the held part
    differs from the positional one by the skinned-rest motion, hence the
    correction term.
    """
    r, t = rt
    w_eff = project_weights(garment.skin.base, wdelta)
    y = x_base + delta
    posed = lbs(y, w_eff, rt)
    skinned_rest = lbs(x_rest, w_eff, rt)
    disp = posed - skinned_rest
    state = garment.energy_state(posed, disp)
    eg = single_loss(state, proxy, weights)
    a = blend_matrices(w_eff, rt)
    g_delta = np.einsum("nab,na->nb", a, eg.grad)
    q_y = np.einsum("jab,nb->nja", r, y) + t[None, :, :] - y[:, None, :]
    gw = np.einsum("nja,na->nj", q_y, eg.grad)
    if garment.held:
        hg = weights.holding * holding(disp, garment.hold_mask).grad
        q_rest = np.einsum("jab,nb->nja", r, x_rest) + t[None, :, :] - x_rest[:, None, :]
        gw -= np.einsum("nja,na->nj", q_rest, hg)
    g_w = project_weights_grad(garment.skin.base, wdelta, gw)
    return eg.value, g_delta, g_w, eg.terms


def drape_single(
    garment: Garment,
    body: RiggedBody,
    beta: np.ndarray,
    pose: Pose,
    config: SolverConfig | None = None,
    weights: LossWeights | None = None,
    record: dict | None = None,
) -> tuple[Garment, EnergyReport]:
    """Fit one garment to the posed body; returns the updated garment and its
    energy breakdown at the target pose. delta_multi is left untouched."""
    config = config if config is not None else SolverConfig()
    config.validate()
    weights = weights if weights is not None else LossWeights()
    weights.validate()
    garment.validate()
    t_start = time.perf_counter()
    shaped_verts, shaped_joints = shape_body(body, beta)
    out = garment.copy()
    x_rest = out.mesh.vertices
    x_base = x_rest + out.delta_multi
    delta = out.delta_single.copy()
    wdelta = out.skin.delta.copy()
    stages = pose_schedule(pose, config.stages)
    stage_log = []
    for si, stage_pose in enumerate(stages, 1):
        rt = forward_kinematics(body, shaped_joints, stage_pose)
        posed_body = _posed_body(body, shaped_verts, rt)
        proxy = SurfaceProxy.from_surface(posed_body.vertices, posed_body.faces)
        adam_d = AdamState.init(delta)
        adam_w = AdamState.init(wdelta)
        best_value = np.inf
        best = (delta.copy(), wdelta.copy())
        best_values: list[float] = []
        it = 0
        for it in range(config.iterations):
            value, g_d, g_w, terms = _single_value_grads(
                out, x_rest, x_base, delta, wdelta, rt, proxy, weights
            )
            if not np.isfinite(value):
                raise SolverDivergence(
                    f"objective became non-finite draping {out.name}",
                    {"phase": "single", "garment": out.name, "stage": si,
                     "iteration": it, "value": value, "terms": terms},
                )
            if value < best_value:
                best_value = value
                best = (delta.copy(), wdelta.copy())
            best_values.append(best_value)
            _log_progress("single", out.name, si, len(stages), it,
                          config.iterations, value, terms, config)
            if _converged(best_values, config):
                break
            clip_gradients([g_d, g_w], config.clip_norm)
            adam_d = optimizer_step(adam_d, g_d, config)
            adam_w = optimizer_step(adam_w, g_w, config, config.weight_learning_rate)
            delta = adam_d.params
            wdelta = adam_w.params
        delta, wdelta = best[0].copy(), best[1].copy()
        stage_log.append(
            {"stage": si, "iterations": it + 1 if config.iterations else 0,
             "best": None if not best_values else best_values[-1],
             "best_values": best_values}
        )
    out.delta_single = delta
    out.skin = SkinningWeights(out.skin.base, wdelta)
    # final accounting at the target pose
    rt = forward_kinematics(body, shaped_joints, stages[-1])
    posed_body = _posed_body(body, shaped_verts, rt)
    proxy = SurfaceProxy.from_surface(posed_body.vertices, posed_body.faces)
    value, _, _, terms = _single_value_grads(
        out, x_rest, x_base, delta, wdelta, rt, proxy, weights
    )
    terms = dict(terms)
    terms["collision_gg"] = 0.0
    terms["distance"] = 0.0
    elapsed_ms = 1e3 * (time.perf_counter() - t_start)
    logger.info(
        "phase=single garment=%s done=1 loss=%.6e elapsed_ms=%.1f",
        out.name, value, elapsed_ms,
    )
    if record is not None:
        record["stages"] = stage_log
        record["final_value"] = value
    report = EnergyReport(
        garment_names=[out.name],
        terms=[terms],
        objectives=[value],
        counts={},
        phase_ms={f"drape_single:{out.name}": elapsed_ms},
    )
    return out, report


# ---------------------------------------------------------------------------
# Phase 2: stack untangling.
# ---------------------------------------------------------------------------

def untangle(
    stack: LayerStack,
    body: RiggedBody,
    beta: np.ndarray,
    pose: Pose,
    config: SolverConfig | None = None,
    weights: LossWeights | None = None,
    record: dict | None = None,
) -> tuple[LayerStack, EnergyReport]:
    """Jointly optimize the interaction displacements of an ordered stack.

    Expects every garment to be single-draped already. Skinning weights and
    delta_single stay frozen; only delta_multi moves. A single garment is
    already at the stack optimum (no cross terms, zero interaction
    displacement), so it gets no iterations, just the accounting.
    """
    config = config if config is not None else SolverConfig()
    config.validate()
    weights = weights if weights is not None else LossWeights()
    weights.validate()
    for g in stack.garments:
        g.validate()
    t_start = time.perf_counter()
    out = stack.copy()
    garments = out.garments
    m = len(garments)
    shaped_verts, shaped_joints = shape_body(body, beta)
    rt = forward_kinematics(body, shaped_joints, pose)
    posed_body = _posed_body(body, shaped_verts, rt)
    body_proxy = SurfaceProxy.from_surface(posed_body.vertices, posed_body.faces)
    w_eff = [g.skin.effective() for g in garments]
    blend = [blend_matrices(w, rt) for w in w_eff]
    x_base = [g.mesh.vertices + g.delta_single for g in garments]
    skinned_rest = [lbs(g.mesh.vertices, w, rt) for g, w in zip(garments, w_eff)]
    dms = [g.delta_multi.copy() for g in garments]

    def evaluate(dm_list):
        posed = [lbs(x_base[k] + dm_list[k], w_eff[k], rt) for k in range(m)]
        disp = [posed[k] - skinned_rest[k] for k in range(m)]
        states = [garments[k].energy_state(posed[k], disp[k]) for k in range(m)]
        proxies = [
            SurfaceProxy.from_surface(posed[k], garments[k].mesh.faces)
            for k in range(m - 1)
        ]
        results, pairs = multi_loss(states, body_proxy, weights, lower_proxies=proxies)
        return posed, results, pairs

    iterations = config.untangle_iterations if m > 1 else 0
    adam = [AdamState.init(dm) for dm in dms]
    best_value = np.inf
    best = [dm.copy() for dm in dms]
    best_values: list[float] = []
    for it in range(iterations):
        posed, results, _ = evaluate(dms)
        total = float(sum(r.value for r in results))
        if not np.isfinite(total):
            raise SolverDivergence(
                "stack objective became non-finite",
                {"phase": "untangle", "iteration": it, "value": total,
                 "terms": {g.name: r.terms for g, r in zip(garments, results)}},
            )
        if total < best_value:
            best_value = total
            best = [dm.copy() for dm in dms]
        best_values.append(best_value)
        if it % config.log_every == 0 or it == iterations - 1:
            agg = {k: sum(r.terms[k] for r in results) for k in results[0].terms}
            _log_progress("untangle", "stack", 1, 1, it, iterations, total, agg, config)
        if _converged(best_values, config):
            break
        grads = [
            np.einsum("nab,na->nb", blend[k], results[k].grad) for k in range(m)
        ]
        clip_gradients(grads, config.clip_norm)
        for k in range(m):
            adam[k] = optimizer_step(adam[k], grads[k], config)
            dms[k] = adam[k].params
    dms = [dm.copy() for dm in best]
    for k in range(m):
        garments[k].delta_multi = dms[k]
    posed, results, _ = evaluate(dms)
    out.posed = posed
    elapsed_ms = 1e3 * (time.perf_counter() - t_start)
    logger.info(
        "phase=untangle garments=%d done=1 loss=%.6e elapsed_ms=%.1f",
        m, float(sum(r.value for r in results)), elapsed_ms,
    )
    if record is not None:
        record["best_values"] = best_values
        record["final_value"] = float(sum(r.value for r in results))
    report = EnergyReport(
        garment_names=[g.name for g in garments],
        terms=[dict(r.terms) for r in results],
        objectives=[float(r.value) for r in results],
        counts={},
        phase_ms={"untangle": elapsed_ms},
    )
    return out, report
