"""Rigged parametric body: shape directions, forward kinematics, blend skinning.

The body model is deliberately SMPL-flavored but tiny: a template mesh, a few
linear shape directions for vertices and joints, an axis-angle pose per joint,
and per-vertex skinning weights. Posing composes per-joint world transforms
down the parent chain and blends them linearly. The toy body is generated as a
marching-cubes surface over a capsule-skeleton signed distance field, which
keeps it watertight by construction.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import RigError
from .mesh import TriangleMesh, mean_edge_length, vertex_adjacency
from .spatial import build_index

logger = logging.getLogger(__name__)

WEIGHT_SUM_TOL = 1e-9


@dataclass
class Pose:
    """Axis-angle rotation (J, 3) per joint plus a root translation (3,)."""

    rotations: np.ndarray
    root_translation: np.ndarray

    def __post_init__(self):
        self.rotations = np.asarray(self.rotations, dtype=np.float64)
        self.root_translation = np.asarray(self.root_translation, dtype=np.float64)
        if self.rotations.ndim != 2 or self.rotations.shape[1] != 3:
            raise RigError(f"pose rotations must be (J, 3), got {self.rotations.shape}")
        if self.root_translation.shape != (3,):
            raise RigError("root translation must be a 3-vector")

    @classmethod
    def rest(cls, num_joints: int) -> "Pose":
        return cls(np.zeros((num_joints, 3)), np.zeros(3))


@dataclass
class SkinningWeights:
    """Base weight matrix (N, J) plus an additive refinement delta.

    Base rows are non-negative and sum to 1 (within tolerance). The delta is an
    optimization variable; effective() projects base + delta back onto valid
    weights by clamping negatives and renormalizing, falling back to the base
    row wherever everything clamps away.
    """

    base: np.ndarray
    delta: np.ndarray = None

    def __post_init__(self):
        self.base = np.asarray(self.base, dtype=np.float64)
        if self.base.ndim != 2:
            raise RigError(f"weights must be (N, J), got {self.base.shape}")
        if np.any(self.base < -1e-12):
            raise RigError("negative base skinning weight")
        sums = self.base.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > WEIGHT_SUM_TOL):
            bad = int(np.argmax(np.abs(sums - 1.0)))
            raise RigError(f"weight row {bad} sums to {sums[bad]:.12f}, expected 1")
        if self.delta is None:
            self.delta = np.zeros_like(self.base)
        else:
            self.delta = np.asarray(self.delta, dtype=np.float64)
            if self.delta.shape != self.base.shape:
                raise RigError("weight delta shape mismatch")

    def effective(self) -> np.ndarray:
        return project_weights(self.base, self.delta)

    def copy(self) -> "SkinningWeights":
        return SkinningWeights(self.base.copy(), self.delta.copy())


def project_weights(base: np.ndarray, delta: np.ndarray) -> np.ndarray:
    """Clamp base + delta to >= 0 and renormalize rows; all-clamped rows keep base."""
    clamped = np.maximum(base + delta, 0.0)
    sums = clamped.sum(axis=1)
    dead = sums <= 1e-12
    safe = np.where(dead, 1.0, sums)
    out = clamped / safe[:, None]
    if np.any(dead):
        out[dead] = base[dead]
    return out


def project_weights_grad(
    base: np.ndarray, delta: np.ndarray, grad_projected: np.ndarray
) -> np.ndarray:
    """Chain a gradient w.r.t. projected weights back to the raw delta.

    For active (unclamped) entries of row p = c / S: dp_k/dd_l = (delta_kl - p_k) / S.
    Clamped entries and all-clamped rows get zero gradient.
    """
    clamped = np.maximum(base + delta, 0.0)
    sums = clamped.sum(axis=1)
    dead = sums <= 1e-12
    safe = np.where(dead, 1.0, sums)
    p = clamped / safe[:, None]
    active = (base + delta) > 0.0
    dot = np.einsum("nj,nj->n", p, grad_projected)
    out = active * (grad_projected - dot[:, None]) / safe[:, None]
    out[dead] = 0.0
    return out


@dataclass
class RiggedBody:
    """Template mesh + linear shape space + skeleton + skinning weights.

    joint_parents[j] < j for every non-root joint (topological order); exactly
    one root with parent -1. shape_dirs is (S, N, 3) over vertices and
    joint_shape_dirs (S, J, 3) moves the joints consistently. landmarks carries
    named scalar heights (the held-rule reference among them).
    """

    mesh: TriangleMesh
    joint_names: list[str]
    joint_parents: np.ndarray
    joint_rest: np.ndarray
    weights: np.ndarray
    shape_dirs: np.ndarray
    joint_shape_dirs: np.ndarray
    landmarks: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        self.joint_parents = np.asarray(self.joint_parents, dtype=np.int64)
        self.joint_rest = np.asarray(self.joint_rest, dtype=np.float64)
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.shape_dirs = np.asarray(self.shape_dirs, dtype=np.float64)
        self.joint_shape_dirs = np.asarray(self.joint_shape_dirs, dtype=np.float64)
        j = len(self.joint_names)
        n = self.mesh.num_vertices
        if self.joint_rest.shape != (j, 3):
            raise RigError("joint_rest shape mismatch")
        roots = np.nonzero(self.joint_parents < 0)[0]
        if len(roots) != 1 or roots[0] != 0:
            raise RigError("exactly one root joint (index 0, parent -1) required")
        if np.any(self.joint_parents[1:] >= np.arange(1, j)):
            raise RigError("joints must be topologically ordered (parent index < joint index)")
        if self.weights.shape != (n, j):
            raise RigError(f"weights must be ({n}, {j}), got {self.weights.shape}")
        SkinningWeights(self.weights)  # reuse row validation
        s = len(self.shape_dirs)
        if self.shape_dirs.shape != (s, n, 3) or self.joint_shape_dirs.shape != (s, j, 3):
            raise RigError("shape direction shape mismatch")

    @property
    def num_joints(self) -> int:
        return len(self.joint_names)

    @property
    def num_shape_dirs(self) -> int:
        return len(self.shape_dirs)


def shape_body(body: RiggedBody, beta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vertices and joints displaced along the linear shape directions.

    beta is (S,), nominally in [-2, 2]; zero beta returns the template exactly.
    """
    beta = np.asarray(beta, dtype=np.float64)
    if beta.shape != (body.num_shape_dirs,):
        raise RigError(
            f"beta must have {body.num_shape_dirs} entries, got {beta.shape}"
        )
    verts = body.mesh.vertices.copy()
    joints = body.joint_rest.copy()
    for k, b in enumerate(beta):
        if b != 0.0:
            verts += b * body.shape_dirs[k]
            joints += b * body.joint_shape_dirs[k]
    return verts, joints


def axis_angle_matrices(rotvecs: np.ndarray) -> np.ndarray:
    """Rodrigues formula for a batch of (J, 3) axis-angle vectors -> (J, 3, 3)."""
    rv = np.asarray(rotvecs, dtype=np.float64)
    theta = np.linalg.norm(rv, axis=-1)
    out = np.tile(np.eye(3), (len(rv), 1, 1))
    nz = theta > 1e-12
    if not np.any(nz):
        return out
    axis = rv[nz] / theta[nz, None]
    x, y, z = axis[:, 0], axis[:, 1], axis[:, 2]
    zeros = np.zeros_like(x)
    k = np.stack(
        [zeros, -z, y, z, zeros, -x, -y, x, zeros], axis=1
    ).reshape(-1, 3, 3)
    s = np.sin(theta[nz])[:, None, None]
    c = np.cos(theta[nz])[:, None, None]
    out[nz] = np.eye(3) + s * k + (1.0 - c) * (k @ k)
    return out


def forward_kinematics(
    body: RiggedBody, shaped_joints: np.ndarray, pose: Pose
) -> tuple[np.ndarray, np.ndarray]:
    """World transforms per joint, relative to the shaped rest skeleton.

    Returns (R, t): posed(x) for a point rigidly attached to joint j is
    R[j] @ x + t[j]. At rest pose and zero translation, R = I and t = 0
    exactly. The root translation is folded into every joint's t.
    """
    j = body.num_joints
    if pose.rotations.shape[0] != j:
        raise RigError(f"pose has {pose.rotations.shape[0]} joints, body has {j}")
    local = axis_angle_matrices(pose.rotations)
    world_r = np.empty((j, 3, 3))
    world_t = np.empty((j, 3))
    for idx in range(j):
        parent = body.joint_parents[idx]
        pivot = shaped_joints[idx]
        if parent < 0:
            world_r[idx] = local[idx]
            world_t[idx] = pivot - local[idx] @ pivot
        else:
            world_r[idx] = world_r[parent] @ local[idx]
            # Child rotates about its own (already parent-posed) pivot.
            posed_pivot = world_r[parent] @ pivot + world_t[parent]
            world_t[idx] = posed_pivot - world_r[idx] @ pivot
    world_t += pose.root_translation
    return world_r, world_t


def lbs(
    points: np.ndarray,
    weights: np.ndarray,
    transforms: tuple[np.ndarray, np.ndarray],
) -> np.ndarray:
    """Linear blend skinning in delta form: x + sum_j w_j ((R_j x + t_j) - x).

    The delta form makes the identity pose exact regardless of float rounding
    in the weight normalization.
    """
    r, t = transforms
    moved = np.einsum("jab,nb->nja", r, points) + t[None, :, :] - points[:, None, :]
    return points + np.einsum("nj,nja->na", weights, moved)


def blend_matrices(
    weights: np.ndarray, transforms: tuple[np.ndarray, np.ndarray]
) -> np.ndarray:
    """(N, 3, 3) per-vertex Jacobian of lbs() w.r.t. the input point."""
    r, _ = transforms
    s = weights.sum(axis=1)
    a = np.einsum("nj,jab->nab", weights, r)
    a += (1.0 - s)[:, None, None] * np.eye(3)
    return a


# ---------------------------------------------------------------------------
# Garment skinning weights.
# ---------------------------------------------------------------------------

def init_garment_weights(
    garment: TriangleMesh, body: RiggedBody, smoothing_rounds: int = 50
) -> SkinningWeights:
    """Copy each garment vertex's weights from its nearest template body vertex,
    then diffuse with uniform Laplacian smoothing over the garment 1-ring,
    renormalizing every round. Zero delta.
    """
    g_lo, g_hi = garment.vertices.min(axis=0), garment.vertices.max(axis=0)
    b_lo, b_hi = body.mesh.vertices.min(axis=0), body.mesh.vertices.max(axis=0)
    if np.any(g_lo > b_hi) or np.any(g_hi < b_lo):
        raise RigError("garment and body bounding boxes do not overlap")
    cell = 2.0 * mean_edge_length(body.mesh.vertices, body.mesh.faces)
    grid = build_index(body.mesh.vertices, cell)
    ids, _ = grid.nearest_many(garment.vertices)
    w = body.weights[ids].copy()
    adj = vertex_adjacency(garment.faces, garment.num_vertices)
    w = smooth_weights(w, adj, smoothing_rounds)
    return SkinningWeights(w)


def smooth_weights(weights: np.ndarray, adj, rounds: int) -> np.ndarray:
    """rounds of w <- 0.5 w + 0.5 (1-ring mean), renormalized each round."""
    w = weights.copy()
    counts = np.maximum(adj.offsets[1:] - adj.offsets[:-1], 1)
    src = np.repeat(np.arange(len(w)), adj.offsets[1:] - adj.offsets[:-1])
    for _ in range(rounds):
        acc = np.zeros_like(w)
        for c in range(w.shape[1]):
            acc[:, c] = np.bincount(src, weights=w[adj.neighbors, c], minlength=len(w))
        mean = acc / counts[:, None]
        isolated = (adj.offsets[1:] - adj.offsets[:-1]) == 0
        mean[isolated] = w[isolated]
        w = 0.5 * w + 0.5 * mean
        w /= w.sum(axis=1)[:, None]
    return w


# ---------------------------------------------------------------------------
# Toy body generation: capsule-skeleton SDF -> marching cubes.
# ---------------------------------------------------------------------------

@dataclass
class ToyBodyConfig:
    """Dimensions (meters) of the generated humanoid; all must be positive."""

    height_pelvis: float = 0.95
    torso_length: float = 0.47  # pelvis -> chest top
    head_radius: float = 0.085
    torso_radius: float = 0.105
    pelvis_radius: float = 0.135
    arm_length: float = 0.52  # shoulder -> wrist
    arm_radius: float = 0.042
    leg_length: float = 0.80  # hip -> ankle
    leg_radius: float = 0.065
    shoulder_halfwidth: float = 0.20
    hip_halfwidth: float = 0.10
    grid_spacing: float = 0.024
    smooth_k: float = 0.03
    num_shape_dirs: int = 2
    scale_amplitude: float = 0.10
    girth_amplitude: float = 0.02
    torso_amplitude: float = 0.05

    def validate(self) -> None:
        for name, value in self.__dict__.items():
            if name == "num_shape_dirs":
                continue
            if not (value > 0.0) or not np.isfinite(value):
                raise RigError(f"toy body dimension {name} must be positive, got {value}")
        if not 1 <= self.num_shape_dirs <= 3:
            raise RigError("num_shape_dirs must be 1, 2, or 3")


JOINT_NAMES = [
    "pelvis", "spine", "chest", "neck", "head",
    "l_shoulder", "l_elbow", "l_wrist",
    "r_shoulder", "r_elbow", "r_wrist",
    "l_hip", "l_knee", "l_ankle",
    "r_hip", "r_knee", "r_ankle",
]
JOINT_PARENTS = np.array([-1, 0, 1, 2, 3, 2, 5, 6, 2, 8, 9, 0, 11, 12, 0, 14, 15])


def _toy_skeleton(cfg: ToyBodyConfig):
    """Joint rest positions plus capsule segments (p0, p1, radius, owner joint)."""
    y0 = cfg.height_pelvis
    spine_y = y0 + 0.40 * cfg.torso_length
    chest_y = y0 + 0.85 * cfg.torso_length
    neck_y = y0 + cfg.torso_length + 0.02
    head_y = neck_y + 0.06
    sh = cfg.shoulder_halfwidth
    hip = cfg.hip_halfwidth
    wrist_x = sh + cfg.arm_length
    elbow_x = sh + 0.5 * cfg.arm_length
    knee_y = y0 - 0.05 - 0.5 * cfg.leg_length
    ankle_y = y0 - 0.05 - cfg.leg_length
    joints = np.array([
        [0.0, y0, 0.0],
        [0.0, spine_y, 0.0],
        [0.0, chest_y, 0.0],
        [0.0, neck_y, 0.0],
        [0.0, head_y, 0.0],
        [-sh, chest_y, 0.0], [-elbow_x, chest_y, 0.0], [-wrist_x, chest_y, 0.0],
        [sh, chest_y, 0.0], [elbow_x, chest_y, 0.0], [wrist_x, chest_y, 0.0],
        [-hip, y0 - 0.05, 0.0], [-hip, knee_y, 0.0], [-hip, ankle_y, 0.0],
        [hip, y0 - 0.05, 0.0], [hip, knee_y, 0.0], [hip, ankle_y, 0.0],
    ])
    j = {name: joints[i] for i, name in enumerate(JOINT_NAMES)}
    segments = [
        # (p0, p1, radius, owning joint index)
        (j["pelvis"] - [0, 0.07, 0], j["pelvis"] + [0, 0.04, 0], cfg.pelvis_radius, 0),
        (j["pelvis"] + [0, 0.02, 0], j["spine"], cfg.torso_radius, 1),
        (j["spine"], j["chest"] + [0, 0.04, 0], cfg.torso_radius, 2),
        (j["neck"], j["head"] + [0, 0.05, 0], cfg.head_radius, 4),
        (j["l_shoulder"], j["l_elbow"], cfg.arm_radius, 5),
        (j["l_elbow"], j["l_wrist"], 0.85 * cfg.arm_radius, 6),
        (j["r_shoulder"], j["r_elbow"], cfg.arm_radius, 8),
        (j["r_elbow"], j["r_wrist"], 0.85 * cfg.arm_radius, 9),
        (j["l_hip"], j["l_knee"], cfg.leg_radius, 11),
        (j["l_knee"], j["l_ankle"], 0.8 * cfg.leg_radius, 12),
        (j["r_hip"], j["r_knee"], cfg.leg_radius, 14),
        (j["r_knee"], j["r_ankle"], 0.8 * cfg.leg_radius, 15),
    ]
    return joints, segments


def _segment_distances(points: np.ndarray, segments) -> np.ndarray:
    """(P, n_segments) distance from each point to each capsule axis segment."""
    out = np.empty((len(points), len(segments)))
    for k, (p0, p1, _, _) in enumerate(segments):
        p0 = np.asarray(p0, dtype=np.float64)
        d = np.asarray(p1, dtype=np.float64) - p0
        len2 = float(d @ d)
        t = np.clip((points - p0) @ d / len2, 0.0, 1.0)
        out[:, k] = np.linalg.norm(points - (p0 + t[:, None] * d), axis=1)
    return out


def _capsule_sdf(points: np.ndarray, segments, smooth_k: float) -> np.ndarray:
    """Smooth-min union of capsule SDFs (negative inside)."""
    dists = _segment_distances(points, segments)
    radii = np.array([s[2] for s in segments])
    sdfs = dists - radii[None, :]
    # Log-sum-exp smooth minimum; k -> 0 recovers the hard min.
    return -smooth_k * np.log(np.sum(np.exp(-sdfs / smooth_k), axis=1))


def generate_toy_body(cfg: ToyBodyConfig | None = None) -> RiggedBody:
    """Watertight capsule-limb humanoid with skeleton, weights, shape directions.

    Deterministic for a fixed config. The level-set extraction keeps the
    surface closed; orientation is fixed to outward by the signed-volume test.
    """
    from skimage.measure import marching_cubes

    cfg = cfg or ToyBodyConfig()
    cfg.validate()
    joints, segments = _toy_skeleton(cfg)

    pts = np.concatenate([[s[0], s[1]] for s in segments])
    radii = np.array([s[2] for s in segments])
    lo = pts.min(axis=0) - radii.max() - 4 * cfg.grid_spacing
    hi = pts.max(axis=0) + radii.max() + 4 * cfg.grid_spacing
    dims = np.ceil((hi - lo) / cfg.grid_spacing).astype(int) + 1
    axes = [lo[a] + cfg.grid_spacing * np.arange(dims[a]) for a in range(3)]
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    grid_pts = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)
    sdf = _capsule_sdf(grid_pts, segments, cfg.smooth_k).reshape(dims)

    # A level surface grazing a grid point can yield zero-area triangles;
    # nudging the iso level deterministically sidesteps that.
    mesh = None
    last_err: Exception | None = None
    for level in (0.0, 1.7e-9, 4.3e-9):
        verts, faces, _, _ = marching_cubes(sdf, level=level, spacing=(cfg.grid_spacing,) * 3)
        verts = verts + lo
        faces = np.asarray(faces, dtype=np.int64)
        # Outward orientation: flip if the signed volume comes out negative.
        p0 = verts[faces[:, 0]]
        vol = np.sum(
            np.einsum("ij,ij->i", p0, np.cross(verts[faces[:, 1]], verts[faces[:, 2]]))
        ) / 6.0
        if vol < 0.0:
            faces = faces[:, [0, 2, 1]]
        try:
            mesh = TriangleMesh(verts, faces)
            break
        except Exception as exc:  # degenerate face at this level; try the next
            last_err = exc
    if mesh is None:
        raise RigError(f"level-set extraction produced an invalid mesh: {last_err}")
    logger.info("toy body: %d vertices, %d faces", mesh.num_vertices, mesh.num_faces)

    # Weights: softmin over capsule distances, accumulated per owning joint.
    dists = _segment_distances(mesh.vertices, segments)
    tau = 0.03
    logits = np.exp(-(dists - dists.min(axis=1, keepdims=True)) / tau)
    weights = np.zeros((mesh.num_vertices, len(JOINT_NAMES)))
    for k, (_, _, _, joint) in enumerate(segments):
        weights[:, joint] += logits[:, k]
    weights /= weights.sum(axis=1)[:, None]

    shape_dirs, joint_dirs = _toy_shape_dirs(cfg, mesh.vertices, joints, segments)
    collar_y = float(joints[JOINT_NAMES.index("l_shoulder")][1])
    return RiggedBody(
        mesh=mesh,
        joint_names=list(JOINT_NAMES),
        joint_parents=JOINT_PARENTS.copy(),
        joint_rest=joints,
        weights=weights,
        shape_dirs=shape_dirs,
        joint_shape_dirs=joint_dirs,
        landmarks={"collarbone_y": collar_y},
    )


def _toy_shape_dirs(cfg: ToyBodyConfig, verts: np.ndarray, joints: np.ndarray, segments):
    """Scale, girth, torso-length directions (vertex and joint variants)."""
    center = 0.5 * (verts.min(axis=0) + verts.max(axis=0))
    dirs_v, dirs_j = [], []

    # 1) overall scale about the body center
    dirs_v.append(cfg.scale_amplitude * (verts - center))
    dirs_j.append(cfg.scale_amplitude * (joints - center))

    if cfg.num_shape_dirs >= 2:
        # 2) girth: push vertices radially away from the nearest bone axis
        dists = _segment_distances(verts, segments)
        nearest = np.argmin(dists, axis=1)
        radial = np.zeros_like(verts)
        for k, (p0, p1, _, _) in enumerate(segments):
            sel = nearest == k
            if not np.any(sel):
                continue
            p0 = np.asarray(p0, dtype=np.float64)
            d = np.asarray(p1, dtype=np.float64) - p0
            t = np.clip((verts[sel] - p0) @ d / float(d @ d), 0.0, 1.0)
            off = verts[sel] - (p0 + t[:, None] * d)
            nrm = np.linalg.norm(off, axis=1)
            nrm = np.where(nrm < 1e-9, 1.0, nrm)
            radial[sel] = off / nrm[:, None]
        dirs_v.append(cfg.girth_amplitude * radial)
        girth_j = np.zeros_like(joints)
        for name, push in (("l_shoulder", [-1, 0, 0]), ("r_shoulder", [1, 0, 0])):
            girth_j[JOINT_NAMES.index(name)] = np.asarray(push) * 0.3 * cfg.girth_amplitude
        dirs_j.append(girth_j)

    if cfg.num_shape_dirs >= 3:
        # 3) torso length: stretch everything above the pelvis upward
        pelvis_y = joints[0][1]
        lift_v = np.zeros_like(verts)
        span = max(joints[:, 1].max() - pelvis_y, 1e-6)
        lift_v[:, 1] = np.clip((verts[:, 1] - pelvis_y) / span, 0.0, 1.0)
        lift_j = np.zeros_like(joints)
        lift_j[:, 1] = np.clip((joints[:, 1] - pelvis_y) / span, 0.0, 1.0)
        dirs_v.append(cfg.torso_amplitude * lift_v)
        dirs_j.append(cfg.torso_amplitude * lift_j)

    return np.stack(dirs_v), np.stack(dirs_j)


# ---------------------------------------------------------------------------
# Body file I/O (JSON; schema shipped in docs/body.schema.json).
# ---------------------------------------------------------------------------

def save_body(path: str, body: RiggedBody) -> None:
    payload = {
        "format": "layerdrape-body/1",
        "vertices": body.mesh.vertices.tolist(),
        "faces": body.mesh.faces.tolist(),
        "joints": [
            {
                "name": body.joint_names[i],
                "parent": int(body.joint_parents[i]),
                "rest": body.joint_rest[i].tolist(),
            }
            for i in range(body.num_joints)
        ],
        "weights": body.weights.tolist(),
        "shape_dirs": body.shape_dirs.tolist(),
        "joint_shape_dirs": body.joint_shape_dirs.tolist(),
        "landmarks": {k: float(v) for k, v in sorted(body.landmarks.items())},
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_body(path: str) -> RiggedBody:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise RigError(f"{path}: not valid JSON: {exc}") from exc
    try:
        if payload.get("format") != "layerdrape-body/1":
            raise RigError(f"{path}: unknown body format {payload.get('format')!r}")
        joints = payload["joints"]
        body = RiggedBody(
            mesh=TriangleMesh(
                np.array(payload["vertices"], dtype=np.float64),
                np.array(payload["faces"], dtype=np.int64),
            ),
            joint_names=[j["name"] for j in joints],
            joint_parents=np.array([j["parent"] for j in joints], dtype=np.int64),
            joint_rest=np.array([j["rest"] for j in joints], dtype=np.float64),
            weights=np.array(payload["weights"], dtype=np.float64),
            shape_dirs=np.array(payload["shape_dirs"], dtype=np.float64),
            joint_shape_dirs=np.array(payload["joint_shape_dirs"], dtype=np.float64),
            landmarks={k: float(v) for k, v in payload.get("landmarks", {}).items()},
        )
    except KeyError as exc:
        raise RigError(f"{path}: missing body field {exc}") from exc
    return body


def scale_pose(pose: Pose, factor: float) -> Pose:
    """Uniformly scale the axis-angle vectors and root translation."""
    return Pose(pose.rotations * factor, pose.root_translation * factor)
