"""Triangle-mesh container, Wavefront OBJ I/O, and derived per-element quantities.

Positions are in meters, y is up. Faces are triangles with counter-clockwise
winding seen from outside. The deformation measures here (rest tangent frames,
deformation gradients, hinge angles) are the geometric backbone of the energy
terms; everything is plain float64 numpy so the same arrays feed the solver and
the tests.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import MeshError, ObjParseError

logger = logging.getLogger(__name__)

# Faces below this rest area (m^2) have no usable tangent frame.
AREA_TOL = 1e-12


@dataclass
class TriangleMesh:
    """Immutable triangle mesh.

    vertices: (N, 3) float64 positions.
    faces:    (F, 3) int64 vertex indices, CCW from outside.
    """

    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64)
        self.faces = np.asarray(self.faces, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise MeshError(f"vertices must be (N, 3), got {self.vertices.shape}")
        if self.faces.ndim != 2 or self.faces.shape[1] != 3:
            raise MeshError(f"faces must be (F, 3), got {self.faces.shape}")
        n = len(self.vertices)
        if self.faces.size and (self.faces.min() < 0 or self.faces.max() >= n):
            bad = self.faces[(self.faces < 0) | (self.faces >= n)]
            raise MeshError(f"face index out of range: {bad[0]} (vertex count {n})")
        if np.any(
            (self.faces[:, 0] == self.faces[:, 1])
            | (self.faces[:, 1] == self.faces[:, 2])
            | (self.faces[:, 0] == self.faces[:, 2])
        ):
            raise MeshError("face with a repeated vertex index")
        # Duplicate face = same index set regardless of winding or rotation.
        sorted_faces = np.sort(self.faces, axis=1)
        if len(np.unique(sorted_faces, axis=0)) != len(self.faces):
            raise MeshError("duplicate face (same vertex index set)")
        areas = _raw_face_areas(self.vertices, self.faces)
        if np.any(areas < AREA_TOL):
            idx = int(np.argmin(areas))
            raise MeshError(
                f"degenerate face {idx} (area {areas[idx]:.3e} m^2 < {AREA_TOL:.0e})"
            )
        # Meshes are shared read-only between solver phases; lock the arrays.
        self.vertices.setflags(write=False)
        self.faces.setflags(write=False)

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_faces(self) -> int:
        return len(self.faces)

    def with_vertices(self, vertices: np.ndarray) -> "TriangleMesh":
        """Same topology, new positions."""
        return TriangleMesh(np.array(vertices, dtype=np.float64), self.faces.copy())


def _raw_face_areas(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    p0 = vertices[faces[:, 0]]
    cross = np.cross(vertices[faces[:, 1]] - p0, vertices[faces[:, 2]] - p0)
    return 0.5 * np.linalg.norm(cross, axis=1)


# ---------------------------------------------------------------------------
# Wavefront OBJ subset: v / f records, triangles only, 1-based indices.
# ---------------------------------------------------------------------------

def load_obj(path: str) -> TriangleMesh:
    """Load a triangle mesh from an OBJ file.

    Accepts `v x y z` and triangulated `f` records; `f` entries may carry
    texture/normal sub-indices (`i/t/n`), which are ignored. Any other record
    type is skipped. Raises ObjParseError on malformed records, MeshError on
    out-of-range indices or degenerate/duplicate faces, OSError on I/O trouble.
    """
    vertices: list[tuple[float, float, float]] = []
    faces: list[tuple[int, int, int]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            tag = parts[0]
            if tag == "v":
                if len(parts) < 4:
                    raise ObjParseError(f"{path}:{lineno}: vertex record needs 3 coordinates")
                try:
                    vertices.append((float(parts[1]), float(parts[2]), float(parts[3])))
                except ValueError as exc:
                    raise ObjParseError(f"{path}:{lineno}: bad vertex coordinate: {exc}") from exc
            elif tag == "f":
                refs = parts[1:]
                if len(refs) != 3:
                    raise ObjParseError(
                        f"{path}:{lineno}: face with {len(refs)} vertices (mesh must be triangulated)"
                    )
                idx = []
                for ref in refs:
                    head = ref.split("/")[0]
                    try:
                        idx.append(int(head))
                    except ValueError as exc:
                        raise ObjParseError(f"{path}:{lineno}: bad face index {ref!r}") from exc
                faces.append((idx[0], idx[1], idx[2]))
            # Normals, texcoords, groups, materials: ignored on purpose.
    if not vertices:
        raise ObjParseError(f"{path}: no vertex records")
    verts = np.array(vertices, dtype=np.float64)
    face_arr = np.array(faces, dtype=np.int64).reshape(-1, 3)
    if face_arr.size and (face_arr.min() < 1 or face_arr.max() > len(verts)):
        bad = face_arr[(face_arr < 1) | (face_arr > len(verts))]
        raise MeshError(f"{path}: face index {bad[0]} out of range (1..{len(verts)})")
    return TriangleMesh(verts, face_arr - 1)


def save_obj(path: str, mesh: TriangleMesh) -> None:
    """Write vertices with 9 significant digits; byte-stable for identical input."""
    lines = []
    for v in mesh.vertices:
        lines.append(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}")
    for f in mesh.faces:
        lines.append(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines))
        fh.write("\n")


# ---------------------------------------------------------------------------
# Areas, normals, masses.
# ---------------------------------------------------------------------------

def face_areas_normals(vertices: np.ndarray, faces: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-face area (F,) and unit normal (F, 3) from the stored winding."""
    p0 = vertices[faces[:, 0]]
    cross = np.cross(vertices[faces[:, 1]] - p0, vertices[faces[:, 2]] - p0)
    norms = np.linalg.norm(cross, axis=1)
    if np.any(norms < 2.0 * AREA_TOL):
        idx = int(np.argmin(norms))
        raise MeshError(f"degenerate face {idx} has no normal")
    return 0.5 * norms, cross / norms[:, None]


def vertex_normals(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """Area-weighted average of incident face normals, normalized per vertex.

    Raises MeshError for isolated vertices (no incident face, hence no normal).
    """
    p0 = vertices[faces[:, 0]]
    cross = np.cross(vertices[faces[:, 1]] - p0, vertices[faces[:, 2]] - p0)
    acc = np.zeros_like(vertices)
    for k in range(3):
        scatter_add(acc, faces[:, k], cross)
    norms = np.linalg.norm(acc, axis=1)
    incident = np.zeros(len(vertices), dtype=bool)
    incident[faces.ravel()] = True
    if not incident.all():
        raise MeshError(f"isolated vertex {int(np.argmin(incident))} has no normal")
    if np.any(norms < 1e-20):
        raise MeshError("vertex with vanishing accumulated normal")
    return acc / norms[:, None]


def vertex_masses(mesh: TriangleMesh, area_density: float) -> np.ndarray:
    """Lumped vertex masses: each face spreads density * area over its 3 corners."""
    if area_density <= 0.0:
        raise MeshError(f"area density must be positive, got {area_density}")
    areas = _raw_face_areas(mesh.vertices, mesh.faces)
    masses = np.zeros(mesh.num_vertices)
    share = areas * (area_density / 3.0)
    for k in range(3):
        np.add.at(masses, mesh.faces[:, k], share)
    return masses


def scatter_add(out: np.ndarray, index: np.ndarray, values: np.ndarray) -> None:
    """Deterministic scatter-add of (K, 3) values into (N, 3) out.

    bincount runs a fixed-order reduction per column, which keeps results
    bit-identical run to run (np.add.at would too, but is much slower).
    """
    n = len(out)
    for c in range(out.shape[1]):
        out[:, c] += np.bincount(index, weights=values[:, c], minlength=n)


# ---------------------------------------------------------------------------
# Edges, adjacency.
# ---------------------------------------------------------------------------

def unique_edges(faces: np.ndarray) -> np.ndarray:
    """(E, 2) undirected edges, each row sorted, rows lexicographically sorted."""
    e = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    e = np.sort(e, axis=1)
    return np.unique(e, axis=0)


def edge_keys(faces: np.ndarray, num_vertices: int) -> np.ndarray:
    """Sorted int64 keys i * N + j (i < j) for every unique edge."""
    e = unique_edges(faces)
    return e[:, 0] * np.int64(num_vertices) + e[:, 1]


@dataclass
class Adjacency:
    """CSR-style vertex 1-ring: neighbors[offsets[v]:offsets[v+1]] are v's neighbors."""

    offsets: np.ndarray
    neighbors: np.ndarray

    def ring(self, v: int) -> np.ndarray:
        return self.neighbors[self.offsets[v] : self.offsets[v + 1]]


def vertex_adjacency(faces: np.ndarray, num_vertices: int) -> Adjacency:
    e = unique_edges(faces)
    both = np.concatenate([e, e[:, ::-1]])
    order = np.lexsort((both[:, 1], both[:, 0]))
    both = both[order]
    counts = np.bincount(both[:, 0], minlength=num_vertices)
    offsets = np.zeros(num_vertices + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    return Adjacency(offsets, both[:, 1].copy())


# ---------------------------------------------------------------------------
# Dihedral hinges.
# ---------------------------------------------------------------------------

@dataclass
class Hinges:
    """Interior-edge stencils for dihedral angles.

    Per hinge: shared edge (a, b) with a < b, flap vertices c (first incident
    face by face id) and d (second), the two face ids, and sign = product of
    the two faces' winding signs relative to the canonical a->b traversal.
    Edges shared by more than two faces are excluded and listed in
    nonmanifold_edges; boundary edges (one face) are simply not hinges.
    """

    edge_a: np.ndarray
    edge_b: np.ndarray
    flap_c: np.ndarray
    flap_d: np.ndarray
    faces: np.ndarray  # (H, 2)
    sign: np.ndarray  # (H,) +-1.0
    nonmanifold_edges: list[tuple[int, int]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.edge_a)


def build_hinges(mesh: TriangleMesh) -> Hinges:
    """Group faces by undirected edge and keep the 2-face (interior) edges."""
    faces = mesh.faces
    incident: dict[tuple[int, int], list[int]] = {}
    for fid, (i, j, k) in enumerate(faces):
        for u, v in ((i, j), (j, k), (k, i)):
            key = (int(u), int(v)) if u < v else (int(v), int(u))
            incident.setdefault(key, []).append(fid)
    ea, eb, fc, fd, fpair, sign = [], [], [], [], [], []
    nonmanifold = []
    for (a, b), fids in sorted(incident.items()):
        if len(fids) == 1:
            continue
        if len(fids) > 2:
            nonmanifold.append((a, b))
            continue
        f1, f2 = sorted(fids)
        flaps, signs = [], []
        for fid in (f1, f2):
            tri = [int(x) for x in faces[fid]]
            flaps.append(next(v for v in tri if v != a and v != b))
            # +1 when the winding traverses a -> b, -1 for b -> a.
            ia = tri.index(a)
            signs.append(1.0 if tri[(ia + 1) % 3] == b else -1.0)
        ea.append(a)
        eb.append(b)
        fc.append(flaps[0])
        fd.append(flaps[1])
        fpair.append((f1, f2))
        sign.append(signs[0] * signs[1])
    if nonmanifold:
        logger.warning("mesh has %d non-manifold edges; skipped for bending", len(nonmanifold))
    return Hinges(
        np.array(ea, dtype=np.int64),
        np.array(eb, dtype=np.int64),
        np.array(fc, dtype=np.int64),
        np.array(fd, dtype=np.int64),
        np.array(fpair, dtype=np.int64).reshape(-1, 2),
        np.array(sign, dtype=np.float64),
        nonmanifold,
    )


def hinge_angles(positions: np.ndarray, hinges: Hinges) -> np.ndarray:
    """Signed dihedral angle per hinge, in (-pi, pi].

    The angle is measured between the two faces' winding normals about the
    canonical edge direction a->b; coplanar faces with coherent winding give 0,
    and swapping the two faces' roles negates the angle.
    """
    alpha, _ = _hinge_angles_core(positions, hinges)
    return alpha


def _hinge_angles_core(positions: np.ndarray, hinges: Hinges):
    """Angles plus the intermediates the gradient needs.

    With e = b - a, u = c - a, v = d - a, g1 = e x u, g2 = e x v:
      cos ~ g1.g2,  sin ~ |e| e.(u x v)
    both scaled by the winding sign product; atan2 ignores the common positive
    normalization 1/(|g1||g2|).
    """
    a = positions[hinges.edge_a]
    b = positions[hinges.edge_b]
    c = positions[hinges.flap_c]
    d = positions[hinges.flap_d]
    e = b - a
    u = c - a
    v = d - a
    g1 = np.cross(e, u)
    g2 = np.cross(e, v)
    elen = np.linalg.norm(e, axis=1)
    cos_raw = np.einsum("ij,ij->i", g1, g2)
    sin_raw = elen * np.einsum("ij,ij->i", e, np.cross(u, v))
    alpha = np.arctan2(hinges.sign * sin_raw, hinges.sign * cos_raw)
    return alpha, (e, u, v, g1, g2, elen, cos_raw, sin_raw)


def hinge_angle_gradients(positions: np.ndarray, hinges: Hinges):
    """Angles and per-stencil angle gradients (each (H, 3)).

    Flap gradients follow from the rotation-rate picture (moving a flap along
    its face normal rotates that face about the edge at rate |e| / |g|); the
    second edge endpoint is differentiated through the atan2 quotient, and the
    first follows from translation invariance. The winding sign only relocates
    the atan2 branch cut, so it does not enter the gradients.
    """
    alpha, (e, u, v, g1, g2, elen, cos_raw, sin_raw) = _hinge_angles_core(positions, hinges)
    g1sq = np.einsum("ij,ij->i", g1, g1)
    g2sq = np.einsum("ij,ij->i", g2, g2)
    denom = g1sq * g2sq  # == cos_raw^2 + sin_raw^2
    w = np.cross(u, v)
    e_dot_w = np.einsum("ij,ij->i", e, w)

    grad_c = -(elen / g1sq)[:, None] * g1
    grad_d = (elen / g2sq)[:, None] * g2
    # d(sin_raw)/db and d(cos_raw)/db, b entering only through e.
    dsin_db = (e_dot_w / elen)[:, None] * e + elen[:, None] * w
    dcos_db = np.cross(u, g2) + np.cross(v, g1)
    grad_b = (cos_raw / denom)[:, None] * dsin_db - (sin_raw / denom)[:, None] * dcos_db
    grad_a = -(grad_b + grad_c + grad_d)
    return alpha, grad_a, grad_b, grad_c, grad_d


def dihedral_angles(mesh: TriangleMesh) -> tuple[np.ndarray, Hinges]:
    """Convenience: hinges of the mesh plus their angles at the stored positions."""
    hinges = build_hinges(mesh)
    return hinge_angles(mesh.vertices, hinges), hinges


# ---------------------------------------------------------------------------
# Rest tangent frames and deformation gradients.
# ---------------------------------------------------------------------------

@dataclass
class RestFrame:
    """Per-face rest data for the membrane term.

    dm_inv: (F, 2, 2) inverse of the rest edge matrix expressed in an
            orthonormal tangent basis (e1 along the first edge).
    areas:  (F,) rest face areas.
    faces:  (F, 3) the topology the frames were built for.
    """

    dm_inv: np.ndarray
    areas: np.ndarray
    faces: np.ndarray


def rest_frames(mesh: TriangleMesh) -> RestFrame:
    """Build per-face 2D rest frames; the rest mesh itself then has zero strain."""
    v = mesh.vertices
    f = mesh.faces
    d1 = v[f[:, 1]] - v[f[:, 0]]
    d2 = v[f[:, 2]] - v[f[:, 0]]
    areas, _ = face_areas_normals(v, f)
    l1 = np.linalg.norm(d1, axis=1)
    e1 = d1 / l1[:, None]
    d2_on_e1 = np.einsum("ij,ij->i", d2, e1)
    e2_raw = d2 - d2_on_e1[:, None] * e1
    l2 = np.linalg.norm(e2_raw, axis=1)
    e2 = e2_raw / l2[:, None]
    # Rest edge matrix is upper triangular in this basis: [[|d1|, d2.e1], [0, d2.e2]].
    det = l1 * l2
    dm_inv = np.empty((len(f), 2, 2))
    dm_inv[:, 0, 0] = l2 / det
    dm_inv[:, 0, 1] = -d2_on_e1 / det
    dm_inv[:, 1, 0] = 0.0
    dm_inv[:, 1, 1] = l1 / det
    return RestFrame(dm_inv, areas, f.copy())


def deformation_gradients(positions: np.ndarray, rest: RestFrame) -> np.ndarray:
    """(F, 3, 2) map from rest tangent coordinates to deformed edge vectors."""
    f = rest.faces
    d = np.stack(
        [positions[f[:, 1]] - positions[f[:, 0]], positions[f[:, 2]] - positions[f[:, 0]]],
        axis=2,
    )  # (F, 3, 2)
    return d @ rest.dm_inv


def green_strains(positions: np.ndarray, rest: RestFrame) -> np.ndarray:
    """(F, 2, 2) Green strain 0.5 (F^T F - I); exactly zero on the rest mesh."""
    fgrad = deformation_gradients(positions, rest)
    ftf = np.einsum("fia,fib->fab", fgrad, fgrad)
    ftf[:, 0, 0] -= 1.0
    ftf[:, 1, 1] -= 1.0
    return 0.5 * ftf


def mean_edge_length(positions: np.ndarray, faces: np.ndarray) -> float:
    e = unique_edges(faces)
    return float(np.mean(np.linalg.norm(positions[e[:, 1]] - positions[e[:, 0]], axis=1)))
