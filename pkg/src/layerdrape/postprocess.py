"""Penetration audit and repair on draped stacks, plus report types.

Detection mirrors the collision-energy predicates: a vertex penetrates a
reference surface when its signed distance to the nearest reference vertex's
tangent plane falls below that surface's shell offset. Resolution projects
offenders back onto the shell and lightly relaxes their neighborhoods, by
construction never moving any vertex more than twice the shell offset per
pass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .energy import MaterialParams, SurfaceProxy
from .errors import ValidationError
from .mesh import TriangleMesh, edge_keys, vertex_adjacency, vertex_normals
from .spatial import pairs_within

TERM_NAMES = (
    "strain",
    "bending",
    "gravity",
    "collision_gb",
    "repulsive",
    "holding",
    "collision_gg",
    "distance",
)

BODY_REF = -1
MAX_PASSES = 40
RELAX_ROUNDS = 3
PROJECT_CAP = 1.5     # of the shell offset
RELAX_CAP = 0.15      # of the shell offset, per round
PROJECT_TARGET = 1.15  # land a little past the shell: re-detection is strict
                       # and measures against whichever reference vertex is
                       # nearest after the move, whose tangent plane can sit
                       # a facet-sagitta short of the one projected against


@dataclass
class PenetrationRecord:
    """One vertex found inside a reference shell.

    reference is BODY_REF for the body, else the index of the (lower layer)
    garment whose surface is violated. depth is the signed tangent-plane
    distance at detection time; records only exist for depth < the shell
    offset in force.
    """

    garment: int
    vertex: int
    reference: int
    depth: float

    def sort_key(self) -> tuple[int, int, int]:
        return (self.garment, self.vertex, self.reference)


@dataclass
class EnergyReport:
    """Per-garment term values plus stack-level diagnostics.

    terms carries every name in TERM_NAMES for every garment (cross-layer
    entries are zero for single drapes). counts holds penetration tallies
    after whatever repair ran; strain_ratios is the lower-triangular ratio
    table when stacked runs are available (NaN marks undefined entries).
    phase_ms is wall-clock bookkeeping and is excluded from serialization
    unless explicitly requested, keeping output files run-to-run identical.
    """

    garment_names: list[str]
    terms: list[dict[str, float]]
    objectives: list[float]
    counts: dict[str, int] = field(default_factory=dict)
    strain_ratios: list[list[float]] | None = None
    residuals: list[PenetrationRecord] = field(default_factory=list)
    phase_ms: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.terms) != len(self.garment_names) or len(self.objectives) != len(
            self.garment_names
        ):
            raise ValidationError("report sections out of step with garment names")
        for t in self.terms:
            missing = [n for n in TERM_NAMES if n not in t]
            if missing:
                raise ValidationError(f"report missing energy terms: {missing}")
        for k, v in self.counts.items():
            if v < 0:
                raise ValidationError(f"negative penetration count {k}={v}")

    def to_dict(self, include_timings: bool = False) -> dict:
        out = {
            "garments": [
                {
                    "name": self.garment_names[i],
                    "terms": {n: float(self.terms[i][n]) for n in TERM_NAMES},
                    "objective": float(self.objectives[i]),
                }
                for i in range(len(self.garment_names))
            ],
            "penetration_counts": {k: int(v) for k, v in sorted(self.counts.items())},
            "strain_ratios": None
            if self.strain_ratios is None
            else [
                [None if math.isnan(v) else float(v) for v in row]
                for row in self.strain_ratios
            ],
            "residual_penetrations": [
                {
                    "garment": r.garment,
                    "vertex": r.vertex,
                    "reference": "body" if r.reference == BODY_REF else r.reference,
                    "depth": float(r.depth),
                }
                for r in self.residuals
            ],
        }
        if include_timings:
            out["phase_ms"] = {k: float(v) for k, v in sorted(self.phase_ms.items())}
        return out

    @classmethod
    def from_dict(cls, payload: dict) -> "EnergyReport":
        try:
            garments = payload["garments"]
            names = [g["name"] for g in garments]
            terms = [{n: float(g["terms"][n]) for n in TERM_NAMES} for g in garments]
            objectives = [float(g["objective"]) for g in garments]
            ratios = payload.get("strain_ratios")
            if ratios is not None:
                ratios = [
                    [math.nan if v is None else float(v) for v in row] for row in ratios
                ]
            residuals = [
                PenetrationRecord(
                    int(r["garment"]),
                    int(r["vertex"]),
                    BODY_REF if r["reference"] == "body" else int(r["reference"]),
                    float(r["depth"]),
                )
                for r in payload.get("residual_penetrations", [])
            ]
            counts = {k: int(v) for k, v in payload.get("penetration_counts", {}).items()}
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed report payload: {exc}") from None
        return cls(
            garment_names=names,
            terms=terms,
            objectives=objectives,
            counts=counts,
            strain_ratios=ratios,
            residuals=residuals,
            phase_ms={k: float(v) for k, v in payload.get("phase_ms", {}).items()},
        )


# ---------------------------------------------------------------------------
# Detection.
# ---------------------------------------------------------------------------

def _garment_eps(mat: MaterialParams, reference: int) -> float:
    return mat.epsilon_body if reference == BODY_REF else mat.epsilon_garment


def detect_penetrations(
    stack, posed_body: TriangleMesh, params: MaterialParams | None = None
) -> list[PenetrationRecord]:
    """All (vertex, reference) violations, ordered by (garment, vertex, reference).

    Each garment is checked against the body and against every garment below
    it in the stack. The body reference sorts before garment references for a
    given vertex. params overrides the per-garment materials when given.
    """
    proxies = [SurfaceProxy.from_surface(posed_body.vertices, posed_body.faces)]
    refs = [BODY_REF]
    records: list[PenetrationRecord] = []
    for k, garment in enumerate(stack.garments):
        pos = stack.posed[k]
        mat = params if params is not None else garment.material
        for proxy, ref in zip(proxies, refs):
            eps = _garment_eps(mat, ref)
            assign = proxy.nearest(pos)
            d = proxy.signed_distances(pos, assign)
            for v in np.nonzero(d < eps)[0]:
                records.append(PenetrationRecord(k, int(v), ref, float(d[v])))
        proxies.append(SurfaceProxy.from_surface(pos, garment.mesh.faces))
        refs.append(k)
    records.sort(key=PenetrationRecord.sort_key)
    return records


def count_records(records: list[PenetrationRecord]) -> dict[str, int]:
    body = sum(1 for r in records if r.reference == BODY_REF)
    return {"body_garment": body, "garment_garment": len(records) - body}


# ---------------------------------------------------------------------------
# Resolution.
# ---------------------------------------------------------------------------

def resolve_penetrations(
    stack, posed_body: TriangleMesh, params: MaterialParams | None = None
):
    """Project offenders out to their shells, innermost garment first.

    Per pass: re-detect, move each offending vertex along its reference
    normal to just past the shell distance (movement capped so no vertex
    travels more than twice its shell offset per pass, relaxation included),
    then run a few Laplacian rounds over the untouched neighbors of moved
    vertices. Fixing an inner layer routinely creates fresh records on the
    layers above it, so the record count may rise before it falls; the pass
    with the fewest records wins, and that state is what comes back together
    with its residuals. Residuals are reported, never dropped.
    """
    records = detect_penetrations(stack, posed_body, params)
    if not records:
        return stack, records
    adjacency = [
        vertex_adjacency(g.mesh.faces, g.mesh.num_vertices) for g in stack.garments
    ]
    best_posed = [p.copy() for p in stack.posed]
    best_records = records
    for _ in range(MAX_PASSES):
        _resolve_pass(stack, posed_body, params, records, adjacency)
        records = detect_penetrations(stack, posed_body, params)
        if len(records) < len(best_records):
            best_posed = [p.copy() for p in stack.posed]
            best_records = records
        if not records:
            break
    stack.posed = best_posed
    return stack, best_records


def _resolve_pass(stack, posed_body, params, records, adjacency) -> None:
    m = len(stack.garments)
    by_garment: list[list[PenetrationRecord]] = [[] for _ in range(m)]
    for r in records:
        by_garment[r.garment].append(r)
    # reference surfaces use positions as already updated this pass (inner first)
    normals_cache: dict[int, np.ndarray] = {
        BODY_REF: vertex_normals(posed_body.vertices, posed_body.faces)
    }
    assign_cache: dict[tuple[int, int], np.ndarray] = {}

    def ref_surface(ref: int):
        if ref == BODY_REF:
            return posed_body.vertices, normals_cache[BODY_REF]
        if ref not in normals_cache:
            normals_cache[ref] = vertex_normals(
                stack.posed[ref], stack.garments[ref].mesh.faces
            )
        return stack.posed[ref], normals_cache[ref]

    def ref_assign(k: int, ref: int) -> np.ndarray:
        key = (k, ref)
        if key not in assign_cache:
            ref_pos, _ = ref_surface(ref)
            proxy = SurfaceProxy.from_surface(
                ref_pos,
                posed_body.faces if ref == BODY_REF else stack.garments[ref].mesh.faces,
            )
            assign_cache[key] = proxy.nearest(stack.posed[k])
        return assign_cache[key]

    for k in range(m):
        if not by_garment[k]:
            continue
        mat = params if params is not None else stack.garments[k].material
        eps_cap = max(mat.epsilon_body, mat.epsilon_garment)
        pos = stack.posed[k].copy()
        start = pos.copy()
        moved: set[int] = set()
        budget = np.full(len(pos), PROJECT_CAP * eps_cap)
        for r in by_garment[k]:
            eps = _garment_eps(mat, r.reference)
            ref_pos, ref_nrm = ref_surface(r.reference)
            ref_id = ref_assign(k, r.reference)[r.vertex]
            n = ref_nrm[ref_id]
            d = float(np.dot(pos[r.vertex] - ref_pos[ref_id], n))
            step = min(max(PROJECT_TARGET * eps - d, 0.0), budget[r.vertex])
            if step <= 0.0:
                continue
            pos[r.vertex] = pos[r.vertex] + step * n
            budget[r.vertex] -= step
            moved.add(r.vertex)
        if moved:
            _relax_neighbors(pos, adjacency[k], moved, RELAX_CAP * eps_cap)
            total = np.linalg.norm(pos - start, axis=1)
            assert float(total.max()) < 2.0 * eps_cap
            stack.posed[k] = pos
            normals_cache.pop(k, None)  # this surface changed; rebuild on demand
            for key in [key for key in assign_cache if key[1] == k or key[0] == k]:
                del assign_cache[key]


def _relax_neighbors(pos: np.ndarray, adj, moved: set[int], cap: float) -> None:
    ring: set[int] = set()
    for v in moved:
        ring.update(int(u) for u in adj.ring(v))
    ring -= moved
    targets = np.array(sorted(ring), dtype=np.int64)
    if len(targets) == 0:
        return
    for _ in range(RELAX_ROUNDS):
        updates = np.empty((len(targets), 3))
        for idx, v in enumerate(targets):
            nb = adj.ring(int(v))
            step = 0.5 * (pos[nb].mean(axis=0) - pos[v])
            norm = float(np.linalg.norm(step))
            if norm > cap:
                step *= cap / norm
            updates[idx] = step
        pos[targets] += updates


# ---------------------------------------------------------------------------
# Diagnostics.
# ---------------------------------------------------------------------------

def self_collision_metric(
    positions: np.ndarray,
    faces: np.ndarray,
    material: MaterialParams,
    threshold: float | None = None,
) -> tuple[float, int]:
    """Sum of -log(squared distance) over non-edge pairs closer than the
    threshold (default twice the cloth thickness). Returns (value, pair count);
    (0.0, 0) when nothing is that close. Coincident pairs are an error."""
    if threshold is None:
        threshold = 2.0 * material.thickness
    i, j = pairs_within(positions, threshold)
    if len(i) == 0:
        return 0.0, 0
    keys = i * np.int64(len(positions)) + j
    keep = ~np.isin(keys, edge_keys(faces, len(positions)))
    i, j = i[keep], j[keep]
    if len(i) == 0:
        return 0.0, 0
    d2 = np.einsum("ij,ij->i", positions[i] - positions[j], positions[i] - positions[j])
    if np.any(d2 < 1e-18):
        k = int(np.argmin(d2))
        raise ValidationError(f"coincident self-collision pair ({i[k]}, {j[k]})")
    return float(-np.sum(np.log(d2))), int(len(i))


def strain_ratio_table(
    multi_strains: list[list[float]], single_strains: list[float]
) -> np.ndarray:
    """Lower-triangular (M, M) table: entry [m-1, i] is garment i's strain in
    the m-garment stack over its strain when draped alone.

    multi_strains[m-1] holds the per-garment strain values of the m-stack run.
    The first row divides a value by itself, so it is exactly 1 whenever the
    strain is nonzero; zero single-drape strain marks the entry NaN
    (undefined). Entries above the diagonal are NaN padding.
    """
    m = len(multi_strains)
    if len(single_strains) < m:
        raise ValidationError("fewer single-drape strains than stack rows")
    table = np.full((m, m), np.nan)
    for row in range(m):
        if len(multi_strains[row]) != row + 1:
            raise ValidationError(
                f"stack row {row + 1} has {len(multi_strains[row])} entries, expected {row + 1}"
            )
        for i in range(row + 1):
            denom = single_strains[i]
            if denom == 0.0:
                continue
            table[row, i] = multi_strains[row][i] / denom
    return table
