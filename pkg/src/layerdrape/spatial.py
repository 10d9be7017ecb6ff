"""Uniform-grid spatial index: exact nearest-point queries and radius pair lists.

Point sets get re-posed every solver iteration, so the index is rebuilt often;
a uniform grid rebuilds in linear time, which is why it is used here instead of
a tree. Queries are exact: results match a linear scan, with distance ties
broken by the lowest point id. The batched path expands cell shells outward in
lockstep for all unresolved queries, so distant queries stay vectorized.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np


_SHELL_CACHE: dict[int, np.ndarray] = {}


def _shell_offsets(r: int) -> np.ndarray:
    """Integer offsets at Chebyshev radius exactly r (cached)."""
    got = _SHELL_CACHE.get(r)
    if got is None:
        if r == 0:
            got = np.zeros((1, 3), dtype=np.int64)
        else:
            rng = np.arange(-r, r + 1, dtype=np.int64)
            cube = np.stack(np.meshgrid(rng, rng, rng, indexing="ij"), axis=-1).reshape(-1, 3)
            got = cube[np.abs(cube).max(axis=1) == r]
        _SHELL_CACHE[r] = got
    return got


def _ragged_arange(counts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(group_id, offset_within_group) arrays for concatenated ragged groups."""
    total = int(counts.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    group = np.repeat(np.arange(len(counts), dtype=np.int64), counts)
    starts = np.cumsum(counts) - counts
    within = np.arange(total, dtype=np.int64) - np.repeat(starts, counts)
    return group, within


@dataclass
class UniformGrid:
    """Snapshot index over a fixed (P, 3) point set with cubic cells."""

    points: np.ndarray
    cell: float
    _mins: np.ndarray = None
    _dims: np.ndarray = None
    _cell_keys: np.ndarray = None
    _cell_starts: np.ndarray = None
    _order: np.ndarray = None

    def __post_init__(self):
        self.points = np.ascontiguousarray(self.points, dtype=np.float64)
        if self.points.ndim != 2 or self.points.shape[1] != 3:
            raise ValueError(f"points must be (P, 3), got {self.points.shape}")
        if len(self.points) == 0:
            raise ValueError("cannot index an empty point set")
        if not (self.cell > 0.0) or not np.isfinite(self.cell):
            raise ValueError(f"cell size must be positive and finite, got {self.cell}")
        coords = np.floor(self.points / self.cell).astype(np.int64)
        self._mins = coords.min(axis=0)
        self._dims = coords.max(axis=0) - self._mins + 1
        keys = self._key_of(coords)
        self._order = np.argsort(keys, kind="stable").astype(np.int64)
        sorted_keys = keys[self._order]
        self._cell_keys, self._cell_starts = np.unique(sorted_keys, return_index=True)

    # -- key helpers --------------------------------------------------------

    def _key_of(self, coords: np.ndarray) -> np.ndarray:
        rel = coords - self._mins
        return (rel[..., 0] * self._dims[1] + rel[..., 1]) * self._dims[2] + rel[..., 2]

    def _cells_to_keys(self, coords: np.ndarray) -> np.ndarray:
        """Keys for integer cells; -1 for cells outside the occupied bounding box."""
        rel = coords - self._mins
        inside = np.all((rel >= 0) & (rel < self._dims), axis=-1)
        keys = (rel[..., 0] * self._dims[1] + rel[..., 1]) * self._dims[2] + rel[..., 2]
        return np.where(inside, keys, -1)

    def _lookup(self, keys: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Per key: (start, count) into the sorted point order; empty for misses."""
        pos = np.searchsorted(self._cell_keys, keys)
        pos_c = np.minimum(pos, len(self._cell_keys) - 1)
        hit = (keys >= 0) & (self._cell_keys[pos_c] == keys)
        starts_all = np.append(self._cell_starts, len(self.points))
        starts = np.where(hit, starts_all[pos_c], 0)
        counts = np.where(hit, starts_all[pos_c + 1] - starts, 0)
        return starts, counts

    # -- queries ------------------------------------------------------------

    def _query_cells(self, q: np.ndarray, slack: float) -> np.ndarray:
        """Integer cells of q, clamped to the occupied box plus slack cells.

        The clamp happens in float space: a wildly out-of-range coordinate
        (a diverging solve, an inf) would otherwise overflow int64 and poison
        every later comparison. NaN pins to the high clamp."""
        qf = np.floor(q / self.cell)
        lo = self._mins.astype(np.float64)
        hi = (self._mins + self._dims - 1).astype(np.float64)
        qf = np.where(np.isnan(qf), hi + slack, qf)
        return np.clip(qf, lo - slack, hi + slack).astype(np.int64)

    def nearest(self, query: np.ndarray) -> tuple[int, float]:
        """Exact nearest point id and distance for one query position."""
        q = np.asarray(query, dtype=np.float64)
        qcell = self._query_cells(q, 1.0)
        center = np.clip(qcell, self._mins, self._mins + self._dims - 1)
        best_id, best_d2 = -1, np.inf
        r = 0
        max_r = int(self._dims.max()) + int(np.abs(qcell - center).max()) + 2
        while r <= max_r:
            bound = self._shell_min_dist(q, center, r)
            if best_id >= 0 and bound * bound > best_d2:
                break
            for cell in self._shell_cells(center, r):
                key = self._cells_to_keys(cell[None, :])[0]
                if key < 0:
                    continue
                starts, counts = self._lookup(np.array([key]))
                if counts[0] == 0:
                    continue
                ids = self._order[starts[0] : starts[0] + counts[0]]
                d2 = np.sum((self.points[ids] - q) ** 2, axis=1)
                for pid, dd in sorted(zip(ids.tolist(), d2.tolist())):
                    if dd < best_d2 or (dd == best_d2 and pid < best_id):
                        best_id, best_d2 = pid, dd
            r += 1
        return best_id, float(np.sqrt(best_d2))

    def _shell_min_dist(self, q: np.ndarray, center: np.ndarray, r: int) -> float:
        """Lower bound on the distance from q to any point in ring r around center."""
        lo = (center - r) * self.cell
        hi = (center + r + 1) * self.cell
        outer = np.linalg.norm(np.maximum(np.maximum(lo - q, q - hi), 0.0))
        if r == 0:
            return float(outer)
        lo_in = (center - (r - 1)) * self.cell
        hi_in = (center + (r - 1) + 1) * self.cell
        depth = np.min(np.minimum(q - lo_in, hi_in - q))
        return float(max(outer, depth, 0.0))

    def _shell_cells(self, center: np.ndarray, r: int):
        if r == 0:
            yield center.copy()
            return
        for dx in range(-r, r + 1):
            for dy in range(-r, r + 1):
                for dz in range(-r, r + 1):
                    if max(abs(dx), abs(dy), abs(dz)) == r:
                        yield center + np.array([dx, dy, dz], dtype=np.int64)

    def nearest_many(self, queries: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Exact nearest ids (n,) and distances (n,) for a batch of queries.

        Shells of cells are scanned outward in lockstep for all unresolved
        queries at once. A query is settled when its best distance is strictly
        under r cells, because shell r+1 cannot hold anything nearer than
        r * cell (the strict test also forces one extra shell whenever a tie
        across the boundary is geometrically possible, keeping the lowest-id
        rule exact). A query sitting far outside the occupied box would pay
        one empty ring per cell of gap, so those (and anything non-finite) go
        straight to the brute-force scan, along with any query that outruns
        the shell cap.
        """
        q = np.asarray(queries, dtype=np.float64)
        if q.ndim != 2 or q.shape[1] != 3:
            raise ValueError(f"queries must be (n, 3), got {q.shape}")
        n = len(q)
        ids = np.full(n, -1, dtype=np.int64)
        d2_best = np.full(n, np.inf)
        if n == 0:
            return ids, d2_best

        slack = 4.0
        qf = np.floor(q / self.cell)
        lo = self._mins.astype(np.float64)
        hi = (self._mins + self._dims - 1).astype(np.float64)
        overshoot = np.maximum(np.maximum(lo - qf, qf - hi), 0.0).max(axis=1)
        near = overshoot <= slack  # False for NaN as well
        qcells = self._query_cells(q, slack)
        max_r = int(self._dims.max()) + int(slack) + 1
        active = np.nonzero(near)[0].astype(np.int64)
        r = 0
        while len(active) and r <= max_r:
            offsets = _shell_offsets(r)
            keys = self._cells_to_keys(qcells[active, None, :] + offsets[None, :, :])
            starts, counts = self._lookup(keys.ravel())
            group, within = _ragged_arange(counts)
            if len(group):
                cand_ids = self._order[starts[group] + within]
                cand_q = active[group // len(offsets)]  # non-decreasing by construction
                diff = self.points[cand_ids] - q[cand_q]
                cand_d2 = np.einsum("ij,ij->i", diff, diff)
                # candidates arrive grouped by query, so segment reductions
                # (min distance, then min id among exact ties) avoid a sort
                seg = np.ones(len(cand_q), dtype=bool)
                seg[1:] = cand_q[1:] != cand_q[:-1]
                seg_starts = np.nonzero(seg)[0]
                cq = cand_q[seg_starts]
                cd2 = np.minimum.reduceat(cand_d2, seg_starts)
                at_min = cand_d2 == np.repeat(cd2, np.diff(np.append(seg_starts, len(cand_d2))))
                masked_ids = np.where(at_min, cand_ids, np.iinfo(np.int64).max)
                cid = np.minimum.reduceat(masked_ids, seg_starts)
                better = (cd2 < d2_best[cq]) | ((cd2 == d2_best[cq]) & (cid < ids[cq]))
                upd = cq[better]
                ids[upd] = cid[better]
                d2_best[upd] = cd2[better]
            bound = r * self.cell
            settled = (ids[active] >= 0) & (d2_best[active] < bound * bound)
            active = active[~settled]
            r += 1
        leftover = np.concatenate([active, np.nonzero(~near)[0]])
        if len(leftover):
            for chunk in np.array_split(leftover, max(1, len(leftover) * len(self.points) // 2_000_000)):
                diff = q[chunk][:, None, :] - self.points[None, :, :]
                d2 = np.einsum("qpj,qpj->qp", diff, diff)
                best = np.argmin(d2, axis=1)  # first occurrence = lowest id
                ids[chunk] = best
                d2_best[chunk] = d2[np.arange(len(chunk)), best]
        return ids, np.sqrt(d2_best)


def build_index(points: np.ndarray, cell: float) -> UniformGrid:
    """Spec-facing constructor."""
    return UniformGrid(points, float(cell))


# Half-space neighbor offsets: the zero offset pairs within a cell, the 13
# lexicographically-positive offsets pair each distinct cell pair exactly once.
_HALF_OFFSETS = np.array(
    [o for o in product((-1, 0, 1), repeat=3) if o > (0, 0, 0)], dtype=np.int64
)


def pairs_within(points: np.ndarray, radius: float) -> tuple[np.ndarray, np.ndarray]:
    """All unordered point pairs (i < j) closer than radius, sorted by (i, j).

    Exact enumeration (no sampling): candidates come from a transient grid with
    cell = radius, so any pair within radius shares a cell or sits in adjacent
    cells.
    """
    pts = np.asarray(points, dtype=np.float64)
    if not (radius > 0.0):
        raise ValueError(f"radius must be positive, got {radius}")
    if len(pts) < 2:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    grid = UniformGrid(pts, float(radius))
    occupied = grid._cell_keys
    starts_all = np.append(grid._cell_starts, len(pts))
    occ_starts = grid._cell_starts
    occ_counts = starts_all[1:] - starts_all[:-1]

    # Recover integer coords of occupied cells from their keys.
    rel0 = occupied // (grid._dims[1] * grid._dims[2])
    rem = occupied - rel0 * grid._dims[1] * grid._dims[2]
    rel1 = rem // grid._dims[2]
    rel2 = rem - rel1 * grid._dims[2]
    occ_coords = np.stack([rel0, rel1, rel2], axis=1) + grid._mins

    out_i: list[np.ndarray] = []
    out_j: list[np.ndarray] = []

    def _emit(ia: np.ndarray, ib: np.ndarray, same_cell: bool):
        if not len(ia):
            return
        a = grid._order[ia]
        b = grid._order[ib]
        if same_cell:
            keep = a < b
            a, b = a[keep], b[keep]
        diff = pts[a] - pts[b]
        close = np.einsum("ij,ij->i", diff, diff) < radius * radius
        a, b = a[close], b[close]
        out_i.append(np.minimum(a, b))
        out_j.append(np.maximum(a, b))

    # Same-cell pass: full cartesian per cell, filtered to i < j.
    counts_sq = occ_counts * occ_counts
    group, within = _ragged_arange(counts_sq)
    if len(group):
        ca = occ_starts[group] + within // occ_counts[group]
        cb = occ_starts[group] + within % occ_counts[group]
        _emit(ca, cb, same_cell=True)

    # Cross-cell passes: each neighbor offset visits a cell pair once.
    for off in _HALF_OFFSETS:
        nb_keys = grid._cells_to_keys(occ_coords + off)
        nb_starts, nb_counts = grid._lookup(nb_keys)
        pair_counts = occ_counts * nb_counts
        group, within = _ragged_arange(pair_counts)
        if not len(group):
            continue
        ca = occ_starts[group] + within // nb_counts[group]
        cb = nb_starts[group] + within % nb_counts[group]
        _emit(ca, cb, same_cell=False)

    if not out_i:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    i_all = np.concatenate(out_i)
    j_all = np.concatenate(out_j)
    order = np.lexsort((j_all, i_all))
    return i_all[order], j_all[order]
