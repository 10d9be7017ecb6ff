"""Procedural meshes: open tubes, flat sheets, UV spheres.

These are the garment and test-surface generators. Tubes are open-ended
cylinders (skirts, sleeves); sheets are flat rectangles; spheres serve as
simple closed reference surfaces. All windings face outward / toward +y
consistently so face normals are predictable.
"""

from __future__ import annotations

import numpy as np

from .mesh import TriangleMesh


def tube(
    radius: float,
    height: float,
    segments: int = 32,
    rings: int = 16,
    center: tuple[float, float, float] = (0.0, 0.0, 0.0),
) -> TriangleMesh:
    """Open vertical tube: `segments` points around, `rings` quad rows along y.

    center is the tube's mid-height axis point; normals face outward.
    """
    if segments < 3 or rings < 1:
        raise ValueError("tube needs segments >= 3 and rings >= 1")
    cx, cy, cz = center
    phi = 2.0 * np.pi * np.arange(segments) / segments
    ys = cy + np.linspace(-0.5 * height, 0.5 * height, rings + 1)
    verts = np.empty(((rings + 1) * segments, 3))
    for r, y in enumerate(ys):
        base = r * segments
        verts[base : base + segments, 0] = cx + radius * np.cos(phi)
        verts[base : base + segments, 1] = y
        verts[base : base + segments, 2] = cz + radius * np.sin(phi)
    faces = []
    for r in range(rings):
        for s in range(segments):
            a = r * segments + s
            b = r * segments + (s + 1) % segments
            c = (r + 1) * segments + s
            d = (r + 1) * segments + (s + 1) % segments
            # Outward winding: +y is up, phi increases toward +z around +y.
            faces.append((a, c, b))
            faces.append((b, c, d))
    return TriangleMesh(verts, np.array(faces, dtype=np.int64))


def sheet(
    width: float,
    depth: float,
    nx: int = 8,
    nz: int = 8,
    center: tuple[float, float, float] = (0.0, 0.0, 0.0),
) -> TriangleMesh:
    """Flat rectangle in the xz plane, normals toward +y, (nx+1)*(nz+1) vertices."""
    if nx < 1 or nz < 1:
        raise ValueError("sheet needs nx >= 1 and nz >= 1")
    cx, cy, cz = center
    xs = cx + np.linspace(-0.5 * width, 0.5 * width, nx + 1)
    zs = cz + np.linspace(-0.5 * depth, 0.5 * depth, nz + 1)
    gx, gz = np.meshgrid(xs, zs, indexing="ij")
    verts = np.stack([gx.ravel(), np.full(gx.size, cy), gz.ravel()], axis=1)
    faces = []
    for i in range(nx):
        for k in range(nz):
            a = i * (nz + 1) + k
            b = a + 1
            c = (i + 1) * (nz + 1) + k
            d = c + 1
            faces.append((a, b, c))
            faces.append((b, d, c))
    return TriangleMesh(verts, np.array(faces, dtype=np.int64))


def uv_sphere(
    radius: float,
    rings: int = 12,
    segments: int = 16,
    center: tuple[float, float, float] = (0.0, 0.0, 0.0),
) -> TriangleMesh:
    """Closed UV sphere with outward winding."""
    if rings < 2 or segments < 3:
        raise ValueError("uv_sphere needs rings >= 2 and segments >= 3")
    c = np.asarray(center, dtype=np.float64)
    verts = [c + np.array([0.0, radius, 0.0])]
    for r in range(1, rings):
        theta = np.pi * r / rings
        y = radius * np.cos(theta)
        rho = radius * np.sin(theta)
        for s in range(segments):
            phi = 2.0 * np.pi * s / segments
            verts.append(c + np.array([rho * np.cos(phi), y, rho * np.sin(phi)]))
    verts.append(c + np.array([0.0, -radius, 0.0]))
    north = 0
    south = len(verts) - 1
    faces = []
    ring_start = lambda r: 1 + (r - 1) * segments  # noqa: E731
    for s in range(segments):
        s2 = (s + 1) % segments
        faces.append((north, ring_start(1) + s2, ring_start(1) + s))
    for r in range(1, rings - 1):
        for s in range(segments):
            s2 = (s + 1) % segments
            a = ring_start(r) + s
            b = ring_start(r) + s2
            cc = ring_start(r + 1) + s
            d = ring_start(r + 1) + s2
            faces.append((a, b, cc))
            faces.append((b, d, cc))
    for s in range(segments):
        s2 = (s + 1) % segments
        faces.append((south, ring_start(rings - 1) + s, ring_start(rings - 1) + s2))
    return TriangleMesh(np.array(verts), np.array(faces, dtype=np.int64))
