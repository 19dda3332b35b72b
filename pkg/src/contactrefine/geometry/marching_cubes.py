"""Marching cubes over an :class:`OccupancyGrid`.

The 256-entry case table is generated at import time instead of being typed
in. For every cube face the crossings are paired so that inside corners are
kept apart (a fixed rule, no asymptotic decider); the resulting face segments
chain into closed loops which are fan-triangulated. Because the face rule only
depends on the four corner signs of that face, neighbouring cubes always agree
and the extracted surface has no cracks.
"""
from __future__ import annotations

import numpy as np

from .mesh import TriMesh
from .occupancy import OccupancyGrid

CORNERS = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0],
                    [0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1]])
EDGES = [(0, 1), (1, 2), (3, 2), (0, 3), (4, 5), (5, 6), (7, 6), (4, 7),
         (0, 4), (1, 5), (2, 6), (3, 7)]
# corner cycles of the six cube faces, counter-clockwise seen from outside
FACES = [(0, 3, 2, 1), (4, 5, 6, 7), (0, 1, 5, 4), (3, 7, 6, 2), (0, 4, 7, 3), (1, 2, 6, 5)]


def _edge_id(a: int, b: int) -> int:
    for k, e in enumerate(EDGES):
        if e == (a, b) or e == (b, a):
            return k
    raise KeyError((a, b))


def _case_triangles(case: int) -> list[tuple[int, int, int]]:
    inside = [(case >> c) & 1 for c in range(8)]
    succ = {}
    for cyc in FACES:
        crossings = []
        for k in range(4):
            a, b = cyc[k], cyc[(k + 1) % 4]
            if inside[a] != inside[b]:
                crossings.append((k, _edge_id(a, b), bool(inside[b])))
        for i, (_, edge, entering) in enumerate(crossings):
            if not entering:
                continue
            for j in range(1, len(crossings)):
                _, nxt, nxt_entering = crossings[(i + j) % len(crossings)]
                if not nxt_entering:
                    succ[edge] = nxt
                    break
    tris = []
    while succ:
        first = min(succ)
        loop = [first]
        cur = succ.pop(first)
        while cur != first:
            loop.append(cur)
            cur = succ.pop(cur)
        for k in range(1, len(loop) - 1):
            tris.append((loop[0], loop[k], loop[k + 1]))
    return tris


def _build_table() -> list[np.ndarray]:
    return [np.array(_case_triangles(c), dtype=np.int64).reshape(-1, 3) for c in range(256)]


CASE_TABLE = _build_table()


def marching_cubes(grid: OccupancyGrid, iso: float = 0.5) -> TriMesh:
    """Extract the ``iso`` level set; values above ``iso`` count as inside.

    Output triangles face away from the inside region.
    """
    v = grid.values.astype(np.float64)
    nx, ny, nz = v.shape
    inside = v > iso
    case = np.zeros((nx - 1, ny - 1, nz - 1), dtype=np.int64)
    for c, (dx, dy, dz) in enumerate(CORNERS):
        case |= inside[dx:nx - 1 + dx, dy:ny - 1 + dy, dz:nz - 1 + dz].astype(np.int64) << c

    edge_start = np.array([CORNERS[a] for a, _ in EDGES])
    edge_axis = np.array([int(np.argmax(CORNERS[b] - CORNERS[a])) for a, b in EDGES])

    keys = []
    for c in np.unique(case):
        tri = CASE_TABLE[c]
        if len(tri) == 0:
            continue
        cubes = np.argwhere(case == c)
        # (n_cubes, n_tri, 3) corner offsets and axis per triangle vertex
        o = cubes[:, None, None, :] + edge_start[tri][None]
        k = ((o[..., 0] * ny + o[..., 1]) * nz + o[..., 2]) * 3 + edge_axis[tri][None]
        keys.append(k.reshape(-1, 3))
    if not keys:
        return TriMesh(np.zeros((0, 3)), np.zeros((0, 3), np.int64))
    keys = np.concatenate(keys)
    uniq, faces = np.unique(keys, return_inverse=True)
    faces = faces.reshape(-1, 3)

    axis = uniq % 3
    lin = uniq // 3
    i0 = np.stack([lin // (ny * nz), (lin // nz) % ny, lin % nz], axis=1)
    i1 = i0 + np.eye(3, dtype=np.int64)[axis]
    v0 = v[i0[:, 0], i0[:, 1], i0[:, 2]]
    v1 = v[i1[:, 0], i1[:, 1], i1[:, 2]]
    t = (iso - v0) / (v1 - v0)
    p0 = grid.origin + grid.spacing * i0
    p1 = grid.origin + grid.spacing * i1
    verts = p0 + t[:, None] * (p1 - p0)
    return TriMesh(verts, faces)
