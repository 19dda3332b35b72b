"""Distance, containment and sampling queries on :class:`TriMesh`."""
from __future__ import annotations

import numpy as np

from . import _kernels
from .mesh import MeshError, TriMesh

DEFAULT_SAMPLES = 10_000


def _as_points(p) -> tuple[np.ndarray, bool]:
    p = np.asarray(p, dtype=np.float64)
    single = p.ndim == 1
    return np.ascontiguousarray(p.reshape(-1, 3)), single


def _require_faces(mesh: TriMesh) -> None:
    if mesh.is_empty():
        raise MeshError("query on an empty mesh")


def closest_points(mesh: TriMesh, points) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Batch closest-point query: (distances, closest points, face indices)."""
    _require_faces(mesh)
    pts, _ = _as_points(points)
    b = mesh.bvh
    return _kernels.bvh_closest(pts, mesh.vertices, mesh.faces, b.lo, b.hi, b.left,
                                b.right, b.start, b.count, b.order)


def unsigned_distance(mesh: TriMesh, p):
    """Distance from ``p`` to the surface and the closest surface point.

    Accepts a single point (returns ``(float, (3,) array)``) or an (n, 3) batch.
    """
    pts, single = _as_points(p)
    d, q, _ = closest_points(mesh, pts)
    if single:
        return float(d[0]), q[0]
    return d, q


def winding_number(mesh: TriMesh, p) -> np.ndarray:
    pts, _ = _as_points(p)
    if mesh.is_empty():
        return np.zeros(len(pts))
    comp = mesh.components
    return _kernels.winding_numbers(pts, mesh.vertices, mesh.faces[comp.perm],
                                    comp.offsets, comp.closed)


def contains(mesh: TriMesh, p):
    """Inside test: generalized winding number above 0.5."""
    pts, single = _as_points(p)
    inside = winding_number(mesh, pts) > 0.5
    return bool(inside[0]) if single else inside


def signed_distance(mesh: TriMesh, p):
    """Unsigned distance, negated for points inside the mesh."""
    pts, single = _as_points(p)
    d, _, _ = closest_points(mesh, pts)
    sd = np.where(contains(mesh, pts), -d, d)
    return float(sd[0]) if single else sd


def sample_surface(mesh: TriMesh, n: int, seed: int = 0) -> np.ndarray:
    """Area-weighted uniform samples on the surface."""
    _require_faces(mesh)
    rng = np.random.default_rng(seed)
    areas = mesh.face_areas()
    total = areas.sum()
    if not total > 0:
        raise MeshError("mesh has zero surface area")
    fid = rng.choice(len(areas), size=n, p=areas / total)
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    t = mesh.triangles()[fid]
    return ((1 - r1)[:, None] * t[:, 0] + (r1 * (1 - r2))[:, None] * t[:, 1]
            + (r1 * r2)[:, None] * t[:, 2])


def point_to_surface(pred: TriMesh, gt: TriMesh, n: int = DEFAULT_SAMPLES, seed: int = 0) -> float:
    """Mean distance from samples of ``pred`` to the surface of ``gt``."""
    pts = sample_surface(pred, n, seed)
    d, _, _ = closest_points(gt, pts)
    return float(d.mean())


def chamfer_distance(a: TriMesh, b: TriMesh, n: int = DEFAULT_SAMPLES, seed: int = 0) -> float:
    """Half the sum of the two directed point-to-surface means.

    Both directions sample with the same ``seed`` so that swapping the
    arguments gives the same value.
    """
    return 0.5 * (point_to_surface(a, b, n, seed) + point_to_surface(b, a, n, seed))
