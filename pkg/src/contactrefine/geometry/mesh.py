"""Indexed triangle meshes, their acceleration structures, and mesh file I/O."""
from __future__ import annotations

import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Optional

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

LEAF_SIZE = 4


class MeshError(ValueError):
    pass


class BVH(NamedTuple):
    lo: np.ndarray
    hi: np.ndarray
    left: np.ndarray
    right: np.ndarray
    start: np.ndarray
    count: np.ndarray
    order: np.ndarray


class Components(NamedTuple):
    """Faces regrouped by connected component (``faces[perm]``)."""
    perm: np.ndarray
    offsets: np.ndarray
    closed: np.ndarray


def _freeze(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(eq=False)
class TriMesh:
    vertices: np.ndarray
    faces: np.ndarray
    region_of_face: Optional[np.ndarray] = None
    _bvh: Optional[BVH] = field(default=None, init=False, repr=False)
    _components: Optional[Components] = field(default=None, init=False, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, init=False, repr=False)

    def __post_init__(self):
        self.vertices = _freeze(np.array(self.vertices, dtype=np.float64).reshape(-1, 3))
        self.faces = _freeze(np.array(self.faces, dtype=np.int64).reshape(-1, 3))
        if self.region_of_face is not None:
            self.region_of_face = _freeze(np.array(self.region_of_face, dtype=np.int64))
            if self.region_of_face.shape != (len(self.faces),):
                raise MeshError("region_of_face must have one entry per face")
        if len(self.faces) and (self.faces.min() < 0 or self.faces.max() >= len(self.vertices)):
            raise MeshError("face index out of range")

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def is_empty(self) -> bool:
        return len(self.faces) == 0

    def triangles(self) -> np.ndarray:
        return self.vertices[self.faces]

    def face_centers(self) -> np.ndarray:
        return self.vertices[self.faces].sum(axis=1) / 3.0

    def face_areas(self) -> np.ndarray:
        t = self.triangles()
        return 0.5 * np.linalg.norm(np.cross(t[:, 1] - t[:, 0], t[:, 2] - t[:, 0]), axis=1)

    def surface_area(self) -> float:
        return float(self.face_areas().sum())

    def volume(self) -> float:
        """Signed enclosed volume; positive for outward-oriented closed meshes."""
        t = self.triangles()
        return float(np.einsum("ij,ij->i", t[:, 0], np.cross(t[:, 1], t[:, 2])).sum() / 6.0)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        used = self.vertices[np.unique(self.faces)]
        return used.min(axis=0), used.max(axis=0)

    def validate(self, area_eps: float = 0.0) -> "TriMesh":
        if self.is_empty():
            raise MeshError("mesh has no faces")
        areas = self.face_areas()
        bad = np.flatnonzero(areas <= area_eps)
        if len(bad):
            raise MeshError(f"degenerate triangle(s), first at face {bad[0]}")
        return self

    def transformed(self, rotation=None, translation=None) -> "TriMesh":
        v = self.vertices
        if rotation is not None:
            v = v @ np.asarray(rotation).T
        if translation is not None:
            v = v + np.asarray(translation)
        return TriMesh(v, self.faces, self.region_of_face)

    def boundary_edge_count(self) -> int:
        """Number of undirected edges not shared by exactly two faces."""
        if self.is_empty():
            return 0
        e = np.sort(self.faces[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
        _, counts = np.unique(e, axis=0, return_counts=True)
        return int((counts != 2).sum())

    def euler_characteristic(self) -> int:
        e = np.sort(self.faces[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
        n_edges = len(np.unique(e, axis=0))
        n_verts = len(np.unique(self.faces))
        return n_verts - n_edges + self.n_faces

    @property
    def bvh(self) -> BVH:
        if self._bvh is None:
            with self._lock:
                if self._bvh is None:
                    self._bvh = _build_bvh(self.triangles())
        return self._bvh

    @property
    def components(self) -> Components:
        if self._components is None:
            with self._lock:
                if self._components is None:
                    self._components = topology_components(self.faces, self.n_vertices)
        return self._components


def topology_components(faces: np.ndarray, n_vertices: int) -> Components:
    """Group faces by vertex-connected component and flag closed components.

    A component is closed when each of its directed edges appears once and its
    reverse appears once, i.e. it is watertight and consistently oriented.
    """
    faces = np.asarray(faces, dtype=np.int64)
    if len(faces) == 0:
        return Components(np.zeros(0, np.int64), np.zeros(1, np.int64), np.zeros(0, bool))
    e = faces[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2)
    graph = coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n_vertices, n_vertices))
    _, labels = connected_components(graph, directed=False)
    face_comp = labels[faces[:, 0]]
    # relabel densely in order of first appearance
    uniq, first = np.unique(face_comp, return_index=True)
    rank = np.empty(len(uniq), np.int64)
    rank[np.argsort(first)] = np.arange(len(uniq))
    face_comp = rank[np.searchsorted(uniq, face_comp)]
    perm = np.argsort(face_comp, kind="stable")
    offsets = np.searchsorted(face_comp[perm], np.arange(len(uniq) + 1))

    closed = np.ones(len(uniq), bool)
    edge_comp = np.repeat(face_comp, 3)
    key = e[:, 0] * n_vertices + e[:, 1]
    rkey = e[:, 1] * n_vertices + e[:, 0]
    ukey, kcount = np.unique(key, return_counts=True)
    dup = ukey[kcount > 1]
    closed[np.unique(edge_comp[np.isin(key, dup)])] = False
    has_twin = np.isin(rkey, ukey)
    closed[np.unique(edge_comp[~has_twin])] = False
    return Components(perm, offsets.astype(np.int64), closed)


def _build_bvh(tris: np.ndarray) -> BVH:
    n = len(tris)
    if n == 0:
        raise MeshError("cannot index an empty mesh")
    tlo = tris.min(axis=1)
    thi = tris.max(axis=1)
    cent = tris.mean(axis=1)
    order = np.arange(n)
    cap = 2 * n
    lo = np.empty((cap, 3))
    hi = np.empty((cap, 3))
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    start = np.zeros(cap, np.int64)
    count = np.zeros(cap, np.int64)
    n_nodes = 1
    work = [(0, 0, n)]
    while work:
        node, s, e = work.pop()
        idx = order[s:e]
        lo[node] = tlo[idx].min(axis=0)
        hi[node] = thi[idx].max(axis=0)
        if e - s <= LEAF_SIZE:
            start[node] = s
            count[node] = e - s
            continue
        c = cent[idx]
        axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
        mid = (e - s) // 2
        part = np.argpartition(c[:, axis], mid)
        order[s:e] = idx[part]
        left[node], right[node] = n_nodes, n_nodes + 1
        n_nodes += 2
        work.append((left[node], s, s + mid))
        work.append((right[node], s + mid, e))
    return BVH(lo[:n_nodes].copy(), hi[:n_nodes].copy(), left[:n_nodes].copy(),
               right[:n_nodes].copy(), start[:n_nodes].copy(), count[:n_nodes].copy(), order)


# --- file I/O -----------------------------------------------------------------

def save_obj(mesh: TriMesh, path) -> None:
    lines = [f"v {x!r} {y!r} {z!r}" for x, y, z in mesh.vertices.tolist()]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.faces.tolist()]
    Path(path).write_text("\n".join(lines) + "\n")


def load_obj(path) -> TriMesh:
    verts, faces = [], []
    for line in Path(path).read_text().splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "v":
            verts.append([float(x) for x in parts[1:4]])
        elif parts[0] == "f":
            idx = [int(tok.split("/")[0]) for tok in parts[1:]]
            idx = [i - 1 if i > 0 else len(verts) + i for i in idx]
            for k in range(1, len(idx) - 1):
                faces.append([idx[0], idx[k], idx[k + 1]])
    return TriMesh(np.array(verts, dtype=np.float64).reshape(-1, 3),
                   np.array(faces, dtype=np.int64).reshape(-1, 3))


def save_ply(mesh: TriMesh, path) -> None:
    """Binary little-endian PLY with double-precision vertices."""
    has_region = mesh.region_of_face is not None
    header = [
        "ply", "format binary_little_endian 1.0",
        f"element vertex {mesh.n_vertices}",
        "property double x", "property double y", "property double z",
        f"element face {mesh.n_faces}",
        "property list uchar int vertex_indices",
    ]
    if has_region:
        header.append("property int region")
    header.append("end_header")
    face_dtype = [("n", "u1"), ("idx", "<i4", (3,))]
    if has_region:
        face_dtype.append(("region", "<i4"))
    frec = np.empty(mesh.n_faces, dtype=face_dtype)
    frec["n"] = 3
    frec["idx"] = mesh.faces
    if has_region:
        frec["region"] = mesh.region_of_face
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        fh.write(mesh.vertices.astype("<f8").tobytes())
        fh.write(frec.tobytes())


_PLY_TYPES = {"char": "i1", "uchar": "u1", "short": "<i2", "ushort": "<u2", "int": "<i4",
              "uint": "<u4", "float": "<f4", "double": "<f8", "int8": "i1", "uint8": "u1",
              "int32": "<i4", "uint32": "<u4", "float32": "<f4", "float64": "<f8"}


def load_ply(path) -> TriMesh:
    """Read binary little-endian PLY files with triangle faces."""
    data = Path(path).read_bytes()
    end = data.index(b"end_header\n") + len(b"end_header\n")
    header = data[:end].decode("ascii").splitlines()
    if "format binary_little_endian 1.0" not in header:
        raise MeshError("only binary_little_endian PLY is supported")
    elements = []
    for line in header:
        tok = line.split()
        if tok[0] == "element":
            elements.append((tok[1], int(tok[2]), []))
        elif tok[0] == "property":
            elements[-1][2].append(tok[1:])
    offset = end
    verts = faces = region = None
    for name, count, props in elements:
        dtype = []
        for p in props:
            if p[0] == "list":
                if _PLY_TYPES[p[1]] != "u1":
                    raise MeshError("list counts must be uchar")
                dtype += [("n", "u1"), (p[3], _PLY_TYPES[p[2]], (3,))]
            else:
                dtype.append((p[1], _PLY_TYPES[p[0]]))
        rec = np.frombuffer(data, dtype=dtype, count=count, offset=offset)
        offset += rec.nbytes
        if name == "vertex":
            verts = np.stack([rec["x"], rec["y"], rec["z"]], axis=1).astype(np.float64)
        elif name == "face":
            if count and np.any(rec["n"] != 3):
                raise MeshError("only triangle faces are supported")
            key = [p for p in rec.dtype.names if p not in ("n", "region")][0]
            faces = rec[key].astype(np.int64)
            if "region" in rec.dtype.names:
                region = rec["region"].astype(np.int64)
    return TriMesh(verts, faces if faces is not None else np.zeros((0, 3), np.int64), region)


def load_mesh(path) -> TriMesh:
    path = Path(path)
    if path.suffix.lower() == ".ply":
        return load_ply(path)
    return load_obj(path)


def save_mesh(mesh: TriMesh, path) -> None:
    path = Path(path)
    if path.suffix.lower() == ".ply":
        save_ply(mesh, path)
    else:
        save_obj(mesh, path)
