"""Articulated body model: file format, procedural humanoid and skinning.

Joint layout follows the 24-joint SMPL kinematic tree::

    0 pelvis      6 spine2     12 neck       18 l_elbow
    1 l_hip       7 l_ankle    13 l_collar   19 r_elbow
    2 r_hip       8 r_ankle    14 r_collar   20 l_wrist
    3 spine1      9 spine3     15 head       21 r_wrist
    4 l_knee     10 l_foot     16 l_shoulder 22 l_hand
    5 r_knee     11 r_foot     17 r_shoulder 23 r_hand

Model space is y-up, x to the body's left, z forward, in meters.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import sparse

from .geometry import TriMesh

N_JOINTS = 24
N_REGIONS = 75
N_BETAS = 10
BETA_LIMIT = 10.0

SMPL_PARENTS = np.array([-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17,
                         18, 19, 20, 21])
JOINT_NAMES = ["pelvis", "l_hip", "r_hip", "spine1", "l_knee", "r_knee", "spine2", "l_ankle",
               "r_ankle", "spine3", "l_foot", "r_foot", "neck", "l_collar", "r_collar", "head",
               "l_shoulder", "r_shoulder", "l_elbow", "r_elbow", "l_wrist", "r_wrist",
               "l_hand", "r_hand"]


class ModelError(ValueError):
    pass


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class BodyModel:
    template_vertices: np.ndarray
    faces: np.ndarray
    parents: np.ndarray
    rest_joints: np.ndarray
    skinning_weights: np.ndarray
    shape_basis: np.ndarray
    joint_regressor: sparse.csr_matrix
    region_of_face: np.ndarray
    _dense_regressor: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        set_ = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        set_("template_vertices", _readonly(np.array(self.template_vertices, np.float64)))
        set_("faces", _readonly(np.array(self.faces, np.int64)))
        set_("parents", _readonly(np.array(self.parents, np.int64)))
        set_("rest_joints", _readonly(np.array(self.rest_joints, np.float64)))
        set_("skinning_weights", _readonly(np.array(self.skinning_weights, np.float64)))
        set_("shape_basis", _readonly(np.array(self.shape_basis, np.float64)))
        set_("region_of_face", _readonly(np.array(self.region_of_face, np.int64)))
        set_("joint_regressor", sparse.csr_matrix(self.joint_regressor, dtype=np.float64))
        set_("_dense_regressor", _readonly(self.joint_regressor.toarray()))
        validate_model(self)

    @property
    def n_vertices(self) -> int:
        return len(self.template_vertices)

    @property
    def n_joints(self) -> int:
        return len(self.parents)

    @property
    def n_betas(self) -> int:
        return self.shape_basis.shape[2]

    def region_faces(self, region: int) -> np.ndarray:
        return np.flatnonzero(self.region_of_face == region)

    def template_mesh(self) -> TriMesh:
        return TriMesh(self.template_vertices, self.faces, self.region_of_face)


@dataclass(frozen=True, eq=False)
class PoseState:
    theta: np.ndarray
    beta: np.ndarray
    t3d: np.ndarray

    def __post_init__(self):
        theta = np.array(self.theta, np.float64).reshape(-1, 3)
        beta = np.array(self.beta, np.float64).ravel()
        t3d = np.array(self.t3d, np.float64).reshape(3)
        if not (np.all(np.isfinite(theta)) and np.all(np.isfinite(beta))
                and np.all(np.isfinite(t3d))):
            raise ModelError("pose parameters must be finite")
        if np.any(np.abs(beta) > BETA_LIMIT):
            raise ModelError(f"|beta| exceeds {BETA_LIMIT}")
        for name, a in (("theta", theta), ("beta", beta), ("t3d", t3d)):
            object.__setattr__(self, name, _readonly(a))

    @classmethod
    def zero(cls, n_joints: int = N_JOINTS, n_betas: int = N_BETAS) -> "PoseState":
        return cls(np.zeros((n_joints, 3)), np.zeros(n_betas), np.zeros(3))

    def replace(self, **kw) -> "PoseState":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        return {"theta": self.theta.tolist(), "beta": self.beta.tolist(), "t3d": self.t3d.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "PoseState":
        return cls(d["theta"], d["beta"], d["t3d"])


def validate_model(m: BodyModel) -> None:
    nv = len(m.template_vertices)
    nj = len(m.parents)
    if m.template_vertices.shape != (nv, 3):
        raise ModelError("vertices: expected (n, 3)")
    if m.faces.ndim != 2 or m.faces.shape[1] != 3:
        raise ModelError("faces: expected (m, 3)")
    if m.faces.size and (m.faces.min() < 0 or m.faces.max() >= nv):
        raise ModelError("faces: vertex index out of range")
    if nj != N_JOINTS:
        raise ModelError(f"parents: expected {N_JOINTS} joints, got {nj}")
    _check_tree(m.parents)
    if m.rest_joints.shape != (nj, 3):
        raise ModelError("rest_joints: expected (24, 3)")
    w = m.skinning_weights
    if w.shape != (nv, nj):
        raise ModelError(f"weights: expected shape ({nv}, {nj}), got {w.shape}")
    if np.any(w < 0):
        row = int(np.argwhere(w < 0)[0, 0])
        raise ModelError(f"weights: negative entry in row {row}")
    bad = np.flatnonzero(np.abs(w.sum(axis=1) - 1.0) > 1e-9)
    if len(bad):
        raise ModelError(f"weights: row {bad[0]} sums to {w[bad[0]].sum():.12g}, expected 1")
    if m.shape_basis.ndim != 3 or m.shape_basis.shape[:2] != (nv, 3):
        raise ModelError("shape_basis: expected (n_vertices, 3, n_betas)")
    if m.joint_regressor.shape != (nj, nv):
        raise ModelError("joint_regressor: expected (24, n_vertices)")
    err = np.abs(m.joint_regressor @ m.template_vertices - m.rest_joints).max()
    if err > 1e-9:
        raise ModelError(f"rest_joints: disagree with joint_regressor by {err:.3g}")
    r = m.region_of_face
    if r.shape != (len(m.faces),):
        raise ModelError("region_of_face: expected one entry per face")
    if r.size and (r.min() < 0 or r.max() >= N_REGIONS):
        raise ModelError(f"region_of_face: ids must lie in [0, {N_REGIONS})")
    missing = np.setdiff1d(np.arange(N_REGIONS), r)
    if len(missing):
        raise ModelError(f"region_of_face: region {missing[0]} has no faces")


def _check_tree(parents: np.ndarray) -> None:
    if parents[0] != -1 or np.count_nonzero(parents == -1) != 1:
        raise ModelError("parents: joint 0 must be the single root")
    n = len(parents)
    if np.any((parents < -1) | (parents >= n)):
        raise ModelError("parents: index out of range")
    for j in range(n):
        seen, k = 0, j
        while k != 0:
            k = parents[k]
            seen += 1
            if seen > n:
                raise ModelError(f"parents: cycle through joint {j}")


# --- kinematics -------------------------------------------------------------------

def rodrigues(rotvecs) -> np.ndarray:
    """Axis-angle vectors (..., 3) to rotation matrices (..., 3, 3)."""
    r = np.asarray(rotvecs, dtype=np.float64)
    angle = np.linalg.norm(r, axis=-1)[..., None, None]
    k = np.zeros(r.shape[:-1] + (3, 3))
    k[..., 0, 1], k[..., 0, 2] = -r[..., 2], r[..., 1]
    k[..., 1, 0], k[..., 1, 2] = r[..., 2], -r[..., 0]
    k[..., 2, 0], k[..., 2, 1] = -r[..., 1], r[..., 0]
    small = angle < 1e-8
    safe = np.where(small, 1.0, angle)
    # sin(a)/a and (1-cos a)/a^2 with their Taylor limits near zero
    s = np.where(small, 1.0 - angle ** 2 / 6.0, np.sin(safe) / safe)
    c = np.where(small, 0.5 - angle ** 2 / 24.0, (1.0 - np.cos(safe)) / safe ** 2)
    return np.eye(3) + s * k + c * (k @ k)


def shaped_vertices(model: BodyModel, beta) -> np.ndarray:
    beta = np.asarray(beta, dtype=np.float64)
    if beta.shape != (model.n_betas,):
        raise ModelError(f"beta: expected {model.n_betas} values, got {beta.shape}")
    if not beta.any():
        return model.template_vertices
    return model.template_vertices + model.shape_basis @ beta


def bone_transforms(model: BodyModel, theta, joints_rest) -> np.ndarray:
    """World transforms relative to the rest pose, (24, 3, 4)."""
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (model.n_joints, 3):
        raise ModelError(f"theta: expected ({model.n_joints}, 3), got {theta.shape}")
    rot = rodrigues(theta)
    parents = model.parents
    wr = np.empty((model.n_joints, 3, 3))
    wt = np.empty((model.n_joints, 3))
    wr[0] = rot[0]
    wt[0] = joints_rest[0]
    for j in range(1, model.n_joints):
        p = parents[j]
        wr[j] = wr[p] @ rot[j]
        wt[j] = wr[p] @ (joints_rest[j] - joints_rest[p]) + wt[p]
    out = np.empty((model.n_joints, 3, 4))
    out[:, :, :3] = wr
    out[:, :, 3] = wt - np.einsum("jab,jb->ja", wr, joints_rest)
    return out


def skin_vertices(model: BodyModel, pose: PoseState) -> np.ndarray:
    v = shaped_vertices(model, pose.beta)
    j_rest = model._dense_regressor @ v
    g = bone_transforms(model, pose.theta, j_rest)
    blend = (model.skinning_weights @ g.reshape(model.n_joints, 12)).reshape(-1, 3, 4)
    out = np.einsum("vab,vb->va", blend[:, :, :3], v) + blend[:, :, 3]
    return out + pose.t3d


def skin(model: BodyModel, pose: PoseState) -> TriMesh:
    """Posed mesh by linear blend skinning, followed by the scene translation."""
    return TriMesh(skin_vertices(model, pose), model.faces, model.region_of_face)


def joints(model: BodyModel, pose: PoseState) -> np.ndarray:
    return model.joint_regressor @ skin_vertices(model, pose)


def region_face_centers(mesh: TriMesh, region: int) -> np.ndarray:
    if mesh.region_of_face is None:
        raise ModelError("mesh carries no region labels")
    if not 0 <= region < N_REGIONS:
        raise ModelError(f"region {region} outside [0, {N_REGIONS})")
    idx = np.flatnonzero(mesh.region_of_face == region)
    if len(idx) == 0:
        raise ModelError(f"region {region} is empty")
    return mesh.vertices[mesh.faces[idx]].sum(axis=1) / 3.0


# --- file format -------------------------------------------------------------------

def _triplets(m) -> list:
    coo = sparse.coo_matrix(m)
    order = np.lexsort((coo.col, coo.row))
    return [[int(r), int(c), float(v)] for r, c, v in
            zip(coo.row[order], coo.col[order], coo.data[order])]


def model_to_dict(model: BodyModel) -> dict:
    return {
        "vertices": model.template_vertices.tolist(),
        "faces": model.faces.tolist(),
        "parents": model.parents.tolist(),
        "rest_joints": model.rest_joints.tolist(),
        "weights": _triplets(model.skinning_weights),
        "shape_basis": model.shape_basis.tolist(),
        "joint_regressor": _triplets(model.joint_regressor),
        "region_of_face": model.region_of_face.tolist(),
    }


def dumps_model(model: BodyModel) -> str:
    return json.dumps(model_to_dict(model), sort_keys=True, separators=(",", ":"))


def save_model(model: BodyModel, path) -> None:
    Path(path).write_text(dumps_model(model))


def _from_triplets(trip, shape, name) -> sparse.csr_matrix:
    t = np.asarray(trip, dtype=np.float64).reshape(-1, 3)
    rows, cols = t[:, 0].astype(np.int64), t[:, 1].astype(np.int64)
    if len(t) and (rows.min() < 0 or rows.max() >= shape[0] or cols.min() < 0
                   or cols.max() >= shape[1]):
        raise ModelError(f"{name}: triplet index out of range for shape {shape}")
    return sparse.csr_matrix((t[:, 2], (rows, cols)), shape=shape)


def model_from_dict(d: dict) -> BodyModel:
    required = ["vertices", "faces", "parents", "rest_joints", "weights", "shape_basis",
                "joint_regressor", "region_of_face"]
    for key in required:
        if key not in d:
            raise ModelError(f"model file lacks field '{key}'")
    try:
        verts = np.asarray(d["vertices"], dtype=np.float64).reshape(-1, 3)
        faces = np.asarray(d["faces"], dtype=np.int64).reshape(-1, 3)
        shape_basis = np.asarray(d["shape_basis"], dtype=np.float64)
    except ValueError as exc:
        raise ModelError(f"malformed array: {exc}") from exc
    nv, nj = len(verts), len(d["parents"])
    if shape_basis.ndim != 3:
        raise ModelError("shape_basis: expected a nested (n_vertices, 3, n_betas) array")
    weights = _from_triplets(d["weights"], (nv, nj), "weights").toarray()
    regressor = _from_triplets(d["joint_regressor"], (nj, nv), "joint_regressor")
    return BodyModel(verts, faces, d["parents"], d["rest_joints"], weights, shape_basis,
                     regressor, d["region_of_face"])


def load_model(path) -> BodyModel:
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ModelError(f"{path}: not valid JSON ({exc})") from exc
    return model_from_dict(d)


# --- procedural humanoid --------------------------------------------------------------

# rest joint positions before scaling to the target height
_JOINTS = np.array([
    [0.00, 0.00, 0.00], [0.09, -0.08, 0.00], [-0.09, -0.08, 0.00], [0.00, 0.11, 0.00],
    [0.10, -0.48, 0.00], [-0.10, -0.48, 0.00], [0.00, 0.24, 0.00], [0.10, -0.87, 0.00],
    [-0.10, -0.87, 0.00], [0.00, 0.37, 0.00], [0.10, -0.93, 0.12], [-0.10, -0.93, 0.12],
    [0.00, 0.52, 0.00], [0.07, 0.46, 0.00], [-0.07, 0.46, 0.00], [0.00, 0.60, 0.00],
    [0.18, 0.47, 0.00], [-0.18, 0.47, 0.00], [0.45, 0.47, 0.00], [-0.45, 0.47, 0.00],
    [0.70, 0.47, 0.00], [-0.70, 0.47, 0.00], [0.78, 0.47, 0.00], [-0.78, 0.47, 0.00],
])
# distal end of each joint's limb segment; None means the (single) child joint
_LEAF_ENDS = {0: 3, 9: 12, 10: [0.10, -0.93, 0.22], 11: [-0.10, -0.93, 0.22],
              15: [0.00, 0.68, 0.00], 22: [0.87, 0.47, 0.00], 23: [-0.87, 0.47, 0.00]}
_RADII = np.array([0.11, 0.07, 0.07, 0.12, 0.05, 0.05, 0.13, 0.04, 0.04, 0.12, 0.035, 0.035,
                   0.05, 0.05, 0.05, 0.09, 0.045, 0.045, 0.038, 0.038, 0.035, 0.035, 0.03, 0.03])
# axial bands per segment; sums to 75
BAND_COUNTS = np.array([2, 5, 5, 2, 5, 5, 2, 2, 2, 3, 1, 1, 2, 2, 2, 4, 5, 5, 5, 5, 2, 2, 3, 3])
HEIGHT = 1.7
N_AROUND = 10
_CAP_ANGLES = np.deg2rad([30.0, 60.0])


def _segment_ends() -> np.ndarray:
    ends = np.empty_like(_JOINTS)
    for j in range(N_JOINTS):
        leaf = _LEAF_ENDS.get(j)
        if leaf is None:
            (child,) = np.flatnonzero(SMPL_PARENTS == j)
            ends[j] = _JOINTS[child]
        elif isinstance(leaf, int):
            ends[j] = _JOINTS[leaf]
        else:
            ends[j] = leaf
    return ends


def _capsule(p0, p1, r, n_cyl):
    """Closed capsule; returns vertices, faces, per-vertex axial parameter, face rows.

    Ring 0 of the cylinder part is centred exactly on ``p0``.
    """
    axis = p1 - p0
    length = np.linalg.norm(axis)
    a = axis / length
    helper = np.array([0.0, 0.0, 1.0]) if abs(a[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    u = np.cross(a, helper)
    u /= np.linalg.norm(u)
    w = np.cross(a, u)
    psi = 2 * np.pi * np.arange(N_AROUND) / N_AROUND
    radial = np.cos(psi)[:, None] * u + np.sin(psi)[:, None] * w

    rings = []  # (axial offset, ring radius)
    for phi in _CAP_ANGLES:
        rings.append((-r * np.cos(phi), r * np.sin(phi)))
    for t in np.linspace(0.0, length, n_cyl):
        rings.append((t, r))
    for phi in _CAP_ANGLES[::-1]:
        rings.append((length + r * np.cos(phi), r * np.sin(phi)))
    start_ring = len(_CAP_ANGLES)

    verts = [p0 - r * a]
    axial = [-r]
    for t, rr in rings:
        verts.extend(p0 + t * a + rr * radial)
        axial.extend([t] * N_AROUND)
    verts.append(p1 + r * a)
    axial.append(length + r)
    verts = np.asarray(verts)
    n_r = len(rings)
    top = 1 + n_r * N_AROUND

    faces, rows = [], []
    ring = lambda k, i: 1 + k * N_AROUND + (i % N_AROUND)  # noqa: E731
    for i in range(N_AROUND):
        faces.append([0, ring(0, i + 1), ring(0, i)])
        rows.append(0)
    for k in range(n_r - 1):
        for i in range(N_AROUND):
            a0, b0, c0, d0 = ring(k, i), ring(k, i + 1), ring(k + 1, i + 1), ring(k + 1, i)
            faces += [[a0, b0, c0], [a0, c0, d0]]
            rows += [k + 1, k + 1]
    for i in range(N_AROUND):
        faces.append([ring(n_r - 1, i), ring(n_r - 1, i + 1), top])
        rows.append(n_r)
    start_idx = 1 + start_ring * N_AROUND + np.arange(N_AROUND)
    return verts, np.asarray(faces), np.asarray(axial), np.asarray(rows), start_idx, radial, a


def synth_humanoid(seed: int = 0) -> BodyModel:
    """Capsule-limb humanoid on the 24-joint tree, 1.7 units tall.

    Every joint owns one closed capsule running to its child (or to a fixed
    leaf end). The capsule's proximal cap is blended half-and-half with the
    parent bone; everything else is rigid. Regions are contiguous bands of
    face rows along each capsule, ``BAND_COUNTS[j]`` bands for joint ``j``.
    ``seed`` only drives the per-limb coefficients of the shape basis.
    """
    rng = np.random.default_rng(seed)
    ends = _segment_ends()
    lo = min((np.minimum(_JOINTS[:, 1], ends[:, 1]) - _RADII).min(), 0.0)
    hi = (np.maximum(_JOINTS[:, 1], ends[:, 1]) + _RADII).max()
    scale = HEIGHT / (hi - lo)
    jpos, epos, radii = _JOINTS * scale, ends * scale, _RADII * scale

    verts, faces, weights, regions = [], [], [], []
    basis_girth, basis_limb = [], []
    reg_rows, reg_cols = [], []
    region_base = np.concatenate([[0], np.cumsum(BAND_COUNTS)[:-1]])
    offset = 0
    limb_coef = rng.standard_normal((N_BETAS - 2, N_JOINTS))
    for j in range(N_JOINTS):
        length = np.linalg.norm(epos[j] - jpos[j])
        n_cyl = max(2, 1 + int(round(length / 0.1)))
        v, f, axial, rows, start_idx, radial, _ = _capsule(jpos[j], epos[j], radii[j], n_cyl)
        # radial unit direction per vertex (poles get the axis-free zero vector)
        rad = np.zeros_like(v)
        rad[1:-1] = np.tile(radial, ((len(v) - 2) // N_AROUND, 1))
        w = np.zeros((len(v), N_JOINTS))
        w[:, j] = 1.0
        if SMPL_PARENTS[j] >= 0:
            prox = axial <= 0.0
            w[prox, j] = 0.5
            w[prox, SMPL_PARENTS[j]] = 0.5
        groups = np.array_split(np.arange(rows.max() + 1), BAND_COUNTS[j])
        band_of_row = np.empty(rows.max() + 1, np.int64)
        for b, g in enumerate(groups):
            band_of_row[g] = b
        verts.append(v)
        faces.append(f + offset)
        weights.append(w)
        regions.append(region_base[j] + band_of_row[rows])
        basis_girth.append(rad)
        basis_limb.append(rad[:, :, None] * limb_coef[None, None, :, j])
        reg_rows += [j] * N_AROUND
        reg_cols += list(start_idx + offset)
        offset += len(v)

    verts = np.concatenate(verts)
    nv = len(verts)
    shape_basis = np.zeros((nv, 3, N_BETAS))
    shape_basis[:, :, 0] = 0.05 * (verts - jpos[0])  # stature about the pelvis
    shape_basis[:, :, 1] = 0.01 * np.concatenate(basis_girth)
    shape_basis[:, :, 2:] = 0.004 * np.concatenate(basis_limb)
    regressor = sparse.csr_matrix(
        (np.full(len(reg_rows), 1.0 / N_AROUND), (reg_rows, reg_cols)), shape=(N_JOINTS, nv))
    return BodyModel(verts, np.concatenate(faces), SMPL_PARENTS, regressor @ verts,
                     np.concatenate(weights), shape_basis, regressor, np.concatenate(regions))
