"""Scene files and the synthetic two-person presets."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .body_model import (BodyModel, ModelError, PoseState, load_model, rodrigues, save_model,
                         skin, synth_humanoid)
from .camera import PerspectiveCam
from .contact import DEFAULT_TAU, ContactSignature, gt_signature
from .geometry import TriMesh, closest_points, contains, load_mesh, save_mesh
from .refine import SceneState

PRESETS = ("handshake", "hug", "standing")
CONTACT_GAP = 0.004
DEFAULT_CAMERA = PerspectiveCam(1000.0, 500.0, 500.0)
SCENE_DEPTH = 4.0


class SceneError(ValueError):
    pass


@dataclass
class PersonEntry:
    model_path: str
    pose: PoseState


@dataclass
class SceneFile:
    camera: PerspectiveCam
    persons: list
    signature_paths: dict = field(default_factory=dict)
    gt_mesh_paths: Optional[list] = None
    base_dir: Path = Path(".")

    def resolve(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p

    def to_dict(self) -> dict:
        d = {
            "camera": {"f": self.camera.f, "cx": self.camera.cx, "cy": self.camera.cy},
            "persons": [{"model_path": str(e.model_path), **e.pose.to_dict()} for e in self.persons],
            "signatures": [{"pair": list(k), "path": str(v)}
                           for k, v in sorted(self.signature_paths.items())],
        }
        if self.gt_mesh_paths is not None:
            d["gt_mesh_paths"] = [str(p) for p in self.gt_mesh_paths]
        return d

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))


def load_scene_file(path) -> SceneFile:
    path = Path(path)
    if not path.exists():
        raise SceneError(f"scene file not found: {path}")
    try:
        d = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SceneError(f"{path}: invalid JSON ({exc})") from exc
    try:
        cam = d.get("camera", {})
        camera = PerspectiveCam(cam.get("f", DEFAULT_CAMERA.f), cam.get("cx", DEFAULT_CAMERA.cx),
                                cam.get("cy", DEFAULT_CAMERA.cy))
        persons = [PersonEntry(p["model_path"], PoseState(p["theta"], p["beta"], p["t3d"]))
                   for p in d["persons"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise SceneError(f"{path}: malformed scene ({exc})") from exc
    if not persons:
        raise SceneError(f"{path}: scene has no persons")
    sigs = {}
    for s in d.get("signatures", []):
        i, j = s["pair"]
        sigs[(int(i), int(j))] = s["path"]
    sf = SceneFile(camera, persons, sigs, d.get("gt_mesh_paths"), path.parent)
    for p in [e.model_path for e in persons] + list(sigs.values()) + list(sf.gt_mesh_paths or []):
        if not sf.resolve(p).exists():
            raise SceneError(f"referenced file not found: {sf.resolve(p)}")
    return sf


def build_scene(sf: SceneFile) -> SceneState:
    cache: dict = {}
    models = []
    for k, e in enumerate(sf.persons):
        key = str(sf.resolve(e.model_path))
        if key not in cache:
            cache[key] = load_model(key)
        m = cache[key]
        if e.pose.theta.shape != (m.n_joints, 3) or e.pose.beta.shape != (m.n_betas,):
            raise ModelError(f"person {k}: pose dimensions do not match {e.model_path}")
        models.append(m)
    sigs = {k: ContactSignature.load(sf.resolve(v)) for k, v in sf.signature_paths.items()}
    return SceneState.create(models, [e.pose for e in sf.persons], sigs)


def load_gt_meshes(sf: SceneFile) -> Optional[list]:
    if sf.gt_mesh_paths is None:
        return None
    return [load_mesh(sf.resolve(p)) for p in sf.gt_mesh_paths]


# --- presets -----------------------------------------------------------------------

def _rotvec_between(a, b) -> np.ndarray:
    a = np.asarray(a, float) / np.linalg.norm(a)
    b = np.asarray(b, float) / np.linalg.norm(b)
    axis = np.cross(a, b)
    s = np.linalg.norm(axis)
    angle = np.arctan2(s, a @ b)
    if s < 1e-12:
        return np.zeros(3)
    return axis / s * angle


def _local_rotvec(world_rot: np.ndarray, rest_dir, target_dir) -> np.ndarray:
    """Local joint rotation turning ``rest_dir`` to ``target_dir`` under a parent frame."""
    return _rotvec_between(rest_dir, world_rot.T @ np.asarray(target_dir, float))


def _unit(v):
    v = np.asarray(v, float)
    return v / np.linalg.norm(v)


def _arms_down(theta):
    theta[16] = _rotvec_between([1, 0, 0], [0.3, -1, 0])
    theta[17] = _rotvec_between([-1, 0, 0], [-0.3, -1, 0])
    return theta


def _handshake_pose(n_betas) -> PoseState:
    theta = _arms_down(np.zeros((24, 3)))
    arm = _unit([0.15, -0.45, 1.0])
    theta[17] = _rotvec_between([-1, 0, 0], arm)
    # keep the hand pointing straight ahead so the two hands lie side by side
    theta[21] = _local_rotvec(rodrigues(theta[17]), [-1, 0, 0], [0, 0, 1])
    return PoseState(theta, np.zeros(n_betas), np.zeros(3))


def _hug_pose(n_betas) -> PoseState:
    theta = np.zeros((24, 3))
    theta[16] = _rotvec_between([1, 0, 0], _unit([0.25, -0.1, 1.0]))
    theta[17] = _rotvec_between([-1, 0, 0], _unit([-0.25, -0.1, 1.0]))
    theta[18] = _local_rotvec(rodrigues(theta[16]), [1, 0, 0], _unit([-1.0, -0.1, 0.6]))
    theta[19] = _local_rotvec(rodrigues(theta[17]), [-1, 0, 0], _unit([1.0, -0.1, 0.6]))
    return PoseState(theta, np.zeros(n_betas), np.zeros(3))


def _facing(pose: PoseState, t3d) -> PoseState:
    theta = pose.theta.copy()
    theta[0] = [0.0, np.pi, 0.0]
    return pose.replace(theta=theta, t3d=np.asarray(t3d, float))


def surface_gap(m1: TriMesh, m2: TriMesh) -> float:
    """Smallest vertex-to-surface distance between the meshes, negative on overlap."""
    if contains(m2, m1.vertices).any() or contains(m1, m2.vertices).any():
        return -1.0
    d1 = closest_points(m2, m1.vertices)[0].min()
    d2 = closest_points(m1, m2.vertices)[0].min()
    return float(min(d1, d2))


def _bisect_gap(model, p1: PoseState, make_p2, lo, hi, target=CONTACT_GAP, iters=40):
    """Find s in [lo, hi] with gap(s) ~ target; ``make_p2(s)`` moves person 2 apart as s grows."""
    m1 = skin(model, p1)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        g = surface_gap(m1, skin(model, make_p2(mid)))
        if g < target:
            lo = mid
        else:
            hi = mid
    return make_p2(hi)


def make_preset(name: str, model: Optional[BodyModel] = None, tau: float = DEFAULT_TAU):
    """Ground-truth two-person scene: (model, [pose1, pose2], oracle signature)."""
    if name not in PRESETS:
        raise SceneError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    model = model or synth_humanoid(0)
    nb = model.n_betas
    t1 = np.array([0.0, 0.0, SCENE_DEPTH])
    if name == "standing":
        base = PoseState(_arms_down(np.zeros((24, 3))), np.zeros(nb), t1)
        p1, p2 = base, _facing(base, t1 + [0.0, 0.0, 2.0])
    elif name == "handshake":
        base = _handshake_pose(nb)
        hand = skin(model, base).face_centers()[np.isin(model.region_of_face,
                                                         _bands(23))].mean(axis=0)
        p1 = base.replace(t3d=t1)
        # person 2 mirrors person 1 with the hand centres offset sideways by s
        make = lambda s: _facing(base, t1 + [2 * hand[0] + s, 0.0, 2 * hand[2]])  # noqa: E731
        p2 = _bisect_gap(model, p1, make, 0.0, 0.2)
    else:
        base = _hug_pose(nb)
        p1 = base.replace(t3d=t1)
        make = lambda s: _facing(base, t1 + [0.0, 0.0, s])  # noqa: E731
        p2 = _bisect_gap(model, p1, make, 0.0, 1.0)
    sig = gt_signature(skin(model, p1), skin(model, p2), tau)
    return model, [p1, p2], sig


def _bands(joint: int) -> np.ndarray:
    from .body_model import BAND_COUNTS
    start = int(np.sum(BAND_COUNTS[:joint]))
    return np.arange(start, start + BAND_COUNTS[joint])


def hand_regions(side: str = "right") -> np.ndarray:
    """Region ids of the wrist and hand segments of one side."""
    wrist, hand = (21, 23) if side == "right" else (20, 22)
    return np.concatenate([_bands(wrist), _bands(hand)])


def write_preset(name: str, out_dir, tau: float = DEFAULT_TAU, seed: int = 0) -> Path:
    """Write model, scene, signature and ground-truth meshes; returns the scene path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model, poses, sig = make_preset(name, synth_humanoid(seed), tau)
    save_model(model, out / "humanoid.json")
    sig.save(out / "signature_0_1.json")
    gt_paths = []
    for k, p in enumerate(poses):
        save_mesh(skin(model, p), out / f"gt_{k}.obj")
        gt_paths.append(f"gt_{k}.obj")
    sf = SceneFile(DEFAULT_CAMERA, [PersonEntry("humanoid.json", p) for p in poses],
                   {(0, 1): "signature_0_1.json"}, gt_paths, out)
    sf.save(out / "scene.json")
    return out / "scene.json"
