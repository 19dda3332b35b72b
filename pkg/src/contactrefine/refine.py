"""Two-stage contact-driven refinement of a pair of posed bodies.

Stage one moves only the two scene translations to shrink the contact loss.
Stage two descends on pose, shape and translation of both people under the
weighted sum of contact, penetration, pose-prior and regularisation terms.
Gradients are central finite differences; steps use Armijo backtracking.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields, replace
from importlib import resources
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .body_model import BodyModel, PoseState, skin_vertices, shaped_vertices, bone_transforms
from .contact import ContactEvaluator, ContactSignature
from .geometry import TriMesh
from .geometry import _kernels
from .geometry.mesh import topology_components

log = logging.getLogger(__name__)

TRACE_COLUMNS = ["iter", "total", "contact", "penet", "gmm", "reg", "step"]


class OptimizationError(RuntimeError):
    pass


@dataclass
class RefineConfig:
    lambda_c: float = 500.0
    lambda_p: float = 10.0
    lambda_r: float = 100.0
    lambda_g: float = 0.001
    max_iters: int = 200
    fd_step: float = 1e-4
    armijo_c: float = 1e-4
    shrink: float = 0.5
    rel_tol: float = 1e-6
    grad_tol: float = 1e-8
    # norm of the first trial step; later trials start from the last accepted step
    init_step: float = 0.01
    max_backtracks: int = 40

    def __post_init__(self):
        for name in ("lambda_c", "lambda_p", "lambda_r", "lambda_g"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if not (0 < self.shrink < 1):
            raise ValueError("shrink must lie in (0, 1)")

    @classmethod
    def from_dict(cls, d: dict) -> "RefineConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config field(s): {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "RefineConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return asdict(self)


# --- pose prior ---------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GmmPrior:
    """Diagonal Gaussian mixture over the 69 body-pose angles (root excluded)."""
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, np.float64).ravel()
        mu = np.asarray(self.means, np.float64)
        var = np.asarray(self.variances, np.float64)
        if mu.ndim != 2 or mu.shape[0] != len(w) or var.shape != mu.shape:
            raise ValueError("prior: weights (K,), means and variances (K, d) expected")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("prior: weights must form a probability simplex")
        if np.any(var <= 0):
            raise ValueError("prior: variances must be positive")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "variances", var)
        # per-component constant: log w_k - 0.5 * sum(log(2 pi var))
        object.__setattr__(self, "_log_norm",
                           np.log(w) - 0.5 * np.log(2 * np.pi * var).sum(axis=1))

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def to_dict(self) -> dict:
        return {"weights": self.weights.tolist(), "means": self.means.tolist(),
                "variances": self.variances.tolist()}

    @classmethod
    def load(cls, path) -> "GmmPrior":
        d = json.loads(Path(path).read_text())
        return cls(d["weights"], d["means"], d["variances"])

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))


def default_prior() -> GmmPrior:
    with resources.files("contactrefine.data").joinpath("gmm_prior.json").open() as fh:
        d = json.load(fh)
    return GmmPrior(d["weights"], d["means"], d["variances"])


def gmm_nll(theta_body, prior: GmmPrior) -> float:
    x = np.asarray(theta_body, np.float64).ravel()
    if x.shape != (prior.dim,):
        raise ValueError(f"expected {prior.dim} pose values, got {x.size}")
    maha = (((x - prior.means) ** 2) / prior.variances).sum(axis=1)
    a = prior._log_norm - 0.5 * maha
    top = a.max()
    return float(-(top + np.log(np.exp(a - top).sum())))


def reg_loss(pose: PoseState, init: PoseState) -> float:
    return float(((pose.theta - init.theta) ** 2).sum() + ((pose.beta - init.beta) ** 2).sum())


# --- penetration --------------------------------------------------------------------

class _Surface:
    """Face grouping of a fixed topology, reused while its vertices move."""

    def __init__(self, faces: np.ndarray, n_vertices: int):
        comp = topology_components(faces, n_vertices)
        self.faces = np.ascontiguousarray(faces[comp.perm])
        self.offsets = comp.offsets
        self.closed = comp.closed

    def depths(self, points: np.ndarray, verts: np.ndarray) -> np.ndarray:
        return _kernels.penetration_depths(np.ascontiguousarray(points),
                                           np.ascontiguousarray(verts), self.faces,
                                           self.offsets, self.closed)


def _penetration(v1, s1: _Surface, v2, s2: _Surface) -> float:
    return float(s2.depths(v1, v2).sum()) + float(s1.depths(v2, v1).sum())


def penetration_loss(mesh1: TriMesh, mesh2: TriMesh) -> float:
    """Total depth of each mesh's vertices found inside the other mesh."""
    if mesh1.is_empty() or mesh2.is_empty():
        raise ValueError("penetration loss needs two non-empty meshes")
    return _penetration(mesh1.vertices, _Surface(mesh1.faces, mesh1.n_vertices),
                        mesh2.vertices, _Surface(mesh2.faces, mesh2.n_vertices))


# --- scene -----------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PersonState:
    model: BodyModel
    pose: PoseState
    init: PoseState

    @classmethod
    def start(cls, model: BodyModel, pose: PoseState) -> "PersonState":
        if pose.theta.shape != (model.n_joints, 3) or pose.beta.shape != (model.n_betas,):
            raise ValueError("pose dimensions do not match the body model")
        return cls(model, pose, pose)


@dataclass(frozen=True, eq=False)
class SceneState:
    persons: tuple
    signatures: dict = field(default_factory=dict)

    @classmethod
    def create(cls, models, poses, signatures=None) -> "SceneState":
        persons = tuple(PersonState.start(m, p) for m, p in zip(models, poses))
        return cls(persons, dict(signatures or {}))

    def signature(self, i: int, j: int) -> Optional[ContactSignature]:
        if (i, j) in self.signatures:
            return self.signatures[(i, j)]
        if (j, i) in self.signatures:
            return self.signatures[(j, i)].transposed()
        return None

    def poses(self) -> list[PoseState]:
        return [p.pose for p in self.persons]

    def with_poses(self, updates: dict) -> "SceneState":
        persons = tuple(replace(p, pose=updates.get(k, p.pose)) for k, p in enumerate(self.persons))
        return SceneState(persons, self.signatures)

    def meshes(self) -> list[TriMesh]:
        return [TriMesh(skin_vertices(p.model, p.pose), p.model.faces, p.model.region_of_face)
                for p in self.persons]

    def pairs(self) -> list[tuple[int, int]]:
        return sorted({tuple(sorted(k)) for k in self.signatures})


class PairObjective:
    """Loss over the flat parameter vector of two people.

    ``stage="translation"`` exposes the two translations only and evaluates
    the raw contact loss. ``stage="full"`` exposes (theta, beta, t3d) of both
    people and evaluates the weighted total.
    """

    def __init__(self, scene: SceneState, pair, cfg: RefineConfig,
                 prior: Optional[GmmPrior] = None, stage: str = "full"):
        if stage not in ("translation", "full"):
            raise ValueError(f"unknown stage {stage!r}")
        i, j = pair
        if i == j:
            raise ValueError("a pair needs two different people")
        self.pair = (i, j)
        self.stage = stage
        self.cfg = cfg
        self.prior = prior
        self.people = [scene.persons[i], scene.persons[j]]
        sig = scene.signature(i, j)
        if sig is None:
            raise ValueError(f"no contact signature for pair {pair}")
        m1, m2 = self.people[0].model, self.people[1].model
        self.contact = ContactEvaluator(sig, m1.faces, m1.region_of_face, m2.faces,
                                        m2.region_of_face)
        self.surfaces = [_Surface(p.model.faces, p.model.n_vertices) for p in self.people]
        self.sizes = [p.model.n_joints * 3 + p.model.n_betas + 3 for p in self.people]
        if stage == "translation":
            # pose and shape stay fixed: cache the untranslated skin
            self._base = [skin_vertices(p.model, p.pose.replace(t3d=np.zeros(3)))
                          for p in self.people]
        self._cache = [(None, None), (None, None)]
        self._prior_cache = [(None, None), (None, None)]

    # parameter packing
    def pack(self, poses=None) -> np.ndarray:
        poses = poses or [p.pose for p in self.people]
        if self.stage == "translation":
            return np.concatenate([p.t3d for p in poses])
        return np.concatenate([np.concatenate([p.theta.ravel(), p.beta, p.t3d]) for p in poses])

    def _split(self, x) -> list[np.ndarray]:
        if self.stage == "translation":
            return [x[:3], x[3:6]]
        return [x[:self.sizes[0]], x[self.sizes[0]:self.sizes[0] + self.sizes[1]]]

    def _fields(self, k: int, xk: np.ndarray):
        model = self.people[k].model
        nt = model.n_joints * 3
        return xk[:nt].reshape(-1, 3), xk[nt:nt + model.n_betas], xk[nt + model.n_betas:]

    def unpack(self, x) -> list[PoseState]:
        if self.stage == "translation":
            return [p.pose.replace(t3d=xk) for p, xk in zip(self.people, self._split(x))]
        return [PoseState(*self._fields(k, xk)) for k, xk in enumerate(self._split(x))]

    def _vertices(self, k: int, xk: np.ndarray) -> np.ndarray:
        key = xk.tobytes()
        if self._cache[k][0] == key:
            return self._cache[k][1]
        if self.stage == "translation":
            v = self._base[k] + xk
        else:
            model = self.people[k].model
            theta, beta, t3d = self._fields(k, xk)
            shaped = shaped_vertices(model, beta)
            g = bone_transforms(model, theta, model._dense_regressor @ shaped)
            blend = (model.skinning_weights @ g.reshape(model.n_joints, 12)).reshape(-1, 3, 4)
            v = np.einsum("vab,vb->va", blend[:, :, :3], shaped) + blend[:, :, 3] + t3d
        self._cache[k] = (key, v)
        return v

    def _person_terms(self, k: int, xk: np.ndarray) -> tuple[float, float]:
        key = xk.tobytes()
        if self._prior_cache[k][0] == key:
            return self._prior_cache[k][1]
        theta, beta, _ = self._fields(k, xk)
        init = self.people[k].init
        gmm = 0.0
        if self.cfg.lambda_g and self.prior is not None:
            gmm = gmm_nll(theta[1:].ravel(), self.prior)
        reg = float(((theta - init.theta) ** 2).sum() + ((beta - init.beta) ** 2).sum())
        self._prior_cache[k] = (key, (gmm, reg))
        return gmm, reg

    def terms(self, x) -> dict:
        x = np.asarray(x, dtype=np.float64)
        parts = self._split(x)
        v1, v2 = self._vertices(0, parts[0]), self._vertices(1, parts[1])
        out = {"contact": self.contact(v1, v2), "penet": 0.0, "gmm": 0.0, "reg": 0.0}
        if self.stage == "translation":
            out["total"] = out["contact"]
            return out
        cfg = self.cfg
        if cfg.lambda_p:
            out["penet"] = _penetration(v1, self.surfaces[0], v2, self.surfaces[1])
        for k, xk in enumerate(parts):
            gmm, reg = self._person_terms(k, xk)
            out["gmm"] += gmm
            out["reg"] += reg
        out["total"] = weighted_total(cfg, out)
        return out

    def __call__(self, x) -> float:
        return self.terms(x)["total"]


def weighted_total(cfg: RefineConfig, terms: dict) -> float:
    return (cfg.lambda_c * terms["contact"] + cfg.lambda_p * terms["penet"]
            + cfg.lambda_g * terms["gmm"] + cfg.lambda_r * terms["reg"])


def total_loss(scene: SceneState, cfg: RefineConfig, prior: Optional[GmmPrior] = None,
               pair=(0, 1)) -> tuple[float, dict]:
    """Weighted refinement objective of one pair and its per-term breakdown."""
    obj = PairObjective(scene, pair, cfg, prior, stage="full")
    t = obj.terms(obj.pack())
    return t["total"], {k: t[k] for k in ("contact", "penet", "gmm", "reg")}


# --- optimisation ---------------------------------------------------------------------

def fd_gradient(loss: Callable[[np.ndarray], float], x, h: float = 1e-4) -> np.ndarray:
    """Central differences with step ``h * max(1, |x_i|)`` per coordinate."""
    x = np.array(x, dtype=np.float64)
    g = np.empty_like(x)
    for i in range(len(x)):
        step = h * max(1.0, abs(x[i]))
        xi = x[i]
        x[i] = xi + step
        fp = loss(x)
        x[i] = xi - step
        fm = loss(x)
        x[i] = xi
        if not (math.isfinite(fp) and math.isfinite(fm)):
            raise OptimizationError(f"non-finite loss while differentiating coordinate {i}")
        g[i] = (fp - fm) / (2 * step)
    return g


def armijo_descent(objective, x0, cfg: RefineConfig, terms=None):
    """Steepest descent with backtracking; returns (x, trace rows).

    Every accepted step satisfies ``f(x - a g) <= f(x) - c a |g|^2``.
    """
    terms = terms or (lambda x: {"total": objective(x)})
    x = np.array(x0, dtype=np.float64)
    cur = terms(x)
    fx = cur["total"]
    if not math.isfinite(fx):
        raise OptimizationError("initial loss is not finite")
    trace = [_row(0, cur, 0.0)]
    alpha = None
    for it in range(1, cfg.max_iters + 1):
        g = fd_gradient(objective, x, cfg.fd_step)
        gn2 = float(g @ g)
        if math.sqrt(gn2) < cfg.grad_tol:
            break
        if alpha is None:
            alpha = cfg.init_step / math.sqrt(gn2)
        accepted = False
        for _ in range(cfg.max_backtracks):
            xn = x - alpha * g
            nxt = terms(xn)
            fn = nxt["total"]
            if math.isfinite(fn) and fn <= fx - cfg.armijo_c * alpha * gn2:
                accepted = True
                break
            alpha *= cfg.shrink
        if not accepted:
            log.debug("line search stalled at iteration %d", it)
            break
        decrease = fx - fn
        x, fx, cur = xn, fn, nxt
        trace.append(_row(it, cur, alpha))
        alpha /= cfg.shrink
        if decrease <= cfg.rel_tol * max(abs(fx), 1e-12):
            break
    return x, trace


def _row(it, t, step) -> dict:
    return {"iter": it, "total": t["total"], "contact": t.get("contact", 0.0),
            "penet": t.get("penet", 0.0), "gmm": t.get("gmm", 0.0), "reg": t.get("reg", 0.0),
            "step": step}


def _pair_indices(scene: SceneState, pair):
    if pair is None:
        pairs = scene.pairs()
        if not pairs:
            raise ValueError("scene has no contact signatures")
        pair = pairs[0]
    if len(scene.persons) < 2:
        raise ValueError("refinement needs at least two people")
    return tuple(pair)


def refine_translation(scene: SceneState, cfg: RefineConfig, pair=None):
    """Move the pair's translations to reduce the contact loss.

    Returns the scene unchanged (same object) with an empty trace when the
    signature reports no contact.
    """
    pair = _pair_indices(scene, pair)
    sig = scene.signature(*pair)
    if sig is None or not sig.contact_flag:
        return scene, []
    obj = PairObjective(scene, pair, cfg, stage="translation")
    x, trace = armijo_descent(obj, obj.pack(), cfg, obj.terms)
    p1, p2 = obj.unpack(x)
    return scene.with_poses({pair[0]: p1, pair[1]: p2}), trace


def refine_full(scene: SceneState, cfg: RefineConfig, prior: Optional[GmmPrior] = None,
                pair=None):
    """Joint descent on pose, shape and translation of both people."""
    pair = _pair_indices(scene, pair)
    sig = scene.signature(*pair)
    if sig is None or not sig.contact_flag:
        return scene, []
    obj = PairObjective(scene, pair, cfg, prior, stage="full")
    x, trace = armijo_descent(obj, obj.pack(), cfg, obj.terms)
    p1, p2 = obj.unpack(x)
    return scene.with_poses({pair[0]: p1, pair[1]: p2}), trace


def refine_scene(scene: SceneState, cfg: RefineConfig, prior: Optional[GmmPrior] = None):
    """Both stages for every signed pair, pairs in ascending index order.

    Returns the refined scene and ``{(i, j): {"translation": rows, "full": rows}}``.
    """
    traces = {}
    for pair in scene.pairs():
        scene, t1 = refine_translation(scene, cfg, pair)
        scene, t2 = refine_full(scene, cfg, prior, pair)
        traces[pair] = {"translation": t1, "full": t2}
    return scene, traces


def write_trace(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=TRACE_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(float(r[k])) if k != "iter" else r[k]) for k in TRACE_COLUMNS})


def perturb_pose(pose: PoseState, sigma: float, seed: int, perturb_beta: bool = False) -> PoseState:
    """Add i.i.d. Gaussian noise to every pose angle (and optionally shape)."""
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    rng = np.random.default_rng(seed)
    theta = pose.theta + sigma * rng.standard_normal(pose.theta.shape)
    beta = pose.beta
    if perturb_beta:
        beta = beta + 0.1 * sigma * rng.standard_normal(beta.shape)
    return pose.replace(theta=theta, beta=beta)
