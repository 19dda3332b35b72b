"""Contact signatures between two labelled bodies and the losses built on them."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np
from numba import njit
from scipy.spatial import cKDTree

from .body_model import N_REGIONS
from .geometry import TriMesh

DEFAULT_TAU = 0.02
ACTIVE_THRESHOLD = 0.5
MAX_BALANCE = 100.0


class ContactError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ContactSignature:
    """Region-pair contact probabilities; rows index person 1, columns person 2."""
    c: np.ndarray
    seg1: np.ndarray
    seg2: np.ndarray
    contact_flag: bool

    def __post_init__(self):
        c = np.array(self.c, dtype=np.float64)
        seg1 = np.array(self.seg1, dtype=np.float64).ravel()
        seg2 = np.array(self.seg2, dtype=np.float64).ravel()
        if c.shape != (N_REGIONS, N_REGIONS):
            raise ContactError(f"signature must be {N_REGIONS}x{N_REGIONS}, got {c.shape}")
        if seg1.shape != (N_REGIONS,) or seg2.shape != (N_REGIONS,):
            raise ContactError(f"segmentations must have {N_REGIONS} entries")
        for name, a in (("c", c), ("seg1", seg1), ("seg2", seg2)):
            if not np.all((a >= 0) & (a <= 1)):
                raise ContactError(f"{name} entries must lie in [0, 1]")
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        object.__setattr__(self, "contact_flag", bool(self.contact_flag))

    @classmethod
    def from_matrix(cls, c, contact_flag=None) -> "ContactSignature":
        c = np.asarray(c, dtype=np.float64)
        flag = bool(np.any(c > ACTIVE_THRESHOLD)) if contact_flag is None else contact_flag
        return cls(c, c.max(axis=1), c.max(axis=0), flag)

    @classmethod
    def empty(cls) -> "ContactSignature":
        return cls.from_matrix(np.zeros((N_REGIONS, N_REGIONS)), False)

    def active_pairs(self, threshold: float = ACTIVE_THRESHOLD) -> np.ndarray:
        return np.argwhere(self.c > threshold)

    def transposed(self) -> "ContactSignature":
        return ContactSignature(self.c.T, self.seg2, self.seg1, self.contact_flag)

    def to_dict(self) -> dict:
        return {"c": self.c.tolist(), "seg1": self.seg1.tolist(), "seg2": self.seg2.tolist(),
                "contact_flag": self.contact_flag}

    @classmethod
    def from_dict(cls, d: dict) -> "ContactSignature":
        for key in ("c", "seg1", "seg2", "contact_flag"):
            if key not in d:
                raise ContactError(f"signature lacks field '{key}'")
        return cls(d["c"], d["seg1"], d["seg2"], d["contact_flag"])

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), separators=(",", ":")))

    @classmethod
    def load(cls, path) -> "ContactSignature":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _centers(verts: np.ndarray, faces: np.ndarray) -> np.ndarray:
    return verts[faces].sum(axis=1) / 3.0


def _pair_distances(c1: np.ndarray, c2: np.ndarray) -> np.ndarray:
    diff = c1[:, None, :] - c2[None, :, :]
    return np.sqrt((diff * diff).sum(axis=-1))


def _region_distance(c1: np.ndarray, c2: np.ndarray) -> float:
    d = _pair_distances(c1, c2)
    return math.fsum(d.min(axis=1).tolist() + d.min(axis=0).tolist())


def _labels(mesh: TriMesh) -> np.ndarray:
    if mesh.region_of_face is None:
        raise ContactError("mesh carries no region labels")
    return mesh.region_of_face


def region_distance(mesh1: TriMesh, r1: int, mesh2: TriMesh, r2: int) -> float:
    """Sum of nearest face-centre distances from r1 to r2 plus the reverse sum."""
    f1 = np.flatnonzero(_labels(mesh1) == r1)
    f2 = np.flatnonzero(_labels(mesh2) == r2)
    if len(f1) == 0 or len(f2) == 0:
        raise ContactError(f"empty region in pair ({r1}, {r2})")
    return _region_distance(_centers(mesh1.vertices, mesh1.faces[f1]),
                            _centers(mesh2.vertices, mesh2.faces[f2]))


class _Pair(NamedTuple):
    weight: float
    rows1: np.ndarray  # positions into the gathered face-centre array of person 1
    rows2: np.ndarray


@njit(cache=True)
def _nearest_terms(c1, c2, start1, size1, start2, size2, offsets, out):
    """Row minima then column minima of each pair's distance block, packed into ``out``."""
    for p in range(len(start1)):
        o = offsets[p]
        for i in range(size1[p]):
            out[o + i] = np.inf
        for j in range(size2[p]):
            out[o + size1[p] + j] = np.inf
        for i in range(size1[p]):
            a = c1[start1[p] + i]
            for j in range(size2[p]):
                b = c2[start2[p] + j]
                dx = a[0] - b[0]
                dy = a[1] - b[1]
                dz = a[2] - b[2]
                d = np.sqrt(dx * dx + dy * dy + dz * dz)
                if d < out[o + i]:
                    out[o + i] = d
                if d < out[o + size1[p] + j]:
                    out[o + size1[p] + j] = d


class ContactEvaluator:
    """Contact loss for a fixed signature and fixed face labelling.

    Only pairs whose probability exceeds ``threshold`` contribute. Face
    centres are gathered once per call for the union of active regions.
    """

    def __init__(self, sig: ContactSignature, faces1, regions1, faces2, regions2,
                 threshold: float = ACTIVE_THRESHOLD):
        pairs = sig.active_pairs(threshold)
        used1 = np.unique(pairs[:, 0]) if len(pairs) else np.zeros(0, np.int64)
        used2 = np.unique(pairs[:, 1]) if len(pairs) else np.zeros(0, np.int64)
        idx1 = {int(r): np.flatnonzero(regions1 == r) for r in used1}
        idx2 = {int(r): np.flatnonzero(regions2 == r) for r in used2}
        for r, idx in list(idx1.items()) + list(idx2.items()):
            if len(idx) == 0:
                raise ContactError(f"active region {r} has no faces")
        self.faces1 = faces1[np.concatenate(list(idx1.values()))] if idx1 else faces1[:0]
        self.faces2 = faces2[np.concatenate(list(idx2.values()))] if idx2 else faces2[:0]
        start1 = dict(zip(idx1, np.cumsum([0] + [len(v) for v in idx1.values()])))
        start2 = dict(zip(idx2, np.cumsum([0] + [len(v) for v in idx2.values()])))
        self.pairs = [
            _Pair(float(sig.c[r1, r2]),
                  np.arange(start1[r1], start1[r1] + len(idx1[r1])),
                  np.arange(start2[r2], start2[r2] + len(idx2[r2])))
            for r1, r2 in map(tuple, pairs.tolist())
        ]
        self._start1 = np.array([p.rows1[0] for p in self.pairs], np.int64)
        self._size1 = np.array([len(p.rows1) for p in self.pairs], np.int64)
        self._start2 = np.array([p.rows2[0] for p in self.pairs], np.int64)
        self._size2 = np.array([len(p.rows2) for p in self.pairs], np.int64)
        self._offsets = np.concatenate([[0], np.cumsum(self._size1 + self._size2)])

    def region_distances(self, verts1, verts2) -> list[float]:
        if not self.pairs:
            return []
        c1 = _centers(verts1, self.faces1)
        c2 = _centers(verts2, self.faces2)
        out = np.empty(self._offsets[-1])
        _nearest_terms(c1, c2, self._start1, self._size1, self._start2, self._size2,
                       self._offsets, out)
        terms = out.tolist()
        o = self._offsets.tolist()
        return [math.fsum(terms[o[k]:o[k + 1]]) for k in range(len(self.pairs))]

    def __call__(self, verts1, verts2) -> float:
        d = self.region_distances(verts1, verts2)
        return math.fsum(p.weight * di for p, di in zip(self.pairs, d))

    def translation_gradient(self, verts1, verts2) -> tuple[np.ndarray, np.ndarray]:
        """Closest-pair subgradient of the loss w.r.t. each person's translation."""
        c1 = _centers(verts1, self.faces1)
        c2 = _centers(verts2, self.faces2)
        g2 = np.zeros(3)
        for p in self.pairs:
            a, b = c1[p.rows1], c2[p.rows2]
            d = _pair_distances(a, b)
            nn12 = d.argmin(axis=1)
            nn21 = d.argmin(axis=0)
            u = b[nn12] - a
            u /= np.linalg.norm(u, axis=1, keepdims=True)
            v = b - a[nn21]
            v /= np.linalg.norm(v, axis=1, keepdims=True)
            g2 += p.weight * (u.sum(axis=0) + v.sum(axis=0))
        return -g2, g2


def _evaluator(sig: ContactSignature, mesh1: TriMesh, mesh2: TriMesh, threshold: float):
    return ContactEvaluator(sig, mesh1.faces, _labels(mesh1), mesh2.faces, _labels(mesh2),
                            threshold)


def contact_loss(sig: ContactSignature, mesh1: TriMesh, mesh2: TriMesh,
                 threshold: float = ACTIVE_THRESHOLD) -> float:
    """Signature-weighted sum of region distances over the active pairs."""
    return _evaluator(sig, mesh1, mesh2, threshold)(mesh1.vertices, mesh2.vertices)


def contact_translation_gradient(sig: ContactSignature, mesh1: TriMesh, mesh2: TriMesh,
                                 threshold: float = ACTIVE_THRESHOLD):
    return _evaluator(sig, mesh1, mesh2, threshold).translation_gradient(mesh1.vertices,
                                                                         mesh2.vertices)


def gt_signature(mesh1: TriMesh, mesh2: TriMesh, tau: float = DEFAULT_TAU) -> ContactSignature:
    """Binary signature: regions touch when some face-centre pair is closer than tau."""
    l1, l2 = _labels(mesh1), _labels(mesh2)
    t1 = cKDTree(mesh1.face_centers())
    t2 = cKDTree(mesh2.face_centers())
    close = t1.sparse_distance_matrix(t2, tau, output_type="ndarray")
    close = close[close["v"] < tau]
    c = np.zeros((N_REGIONS, N_REGIONS))
    c[l1[close["i"]], l2[close["j"]]] = 1.0
    return ContactSignature.from_matrix(c, bool(c.any()))


class SignatureIoU(NamedTuple):
    signature: float
    segmentation: float


def _iou(a: np.ndarray, b: np.ndarray) -> float:
    union = np.logical_or(a, b).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(a, b).sum() / union)


def signature_iou(pred: ContactSignature, gt: ContactSignature,
                  threshold: float = ACTIVE_THRESHOLD) -> SignatureIoU:
    """IoU of binarised signatures, and of the stacked segmentation vectors."""
    sig = _iou(pred.c > threshold, gt.c > threshold)
    seg = _iou(np.concatenate([pred.seg1, pred.seg2]) > threshold,
               np.concatenate([gt.seg1, gt.seg2]) > threshold)
    return SignatureIoU(sig, seg)


def default_balance(gt) -> float:
    gt = np.asarray(gt)
    pos = np.count_nonzero(gt)
    if pos == 0 or pos == gt.size:
        return 1.0
    return min((gt.size - pos) / pos, MAX_BALANCE)


def bbce(pred, gt, balance: float | None = None) -> float:
    """Balanced BCE; ``balance`` defaults to the negative/positive ratio (capped)."""
    pred = np.asarray(pred, dtype=np.float64).ravel()
    gt = np.asarray(gt, dtype=np.float64).ravel()
    if pred.shape != gt.shape or pred.size == 0:
        raise ContactError("pred and gt must be non-empty and of equal length")
    if np.any((pred <= 0) | (pred >= 1)):
        raise ContactError("predictions must lie strictly inside (0, 1)")
    b = default_balance(gt) if balance is None else balance
    return float(np.mean(-(b * gt * np.log(pred) + (1 - gt) * np.log1p(-pred))))
