"""Weak-perspective fitting and scene translation recovery."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class CameraError(ValueError):
    pass


@dataclass(frozen=True)
class WeakPerspective:
    s: float
    tx: float
    ty: float

    def __post_init__(self):
        if not self.s > 0:
            raise CameraError(f"weak-perspective scale must be positive, got {self.s}")

    def apply(self, xy) -> np.ndarray:
        return self.s * np.asarray(xy, float) + np.array([self.tx, self.ty])


@dataclass(frozen=True)
class PerspectiveCam:
    f: float
    cx: float
    cy: float

    def __post_init__(self):
        if not self.f > 0:
            raise CameraError(f"focal length must be positive, got {self.f}")


def solve_weak_perspective(j2d_model, j2d_obs, rcond: float = 1e-12) -> WeakPerspective:
    """Least-squares (s, tx, ty) with ``s * j2d_model + t ~= j2d_obs``.

    Each joint contributes two rows ``[x, 1, 0]`` and ``[y, 0, 1]`` to a
    2n x 3 system, solved through its SVD.
    """
    a = np.asarray(j2d_model, dtype=np.float64).reshape(-1, 2)
    b = np.asarray(j2d_obs, dtype=np.float64).reshape(-1, 2)
    if a.shape != b.shape:
        raise CameraError("model and observed joint counts differ")
    if len(a) < 2:
        raise CameraError("need at least two joints")
    n = len(a)
    m = np.zeros((2 * n, 3))
    m[0::2, 0] = a[:, 0]
    m[0::2, 1] = 1.0
    m[1::2, 0] = a[:, 1]
    m[1::2, 2] = 1.0
    rhs = b.reshape(-1)
    u, sv, vt = np.linalg.svd(m, full_matrices=False)
    if sv[-1] <= rcond * sv[0]:
        raise CameraError("rank-deficient system: model joints are coincident")
    s, tx, ty = vt.T @ ((u.T @ rhs) / sv)
    return WeakPerspective(float(s), float(tx), float(ty))


def weak_perspective_residual(wp: WeakPerspective, j2d_model, j2d_obs) -> float:
    r = wp.s * np.asarray(j2d_model, float) + [wp.tx, wp.ty] - np.asarray(j2d_obs, float)
    return float((r ** 2).sum())


def estimate_translation(wp: WeakPerspective, cam: PerspectiveCam) -> np.ndarray:
    z = cam.f / wp.s
    return np.array([(wp.tx - cam.cx) * z / cam.f, (wp.ty - cam.cy) * z / cam.f, z])


def project(cam: PerspectiveCam, p) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    z = p[..., 2]
    if np.any(z <= 0):
        raise CameraError("cannot project points with nonpositive depth")
    return np.stack([cam.f * p[..., 0] / z + cam.cx, cam.f * p[..., 1] / z + cam.cy], axis=-1)
