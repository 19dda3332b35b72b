import numpy as np
import pytest

from contactrefine.body_model import PoseState, joints
from contactrefine.camera import (CameraError, PerspectiveCam, WeakPerspective,
                                  estimate_translation, project, solve_weak_perspective,
                                  weak_perspective_residual)

CAM = PerspectiveCam(1000.0, 500.0, 500.0)


def test_identity_fit(rng):
    pts = rng.normal(size=(10, 2))
    wp = solve_weak_perspective(pts, pts)
    assert (wp.s, wp.tx, wp.ty) == pytest.approx((1, 0, 0), abs=1e-12)


def test_synthetic_recovery(rng):
    pts = rng.normal(size=(24, 2)) * 50
    obs = 2.5 * pts + [10, -4]
    wp = solve_weak_perspective(pts, obs)
    assert abs(wp.s - 2.5) <= 1e-9 and abs(wp.tx - 10) <= 1e-9 and abs(wp.ty + 4) <= 1e-9


def test_noisy_fit_beats_random_triples(rng):
    pts = rng.normal(size=(24, 2)) * 50
    obs = 1.7 * pts + [3, 8] + rng.normal(scale=2.0, size=pts.shape)
    wp = solve_weak_perspective(pts, obs)
    best = weak_perspective_residual(wp, pts, obs)
    for s, tx, ty in zip(rng.uniform(0.5, 3, 1000), rng.uniform(-20, 20, 1000),
                         rng.uniform(-20, 20, 1000)):
        assert best <= weak_perspective_residual(WeakPerspective(s, tx, ty), pts, obs)
    for d in rng.normal(scale=1e-3, size=(1000, 3)):
        nudged = WeakPerspective(wp.s + d[0], wp.tx + d[1], wp.ty + d[2])
        assert best <= weak_perspective_residual(nudged, pts, obs)


def test_coincident_joints_rejected():
    with pytest.raises(CameraError):
        solve_weak_perspective(np.ones((5, 2)), np.ones((5, 2)))
    with pytest.raises(CameraError):
        WeakPerspective(0.0, 0, 0)


def test_translation_formula():
    assert np.allclose(estimate_translation(WeakPerspective(2, 500, 500), CAM), [0, 0, 500])
    assert np.allclose(estimate_translation(WeakPerspective(2, 600, 500), CAM), [50, 0, 500])


def test_projection(rng):
    assert np.allclose(project(CAM, [0, 0, 3]), [500, 500])
    p = np.array([0.2, -0.1, 2.0])
    off1 = project(CAM, p) - [500, 500]
    off2 = project(CAM, p * [1, 1, 2]) - [500, 500]
    assert np.allclose(off2, off1 / 2)
    k = np.array([[CAM.f, 0, CAM.cx], [0, CAM.f, CAM.cy], [0, 0, 1]])
    pts = rng.uniform([-1, -1, 1], [1, 1, 5], size=(50, 3))
    h = pts @ k.T
    assert np.allclose(project(CAM, pts), h[:, :2] / h[:, 2:], atol=1e-9)
    with pytest.raises(CameraError):
        project(CAM, [0, 0, 0])


def round_trip_error(model, ratio):
    pose = PoseState.zero()
    j = joints(model, pose)
    extent = np.ptp(j, axis=0).max()
    t = np.array([0.3, -0.2, ratio * extent])
    wp = solve_weak_perspective(j[:, :2], project(CAM, j + t))
    return np.linalg.norm(estimate_translation(wp, CAM) - t) / np.linalg.norm(t)


def test_translation_round_trip(humanoid):
    errs = [round_trip_error(humanoid, r) for r in (10, 50, 100)]
    assert errs[0] <= 0.05
    assert errs[0] > errs[1] > errs[2]
