"""Acceptance criteria 1-11, one test each.

Every test prints a single ``[PASS]``/``[FAIL]`` line with the measured
numbers before asserting; the lines are repeated in the terminal summary.
Criteria 8-10 share the refinement harness runs, computed once per module
(about 40 minutes on one core).
"""
import time

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from contactrefine.body_model import PoseState, joints, skin_vertices
from contactrefine.camera import (PerspectiveCam, estimate_translation, project,
                                  solve_weak_perspective)
from contactrefine.contact import contact_loss, contact_translation_gradient, region_distance
from contactrefine.experiments import (HARNESS_CONFIG, GroundTruth, penetration_ablation,
                                       regularizer_pin, run_ablation, summarize,
                                       trace_is_monotone)
from contactrefine.geometry import (box, chamfer_distance, contains, icosphere, marching_cubes,
                                    OccupancyGrid, point_to_surface, sample_surface,
                                    unsigned_distance)
from contactrefine.refine import (RefineConfig, SceneState, default_prior, fd_gradient,
                                  penetration_loss, refine_scene)
from contactrefine.scene import make_preset

from builders import blobby, posed_pair, random_signature, soft_signature, sphere_grid
from oracles import (brute_unsigned_distance, chain_skin, contact_loss_loop, face_centers_loop,
                     penetration_loop, ray_parity_inside, region_distance_loop)

RESULTS: list[str] = []

SIGMAS = (0.05, 0.1, 0.2)
SEEDS = 20
PENALTY_SEEDS = 5


def verdict(n: int, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {detail}"
    print(line)
    RESULTS.append(line)
    assert ok, line


# --- harness runs shared by criteria 8, 9 and 10 -------------------------------------------

@pytest.fixture(scope="module")
def prior():
    return default_prior()


@pytest.fixture(scope="module")
def harness(prior):
    return run_ablation(GroundTruth.preset("handshake"), SIGMAS, SEEDS, HARNESS_CONFIG, prior)


@pytest.fixture(scope="module")
def penalty_runs(prior):
    return penetration_ablation(("handshake", "hug"), 0.1, PENALTY_SEEDS, HARNESS_CONFIG, prior)


# --- 1 --------------------------------------------------------------------------------------

def test_criterion_01_skinning(humanoid):
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    rest = np.abs(skin_vertices(humanoid, PoseState.zero()) - humanoid.template_vertices).max()
    equi = 0.0
    root = humanoid.rest_joints[0]
    for _ in range(10):
        theta = 0.4 * rng.standard_normal((24, 3))
        r = Rotation.from_rotvec(rng.uniform(-2, 2, 3))
        t = rng.uniform(-2, 2, 3)
        moved = theta.copy()
        moved[0] = (r * Rotation.from_rotvec(theta[0])).as_rotvec()
        lhs = skin_vertices(humanoid, PoseState(moved, np.zeros(10), t))
        base = skin_vertices(humanoid, PoseState(theta, np.zeros(10), np.zeros(3)))
        equi = max(equi, np.abs(lhs - ((base - root) @ r.as_matrix().T + root + t)).max())
    theta = np.zeros((24, 3))
    theta[19] = [0, 0, np.pi / 2]
    elbow_v = skin_vertices(humanoid, PoseState(theta, np.zeros(10), np.zeros(3)))
    seconds = time.perf_counter() - start
    elbow = np.abs(elbow_v - chain_skin(humanoid, theta)).max()
    ok = rest <= 1e-12 and equi <= 1e-10 and elbow <= 1e-10 and seconds < 1.0
    verdict(1, ok, f"rest {rest:.1e} <= 1e-12, equivariance {equi:.1e} <= 1e-10, "
                   f"elbow vs chain {elbow:.1e} <= 1e-10, {seconds:.3f} s < 1 s")


# --- 2 --------------------------------------------------------------------------------------

def test_criterion_02_distance_queries():
    worst, mismatches, checked, seconds = 0.0, 0, 0, 0.0
    for seed in range(5):
        mesh = blobby(seed)
        assert mesh.components.closed.all()
        rng = np.random.default_rng(100 + seed)
        lo, hi = mesh.bounds()
        pts = rng.uniform(lo - 0.3, hi + 0.3, size=(1000, 3))
        start = time.perf_counter()
        d, _ = unsigned_distance(mesh, pts)
        inside = contains(mesh, pts)
        seconds += time.perf_counter() - start
        ref = brute_unsigned_distance(mesh.vertices, mesh.faces, pts)
        worst = max(worst, np.abs(d - ref).max())
        keep = ref >= 1e-6
        parity = ray_parity_inside(mesh.vertices, mesh.faces, pts[keep])
        mismatches += int((inside[keep] != parity).sum())
        checked += int(keep.sum())
    ok = worst <= 1e-9 and mismatches == 0 and seconds < 30
    verdict(2, ok, f"distance error {worst:.1e} <= 1e-9, containment {checked - mismatches}/"
                   f"{checked} agree, queries {seconds:.2f} s < 30 s")


# --- 3 --------------------------------------------------------------------------------------

def test_criterion_03_metrics():
    a = blobby(1)
    self_cd = chamfer_distance(a, a, 10_000)
    inner, outer = icosphere(4, 1.0), icosphere(4, 1.1)
    cd = chamfer_distance(inner, outer, 10_000)
    p2s = point_to_surface(inner, outer, 10_000)
    b = blobby(2)
    ref = 0.5 * (brute_unsigned_distance(b.vertices, b.faces, sample_surface(a, 500)).mean()
                 + brute_unsigned_distance(a.vertices, a.faces, sample_surface(b, 500)).mean())
    brute = abs(chamfer_distance(a, b, 500) - ref)
    # self-distance and the brute-force match are checked to 1e-12, not bitwise
    ok = self_cd <= 1e-12 and abs(cd - 0.1) <= 0.01 and abs(p2s - 0.1) <= 0.01 and brute <= 1e-12
    verdict(3, ok, f"CD(A,A) {self_cd:.1e}, concentric CD {cd:.4f} and P2S {p2s:.4f} "
                   f"(0.1 +- 0.01), 500-sample brute force diff {brute:.1e}")


# --- 4 --------------------------------------------------------------------------------------

def test_criterion_04_marching_cubes():
    grid, spacing = sphere_grid(64, 0.3)
    mesh = marching_cubes(grid)
    dev = np.abs(np.linalg.norm(mesh.vertices - 0.5, axis=1) - 0.3).max()
    diag = np.sqrt(3) * spacing
    chi, boundary = mesh.euler_characteristic(), mesh.boundary_edge_count()
    n = 20
    h = 1.0 / (n - 1)
    plane = marching_cubes(OccupancyGrid.from_function(
        lambda p: np.clip(0.5 + (0.37 - p[:, 2]), 0, 1), (n, n, n), (0, 0, 0), h))
    flat = np.abs(plane.vertices[:, 2] - 0.37).max()
    ok = dev <= diag and chi == 2 and boundary == 0 and flat <= 1e-6
    verdict(4, ok, f"radial deviation {dev:.4f} <= {diag:.4f}, Euler {chi}, "
                   f"boundary edges {boundary}, planarity {flat:.1e} <= 1e-6")


# --- 5 --------------------------------------------------------------------------------------

def test_criterion_05_contact_fidelity(humanoid):
    exact, compared = 0, 0
    for seed in range(3):
        m1, m2 = posed_pair(humanoid, seed)
        rng = np.random.default_rng(seed)
        for r1, r2 in rng.integers(0, 75, size=(6, 2)):
            ref = region_distance_loop(
                face_centers_loop(m1.vertices, m1.faces, m1.region_of_face, r1),
                face_centers_loop(m2.vertices, m2.faces, m2.region_of_face, r2))
            exact += region_distance(m1, r1, m2, r2) == ref
            compared += 1
        for sig in (random_signature(seed), soft_signature(seed)):
            exact += contact_loss(sig, m1, m2) == contact_loss_loop(sig.c, m1, m2)
            compared += 1
    m1, m2 = posed_pair(humanoid, 11)
    sig = soft_signature(11)
    base = contact_loss(sig, m1, m2)
    sym = abs(base - contact_loss(sig.transposed(), m2, m1))
    rng = np.random.default_rng(5)
    rigid = 0.0
    for _ in range(10):
        r = Rotation.from_rotvec(rng.uniform(-3, 3, 3)).as_matrix()
        t = rng.uniform(-5, 5, 3)
        rigid = max(rigid, abs(base - contact_loss(sig, m1.transformed(r, t),
                                                   m2.transformed(r, t))))
    ok = exact == compared and sym <= 1e-9 and rigid <= 1e-9
    verdict(5, ok, f"{exact}/{compared} bitwise equal to double loops, symmetry {sym:.1e}, "
                   f"rigid invariance {rigid:.1e} (<= 1e-9)")


# --- 6 --------------------------------------------------------------------------------------

def test_criterion_06_penetration():
    a = box((0, 0, 0), (1, 1, 1))
    b = box((0.75, 0.25, 0.25), (1.75, 0.75, 0.75))
    val = penetration_loss(a, b)
    brute = penetration_loop(a, b)
    s = icosphere(2)
    disjoint = penetration_loss(s, s.transformed(None, [2.5, 0, 0]))
    ok = abs(val - 1.0) <= 1e-9 and abs(brute - 1.0) <= 1e-9 and disjoint == 0.0
    verdict(6, ok, f"offset cubes {val!r} (brute force {float(brute)!r}), disjoint {disjoint!r}")


# --- 7 --------------------------------------------------------------------------------------

def test_criterion_07_gradient(humanoid):
    worst, used, seed = 0.0, 0, 0
    while used < 50:
        m1, m2 = posed_pair(humanoid, 1000 + seed, gap=0.8)
        sig = random_signature(1000 + seed, n_active=4)
        seed += 1
        _, g2 = contact_translation_gradient(sig, m1, m2)
        if np.linalg.norm(g2) == 0:
            continue
        fd = fd_gradient(lambda t: contact_loss(sig, m1, m2.transformed(None, t)),
                         np.zeros(3), 1e-6)
        worst = max(worst, np.linalg.norm(fd - g2) / np.linalg.norm(g2))
        used += 1
    verdict(7, worst <= 1e-4, f"max relative error {worst:.2e} <= 1e-4 over {used} configurations")


# --- 8 --------------------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_08_optimizer_contract(harness, penalty_runs):
    traces = [t for r in harness for t in r.traces.values()]
    traces += [t for p in penalty_runs for tr in p.traces for t in tr.values()]
    bad = sum(not trace_is_monotone(t) for t in traces)
    model, poses, sig = make_preset("standing")
    scene = SceneState.create([model, model], poses, {(0, 1): sig})
    out, _ = refine_scene(scene, RefineConfig(), default_prior())
    same = all(a.vertices.tobytes() == b.vertices.tobytes()
               for a, b in zip(out.meshes(), scene.meshes()))
    verdict(8, bad == 0 and same, f"{len(traces) - bad}/{len(traces)} traces non-increasing, "
                                  f"no-contact scene bit-identical: {same}")


# --- 9 --------------------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_09_refinement_efficacy(harness):
    s = summarize(harness)
    per = ", ".join(f"sigma {k:g}: {v['cd_noisy']:.4f}->{v['cd_refined']:.4f}"
                    for k, v in s["per_sigma"].items())
    ok = (s["improved_fraction"] >= 0.9 and s["mean_reduction"] >= 0.2
          and s["penetration_not_worse"] == 1.0 and s["max_seconds"] <= 120)
    verdict(9, ok, f"improved {s['improved_fraction']:.0%} (>= 90%), mean reduction "
                   f"{s['mean_reduction']:.1%} (>= 20%), penetration not worse "
                   f"{s['penetration_not_worse']:.0%} (100%), slowest {s['max_seconds']:.0f} s "
                   f"(<= 120 s); {per}")


# --- 10 -------------------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_10_loss_ablation(penalty_runs, prior):
    worse = [p for p in penalty_runs if p.pen_with > p.pen_without]
    gt = GroundTruth.preset("handshake")
    # the other weights stay at their defaults and compete with the regulariser
    pin = regularizer_pin(gt, 0.1, 0, HARNESS_CONFIG, prior)
    alone = regularizer_pin(gt, 0.1, 0, HARNESS_CONFIG, prior, alone=True)
    pairs = "; ".join(f"{p.preset}/{p.seed}: {p.pen_with:.3f} vs {p.pen_without:.3f}"
                      for p in penalty_runs)
    ok = not worse and pin <= 1e-6
    verdict(10, ok, f"penalised <= unpenalised in {len(penalty_runs) - len(worse)}/"
                    f"{len(penalty_runs)} paired runs; lambda_r=1e9 shift {pin:.1e} <= 1e-6 "
                    f"(regulariser alone: {alone:.1e}); {pairs}")


# --- 11 -------------------------------------------------------------------------------------

def test_criterion_11_camera(humanoid):
    rng = np.random.default_rng(11)
    pts = rng.normal(size=(24, 2)) * 50
    wp = solve_weak_perspective(pts, 2.5 * pts + [10, -4])
    rec = max(abs(wp.s - 2.5), abs(wp.tx - 10), abs(wp.ty + 4))
    cam = PerspectiveCam(1000.0, 500.0, 500.0)
    j = joints(humanoid, PoseState.zero())
    extent = np.ptp(j, axis=0).max()
    errs = {}
    for ratio in (10, 20, 50):
        t = np.array([0.3, -0.2, ratio * extent])
        fit = solve_weak_perspective(j[:, :2], project(cam, j + t))
        errs[ratio] = np.linalg.norm(estimate_translation(fit, cam) - t) / np.linalg.norm(t)
    ok = rec <= 1e-9 and max(errs.values()) <= 0.05
    verdict(11, ok, f"weak-perspective recovery {rec:.1e} <= 1e-9, translation error "
                    + ", ".join(f"{e:.2%} at ratio {r}" for r, e in errs.items()) + " (<= 5%)")
