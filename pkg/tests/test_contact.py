import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.distance import cdist
from scipy.spatial.transform import Rotation

from contactrefine.body_model import PoseState, skin
from contactrefine.contact import (ContactError, ContactSignature, bbce, contact_loss,
                                   contact_translation_gradient, default_balance, gt_signature,
                                   region_distance, signature_iou)
from contactrefine.geometry import TriMesh, icosphere
from contactrefine.refine import fd_gradient
from contactrefine.scene import hand_regions, make_preset

from builders import posed_pair, random_signature, soft_signature
from oracles import contact_loss_loop, face_centers_loop, region_distance_loop


# --- region distance ----------------------------------------------------------------

def test_single_faces():
    tri = np.array([[0, 0, 0], [3, 0, 0], [0, 3, 0]], float)
    a = TriMesh(tri - [1, 1, 0], [[0, 1, 2]], [0])
    b = TriMesh(tri - [0, 1, 0], [[0, 1, 2]], [0])
    assert region_distance(a, 0, a, 0) == 0.0
    assert region_distance(a, 0, b, 0) == 2.0


def test_handcrafted_three_vs_four_faces():
    rng = np.random.default_rng(3)
    v1, v2 = rng.normal(size=(9, 3)), rng.normal(size=(12, 3)) + 1.0
    m1 = TriMesh(v1, np.arange(9).reshape(3, 3), [5, 5, 5])
    m2 = TriMesh(v2, np.arange(12).reshape(4, 3), [9, 9, 9, 9])
    ref = region_distance_loop(face_centers_loop(v1, m1.faces, m1.region_of_face, 5),
                               face_centers_loop(v2, m2.faces, m2.region_of_face, 9))
    assert region_distance(m1, 5, m2, 9) == ref


@pytest.mark.parametrize("seed", range(3))
def test_region_distance_matches_loop_on_humanoids(humanoid, seed):
    m1, m2 = posed_pair(humanoid, seed)
    rng = np.random.default_rng(seed)
    for r1, r2 in rng.integers(0, 75, size=(6, 2)):
        ref = region_distance_loop(
            face_centers_loop(m1.vertices, m1.faces, m1.region_of_face, r1),
            face_centers_loop(m2.vertices, m2.faces, m2.region_of_face, r2))
        assert region_distance(m1, r1, m2, r2) == ref
        assert region_distance(m2, r2, m1, r1) == ref


def test_region_distance_empty_region():
    m = TriMesh(np.eye(3), [[0, 1, 2]], [0])
    with pytest.raises(ContactError):
        region_distance(m, 0, m, 1)


@settings(max_examples=15, deadline=None)
@given(rot=st.lists(st.floats(-3, 3), min_size=3, max_size=3),
       t=st.lists(st.floats(-5, 5), min_size=3, max_size=3),
       r1=st.integers(0, 74), r2=st.integers(0, 74))
def test_region_distance_rigid_invariance(humanoid, rot, t, r1, r2):
    m1, m2 = posed_pair(humanoid, 11)
    r = Rotation.from_rotvec(rot).as_matrix()
    base = region_distance(m1, r1, m2, r2)
    moved = region_distance(m1.transformed(r, t), r1, m2.transformed(r, t), r2)
    assert abs(base - moved) <= 1e-9


# --- contact loss --------------------------------------------------------------------

def test_zero_and_one_hot(humanoid):
    m1, m2 = posed_pair(humanoid, 0)
    assert contact_loss(ContactSignature.empty(), m1, m2) == 0.0
    c = np.zeros((75, 75))
    c[3, 7] = 1.0
    assert contact_loss(ContactSignature.from_matrix(c), m1, m2) == region_distance(m1, 3, m2, 7)


@pytest.mark.parametrize("seed", range(3))
def test_contact_loss_matches_full_double_loop(humanoid, seed):
    m1, m2 = posed_pair(humanoid, 20 + seed)
    for sig in (random_signature(seed), soft_signature(seed)):
        assert contact_loss(sig, m1, m2) == contact_loss_loop(sig.c, m1, m2)


def test_contact_loss_swapped_people(humanoid):
    m1, m2 = posed_pair(humanoid, 5)
    sig = random_signature(5)
    assert contact_loss(sig, m1, m2) == contact_loss(sig.transposed(), m2, m1)


@settings(max_examples=15, deadline=None)
@given(i=st.integers(0, 74), j=st.integers(0, 74), bump=st.floats(0.0, 0.5))
def test_contact_loss_monotone_in_weights(humanoid, i, j, bump):
    m1, m2 = posed_pair(humanoid, 7)
    sig = soft_signature(7)
    c = sig.c.copy()
    c[i, j] = min(1.0, c[i, j] + bump)
    assert contact_loss(ContactSignature.from_matrix(c), m1, m2) >= contact_loss(sig, m1, m2)


def test_missing_labels():
    m = TriMesh(np.eye(3), [[0, 1, 2]])
    c = np.zeros((75, 75))
    c[0, 0] = 1
    with pytest.raises(ContactError):
        contact_loss(ContactSignature.from_matrix(c), m, m)


# --- translation gradient -------------------------------------------------------------

@pytest.mark.parametrize("seed", range(10))
def test_translation_gradient_matches_fd(humanoid, seed):
    m1, m2 = posed_pair(humanoid, 40 + seed, gap=0.8)
    sig = random_signature(40 + seed, n_active=4)
    _, g2 = contact_translation_gradient(sig, m1, m2)
    f = lambda t: contact_loss(sig, m1, m2.transformed(None, t))  # noqa: E731
    fd = fd_gradient(f, np.zeros(3), 1e-6)
    assert np.linalg.norm(fd - g2) <= 1e-4 * np.linalg.norm(g2)


# --- ground-truth signatures ------------------------------------------------------------

def test_far_meshes_have_no_contact():
    a = TriMesh(icosphere(2).vertices, icosphere(2).faces, np.zeros(320, int))
    b = a.transformed(None, [2 + 10 * 0.02, 0, 0])
    sig = gt_signature(a, b)
    assert not sig.contact_flag and not sig.c.any()


def test_tangent_spheres_touch():
    a = TriMesh(icosphere(3).vertices, icosphere(3).faces, np.zeros(1280, int))
    b = TriMesh(a.vertices * [-1, 1, 1] + [2, 0, 0], a.faces[:, ::-1], a.region_of_face)
    sig = gt_signature(a, b)
    assert sig.c[0, 0] == 1 and sig.contact_flag


def test_self_signature_diagonal(humanoid):
    m = skin(humanoid, PoseState.zero())
    assert np.all(np.diag(gt_signature(m, m).c) == 1)


def test_handshake_signature_matches_exhaustive_scan():
    model, poses, sig = make_preset("handshake")
    m1, m2 = skin(model, poses[0]), skin(model, poses[1])
    c1, c2 = m1.face_centers(), m2.face_centers()
    ref = np.zeros((75, 75))
    for start in range(0, len(c1), 500):
        d = cdist(c1[start:start + 500], c2)
        i, j = np.nonzero(d < 0.02)
        ref[m1.region_of_face[start + i], m2.region_of_face[j]] = 1
    assert np.array_equal(sig.c, ref)
    hands = hand_regions("right")
    assert sig.c[np.ix_(hands, hands)].any()
    assert np.array_equal(sig.seg1, ref.max(axis=1))


def test_touching_loss_is_below_pulled_apart():
    model, poses, sig = make_preset("handshake")
    m1, m2 = skin(model, poses[0]), skin(model, poses[1])
    base = contact_loss(sig, m1, m2)
    # "away" = axis directions that do not shrink the offset between the contact areas
    offset = (m2.face_centers()[sig.seg2[m2.region_of_face] > 0].mean(axis=0)
              - m1.face_centers()[sig.seg1[m1.region_of_face] > 0].mean(axis=0))
    moves = [s * a for a in np.eye(3) for s in (1, -1) if s * a @ offset >= 0]
    assert len(moves) >= 3
    for d in moves:
        assert base <= contact_loss(sig, m1, m2.transformed(None, 2 * 0.02 * d))


# --- signature file, IoU, BBCE -----------------------------------------------------------

def test_signature_round_trip(tmp_path):
    sig = soft_signature(1)
    sig.save(tmp_path / "s.json")
    back = ContactSignature.load(tmp_path / "s.json")
    assert np.array_equal(back.c, sig.c) and back.contact_flag == sig.contact_flag


def test_signature_validation():
    with pytest.raises(ContactError):
        ContactSignature.from_matrix(np.full((75, 75), 1.2))
    with pytest.raises(ContactError):
        ContactSignature.from_matrix(np.zeros((10, 10)))


def test_iou():
    a = random_signature(0)
    assert signature_iou(a, a).signature == 1.0
    empty = ContactSignature.empty()
    assert signature_iou(empty, empty) == (1.0, 1.0)
    c1, c2 = np.zeros((75, 75)), np.zeros((75, 75))
    c1[0, :5] = 1
    c2[0, 2:7] = 1
    # overlap {2,3,4}, union {0..6}
    assert signature_iou(ContactSignature.from_matrix(c1),
                         ContactSignature.from_matrix(c2)).signature == pytest.approx(3 / 7)
    c2[:] = 0
    c2[1, 1] = 1
    assert signature_iou(ContactSignature.from_matrix(c1),
                         ContactSignature.from_matrix(c2)).signature == 0.0


def test_bbce():
    rng = np.random.default_rng(0)
    gt = (rng.random(500) < 0.1).astype(float)
    eps = 1e-7
    assert bbce(np.clip(gt, eps, 1 - eps), gt) <= 1e-6
    pred = rng.uniform(0.01, 0.99, 500)
    bce = -np.mean(gt * np.log(pred) + (1 - gt) * np.log(1 - pred))
    assert bbce(pred, gt, balance=1.0) == pytest.approx(bce, rel=1e-12)
    b = (gt == 0).sum() / (gt == 1).sum()
    direct = np.mean([-(b * y * np.log(p) + (1 - y) * np.log(1 - p)) for p, y in zip(pred, gt)])
    assert bbce(pred, gt) == pytest.approx(direct, rel=1e-12)
    with pytest.raises(ContactError):
        bbce([0.0], [1.0])


def test_default_balance_cap():
    gt = np.zeros(1000)
    gt[0] = 1
    assert default_balance(gt) == 100.0
    assert default_balance(np.zeros(5)) == 1.0
