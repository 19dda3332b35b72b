"""Slow reference implementations used only to check the library.

None of these share code with ``contactrefine``; they use different
algorithms on purpose.
"""
import math

import numpy as np


def _segment_dist2(p, a, b):
    ab = b - a
    t = np.clip(((p - a) * ab).sum(-1) / np.maximum((ab * ab).sum(-1), 1e-300), 0.0, 1.0)
    q = a + t[..., None] * ab
    return ((p - q) ** 2).sum(-1)


def point_triangle_dist(p, tris):
    """Distances from one point to every triangle (n, 3, 3): plane projection or edges."""
    a, b, c = tris[:, 0], tris[:, 1], tris[:, 2]
    n = np.cross(b - a, c - a)
    nn = (n * n).sum(-1)
    t = ((p - a) * n).sum(-1) / nn
    q = p - t[:, None] * n
    # barycentric sign test on the projected point
    s1 = (np.cross(b - a, q - a) * n).sum(-1)
    s2 = (np.cross(c - b, q - b) * n).sum(-1)
    s3 = (np.cross(a - c, q - c) * n).sum(-1)
    inside = (s1 >= 0) & (s2 >= 0) & (s3 >= 0)
    plane_d2 = t * t * nn
    edge_d2 = np.minimum(np.minimum(_segment_dist2(p, a, b), _segment_dist2(p, b, c)),
                         _segment_dist2(p, c, a))
    return np.sqrt(np.where(inside, plane_d2, edge_d2))


def brute_unsigned_distance(verts, faces, points):
    tris = np.asarray(verts)[np.asarray(faces)]
    return np.array([point_triangle_dist(p, tris).min() for p in np.asarray(points)])


def ray_parity_inside(verts, faces, points, direction=(0.5773, 0.5774, 0.5775)):
    """Inside test by counting ray crossings (Moller-Trumbore)."""
    tris = np.asarray(verts)[np.asarray(faces)]
    d = np.asarray(direction, float)
    d /= np.linalg.norm(d)
    e1 = tris[:, 1] - tris[:, 0]
    e2 = tris[:, 2] - tris[:, 0]
    h = np.cross(d, e2)
    det = (e1 * h).sum(-1)
    out = []
    for p in np.asarray(points):
        s = p - tris[:, 0]
        with np.errstate(divide="ignore", invalid="ignore"):
            u = (s * h).sum(-1) / det
            q = np.cross(s, e1)
            v = (q @ d) / det
            t = (q * e2).sum(-1) / det
        hit = (np.abs(det) > 1e-14) & (u >= 0) & (v >= 0) & (u + v <= 1) & (t > 0)
        out.append(hit.sum() % 2 == 1)
    return np.array(out)


def axis_angle_matrix(r):
    r = np.asarray(r, float)
    angle = np.linalg.norm(r)
    if angle == 0:
        return np.eye(3)
    k = r / angle
    kx = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.cos(angle) * np.eye(3) + np.sin(angle) * kx + (1 - np.cos(angle)) * np.outer(k, k)


def chain_skin(model, theta, t3d=np.zeros(3)):
    """Skinning by walking each joint's chain with homogeneous 4x4 matrices."""
    rest = model.rest_joints
    parents = model.parents

    def local(j):
        m = np.eye(4)
        m[:3, :3] = axis_angle_matrix(theta[j])
        m[:3, 3] = rest[j] - (rest[parents[j]] if parents[j] >= 0 else 0.0)
        return m

    def world(j):
        chain = []
        while j >= 0:
            chain.append(j)
            j = parents[j]
        m = np.eye(4)
        for k in reversed(chain):
            m = m @ local(k)
        return m

    skinning = []
    for j in range(len(parents)):
        inv_rest = np.eye(4)
        inv_rest[:3, 3] = -rest[j]
        skinning.append(world(j) @ inv_rest)
    out = np.zeros_like(model.template_vertices)
    for i, v in enumerate(model.template_vertices):
        vh = np.append(v, 1.0)
        acc = np.zeros(4)
        for j in np.flatnonzero(model.skinning_weights[i]):
            acc += model.skinning_weights[i, j] * (skinning[j] @ vh)
        out[i] = acc[:3] + t3d
    return out


def region_distance_loop(centers1, centers2):
    """Double loop over face centres, summed with fsum."""
    terms = []
    for a in centers1:
        terms.append(min(math.sqrt((a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1])
                                   + (a[2] - b[2]) * (a[2] - b[2])) for b in centers2))
    for b in centers2:
        terms.append(min(math.sqrt((a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1])
                                   + (a[2] - b[2]) * (a[2] - b[2])) for a in centers1))
    return math.fsum(terms)


def face_centers_loop(verts, faces, region_of_face, region):
    out = []
    for f, r in zip(faces, region_of_face):
        if r == region:
            a, b, c = verts[f[0]], verts[f[1]], verts[f[2]]
            out.append([(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0,
                        (a[2] + b[2] + c[2]) / 3.0])
    return out


def contact_loss_loop(c, mesh1, mesh2, threshold=0.5):
    terms = []
    for r1 in range(75):
        for r2 in range(75):
            if c[r1, r2] > threshold:
                c1 = face_centers_loop(mesh1.vertices, mesh1.faces, mesh1.region_of_face, r1)
                c2 = face_centers_loop(mesh2.vertices, mesh2.faces, mesh2.region_of_face, r2)
                terms.append(c[r1, r2] * region_distance_loop(c1, c2))
    return math.fsum(terms)


def penetration_loop(mesh1, mesh2):
    """Vertex-by-vertex scan with ray-parity containment and brute-force distances."""
    total = 0.0
    for a, b in ((mesh1, mesh2), (mesh2, mesh1)):
        inside = winding_inside(b.vertices, b.faces, a.vertices)
        if inside.any():
            total += brute_unsigned_distance(b.vertices, b.faces, a.vertices[inside]).sum()
    return total


def winding_inside(verts, faces, points):
    """Full (unpruned) solid-angle sum per point, thresholded at 0.5."""
    tris = np.asarray(verts)[np.asarray(faces)]
    out = []
    for p in np.asarray(points):
        a, b, c = tris[:, 0] - p, tris[:, 1] - p, tris[:, 2] - p
        la, lb, lc = (np.linalg.norm(x, axis=1) for x in (a, b, c))
        det = np.einsum("ij,ij->i", a, np.cross(b, c))
        den = la * lb * lc + (a * b).sum(1) * lc + (a * c).sum(1) * lb + (b * c).sum(1) * la
        out.append(np.arctan2(det, den).sum() * 2 / (4 * np.pi) > 0.5)
    return np.array(out)


def gmm_nll_naive(x, weights, means, variances):
    total = 0.0
    for w, mu, var in zip(weights, means, variances):
        dens = 1.0
        for xi, m, v in zip(x, mu, var):
            dens *= math.exp(-0.5 * (xi - m) ** 2 / v) / math.sqrt(2 * math.pi * v)
        total += w * dens
    return -math.log(total)
