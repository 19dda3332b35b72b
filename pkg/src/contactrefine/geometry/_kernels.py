"""Numba kernels for triangle-mesh queries.

All kernels take plain arrays so they can be reused on meshes whose vertices
change every call (the refinement loop re-skins bodies constantly) without
rebuilding Python-side objects.
"""
import math

import numpy as np
from numba import njit

FOUR_PI = 4.0 * math.pi


@njit(cache=True)
def closest_point_triangle(p, a, b, c):
    """Closest point on triangle abc to p (Voronoi-region walk)."""
    abx, aby, abz = b[0] - a[0], b[1] - a[1], b[2] - a[2]
    acx, acy, acz = c[0] - a[0], c[1] - a[1], c[2] - a[2]
    apx, apy, apz = p[0] - a[0], p[1] - a[1], p[2] - a[2]
    d1 = abx * apx + aby * apy + abz * apz
    d2 = acx * apx + acy * apy + acz * apz
    if d1 <= 0.0 and d2 <= 0.0:
        return a[0], a[1], a[2]

    bpx, bpy, bpz = p[0] - b[0], p[1] - b[1], p[2] - b[2]
    d3 = abx * bpx + aby * bpy + abz * bpz
    d4 = acx * bpx + acy * bpy + acz * bpz
    if d3 >= 0.0 and d4 <= d3:
        return b[0], b[1], b[2]

    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        v = d1 / (d1 - d3)
        return a[0] + v * abx, a[1] + v * aby, a[2] + v * abz

    cpx, cpy, cpz = p[0] - c[0], p[1] - c[1], p[2] - c[2]
    d5 = abx * cpx + aby * cpy + abz * cpz
    d6 = acx * cpx + acy * cpy + acz * cpz
    if d6 >= 0.0 and d5 <= d6:
        return c[0], c[1], c[2]

    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        w = d2 / (d2 - d6)
        return a[0] + w * acx, a[1] + w * acy, a[2] + w * acz

    va = d3 * d6 - d5 * d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        return (b[0] + w * (c[0] - b[0]), b[1] + w * (c[1] - b[1]),
                b[2] + w * (c[2] - b[2]))

    denom = 1.0 / (va + vb + vc)
    v = vb * denom
    w = vc * denom
    return (a[0] + abx * v + acx * w, a[1] + aby * v + acy * w,
            a[2] + abz * v + acz * w)


@njit(cache=True)
def _box_dist2(p, lo, hi):
    d2 = 0.0
    for k in range(3):
        if p[k] < lo[k]:
            t = lo[k] - p[k]
            d2 += t * t
        elif p[k] > hi[k]:
            t = p[k] - hi[k]
            d2 += t * t
    return d2


@njit(cache=True)
def bvh_closest(points, verts, faces, lo, hi, left, right, start, count, order):
    """Exact closest surface point for every query using a prebuilt BVH.

    Node arrays follow ``geometry.mesh._build_bvh``; a node is a leaf when
    ``count > 0`` and then covers ``order[start:start + count]``.
    """
    n = points.shape[0]
    dist = np.empty(n)
    closest = np.empty((n, 3))
    face_idx = np.empty(n, dtype=np.int64)
    stack = np.empty(128, dtype=np.int64)
    for i in range(n):
        p = points[i]
        best = np.inf
        bx, by, bz = 0.0, 0.0, 0.0
        bf = -1
        sp = 0
        stack[sp] = 0
        sp += 1
        while sp > 0:
            sp -= 1
            node = stack[sp]
            if _box_dist2(p, lo[node], hi[node]) >= best:
                continue
            if count[node] > 0:
                for k in range(start[node], start[node] + count[node]):
                    f = order[k]
                    qx, qy, qz = closest_point_triangle(
                        p, verts[faces[f, 0]], verts[faces[f, 1]], verts[faces[f, 2]])
                    dx, dy, dz = qx - p[0], qy - p[1], qz - p[2]
                    d2 = dx * dx + dy * dy + dz * dz
                    if d2 < best:
                        best = d2
                        bx, by, bz = qx, qy, qz
                        bf = f
            else:
                l = left[node]
                r = right[node]
                dl = _box_dist2(p, lo[l], hi[l])
                dr = _box_dist2(p, lo[r], hi[r])
                # push the farther child first so the nearer one pops next
                if dl < dr:
                    stack[sp] = r
                    stack[sp + 1] = l
                else:
                    stack[sp] = l
                    stack[sp + 1] = r
                sp += 2
        dist[i] = math.sqrt(best)
        closest[i, 0] = bx
        closest[i, 1] = by
        closest[i, 2] = bz
        face_idx[i] = bf
    return dist, closest, face_idx


@njit(cache=True)
def solid_angle(p, a, b, c):
    """Signed solid angle subtended by triangle abc at p."""
    ax, ay, az = a[0] - p[0], a[1] - p[1], a[2] - p[2]
    bx, by, bz = b[0] - p[0], b[1] - p[1], b[2] - p[2]
    cx, cy, cz = c[0] - p[0], c[1] - p[1], c[2] - p[2]
    la = math.sqrt(ax * ax + ay * ay + az * az)
    lb = math.sqrt(bx * bx + by * by + bz * bz)
    lc = math.sqrt(cx * cx + cy * cy + cz * cz)
    det = (ax * (by * cz - bz * cy) - ay * (bx * cz - bz * cx)
           + az * (bx * cy - by * cx))
    den = (la * lb * lc + (ax * bx + ay * by + az * bz) * lc
           + (ax * cx + ay * cy + az * cz) * lb + (bx * cx + by * cy + bz * cz) * la)
    return 2.0 * math.atan2(det, den)


@njit(cache=True)
def component_boxes(verts, faces, comp_offsets):
    ncomp = comp_offsets.shape[0] - 1
    lo = np.full((ncomp, 3), np.inf)
    hi = np.full((ncomp, 3), -np.inf)
    for c in range(ncomp):
        for f in range(comp_offsets[c], comp_offsets[c + 1]):
            for k in range(3):
                v = verts[faces[f, k]]
                for d in range(3):
                    if v[d] < lo[c, d]:
                        lo[c, d] = v[d]
                    if v[d] > hi[c, d]:
                        hi[c, d] = v[d]
    return lo, hi


@njit(cache=True)
def _inside_box(p, lo, hi):
    return (lo[0] <= p[0] <= hi[0] and lo[1] <= p[1] <= hi[1]
            and lo[2] <= p[2] <= hi[2])


@njit(cache=True)
def component_frames(verts, faces, comp_offsets):
    """Principal-axis boxes per component: (centres, axes as rows, lower, upper extents)."""
    ncomp = comp_offsets.shape[0] - 1
    centre = np.zeros((ncomp, 3))
    axes = np.zeros((ncomp, 3, 3))
    elo = np.full((ncomp, 3), np.inf)
    ehi = np.full((ncomp, 3), -np.inf)
    cov = np.empty((3, 3))
    for c in range(ncomp):
        f0, f1 = comp_offsets[c], comp_offsets[c + 1]
        n = 3 * (f1 - f0)
        if n == 0:
            continue
        sx = sy = sz = 0.0
        for f in range(f0, f1):
            for k in range(3):
                v = faces[f, k]
                sx += verts[v, 0]
                sy += verts[v, 1]
                sz += verts[v, 2]
        cx, cy, cz = sx / n, sy / n, sz / n
        cov[:] = 0.0
        for f in range(f0, f1):
            for k in range(3):
                v = faces[f, k]
                dx, dy, dz = verts[v, 0] - cx, verts[v, 1] - cy, verts[v, 2] - cz
                cov[0, 0] += dx * dx
                cov[0, 1] += dx * dy
                cov[0, 2] += dx * dz
                cov[1, 1] += dy * dy
                cov[1, 2] += dy * dz
                cov[2, 2] += dz * dz
        cov[1, 0], cov[2, 0], cov[2, 1] = cov[0, 1], cov[0, 2], cov[1, 2]
        _, vec = np.linalg.eigh(cov)
        centre[c, 0], centre[c, 1], centre[c, 2] = cx, cy, cz
        for a in range(3):
            for d in range(3):
                axes[c, a, d] = vec[d, a]
        for f in range(f0, f1):
            for k in range(3):
                v = faces[f, k]
                dx, dy, dz = verts[v, 0] - cx, verts[v, 1] - cy, verts[v, 2] - cz
                for a in range(3):
                    t = axes[c, a, 0] * dx + axes[c, a, 1] * dy + axes[c, a, 2] * dz
                    if t < elo[c, a]:
                        elo[c, a] = t
                    if t > ehi[c, a]:
                        ehi[c, a] = t
        # pad against rounding in the projections
        pad = 1e-9 * (1.0 + max(ehi[c, 0] - elo[c, 0], ehi[c, 1] - elo[c, 1],
                                ehi[c, 2] - elo[c, 2]))
        for a in range(3):
            elo[c, a] -= pad
            ehi[c, a] += pad
    return centre, axes, elo, ehi


@njit(cache=True)
def _inside_frame(p, centre, axes, elo, ehi):
    d0 = p[0] - centre[0]
    d1 = p[1] - centre[1]
    d2 = p[2] - centre[2]
    for a in range(3):
        t = axes[a, 0] * d0 + axes[a, 1] * d1 + axes[a, 2] * d2
        if t < elo[a] or t > ehi[a]:
            return False
    return True


@njit(cache=True)
def _frame_dist2(p, centre, axes, elo, ehi):
    d0 = p[0] - centre[0]
    d1 = p[1] - centre[1]
    d2 = p[2] - centre[2]
    out = 0.0
    for a in range(3):
        t = axes[a, 0] * d0 + axes[a, 1] * d1 + axes[a, 2] * d2
        if t < elo[a]:
            out += (elo[a] - t) ** 2
        elif t > ehi[a]:
            out += (t - ehi[a]) ** 2
    return out


@njit(cache=True)
def _winding_one(p, verts, faces, comp_offsets, comp_closed, clo, chi, fc, fa, flo, fhi):
    total = 0.0
    for c in range(comp_offsets.shape[0] - 1):
        # a closed surface has zero winding number outside any box around it
        if comp_closed[c] and not (_inside_box(p, clo[c], chi[c])
                                   and _inside_frame(p, fc[c], fa[c], flo[c], fhi[c])):
            continue
        for f in range(comp_offsets[c], comp_offsets[c + 1]):
            total += solid_angle(p, verts[faces[f, 0]], verts[faces[f, 1]],
                                 verts[faces[f, 2]])
    return total / FOUR_PI


@njit(cache=True)
def winding_numbers(points, verts, faces, comp_offsets, comp_closed):
    """Generalized winding number per query point.

    ``faces`` must be grouped by connected component as described by
    ``comp_offsets``. Points outside the whole-mesh bounding box get 0.
    """
    clo, chi = component_boxes(verts, faces, comp_offsets)
    fc, fa, flo, fhi = component_frames(verts, faces, comp_offsets)
    lo = np.empty(3)
    hi = np.empty(3)
    for d in range(3):
        lo[d] = clo[:, d].min()
        hi[d] = chi[:, d].max()
    out = np.zeros(points.shape[0])
    for i in range(points.shape[0]):
        if not _inside_box(points[i], lo, hi):
            continue
        out[i] = _winding_one(points[i], verts, faces, comp_offsets, comp_closed, clo, chi,
                              fc, fa, flo, fhi)
    return out


@njit(cache=True)
def _nearest_by_components(p, verts, faces, comp_offsets, clo, chi, fc, fa, flo, fhi):
    ncomp = comp_offsets.shape[0] - 1
    bd = np.empty(ncomp)
    for c in range(ncomp):
        # both boxes enclose the component, so either distance is a lower bound
        bd[c] = max(_box_dist2(p, clo[c], chi[c]), _frame_dist2(p, fc[c], fa[c], flo[c], fhi[c]))
    best = np.inf
    for c in np.argsort(bd):
        if bd[c] >= best:
            break
        for f in range(comp_offsets[c], comp_offsets[c + 1]):
            qx, qy, qz = closest_point_triangle(
                p, verts[faces[f, 0]], verts[faces[f, 1]], verts[faces[f, 2]])
            dx, dy, dz = qx - p[0], qy - p[1], qz - p[2]
            d2 = dx * dx + dy * dy + dz * dz
            if d2 < best:
                best = d2
    return math.sqrt(best)


@njit(cache=True)
def penetration_depths(points, verts, faces, comp_offsets, comp_closed):
    """Unsigned distance to the surface for points inside the mesh, else 0."""
    clo, chi = component_boxes(verts, faces, comp_offsets)
    fc, fa, flo, fhi = component_frames(verts, faces, comp_offsets)
    lo = np.empty(3)
    hi = np.empty(3)
    for d in range(3):
        lo[d] = clo[:, d].min()
        hi[d] = chi[:, d].max()
    out = np.zeros(points.shape[0])
    for i in range(points.shape[0]):
        p = points[i]
        if not _inside_box(p, lo, hi):
            continue
        w = _winding_one(p, verts, faces, comp_offsets, comp_closed, clo, chi, fc, fa, flo, fhi)
        if w > 0.5:
            out[i] = _nearest_by_components(p, verts, faces, comp_offsets, clo, chi,
                                            fc, fa, flo, fhi)
    return out
