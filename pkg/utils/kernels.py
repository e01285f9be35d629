"""
Compiled inner loops: tile splatting, BVH traversal and ray compositing

Every kernel releases the GIL so callers can fan tiles and ray chunks out
over a thread pool. Kernels only write to the slices they are handed.
"""
import numpy as np
from numba import njit

from utils.geometry import SH_C1, SH_C2, SH_C3

STACK_DEPTH = 64


# ---------------------------------------------------------------- splatting

@njit(nogil=True, cache=False)
def splat_tile(x0, y0, x1, y1, width, cand, means, conics, opacity,
               alpha_min, t_stop, cutoff2, fill, counts, indptr, indices, data):
    """
    Front-to-back blending weights for the pixels of one tile.

    With fill=False only the number of contributors per pixel is written to
    counts; with fill=True the (primitive, weight) pairs are written into the
    CSR arrays starting at indptr[pixel].
    """
    for y in range(y0, y1):
        for x in range(x0, x1):
            p = y * width + x
            base = indptr[p] if fill else 0
            trans = 1.0
            k = 0
            for j in range(cand.shape[0]):
                i = cand[j]
                dx = x - means[i, 0]
                dy = y - means[i, 1]
                q = conics[i, 0] * dx * dx + 2.0 * conics[i, 1] * dx * dy + conics[i, 2] * dy * dy
                if q > cutoff2:
                    continue
                a = opacity[i] * np.exp(-0.5 * q)
                if a < alpha_min:
                    continue
                if fill:
                    indices[base + k] = i
                    data[base + k] = a * trans
                k += 1
                trans *= 1.0 - a
                if trans < t_stop:
                    break
            if not fill:
                counts[p] = k


@njit(nogil=True, cache=False)
def distortion_rows(indptr, weights, depths):
    """Per-row sum_{i,j} w_i w_j |d_i - d_j|"""
    rows = indptr.shape[0] - 1
    out = np.zeros(rows)
    for r in range(rows):
        acc = 0.0
        for a in range(indptr[r], indptr[r + 1]):
            for b in range(indptr[r], indptr[r + 1]):
                acc += weights[a] * weights[b] * abs(depths[a] - depths[b])
        out[r] = acc
    return out


# ---------------------------------------------------------------- SH

@njit(nogil=True, cache=False)
def sh_basis_single(dx, dy, dz, rest, out):
    """Bands above 0 of the real SH basis at one direction, written into out[:rest]"""
    if rest == 0:
        return
    out[0] = -SH_C1 * dy
    out[1] = SH_C1 * dz
    out[2] = -SH_C1 * dx
    if rest > 3:
        xx = dx * dx
        yy = dy * dy
        zz = dz * dz
        out[3] = SH_C2[0] * dx * dy
        out[4] = SH_C2[1] * dy * dz
        out[5] = SH_C2[2] * (2.0 * zz - xx - yy)
        out[6] = SH_C2[3] * dx * dz
        out[7] = SH_C2[4] * (xx - yy)
        if rest > 8:
            out[8] = SH_C3[0] * dy * (3.0 * xx - yy)
            out[9] = SH_C3[1] * dx * dy * dz
            out[10] = SH_C3[2] * dy * (4.0 * zz - xx - yy)
            out[11] = SH_C3[3] * dz * (2.0 * zz - 3.0 * xx - 3.0 * yy)
            out[12] = SH_C3[4] * dx * (4.0 * zz - xx - yy)
            out[13] = SH_C3[5] * dz * (xx - yy)
            out[14] = SH_C3[6] * dx * (xx - 3.0 * yy)


# ---------------------------------------------------------------- ray queries

@njit(nogil=True, cache=False)
def ray_response(ox, oy, oz, dx, dy, dz, mx, my, mz, icov, opacity, t_eps):
    """Peak depth t* (clamped to t_eps), Mahalanobis q at t* and alpha* along a ray"""
    ex = mx - ox
    ey = my - oy
    ez = mz - oz
    adx = icov[0, 0] * dx + icov[0, 1] * dy + icov[0, 2] * dz
    ady = icov[1, 0] * dx + icov[1, 1] * dy + icov[1, 2] * dz
    adz = icov[2, 0] * dx + icov[2, 1] * dy + icov[2, 2] * dz
    denom = dx * adx + dy * ady + dz * adz
    t = (ex * adx + ey * ady + ez * adz) / denom
    if t < t_eps:
        t = t_eps
    rx = ox + t * dx - mx
    ry = oy + t * dy - my
    rz = oz + t * dz - mz
    q = (rx * (icov[0, 0] * rx + icov[0, 1] * ry + icov[0, 2] * rz)
         + ry * (icov[1, 0] * rx + icov[1, 1] * ry + icov[1, 2] * rz)
         + rz * (icov[2, 0] * rx + icov[2, 1] * ry + icov[2, 2] * rz))
    return t, q, opacity * np.exp(-0.5 * q)


@njit(nogil=True, cache=False)
def _slab(ox, oy, oz, idx, idy, idz, dx, dy, dz, lo, hi, t_eps):
    tmin = t_eps
    tmax = np.inf
    o = (ox, oy, oz)
    inv = (idx, idy, idz)
    d = (dx, dy, dz)
    for k in range(3):
        if d[k] == 0.0:
            if o[k] < lo[k] or o[k] > hi[k]:
                return False
            continue
        t0 = (lo[k] - o[k]) * inv[k]
        t1 = (hi[k] - o[k]) * inv[k]
        if t0 > t1:
            t0, t1 = t1, t0
        if t0 > tmin:
            tmin = t0
        if t1 < tmax:
            tmax = t1
        if tmin > tmax:
            return False
    return True


@njit(nogil=True, cache=False)
def intersect_kernel(ox, oy, oz, dx, dy, dz, node_lo, node_hi, node_left, node_right,
                     node_start, node_count, leaf_prims, means, icovs, opacity,
                     alpha_min, t_eps, cutoff2, stack, hit_idx, hit_t, hit_a):
    """Collect accepted hits of one ray and sort them by (t*, index). Returns the hit count."""
    n_hits = 0
    if node_lo.shape[0] == 0:
        return 0
    idx = 1.0 / dx if dx != 0.0 else 0.0
    idy = 1.0 / dy if dy != 0.0 else 0.0
    idz = 1.0 / dz if dz != 0.0 else 0.0
    top = 0
    stack[top] = 0
    top += 1
    while top > 0:
        top -= 1
        node = stack[top]
        if not _slab(ox, oy, oz, idx, idy, idz, dx, dy, dz, node_lo[node], node_hi[node], t_eps):
            continue
        count = node_count[node]
        if count > 0:
            start = node_start[node]
            for j in range(start, start + count):
                i = leaf_prims[j]
                t, q, a = ray_response(ox, oy, oz, dx, dy, dz, means[i, 0], means[i, 1], means[i, 2],
                                       icovs[i], opacity[i], t_eps)
                if q <= cutoff2 and a > alpha_min:
                    hit_idx[n_hits] = i
                    hit_t[n_hits] = t
                    hit_a[n_hits] = a
                    n_hits += 1
        else:
            stack[top] = node_right[node]
            top += 1
            stack[top] = node_left[node]
            top += 1

    # insertion sort, ties by primitive index
    for a_pos in range(1, n_hits):
        ci = hit_idx[a_pos]
        ct = hit_t[a_pos]
        ca = hit_a[a_pos]
        b = a_pos - 1
        while b >= 0 and (hit_t[b] > ct or (hit_t[b] == ct and hit_idx[b] > ci)):
            hit_idx[b + 1] = hit_idx[b]
            hit_t[b + 1] = hit_t[b]
            hit_a[b + 1] = hit_a[b]
            b -= 1
        hit_idx[b + 1] = ci
        hit_t[b + 1] = ct
        hit_a[b + 1] = ca
    return n_hits


@njit(nogil=True, cache=False)
def trace_chunk(origins, dirs, node_lo, node_hi, node_left, node_right, node_start, node_count,
                leaf_prims, means, icovs, opacity, colors, sh_rest, labels, use_sh,
                alpha_min, t_stop, t_eps, cutoff2, out_radiance, out_visibility, out_label):
    n_prims = means.shape[0]
    rest = sh_rest.shape[1] if use_sh else 0
    stack = np.empty(STACK_DEPTH, np.int64)
    hit_idx = np.empty(max(n_prims, 1), np.int64)
    hit_t = np.empty(max(n_prims, 1))
    hit_a = np.empty(max(n_prims, 1))
    basis = np.zeros(16)
    for r in range(origins.shape[0]):
        ox, oy, oz = origins[r, 0], origins[r, 1], origins[r, 2]
        dx, dy, dz = dirs[r, 0], dirs[r, 1], dirs[r, 2]
        n_hits = intersect_kernel(ox, oy, oz, dx, dy, dz, node_lo, node_hi, node_left, node_right,
                                  node_start, node_count, leaf_prims, means, icovs, opacity,
                                  alpha_min, t_eps, cutoff2, stack, hit_idx, hit_t, hit_a)
        sh_basis_single(dx, dy, dz, rest, basis)
        trans = 1.0
        lr = 0.0
        lg = 0.0
        lb = 0.0
        lab = 0.0
        for h in range(n_hits):
            i = hit_idx[h]
            w = hit_a[h] * trans
            for c in range(3):
                rad = colors[i, c]
                if rest > 0:
                    for k in range(rest):
                        rad += basis[k] * sh_rest[i, k, c]
                    if rad < 0.0:
                        rad = 0.0
                if c == 0:
                    lr += w * rad
                elif c == 1:
                    lg += w * rad
                else:
                    lb += w * rad
            lab += w * labels[i]
            trans *= 1.0 - hit_a[h]
            if trans < t_stop:
                break
        out_radiance[r, 0] = lr
        out_radiance[r, 1] = lg
        out_radiance[r, 2] = lb
        out_visibility[r] = trans
        out_label[r] = lab


@njit(nogil=True, cache=False)
def trace_chunk_backward(origins, dirs, node_lo, node_hi, node_left, node_right, node_start, node_count,
                         leaf_prims, means, icovs, opacity, colors, sh_rest, labels, use_sh,
                         alpha_min, t_stop, t_eps, cutoff2, grad_radiance, grad_label,
                         out_color, out_sh, out_label):
    """Accumulate d(loss)/d(color, sh_rest, label) of hit primitives; hit weights are constants"""
    n_prims = means.shape[0]
    rest = sh_rest.shape[1] if use_sh else 0
    stack = np.empty(STACK_DEPTH, np.int64)
    hit_idx = np.empty(max(n_prims, 1), np.int64)
    hit_t = np.empty(max(n_prims, 1))
    hit_a = np.empty(max(n_prims, 1))
    basis = np.zeros(16)
    for r in range(origins.shape[0]):
        g0, g1, g2 = grad_radiance[r, 0], grad_radiance[r, 1], grad_radiance[r, 2]
        ge = grad_label[r]
        if g0 == 0.0 and g1 == 0.0 and g2 == 0.0 and ge == 0.0:
            continue
        ox, oy, oz = origins[r, 0], origins[r, 1], origins[r, 2]
        dx, dy, dz = dirs[r, 0], dirs[r, 1], dirs[r, 2]
        n_hits = intersect_kernel(ox, oy, oz, dx, dy, dz, node_lo, node_hi, node_left, node_right,
                                  node_start, node_count, leaf_prims, means, icovs, opacity,
                                  alpha_min, t_eps, cutoff2, stack, hit_idx, hit_t, hit_a)
        sh_basis_single(dx, dy, dz, rest, basis)
        trans = 1.0
        for h in range(n_hits):
            i = hit_idx[h]
            w = hit_a[h] * trans
            for c in range(3):
                g = g0 if c == 0 else (g1 if c == 1 else g2)
                if g == 0.0:
                    continue
                active = True
                if rest > 0:
                    rad = colors[i, c]
                    for k in range(rest):
                        rad += basis[k] * sh_rest[i, k, c]
                    active = rad > 0.0
                if active:
                    out_color[i, c] += w * g
                    for k in range(rest):
                        out_sh[i, k, c] += w * g * basis[k]
            out_label[i] += w * ge
            trans *= 1.0 - hit_a[h]
            if trans < t_stop:
                break
