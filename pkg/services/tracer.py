"""
BVH ray tracing over ellipsoidal Gaussian primitives
"""
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple

import numpy as np

from models.buffers import Hit, TraceResult
from models.environment import EnvironmentMap
from models.scene import GaussianCloud, Scene
from models.schemas import TraceOpts
from utils.geometry import covariance, eval_radiance
from utils.kernels import STACK_DEPTH, intersect_kernel, trace_chunk, trace_chunk_backward
from utils.logger import setup_logger
from utils.parallel import run_parallel

from .environment_sampler import sample_env

logger = setup_logger("tracer")

RAY_CHUNK = 4096
BOX_PAD = 1e-9


def rough_only(gaussians: GaussianCloud) -> np.ndarray:
    return np.asarray(gaussians.region) >= 0.5


@dataclass
class Bvh:
    """Flattened BVH; leaves reference ranges of leaf_prims (global primitive indices)"""
    node_lo: np.ndarray     # (M,3)
    node_hi: np.ndarray     # (M,3)
    node_left: np.ndarray   # (M,) -1 at leaves
    node_right: np.ndarray
    node_start: np.ndarray  # (M,) start into leaf_prims
    node_count: np.ndarray  # (M,) > 0 at leaves
    leaf_prims: np.ndarray
    prim_lo: np.ndarray     # (N,3) primitive boxes, global indexing
    prim_hi: np.ndarray
    means: np.ndarray       # (N,3) float64
    icovs: np.ndarray       # (N,3,3)
    opacity: np.ndarray     # (N,)
    opts: TraceOpts

    @property
    def empty(self) -> bool:
        return self.node_lo.shape[0] == 0

    @property
    def node_count_total(self) -> int:
        return int(self.node_lo.shape[0])

    def leaves(self) -> List[int]:
        return [i for i in range(self.node_count_total) if self.node_count[i] > 0]


def primitive_boxes(gaussians: GaussianCloud, cutoff: float) -> Tuple[np.ndarray, np.ndarray]:
    """Axis-aligned bounds of each cutoff-sigma ellipsoid"""
    cov = covariance(gaussians.scale, gaussians.rotation)
    ext = cutoff * np.sqrt(np.diagonal(cov, axis1=1, axis2=2))
    ext = ext * (1.0 + 1e-6) + BOX_PAD
    pos = np.asarray(gaussians.position, dtype=np.float64)
    return pos - ext, pos + ext


def build_bvh(scene: Scene, select: Optional[Callable[[GaussianCloud], np.ndarray]] = rough_only,
              opts: Optional[TraceOpts] = None) -> Bvh:
    """Median-split BVH over the selected primitives (default: rough region only)"""
    opts = opts or TraceOpts()
    g = scene.gaussians
    n = g.count
    selected = np.ones(n, dtype=bool) if select is None else np.asarray(select(g), dtype=bool)
    lo, hi = primitive_boxes(g, opts.sigma_cutoff) if n else (np.zeros((0, 3)), np.zeros((0, 3)))
    means = np.ascontiguousarray(g.position, dtype=np.float64)
    cov = g.covariances() if n else np.zeros((0, 3, 3))
    icovs = np.ascontiguousarray(np.linalg.inv(cov)) if n else np.zeros((0, 3, 3))

    nodes_lo, nodes_hi, left, right, start, count = [], [], [], [], [], []
    leaf_prims: List[int] = []

    def build(ids: np.ndarray) -> int:
        node = len(nodes_lo)
        nodes_lo.append(lo[ids].min(axis=0))
        nodes_hi.append(hi[ids].max(axis=0))
        left.append(-1)
        right.append(-1)
        start.append(0)
        count.append(0)
        if ids.size <= opts.leaf_size:
            start[node] = len(leaf_prims)
            count[node] = int(ids.size)
            leaf_prims.extend(int(i) for i in ids)
            return node
        centroids = means[ids]
        axis = int(np.argmax(centroids.max(axis=0) - centroids.min(axis=0)))
        ordered = ids[np.lexsort((ids, centroids[:, axis]))]
        half = ordered.size // 2
        left[node] = build(ordered[:half])
        right[node] = build(ordered[half:])
        return node

    ids = np.flatnonzero(selected)
    if ids.size:
        build(ids)

    def arr(values, dtype, shape):
        return np.ascontiguousarray(np.asarray(values, dtype=dtype).reshape(shape))

    m = len(nodes_lo)
    bvh = Bvh(
        node_lo=arr(nodes_lo, np.float64, (m, 3)), node_hi=arr(nodes_hi, np.float64, (m, 3)),
        node_left=arr(left, np.int64, (m,)), node_right=arr(right, np.int64, (m,)),
        node_start=arr(start, np.int64, (m,)), node_count=arr(count, np.int64, (m,)),
        leaf_prims=arr(leaf_prims, np.int64, (len(leaf_prims),)),
        prim_lo=lo, prim_hi=hi, means=means, icovs=icovs,
        opacity=np.ascontiguousarray(g.opacity, dtype=np.float64), opts=opts,
    )
    logger.debug(f"built bvh primitives={ids.size} nodes={m}")
    return bvh


def _check_dir(direction: np.ndarray) -> np.ndarray:
    d = np.asarray(direction, dtype=np.float64).reshape(3)
    if abs(np.linalg.norm(d) - 1.0) > 1e-6:
        raise ValueError("ray direction must have unit norm")
    return d


def intersect_ray(bvh: Bvh, origin, direction) -> List[Hit]:
    """Accepted hits of one ray, sorted by (t*, primitive index)"""
    o = np.asarray(origin, dtype=np.float64).reshape(3)
    d = _check_dir(direction)
    cap = max(bvh.means.shape[0], 1)
    hit_idx = np.empty(cap, np.int64)
    hit_t = np.empty(cap)
    hit_a = np.empty(cap)
    stack = np.empty(STACK_DEPTH, np.int64)
    cutoff2 = float(bvh.opts.sigma_cutoff) ** 2
    n = intersect_kernel(o[0], o[1], o[2], d[0], d[1], d[2], bvh.node_lo, bvh.node_hi, bvh.node_left,
                         bvh.node_right, bvh.node_start, bvh.node_count, bvh.leaf_prims, bvh.means,
                         bvh.icovs, bvh.opacity, bvh.opts.alpha_min, bvh.opts.t_eps, cutoff2,
                         stack, hit_idx, hit_t, hit_a)
    return [Hit(index=int(hit_idx[k]), t=float(hit_t[k]), alpha=float(hit_a[k])) for k in range(n)]


def _appearance(scene: Scene, opts: TraceOpts):
    g = scene.gaussians
    colors = np.ascontiguousarray(g.color, dtype=np.float64)
    sh = np.ascontiguousarray(g.sh_rest, dtype=np.float64)
    labels = np.ascontiguousarray(g.label, dtype=np.float64)
    return colors, sh, labels, bool(opts.use_sh and sh.shape[1] > 0)


def trace_batch(bvh: Bvh, scene: Scene, origins: np.ndarray, dirs: np.ndarray,
                threads: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Trace R rays; returns (L_ind (R,3), V (R,), E_i (R,))"""
    origins = np.ascontiguousarray(origins, dtype=np.float64).reshape(-1, 3)
    dirs = np.ascontiguousarray(dirs, dtype=np.float64).reshape(-1, 3)
    rays = origins.shape[0]
    radiance = np.zeros((rays, 3))
    visibility = np.ones(rays)
    label = np.zeros(rays)
    if bvh.empty or rays == 0:
        return radiance, visibility, label

    opts = bvh.opts
    colors, sh, labels, use_sh = _appearance(scene, opts)
    cutoff2 = float(opts.sigma_cutoff) ** 2

    def run(start):
        stop = min(start + RAY_CHUNK, rays)
        trace_chunk(origins[start:stop], dirs[start:stop], bvh.node_lo, bvh.node_hi, bvh.node_left,
                    bvh.node_right, bvh.node_start, bvh.node_count, bvh.leaf_prims, bvh.means, bvh.icovs,
                    bvh.opacity, colors, sh, labels, use_sh, opts.alpha_min, opts.t_stop, opts.t_eps,
                    cutoff2, radiance[start:stop], visibility[start:stop], label[start:stop])

    run_parallel(run, range(0, rays, RAY_CHUNK), threads or opts.threads)
    return radiance, visibility, label


def trace(bvh: Bvh, scene: Scene, origin, direction, env: Optional[EnvironmentMap] = None,
          env_level: float = 0.0) -> TraceResult:
    o = np.asarray(origin, dtype=np.float64).reshape(1, 3)
    d = _check_dir(direction).reshape(1, 3)
    radiance, visibility, label = trace_batch(bvh, scene, o, d, threads=1)
    incident = radiance[0].copy()
    if env is not None:
        incident = incident + sample_env(env, d[0], env_level) * visibility[0]
    return TraceResult(indirect=radiance[0], visibility=float(visibility[0]), label=float(label[0]),
                       incident=incident)


def trace_backward(bvh: Bvh, scene: Scene, origins: np.ndarray, dirs: np.ndarray,
                   grad_radiance: np.ndarray, grad_label: Optional[np.ndarray] = None,
                   threads: Optional[int] = None):
    """
    Gradients of traced L_ind / E_i w.r.t. color, sh_rest and label of hit primitives

    Hit sets and weights are held constant. Chunk partials are reduced in
    chunk order so the result does not depend on the thread count.
    """
    g = scene.gaussians
    n = g.count
    out_color = np.zeros((n, 3))
    out_sh = np.zeros(g.sh_rest.shape, dtype=np.float64)
    out_label = np.zeros(n)
    origins = np.ascontiguousarray(origins, dtype=np.float64).reshape(-1, 3)
    dirs = np.ascontiguousarray(dirs, dtype=np.float64).reshape(-1, 3)
    rays = origins.shape[0]
    if bvh.empty or rays == 0:
        return out_color, out_sh, out_label

    grad_radiance = np.ascontiguousarray(grad_radiance, dtype=np.float64).reshape(rays, 3)
    grad_label = np.zeros(rays) if grad_label is None else np.ascontiguousarray(grad_label, dtype=np.float64)
    opts = bvh.opts
    colors, sh, labels, use_sh = _appearance(scene, opts)
    cutoff2 = float(opts.sigma_cutoff) ** 2

    def run(start):
        stop = min(start + RAY_CHUNK, rays)
        pc = np.zeros((n, 3))
        ps = np.zeros(sh.shape)
        pl = np.zeros(n)
        trace_chunk_backward(origins[start:stop], dirs[start:stop], bvh.node_lo, bvh.node_hi,
                             bvh.node_left, bvh.node_right, bvh.node_start, bvh.node_count,
                             bvh.leaf_prims, bvh.means, bvh.icovs, bvh.opacity, colors, sh, labels,
                             use_sh, opts.alpha_min, opts.t_stop, opts.t_eps, cutoff2,
                             grad_radiance[start:stop], grad_label[start:stop], pc, ps, pl)
        return pc, ps, pl

    for pc, ps, pl in run_parallel(run, range(0, rays, RAY_CHUNK), threads or opts.threads):
        out_color += pc
        out_sh += ps
        out_label += pl
    return out_color, out_sh, out_label


# ---------------------------------------------------------------- reference path

def linear_scan_hits(scene: Scene, origin, direction, select=rough_only,
                     opts: Optional[TraceOpts] = None) -> List[Hit]:
    """All-primitive evaluation of the ray response, no acceleration structure"""
    opts = opts or TraceOpts()
    g = scene.gaussians
    if g.count == 0:
        return []
    o = np.asarray(origin, dtype=np.float64).reshape(3)
    d = _check_dir(direction)
    selected = np.ones(g.count, dtype=bool) if select is None else np.asarray(select(g), dtype=bool)
    ids = np.flatnonzero(selected)
    if ids.size == 0:
        return []
    icov = np.linalg.inv(g.covariances()[ids])
    mu = np.asarray(g.position, dtype=np.float64)[ids]
    ad = np.einsum("nij,j->ni", icov, d)
    t = np.einsum("ni,ni->n", mu - o, ad) / np.einsum("i,ni->n", d, ad)
    t = np.maximum(t, opts.t_eps)
    r = o + t[:, None] * d - mu
    q = np.einsum("ni,nij,nj->n", r, icov, r)
    alpha = np.asarray(g.opacity, dtype=np.float64)[ids] * np.exp(-0.5 * q)
    keep = (q <= opts.sigma_cutoff ** 2) & (alpha > opts.alpha_min)
    hits = [Hit(index=int(i), t=float(tt), alpha=float(a)) for i, tt, a in zip(ids[keep], t[keep], alpha[keep])]
    hits.sort(key=lambda h: (h.t, h.index))
    return hits


def composite_hits(scene: Scene, hits: List[Hit], direction, opts: Optional[TraceOpts] = None) -> TraceResult:
    """Front-to-back blend of an ordered hit list"""
    opts = opts or TraceOpts()
    g = scene.gaussians
    d = np.asarray(direction, dtype=np.float64).reshape(1, 3)
    radiance = np.zeros(3)
    label = 0.0
    trans = 1.0
    for hit in hits:
        sh = g.sh_rest[hit.index:hit.index + 1] if opts.use_sh else g.sh_rest[hit.index:hit.index + 1, :0]
        rad, _, _ = eval_radiance(g.color[hit.index:hit.index + 1], sh, d)
        w = hit.alpha * trans
        radiance += w * rad[0]
        label += w * float(g.label[hit.index])
        trans *= 1.0 - hit.alpha
        if trans < opts.t_stop:
            break
    return TraceResult(indirect=radiance, visibility=trans, label=label, incident=radiance.copy())


def trace_debug(bvh: Bvh, scene: Scene, origins: np.ndarray, dirs: np.ndarray) -> str:
    """Text dump of per-ray hit lists and composited results"""
    lines = []
    for r, (o, d) in enumerate(zip(np.asarray(origins).reshape(-1, 3), np.asarray(dirs).reshape(-1, 3))):
        d = d / np.linalg.norm(d)
        hits = intersect_ray(bvh, o, d)
        res = trace(bvh, scene, o, d)
        lines.append(
            f"ray {r} origin {o[0]:.6f} {o[1]:.6f} {o[2]:.6f} dir {d[0]:.6f} {d[1]:.6f} {d[2]:.6f} hits {len(hits)}"
        )
        for h in hits:
            lines.append(f"  hit {h.index} t {h.t:.6f} alpha {h.alpha:.6f}")
        lines.append(
            f"  L_ind {res.indirect[0]:.6f} {res.indirect[1]:.6f} {res.indirect[2]:.6f} "
            f"V {res.visibility:.6f} E {res.label:.6f}"
        )
    return "\n".join(lines) + "\n"
