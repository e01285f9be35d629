"""
Tile-based Gaussian splatting into a deferred-shading G-buffer
"""
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, Optional, Tuple

import numpy as np
from scipy import sparse

from config import Config
from models.buffers import GBuffer, ScreenFootprint
from models.scene import Camera, GaussianCloud, GaussianPrimitive, Scene
from models.schemas import RasterOpts
from storage.image_io import write_pfm
from utils.geometry import covariance, eval_radiance
from utils.kernels import splat_tile
from utils.logger import setup_logger
from utils.parallel import run_parallel

logger = setup_logger("raster")

# Per-primitive feature table composited by the splatter
FEATURES: Dict[str, slice] = {
    "diffuse": slice(0, 3),
    "fresnel": slice(3, 6),
    "roughness": slice(6, 7),
    "region": slice(7, 8),
    "object_mask": slice(8, 9),
    "normal": slice(9, 12),
    "depth": slice(12, 13),
    "shaded_diffuse": slice(13, 16),
}
N_FEATURES = 16


@dataclass
class Footprints:
    """Screen footprints of every primitive of a cloud; invalid rows are culled"""
    means: np.ndarray    # (N,2)
    covs: np.ndarray     # (N,2,2)
    conics: np.ndarray   # (N,3) a, b, c of the inverse covariance
    depths: np.ndarray   # (N,)
    bounds: np.ndarray   # (N,4) x0, y0, x1, y1 inclusive
    valid: np.ndarray    # (N,) bool


@dataclass
class SplatWeights:
    """Blending weights w_i(p) of one view as a sparse (H*W, N) matrix, rows in compositing order"""
    matrix: sparse.csr_matrix
    footprints: Footprints
    order: np.ndarray
    height: int
    width: int

    @property
    def alpha(self) -> np.ndarray:
        return np.asarray(self.matrix.sum(axis=1)).reshape(self.height, self.width)


@dataclass
class FeatureContext:
    """Per-primitive values needed to differentiate the feature table"""
    dirs: np.ndarray        # (N,3) camera-to-primitive view directions
    radiance: np.ndarray    # (N,3) SH-evaluated color
    basis: np.ndarray       # (N,K)
    active: np.ndarray      # (N,3) clamp inactive
    region: np.ndarray      # (N,)
    diffuse: np.ndarray     # (N,3)


@dataclass
class DepthSamples:
    """Contributors of a set of pixels, CSR style"""
    pixels: np.ndarray    # (P,2) x, y
    indptr: np.ndarray    # (P+1,)
    primitive: np.ndarray
    weight: np.ndarray
    depth: np.ndarray     # camera-space z
    ndc: np.ndarray


def project_cloud(gaussians: GaussianCloud, cam: Camera, opts: Optional[RasterOpts] = None) -> Footprints:
    """EWA projection of every primitive (local affine approximation of the pinhole map)"""
    opts = opts or RasterOpts()
    n = gaussians.count
    pc = cam.world_to_camera(np.asarray(gaussians.position, dtype=np.float64))
    x, y, z = pc[:, 0], pc[:, 1], pc[:, 2]
    valid = (z > cam.near) & (z <= cam.far)
    zs = np.where(valid, z, 1.0)

    rot = np.asarray(cam.rotation, dtype=np.float64)
    cov_cam = rot @ covariance(gaussians.scale, gaussians.rotation) @ rot.T
    jac = np.zeros((n, 2, 3))
    jac[:, 0, 0] = cam.fx / zs
    jac[:, 0, 2] = -cam.fx * x / zs ** 2
    jac[:, 1, 1] = cam.fy / zs
    jac[:, 1, 2] = -cam.fy * y / zs ** 2
    covs = jac @ cov_cam @ jac.transpose(0, 2, 1)

    a, b, c = covs[:, 0, 0], covs[:, 0, 1], covs[:, 1, 1]
    det = a * c - b * b
    valid &= det > 0.0
    safe_det = np.where(valid, det, 1.0)
    conics = np.stack([c / safe_det, -b / safe_det, a / safe_det], axis=1)

    means = np.stack([cam.fx * x / zs + cam.cx, cam.fy * y / zs + cam.cy], axis=1)
    rx = opts.sigma_cutoff * np.sqrt(np.maximum(a, 0.0))
    ry = opts.sigma_cutoff * np.sqrt(np.maximum(c, 0.0))
    x0 = np.floor(means[:, 0] - rx)
    x1 = np.ceil(means[:, 0] + rx)
    y0 = np.floor(means[:, 1] - ry)
    y1 = np.ceil(means[:, 1] + ry)
    valid &= (x1 >= 0) & (x0 <= cam.width - 1) & (y1 >= 0) & (y0 <= cam.height - 1)
    valid &= np.isfinite(means).all(axis=1)

    bounds = np.zeros((n, 4), dtype=np.int64)
    if valid.any():
        bounds[valid, 0] = np.clip(x0[valid], 0, cam.width - 1)
        bounds[valid, 1] = np.clip(y0[valid], 0, cam.height - 1)
        bounds[valid, 2] = np.clip(x1[valid], 0, cam.width - 1)
        bounds[valid, 3] = np.clip(y1[valid], 0, cam.height - 1)

    means = np.where(valid[:, None], means, 0.0)
    conics = np.where(valid[:, None], conics, 0.0)
    return Footprints(means=means, covs=covs, conics=conics, depths=z, bounds=bounds, valid=valid)


def project_gaussian(g: GaussianPrimitive, cam: Camera,
                     opts: Optional[RasterOpts] = None) -> Optional[ScreenFootprint]:
    cloud = GaussianCloud.from_primitives([g], dtype=np.float64)
    fp = project_cloud(cloud, cam, opts)
    if not fp.valid[0]:
        return None
    return ScreenFootprint(
        mean=fp.means[0].copy(), cov=fp.covs[0].copy(), depth=float(fp.depths[0]),
        bounds=tuple(int(v) for v in fp.bounds[0]),
    )


def depth_order(fp: Footprints) -> np.ndarray:
    """Valid primitives sorted front to back by mean depth, ties by index"""
    idx = np.flatnonzero(fp.valid)
    return idx[np.argsort(fp.depths[idx], kind="stable")]


def _tiles(height: int, width: int, size: int):
    return [(tx, ty, min(tx + size, width), min(ty + size, height))
            for ty in range(0, height, size) for tx in range(0, width, size)]


def splat_weights(gaussians: GaussianCloud, cam: Camera, opts: Optional[RasterOpts] = None) -> SplatWeights:
    """Compute w_i(p) = alpha_i(p) * prod_{j<i}(1 - alpha_j(p)) tile by tile"""
    opts = opts or RasterOpts()
    fp = project_cloud(gaussians, cam, opts)
    order = depth_order(fp)
    height, width = cam.height, cam.width
    opacity = np.ascontiguousarray(gaussians.opacity, dtype=np.float64)
    cutoff2 = float(opts.sigma_cutoff) ** 2

    ob = fp.bounds[order]
    tiles = _tiles(height, width, opts.tile_size)
    candidates = []
    for x0, y0, x1, y1 in tiles:
        # one pixel of slack; the per-pixel cutoff test decides membership
        hit = (ob[:, 0] - 1 <= x1 - 1) & (ob[:, 2] + 1 >= x0) & (ob[:, 1] - 1 <= y1 - 1) & (ob[:, 3] + 1 >= y0)
        candidates.append(np.ascontiguousarray(order[hit]))

    counts = np.zeros(height * width, dtype=np.int64)
    dummy_i = np.zeros(0, dtype=np.int64)
    dummy_f = np.zeros(0, dtype=np.float64)

    def count(k):
        x0, y0, x1, y1 = tiles[k]
        splat_tile(x0, y0, x1, y1, width, candidates[k], fp.means, fp.conics, opacity,
                   opts.alpha_min, opts.t_stop, cutoff2, False, counts, dummy_i, dummy_i, dummy_f)

    run_parallel(count, range(len(tiles)), opts.threads)

    indptr = np.zeros(height * width + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    indices = np.zeros(int(indptr[-1]), dtype=np.int64)
    data = np.zeros(int(indptr[-1]), dtype=np.float64)

    def fill(k):
        x0, y0, x1, y1 = tiles[k]
        splat_tile(x0, y0, x1, y1, width, candidates[k], fp.means, fp.conics, opacity,
                   opts.alpha_min, opts.t_stop, cutoff2, True, counts, indptr, indices, data)

    run_parallel(fill, range(len(tiles)), opts.threads)

    matrix = sparse.csr_matrix((data, indices, indptr), shape=(height * width, gaussians.count))
    return SplatWeights(matrix=matrix, footprints=fp, order=order, height=height, width=width)


def primitive_features(gaussians: GaussianCloud, cam: Camera,
                       depths: np.ndarray) -> Tuple[np.ndarray, FeatureContext]:
    """Feature table (N,16) composited into the G-buffer"""
    pos = np.asarray(gaussians.position, dtype=np.float64)
    dirs = pos - cam.center
    norms = np.linalg.norm(dirs, axis=1, keepdims=True)
    dirs = dirs / np.where(norms > 0, norms, 1.0)
    radiance, basis, active = eval_radiance(gaussians.color, gaussians.sh_rest, dirs)

    region = np.asarray(gaussians.region, dtype=np.float64)
    diffuse = np.asarray(gaussians.diffuse, dtype=np.float64)
    feat = np.zeros((gaussians.count, N_FEATURES))
    feat[:, FEATURES["diffuse"]] = diffuse
    feat[:, FEATURES["fresnel"]] = gaussians.fresnel0
    feat[:, 6] = gaussians.roughness
    feat[:, 7] = region
    feat[:, 8] = gaussians.label
    feat[:, FEATURES["normal"]] = gaussians.normal
    feat[:, 12] = np.nan_to_num(depths, nan=0.0, posinf=0.0, neginf=0.0)
    feat[:, FEATURES["shaded_diffuse"]] = region[:, None] * radiance + (1.0 - region[:, None]) * diffuse
    ctx = FeatureContext(dirs=dirs, radiance=radiance, basis=basis, active=active, region=region, diffuse=diffuse)
    return feat, ctx


def assemble_gbuffer(comp: np.ndarray, alpha: np.ndarray, opts: RasterOpts) -> GBuffer:
    """Turn composited features (H,W,16) into G-buffer channels"""
    filled = alpha >= Config.EMPTY_ALPHA
    normal = comp[..., FEATURES["normal"]]
    length = np.linalg.norm(normal, axis=-1)
    keep = filled & (length > 1e-12)
    normal = np.where(keep[..., None], normal / np.where(keep, length, 1.0)[..., None], 0.0)
    depth = np.where(filled, comp[..., 12] / np.where(filled, alpha, 1.0), 0.0)
    return GBuffer(
        normal=normal,
        diffuse=comp[..., FEATURES["diffuse"]].copy(),
        fresnel=comp[..., FEATURES["fresnel"]].copy(),
        roughness=comp[..., 6].copy(),
        depth=depth,
        region=comp[..., 7].copy(),
        object_mask=comp[..., 8].copy(),
        alpha=alpha,
        shaded_diffuse=comp[..., FEATURES["shaded_diffuse"]].copy(),
        opts=opts.model_dump(),
    )


def composite(weights: SplatWeights, feat: np.ndarray) -> np.ndarray:
    comp = weights.matrix @ feat
    return np.asarray(comp).reshape(weights.height, weights.width, feat.shape[1])


def rasterize_gbuffer(scene: Scene, cam: Camera, opts: Optional[RasterOpts] = None,
                      weights: Optional[SplatWeights] = None) -> GBuffer:
    opts = opts or RasterOpts()
    gaussians = scene.gaussians
    if weights is None:
        weights = splat_weights(gaussians, cam, opts)
    feat, _ = primitive_features(gaussians, cam, weights.footprints.depths)
    gb = assemble_gbuffer(composite(weights, feat), weights.alpha, opts)
    logger.debug(f"rasterized primitives={gaussians.count} visible={weights.order.size} "
                 f"contributions={weights.matrix.nnz}")
    return gb


def brute_force_gbuffer(scene: Scene, cam: Camera, opts: Optional[RasterOpts] = None) -> GBuffer:
    """Reference compositor: every pixel against every primitive, no tiling or culling"""
    opts = opts or RasterOpts()
    gaussians = scene.gaussians
    fp = project_cloud(gaussians, cam, opts)
    order = depth_order(fp)
    feat, _ = primitive_features(gaussians, cam, fp.depths)
    height, width = cam.height, cam.width
    cutoff2 = float(opts.sigma_cutoff) ** 2

    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    trans = np.ones((height, width))
    live = np.ones((height, width), dtype=bool)
    comp = np.zeros((height, width, N_FEATURES))
    alpha = np.zeros((height, width))
    for i in order:
        dx = xx - fp.means[i, 0]
        dy = yy - fp.means[i, 1]
        ca, cb, cc = fp.conics[i]
        q = ca * dx * dx + 2.0 * cb * dx * dy + cc * dy * dy
        a = float(gaussians.opacity[i]) * np.exp(-0.5 * q)
        use = live & (q <= cutoff2) & (a >= opts.alpha_min)
        if not use.any():
            continue
        w = np.where(use, a * trans, 0.0)
        comp += w[..., None] * feat[i]
        alpha += w
        trans = np.where(use, trans * (1.0 - a), trans)
        live &= trans >= opts.t_stop
    return assemble_gbuffer(comp, alpha, opts)


def composite_samples(scene: Scene, cam: Camera, opts: Optional[RasterOpts] = None,
                      pixels: Optional[Iterable[Tuple[int, int]]] = None,
                      weights: Optional[SplatWeights] = None) -> DepthSamples:
    """Per-pixel contributor lists (weight, camera depth, NDC depth) in compositing order"""
    opts = opts or RasterOpts()
    if weights is None:
        weights = splat_weights(scene.gaussians, cam, opts)
    if pixels is None:
        yy, xx = np.mgrid[0:cam.height, 0:cam.width]
        pix = np.stack([xx.ravel(), yy.ravel()], axis=1)
    else:
        pix = np.asarray(list(pixels), dtype=np.int64).reshape(-1, 2)
    rows = pix[:, 1] * cam.width + pix[:, 0]
    sub = weights.matrix[rows]
    z = weights.footprints.depths[sub.indices]
    return DepthSamples(
        pixels=pix, indptr=sub.indptr.copy(), primitive=sub.indices.copy(), weight=sub.data.copy(),
        depth=z, ndc=cam.ndc_depth(z),
    )


def backward(weights: SplatWeights, ctx: FeatureContext, grad_comp: np.ndarray) -> Dict[str, np.ndarray]:
    """
    Per-primitive material gradients from d(loss)/d(composited features)

    Blending weights are constants (geometry is frozen); normal and depth
    channels carry no material dependence and are ignored.
    """
    g = np.asarray(weights.matrix.T @ grad_comp.reshape(-1, N_FEATURES))
    g_shaded = g[:, FEATURES["shaded_diffuse"]]
    m = ctx.region[:, None]
    g_rad = m * g_shaded * ctx.active
    grads = {
        "diffuse": g[:, FEATURES["diffuse"]] + (1.0 - m) * g_shaded,
        "fresnel0": g[:, FEATURES["fresnel"]].copy(),
        "roughness": g[:, 6].copy(),
        "region": g[:, 7] + np.sum(g_shaded * (ctx.radiance - ctx.diffuse), axis=1),
        "label": g[:, 8].copy(),
        "color": g_rad,
        "sh_rest": np.einsum("nk,nc->nkc", ctx.basis, g_rad),
    }
    return grads


def export_gbuffer(gb: GBuffer, out_dir) -> list:
    """One PFM per channel plus gbuffer.json"""
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    written = []
    for name, arr in gb.channels().items():
        path = root / f"{name}.pfm"
        write_pfm(path, arr)
        written.append(str(path))
    height, width = gb.shape
    meta = {"width": width, "height": height, "channels": list(gb.channels()), "raster_opts": gb.opts}
    (root / "gbuffer.json").write_text(json.dumps(meta, indent=2))
    written.append(str(root / "gbuffer.json"))
    return written
