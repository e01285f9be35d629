"""
2D inpainting backends for reference-view material maps
"""
import shlex
import subprocess
import tempfile
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Dict, Optional

import numpy as np
from scipy import ndimage

from config import Config
from models.buffers import InpaintTask
from models.errors import InpaintBackendError
from storage.image_io import read_pfm, write_png_mask, write_pfm
from utils.logger import kv, setup_logger

logger = setup_logger("inpainting")

# 8-neighbour mean
NEIGHBOURS = np.array([[1.0, 1.0, 1.0], [1.0, 0.0, 1.0], [1.0, 1.0, 1.0]]) / 8.0

# File names used by the external backend protocol
IMAGE_FILE = "image"
MASK_FILE = "mask.png"


class Inpainter(ABC):
    """Abstract base class for inpainting backends"""

    name = "abstract"

    @abstractmethod
    def fill(self, task: InpaintTask) -> Dict[str, np.ndarray]:
        """Return inpainted versions of every map of task"""
        pass


def diffusion_fill(image: np.ndarray, mask: np.ndarray, tol: float = Config.DIFFUSION_TOL,
                   max_iters: int = Config.DIFFUSION_MAX_ITERS) -> np.ndarray:
    """
    Harmonic fill of the masked pixels, channel by channel

    Masked pixels start at the mean of the known pixels and are replaced by
    their 8-neighbour mean until the largest update drops below tol.
    """
    img = np.asarray(image, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    out = img.copy()
    if not mask.any() or mask.all():
        return out
    planes = out[..., None] if out.ndim == 2 else out
    for c in range(planes.shape[2]):
        plane = planes[..., c]
        plane[mask] = plane[~mask].mean()
        for _ in range(max_iters):
            avg = ndimage.convolve(plane, NEIGHBOURS, mode="nearest")
            step = np.abs(avg[mask] - plane[mask]).max()
            plane[mask] = avg[mask]
            if step < tol:
                break
    return out


class BaselineInpainter(Inpainter):
    """Deterministic masked diffusion on every map"""

    name = "baseline"

    def __init__(self, tol: float = Config.DIFFUSION_TOL, max_iters: int = Config.DIFFUSION_MAX_ITERS):
        self.tol = tol
        self.max_iters = max_iters

    def fill(self, task: InpaintTask) -> Dict[str, np.ndarray]:
        out = {}
        for name, arr in task.maps.items():
            if name == "depth":
                out[name] = self._fill_depth(arr, task.mask)
            else:
                out[name] = diffusion_fill(arr, task.mask, self.tol, self.max_iters)
        return out

    def _fill_depth(self, depth: np.ndarray, mask: np.ndarray) -> np.ndarray:
        # filled in inverse depth, which is affine in pixel coordinates on a plane
        depth = np.asarray(depth, dtype=np.float64)
        known = ~mask & (depth > 0)
        if not known.any():
            return depth.copy()
        inv = np.where(depth > 0, 1.0 / np.where(depth > 0, depth, 1.0), 0.0)
        hole = mask | (depth <= 0)
        inv[hole & ~mask] = inv[known].mean()
        filled = diffusion_fill(inv, mask, self.tol * 1e-2, self.max_iters)
        return np.where(mask, 1.0 / np.maximum(filled, 1e-9), depth)


class CommandInpainter(Inpainter):
    """
    External backend invoked as `<command> <task dir>`

    The task directory holds image.pfm, mask.png and one <map>.pfm per
    material map; the backend writes <name>.out.pfm siblings.
    """

    name = "cmd"

    def __init__(self, command: str, workdir: Optional[str] = None, timeout: int = Config.INPAINTER_TIMEOUT):
        self.command = shlex.split(command)
        if not self.command:
            raise ValueError("inpainter command is empty")
        self.workdir = workdir
        self.timeout = timeout

    def fill(self, task: InpaintTask) -> Dict[str, np.ndarray]:
        if self.workdir:
            return self._run(Path(self.workdir), task)
        with tempfile.TemporaryDirectory(prefix="glossremove-inpaint-") as root:
            return self._run(Path(root), task)

    def _run(self, root: Path, task: InpaintTask) -> Dict[str, np.ndarray]:
        task_dir = root / "task" / str(task.view_id)
        task_dir.mkdir(parents=True, exist_ok=True)
        write_png_mask(task_dir / MASK_FILE, task.mask)
        files = {}
        for name, arr in task.maps.items():
            stem = IMAGE_FILE if name == "color" else name
            write_pfm(task_dir / f"{stem}.pfm", arr)
            files[name] = task_dir / f"{stem}.out.pfm"

        logger.info(kv(inpainter=self.command[0], view=task.view_id, dir=str(task_dir)))
        try:
            proc = subprocess.run(self.command + [str(task_dir)], capture_output=True, text=True,
                                  timeout=self.timeout)
        except (OSError, subprocess.TimeoutExpired) as e:
            raise InpaintBackendError(f"inpainter {self.command[0]} could not run", str(e))
        if proc.returncode != 0:
            raise InpaintBackendError(f"inpainter exited with status {proc.returncode}",
                                      (proc.stderr or proc.stdout).strip())

        out = {}
        for name, path in files.items():
            if not path.exists():
                raise InpaintBackendError(f"inpainter did not write {path.name}")
            result = read_pfm(path).astype(np.float64)
            original = task.maps[name]
            if result.shape != original.shape:
                raise InpaintBackendError(f"{path.name} has shape {result.shape}, expected {original.shape}")
            out[name] = result
        return out


class FallbackInpainter(Inpainter):
    """Primary backend with the baseline as a safety net"""

    def __init__(self, primary: Inpainter, fallback: Optional[Inpainter] = None):
        self.primary = primary
        self.fallback = fallback or BaselineInpainter()
        self.substitutions: Dict[int, str] = {}
        self.name = f"{primary.name}+fallback"

    def fill(self, task: InpaintTask) -> Dict[str, np.ndarray]:
        try:
            return self.primary.fill(task)
        except InpaintBackendError as e:
            logger.warning(f"inpainter failed on view {task.view_id}, using baseline: {e}")
            self.substitutions[task.view_id] = f"{self.primary.name} -> baseline"
            return self.fallback.fill(task)


def inpaint_2d(task: InpaintTask, backend: Optional[Inpainter] = None) -> InpaintTask:
    """Fill the masked pixels of every map; outside the mask the inputs are kept bitwise"""
    backend = backend or BaselineInpainter()
    mask = np.asarray(task.mask, dtype=bool)
    if not mask.any():
        filled = {name: np.array(arr, copy=True) for name, arr in task.maps.items()}
    else:
        raw = backend.fill(task)
        filled = {}
        for name, arr in task.maps.items():
            m = mask[..., None] if arr.ndim == 3 else mask
            filled[name] = np.where(m, raw[name], arr)
    logger.debug(kv(view=task.view_id, backend=backend.name, masked=int(mask.sum())))
    return InpaintTask(view_id=task.view_id, mask=mask, maps=task.maps, inpainted=filled)
