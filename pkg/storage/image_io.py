"""
PFM and PNG codecs
"""
import os
from typing import Union

import numpy as np
from PIL import Image

from models.errors import ImageFormatError

PathLike = Union[str, os.PathLike]


def write_pfm(path: PathLike, image: np.ndarray) -> None:
    """Write a 1- or 3-channel float image as little-endian binary PFM (bottom-up scanlines)"""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 3 and img.shape[2] == 1:
        img = img[..., 0]
    if img.ndim == 2:
        header = "Pf"
    elif img.ndim == 3 and img.shape[2] == 3:
        header = "PF"
    else:
        raise ImageFormatError(f"cannot store image of shape {img.shape} as PFM")
    height, width = img.shape[:2]
    data = np.ascontiguousarray(np.flipud(img).astype("<f4"))
    with open(path, "wb") as f:
        f.write(f"{header}\n{width} {height}\n-1.0\n".encode("ascii"))
        f.write(data.tobytes())


def _read_token_line(f) -> str:
    line = f.readline()
    if not line:
        raise ImageFormatError("unexpected end of PFM header")
    return line.decode("ascii", errors="replace").strip()


def read_pfm(path: PathLike) -> np.ndarray:
    """Read a PFM file into a float32 array (H,W) or (H,W,3), top row first"""
    with open(path, "rb") as f:
        identifier = _read_token_line(f)
        if identifier == "PF":
            channels = 3
        elif identifier == "Pf":
            channels = 1
        else:
            raise ImageFormatError(f"{path}: unrecognized PFM identifier {identifier!r}")

        dims = _read_token_line(f).split()
        if len(dims) != 2:
            raise ImageFormatError(f"{path}: malformed PFM dimensions line")
        try:
            width, height = int(dims[0]), int(dims[1])
            scale = float(_read_token_line(f))
        except ValueError as e:
            raise ImageFormatError(f"{path}: malformed PFM header ({e})")

        dtype = "<f4" if scale < 0 else ">f4"
        count = width * height * channels
        payload = f.read(count * 4)
        if len(payload) != count * 4:
            raise ImageFormatError(f"{path}: PFM payload truncated")

    data = np.frombuffer(payload, dtype=dtype).astype(np.float32)
    shape = (height, width, channels) if channels == 3 else (height, width)
    return np.flipud(data.reshape(shape)).copy()


def write_png_mask(path: PathLike, mask: np.ndarray) -> None:
    """8-bit grayscale, 255 inside the mask"""
    Image.fromarray(np.where(np.asarray(mask) > 0, 255, 0).astype(np.uint8)).save(path)


def read_png_mask(path: PathLike) -> np.ndarray:
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("L"))
    except (OSError, ValueError) as e:
        raise ImageFormatError(f"{path}: {e}")
    return arr >= 128


def write_png_rgb(path: PathLike, image: np.ndarray) -> None:
    """Linear values in [0,1] quantized to 8 bits"""
    img = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    Image.fromarray(np.round(img * 255.0).astype(np.uint8)).save(path)


def read_png_rgb(path: PathLike) -> np.ndarray:
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("RGB"))
    except (OSError, ValueError) as e:
        raise ImageFormatError(f"{path}: {e}")
    return arr.astype(np.float64) / 255.0


def read_image(path: PathLike) -> np.ndarray:
    """RGB image from PNG or PFM as float64"""
    if str(path).lower().endswith(".pfm"):
        img = read_pfm(path).astype(np.float64)
        return np.repeat(img[..., None], 3, axis=2) if img.ndim == 2 else img
    return read_png_rgb(path)


def read_mask(path: PathLike) -> np.ndarray:
    if str(path).lower().endswith(".pfm"):
        img = read_pfm(path)
        return (img if img.ndim == 2 else img.mean(axis=2)) > 0.5
    return read_png_mask(path)
