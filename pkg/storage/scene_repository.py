"""
Scene directory persistence

Layout:
    scene.json          counts, cameras, env metadata, attribute schema
    attributes.bin      little-endian float32, primitive-major, trailing FNV-1a 64 checksum
    env/<face>.pfm      level-0 cube faces
    views/<id>/...      optional rgb.png, mask_obj.png, mask_region.png, normal.pfm
"""
import json
import os
import struct
from pathlib import Path
from typing import Dict, List, Tuple, Union

import numpy as np

from models.environment import FACE_NAMES, EnvironmentMap
from models.errors import ImageFormatError, SceneFormatError, ChecksumError, SceneValidationError
from models.scene import ATTRIBUTE_SCHEMA, Camera, GaussianCloud, Scene, ViewReference, validate_scene
from utils.checksum import fnv1a64
from utils.geometry import sh_rest_count
from utils.logger import setup_logger

from .image_io import (read_png_mask, read_png_rgb, read_pfm, write_pfm,
                       write_png_mask, write_png_rgb)

logger = setup_logger("storage.scene")

FORMAT_NAME = "glossremove-scene"
FORMAT_VERSION = 1
PathLike = Union[str, os.PathLike]


def attribute_schema(sh_degree: int) -> List[Tuple[str, int]]:
    schema = list(ATTRIBUTE_SCHEMA)
    rest = sh_rest_count(sh_degree)
    if rest:
        schema.append(("sh_rest", 3 * rest))
    return schema


class SceneRepository:
    """Reads and writes scene directories"""

    HEADER_FILE = "scene.json"
    BLOB_FILE = "attributes.bin"

    def __init__(self, root: PathLike):
        self.root = Path(root)

    # ------------------------------------------------------------------ save

    def save(self, scene: Scene) -> None:
        violations = validate_scene(scene)
        if violations:
            raise SceneValidationError(violations)

        g = scene.gaussians
        schema = attribute_schema(g.sh_degree)
        self.root.mkdir(parents=True, exist_ok=True)

        columns = []
        entries = []
        offset = 0
        for name, comps in schema:
            arr = getattr(g, name)
            columns.append(np.asarray(arr, dtype=np.float64).reshape(g.count, comps))
            entries.append({"name": name, "components": comps, "offset": offset})
            offset += comps
        table = np.concatenate(columns, axis=1) if columns else np.zeros((0, 0))
        payload = np.ascontiguousarray(table.astype("<f4")).tobytes()

        header = {
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "count": g.count,
            "sh_degree": g.sh_degree,
            "stride": offset,
            "schema": entries,
            "checksum": "fnv1a64",
            "cameras": [cam.to_dict() for cam in scene.cameras],
            "env": {"edge": scene.env.edge, "levels": scene.env.levels, "faces": list(FACE_NAMES)},
            "views": sorted(int(v) for v in scene.references),
        }

        with open(self.root / self.BLOB_FILE, "wb") as f:
            f.write(payload)
            f.write(struct.pack("<Q", fnv1a64(payload)))
        with open(self.root / self.HEADER_FILE, "w") as f:
            json.dump(header, f, indent=2)

        env_dir = self.root / "env"
        env_dir.mkdir(exist_ok=True)
        for face_idx, face_name in enumerate(FACE_NAMES):
            write_pfm(env_dir / f"{face_name}.pfm", scene.env.faces[face_idx])

        for view_id, ref in scene.references.items():
            view_dir = self.root / "views" / str(view_id)
            view_dir.mkdir(parents=True, exist_ok=True)
            if ref.rgb is not None:
                write_png_rgb(view_dir / "rgb.png", ref.rgb)
            if ref.object_mask is not None:
                write_png_mask(view_dir / "mask_obj.png", ref.object_mask)
            if ref.region_mask is not None:
                write_png_mask(view_dir / "mask_region.png", ref.region_mask)
            if ref.normal is not None:
                write_pfm(view_dir / "normal.pfm", ref.normal)

        logger.info(f"saved scene path={self.root} primitives={g.count} cameras={len(scene.cameras)}")

    # ------------------------------------------------------------------ load

    def load(self) -> Scene:
        header = self._read_header()
        count = header["count"]
        schema = header["schema"]
        stride = header["stride"]
        sh_degree = header["sh_degree"]

        expected = attribute_schema(sh_degree)
        if [(e.get("name"), e.get("components")) for e in schema] != expected:
            names = {e.get("name") for e in schema}
            missing = [name for name, _ in expected if name not in names]
            field = missing[0] if missing else "schema"
            raise SceneFormatError(field, "attribute schema does not match the expected layout")
        offset = 0
        for entry in schema:
            if entry.get("offset") != offset:
                raise SceneFormatError(entry["name"], f"offset {entry.get('offset')} != {offset}")
            offset += entry["components"]
        if offset != stride:
            raise SceneFormatError("stride", f"declared {stride}, schema sums to {offset}")

        blob_path = self.root / self.BLOB_FILE
        if not blob_path.is_file():
            raise SceneFormatError(self.BLOB_FILE, "missing file")
        blob = blob_path.read_bytes()
        expected_bytes = count * stride * 4 + 8
        if len(blob) != expected_bytes:
            raise SceneFormatError(
                "attributes",
                f"attribute-count mismatch: header declares {count} primitives "
                f"({expected_bytes} bytes), file has {len(blob)} bytes"
            )
        payload, tail = blob[:-8], blob[-8:]
        stored = struct.unpack("<Q", tail)[0]
        actual = fnv1a64(payload)
        if stored != actual:
            raise ChecksumError(stored, actual)

        table = np.frombuffer(payload, dtype="<f4").reshape(count, stride).astype(np.float32)
        fields: Dict[str, np.ndarray] = {}
        for entry in schema:
            name, comps, off = entry["name"], entry["components"], entry["offset"]
            column = table[:, off:off + comps]
            if not np.isfinite(column).all():
                raise SceneFormatError(name, "non-finite value")
            if name == "sh_rest":
                fields[name] = column.reshape(count, comps // 3, 3).copy()
            else:
                fields[name] = column[:, 0].copy() if comps == 1 else column.copy()
        if "sh_rest" not in fields:
            fields["sh_rest"] = np.zeros((count, 0, 3), dtype=np.float32)
        gaussians = GaussianCloud(**fields)

        env = self._read_env(header["env"])
        cameras = []
        for i, data in enumerate(header["cameras"]):
            try:
                cameras.append(Camera.from_dict(data))
            except (KeyError, TypeError, ValueError) as e:
                raise SceneFormatError(f"cameras[{i}]", f"malformed camera ({e})")
        references = {int(v): self._read_view(int(v)) for v in header.get("views", [])}

        scene = Scene(gaussians=gaussians, env=env, cameras=cameras, references=references)
        violations = validate_scene(scene)
        if violations:
            raise SceneValidationError(violations)
        logger.info(f"loaded scene path={self.root} primitives={count} cameras={len(cameras)}")
        return scene

    def _read_header(self) -> dict:
        path = self.root / self.HEADER_FILE
        if not path.is_file():
            raise SceneFormatError(self.HEADER_FILE, "missing file")
        try:
            header = json.loads(path.read_text())
        except (json.JSONDecodeError, UnicodeDecodeError) as e:
            raise SceneFormatError(self.HEADER_FILE, f"malformed header ({e})")
        if not isinstance(header, dict):
            raise SceneFormatError(self.HEADER_FILE, "malformed header (not an object)")
        if header.get("format") != FORMAT_NAME:
            raise SceneFormatError("format", f"unsupported format {header.get('format')!r}")
        for key in ("count", "sh_degree", "stride", "schema", "cameras", "env"):
            if key not in header:
                raise SceneFormatError(key, "missing from header")
        for key in ("count", "sh_degree", "stride"):
            if not isinstance(header[key], int) or header[key] < 0:
                raise SceneFormatError(key, "must be a nonnegative integer")
        return header

    def _read_env(self, meta: dict) -> EnvironmentMap:
        faces = []
        for name in FACE_NAMES:
            path = self.root / "env" / f"{name}.pfm"
            if not path.is_file():
                raise SceneFormatError(f"env/{name}.pfm", "missing file")
            try:
                face = read_pfm(path)
            except ImageFormatError as e:
                raise SceneFormatError(f"env/{name}.pfm", str(e))
            if face.ndim != 3 or face.shape != (meta["edge"], meta["edge"], 3):
                raise SceneFormatError(f"env/{name}.pfm", f"shape {face.shape} does not match edge {meta['edge']}")
            if not np.isfinite(face).all():
                raise SceneFormatError(f"env/{name}.pfm", "non-finite value")
            faces.append(face)
        return EnvironmentMap(faces=np.stack(faces).astype(np.float64), levels=int(meta.get("levels", 5)))

    def _read_view(self, view_id: int) -> ViewReference:
        view_dir = self.root / "views" / str(view_id)
        ref = ViewReference()
        try:
            if (view_dir / "rgb.png").is_file():
                ref.rgb = read_png_rgb(view_dir / "rgb.png")
            if (view_dir / "mask_obj.png").is_file():
                ref.object_mask = read_png_mask(view_dir / "mask_obj.png")
            if (view_dir / "mask_region.png").is_file():
                ref.region_mask = read_png_mask(view_dir / "mask_region.png")
            if (view_dir / "normal.pfm").is_file():
                ref.normal = read_pfm(view_dir / "normal.pfm").astype(np.float64)
        except ImageFormatError as e:
            raise SceneFormatError(f"views/{view_id}", str(e))
        return ref


def load_scene(path: PathLike) -> Scene:
    return SceneRepository(path).load()


def save_scene(scene: Scene, path: PathLike) -> None:
    SceneRepository(path).save(scene)
