"""
Translation-network weights: net.json manifest plus net.bin flat little-endian float32
"""
import json
import os
from pathlib import Path
from typing import Union

import numpy as np

from models.errors import NetworkLoadError
from models.network import ARCHITECTURE, ConvLayer, ConvNetSpec
from utils.logger import setup_logger

logger = setup_logger("storage.network")

PathLike = Union[str, os.PathLike]
MANIFEST_FILE = "net.json"
WEIGHTS_FILE = "net.bin"


def save_network(net: ConvNetSpec, path: PathLike) -> None:
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    manifest = {"dtype": "float32-le", "layers": []}
    chunks = []
    for i, layer in enumerate(net.layers):
        manifest["layers"].append({
            "name": f"conv{i}",
            "weight": list(layer.weight.shape),
            "bias": list(layer.bias.shape),
            "relu": bool(layer.relu),
        })
        chunks.append(np.asarray(layer.weight, dtype="<f4").ravel())
        chunks.append(np.asarray(layer.bias, dtype="<f4").ravel())
    (root / MANIFEST_FILE).write_text(json.dumps(manifest, indent=2))
    (root / WEIGHTS_FILE).write_bytes(np.concatenate(chunks).tobytes())


def load_network(path: PathLike) -> ConvNetSpec:
    """Load and check a network against the fixed 8-layer architecture"""
    root = Path(path)
    try:
        manifest = json.loads((root / MANIFEST_FILE).read_text())
        blob = (root / WEIGHTS_FILE).read_bytes()
    except FileNotFoundError as e:
        raise NetworkLoadError(f"missing network file: {e.filename}")
    except json.JSONDecodeError as e:
        raise NetworkLoadError(f"malformed {MANIFEST_FILE}: {e}")

    entries = manifest.get("layers", [])
    if len(entries) != len(ARCHITECTURE):
        raise NetworkLoadError(f"expected {len(ARCHITECTURE)} layers, manifest lists {len(entries)}")

    expected_count = 0
    for i, (entry, (cin, cout, k)) in enumerate(zip(entries, ARCHITECTURE)):
        if list(entry.get("weight", [])) != [cout, cin, k, k] or list(entry.get("bias", [])) != [cout]:
            raise NetworkLoadError(
                f"layer {i}: shapes {entry.get('weight')}/{entry.get('bias')} "
                f"do not match ({cout},{cin},{k},{k})/({cout},)"
            )
        expected_count += cout * cin * k * k + cout

    if len(blob) != expected_count * 4:
        raise NetworkLoadError(
            f"weight count mismatch: manifest needs {expected_count} floats, {WEIGHTS_FILE} holds {len(blob) / 4:g}"
        )

    flat = np.frombuffer(blob, dtype="<f4").astype(np.float64)
    if not np.isfinite(flat).all():
        raise NetworkLoadError("non-finite network weight")

    layers = []
    offset = 0
    last = len(ARCHITECTURE) - 1
    for i, (cin, cout, k) in enumerate(ARCHITECTURE):
        n_w = cout * cin * k * k
        weight = flat[offset:offset + n_w].reshape(cout, cin, k, k)
        offset += n_w
        bias = flat[offset:offset + cout].copy()
        offset += cout
        layers.append(ConvLayer(weight=weight.copy(), bias=bias, relu=0 < i < last))

    logger.info(f"loaded translation network path={root} parameters={expected_count}")
    return ConvNetSpec(layers=layers)
