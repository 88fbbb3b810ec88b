"""
Parameter checkpoints.

Layout (all little-endian):

    b"BATCKPT1"                 8-byte magic
    uint32                      header length in bytes
    header                      UTF-8 JSON: format_version, parameters
                                [{name, shape, offset}], registry, model_config,
                                metadata
    payload                     float64 values, parameters back to back

Offsets count float64 elements from the start of the payload.
"""

import json
import struct
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

import numpy as np

from .errors import CheckpointError

MAGIC = b"BATCKPT1"
FORMAT_VERSION = 1
_LE_F64 = np.dtype("<f8")


@dataclass
class Checkpoint:
    parameters: Dict[str, np.ndarray]
    registry: Optional[Dict[str, Any]] = None
    model_config: Optional[Dict[str, Any]] = None
    metadata: Dict[str, Any] = field(default_factory=dict)


def save_checkpoint(
    path: Union[str, Path],
    parameters: Mapping[str, np.ndarray],
    registry: Optional[Dict[str, Any]] = None,
    model_config: Optional[Dict[str, Any]] = None,
    metadata: Optional[Dict[str, Any]] = None,
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    entries = []
    chunks = []
    offset = 0
    for name, value in parameters.items():
        array = np.asarray(value, dtype=_LE_F64)
        entries.append({"name": name, "shape": list(array.shape), "offset": offset})
        chunks.append(array.tobytes(order="C"))
        offset += array.size

    header = {
        "format_version": FORMAT_VERSION,
        "parameters": entries,
        "registry": registry,
        "model_config": model_config,
        "metadata": metadata or {},
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")

    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(header_bytes)))
        f.write(header_bytes)
        for chunk in chunks:
            f.write(chunk)
    return path


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}")

    if blob[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path} is not a bataxis checkpoint (bad magic)")
    start = len(MAGIC)
    if len(blob) < start + 4:
        raise CheckpointError(f"{path}: truncated header length")
    (header_len,) = struct.unpack("<I", blob[start : start + 4])
    start += 4
    try:
        header = json.loads(blob[start : start + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: unreadable header: {exc}")
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: unsupported format_version {header.get('format_version')!r}"
        )

    payload = blob[start + header_len :]
    total = len(payload) // _LE_F64.itemsize
    parameters: Dict[str, np.ndarray] = OrderedDict()
    for entry in header["parameters"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        if entry["offset"] + count > total:
            raise CheckpointError(f"{path}: payload truncated at parameter {entry['name']!r}")
        values = np.frombuffer(
            payload, dtype=_LE_F64, count=count, offset=entry["offset"] * _LE_F64.itemsize
        )
        parameters[entry["name"]] = values.astype(np.float64).reshape(shape)

    return Checkpoint(
        parameters=parameters,
        registry=header.get("registry"),
        model_config=header.get("model_config"),
        metadata=header.get("metadata") or {},
    )
