"""Standalone writer for the `.rpm` tensor container and `.calib.json`
documents.

These formats are the published interface of the pruning toolkit; the
exporter writes them directly so it has no code dependency on the toolkit
itself. Layout: 4-byte magic "RPM1", u32 little-endian manifest length,
canonical (sorted-key, compact) JSON manifest, then the tensors
concatenated row-major as little-endian float32.
"""

import json
import struct

import numpy as np

MAGIC = b"RPM1"
FORMAT_VERSION = "1"


def canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def write_container(manifest: dict, tensors: list, path) -> None:
    """tensors is an ordered list of (name, 1-D or 2-D array) pairs."""
    entries = []
    blobs = []
    offset = 0
    for name, arr in tensors:
        arr = np.ascontiguousarray(arr, dtype=np.float32)
        if arr.size == 0:
            raise ValueError(f"tensor {name!r} is empty")
        if arr.ndim == 1:
            rows, cols = 1, arr.shape[0]
        elif arr.ndim == 2:
            rows, cols = arr.shape
        else:
            raise ValueError(f"tensor {name!r} must be 1-D or 2-D")
        entries.append({"name": name, "rows": rows, "cols": cols,
                        "byte_offset": offset})
        raw = arr.astype("<f4").tobytes(order="C")
        blobs.append(raw)
        offset += len(raw)
    manifest = dict(manifest)
    manifest["version"] = FORMAT_VERSION
    manifest["tensors"] = entries
    header = canonical_json(manifest)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(header)))
        f.write(header)
        for raw in blobs:
            f.write(raw)


def write_calib(input_norms, layer_norms, sample_count: int,
                metadata: dict, path) -> None:
    doc = {
        "format": "calib.v1",
        "input_norms": [float(x) for x in input_norms],
        "layer_norms": [[float(x) for x in v] for v in layer_norms],
        "sample_count": int(sample_count),
        "metadata": metadata,
    }
    with open(path, "wb") as f:
        f.write(canonical_json(doc) + b"\n")
