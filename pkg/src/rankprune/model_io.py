"""File formats: the `.rpm` tensor container (JSON manifest + raw float32
blob), the JSON documents for scores/calibration/prune plans, and the IDX
image/label wire format."""

import json
import struct
from pathlib import Path

import numpy as np

from .centrality import ImportanceScores
from .mlp_engine import CalibrationStats, Layer, MlpModel
from .pruner import PrunePlan

MAGIC = b"RPM1"
IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
FORMAT_VERSION = "1"


class ContainerError(ValueError):
    """Malformed `.rpm` container."""


class BadMagicError(ContainerError):
    pass


class TruncatedError(ContainerError):
    pass


class ManifestMismatchError(ContainerError):
    """Manifest and blob disagree (offsets, sizes, shapes)."""


def _canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def write_container(manifest: dict, tensors: list, path) -> None:
    """Write a container file: magic, u32-LE manifest length, canonical JSON
    manifest, concatenated row-major little-endian float32 tensors.

    `tensors` is an ordered list of (name, array) pairs; their layout is
    recorded in manifest["tensors"].
    """
    entries = []
    offset = 0
    blobs = []
    for name, arr in tensors:
        arr = np.asarray(arr, dtype=np.float32)
        if arr.ndim == 1:
            rows, cols = 1, arr.shape[0]
        elif arr.ndim == 2:
            rows, cols = arr.shape
        else:
            raise ContainerError(f"tensor {name!r} must be 1-D or 2-D")
        if arr.size == 0:
            raise ContainerError(f"tensor {name!r} is empty")
        entries.append({"name": name, "rows": rows, "cols": cols, "byte_offset": offset})
        raw = arr.astype("<f4").tobytes(order="C")
        blobs.append(raw)
        offset += len(raw)
    manifest = dict(manifest)
    manifest["version"] = FORMAT_VERSION
    manifest["tensors"] = entries
    header = _canonical_json(manifest)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(header)))
        f.write(header)
        for raw in blobs:
            f.write(raw)


def read_container(path):
    """Read a container file; returns (manifest, dict name -> float32 array)."""
    raw = Path(path).read_bytes()
    if len(raw) < 8:
        raise TruncatedError("file shorter than header")
    if raw[:4] != MAGIC:
        raise BadMagicError(f"bad magic {raw[:4]!r}")
    (manifest_len,) = struct.unpack("<I", raw[4:8])
    if len(raw) < 8 + manifest_len:
        raise TruncatedError("manifest extends past end of file")
    try:
        manifest = json.loads(raw[8:8 + manifest_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ContainerError(f"manifest is not valid JSON: {e}") from e
    blob = raw[8 + manifest_len:]

    tensors = {}
    prev_offset = -1
    expected_end = 0
    for entry in manifest.get("tensors", []):
        name, rows, cols = entry["name"], entry["rows"], entry["cols"]
        off = entry["byte_offset"]
        if off <= prev_offset or off % 4 != 0:
            raise ManifestMismatchError(
                f"tensor {name!r}: offsets must be strictly increasing and 4-byte aligned")
        prev_offset = off
        nbytes = rows * cols * 4
        if off + nbytes > len(blob):
            raise TruncatedError(f"tensor {name!r} extends past end of blob")
        arr = np.frombuffer(blob[off:off + nbytes], dtype="<f4").reshape(rows, cols)
        tensors[name] = arr.copy()
        expected_end = max(expected_end, off + nbytes)
    if expected_end != len(blob):
        raise ManifestMismatchError("blob size does not match manifest tensors")
    return manifest, tensors


# ---------------------------------------------------------------------------
# MLP models

def mlp_manifest(model: MlpModel) -> dict:
    return {
        "model_type": "mlp",
        "layers": [
            {"activation": l.activation, "rows": l.out_dim, "cols": l.in_dim}
            for l in model.layers
        ],
        "param_count": model.param_count(),
    }


def write_model(model, path) -> None:
    """Serialize an MLP or toy transformer to an `.rpm` container."""
    if isinstance(model, MlpModel):
        tensors = []
        for k, l in enumerate(model.layers):
            tensors.append((f"layers.{k}.weights", l.weights))
            tensors.append((f"layers.{k}.bias", l.bias))
        write_container(mlp_manifest(model), tensors, path)
        return
    from . import toy_transformer
    if isinstance(model, toy_transformer.ToyTransformer):
        toy_transformer.write_transformer(model, path)
        return
    raise TypeError(f"cannot serialize {type(model).__name__}")


def read_model(path):
    manifest, tensors = read_container(path)
    model_type = manifest.get("model_type")
    if model_type == "mlp":
        layers = []
        for k, desc in enumerate(manifest["layers"]):
            w = tensors[f"layers.{k}.weights"]
            b = tensors[f"layers.{k}.bias"].reshape(-1)
            if w.shape != (desc["rows"], desc["cols"]):
                raise ManifestMismatchError(f"layer {k} weight shape mismatch")
            layers.append(Layer(w, b, desc["activation"]))
        return MlpModel(layers)
    if model_type == "decoder_transformer":
        from . import toy_transformer
        return toy_transformer.transformer_from_container(manifest, tensors)
    raise ContainerError(f"unknown model_type {model_type!r}")


# ---------------------------------------------------------------------------
# JSON documents

def _write_json(doc: dict, path) -> None:
    Path(path).write_bytes(_canonical_json(doc) + b"\n")


def write_calib(stats: CalibrationStats, path) -> None:
    doc = {
        "format": "calib.v1",
        "input_norms": [float(x) for x in stats.input_norms],
        "layer_norms": [[float(x) for x in v] for v in stats.layer_norms],
        "sample_count": stats.sample_count,
        "metadata": stats.metadata,
    }
    _write_json(doc, path)


def read_calib(path) -> CalibrationStats:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != "calib.v1":
        raise ValueError(f"not a calibration file: {path}")
    return CalibrationStats(
        np.asarray(doc["input_norms"], dtype=np.float64),
        [np.asarray(v, dtype=np.float64) for v in doc["layer_norms"]],
        sample_count=doc["sample_count"],
        metadata=doc.get("metadata", {}),
    )


def write_scores(scores: ImportanceScores, path) -> None:
    doc = {
        "format": "scores.v1",
        "input_scores": [float(x) for x in scores.input_scores],
        "layer_scores": [[float(x) for x in v] for v in scores.layer_scores],
        "metadata": scores.metadata,
    }
    _write_json(doc, path)


def read_scores(path) -> ImportanceScores:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != "scores.v1":
        raise ValueError(f"not a scores file: {path}")
    return ImportanceScores(
        np.asarray(doc["input_scores"], dtype=np.float64),
        [np.asarray(v, dtype=np.float64) for v in doc["layer_scores"]],
        metadata=doc.get("metadata", {}),
    )


def write_plan(plan, path) -> None:
    from . import llm_chain
    if isinstance(plan, PrunePlan):
        doc = {
            "format": "plan.v1",
            "kind": "mlp",
            "layers": [{"layer": k, "indices": idx}
                       for k, idx in enumerate(plan.layer_indices)],
            "widths": plan.widths,
            "sparsity_local": plan.sparsity_local,
            "sparsity_overall_requested": plan.sparsity_overall_requested,
            "accounting": plan.accounting,
        }
    elif isinstance(plan, llm_chain.LlmPrunePlan):
        doc = {
            "format": "plan.v1",
            "kind": "decoder_transformer",
            "blocks": [{"block": b, "indices": idx}
                       for b, idx in enumerate(plan.block_indices)],
            "d_ff": plan.d_ff,
            "sparsity_local": plan.sparsity_local,
            "sparsity_overall_requested": plan.sparsity_overall_requested,
            "accounting": plan.accounting,
        }
    else:
        raise TypeError(f"cannot serialize plan of type {type(plan).__name__}")
    _write_json(doc, path)


def read_plan(path):
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != "plan.v1":
        raise ValueError(f"not a plan file: {path}")
    for group_key in ("layers", "blocks"):
        for entry in doc.get(group_key, []):
            idx = entry["indices"]
            if idx != sorted(set(idx)):
                raise ValueError("plan indices must be strictly increasing")
    if doc["kind"] == "mlp":
        plan = PrunePlan(
            [e["indices"] for e in doc["layers"]],
            doc["widths"], doc["sparsity_local"],
            doc.get("sparsity_overall_requested"),
        )
        plan.accounting = doc.get("accounting", {})
        return plan
    if doc["kind"] == "decoder_transformer":
        from . import llm_chain
        plan = llm_chain.LlmPrunePlan(
            [e["indices"] for e in doc["blocks"]],
            doc["d_ff"], doc["sparsity_local"],
            doc.get("sparsity_overall_requested"),
        )
        plan.accounting = doc.get("accounting", {})
        return plan
    raise ValueError(f"unknown plan kind {doc['kind']!r}")


# ---------------------------------------------------------------------------
# IDX datasets (MNIST wire format)

def read_idx_images(path) -> np.ndarray:
    """Images flattened to float vectors scaled into [0, 1]."""
    raw = Path(path).read_bytes()
    if len(raw) < 16:
        raise ValueError("IDX image file truncated before header")
    magic, count, rows, cols = struct.unpack(">IIII", raw[:16])
    if magic != IDX_IMAGES_MAGIC:
        raise ValueError(f"bad IDX image magic 0x{magic:08x}")
    need = 16 + count * rows * cols
    if len(raw) < need:
        raise ValueError("IDX image file truncated")
    pixels = np.frombuffer(raw[16:need], dtype=np.uint8)
    return pixels.reshape(count, rows * cols).astype(np.float64) / 255.0


def read_idx_labels(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 8:
        raise ValueError("IDX label file truncated before header")
    magic, count = struct.unpack(">II", raw[:8])
    if magic != IDX_LABELS_MAGIC:
        raise ValueError(f"bad IDX label magic 0x{magic:08x}")
    if len(raw) < 8 + count:
        raise ValueError("IDX label file truncated")
    return np.frombuffer(raw[8:8 + count], dtype=np.uint8).astype(np.int64)


def write_idx_images(images: np.ndarray, rows: int, cols: int, path) -> None:
    """Inverse of read_idx_images for fixtures; expects values in [0, 1]."""
    images = np.asarray(images)
    data = np.clip(np.round(images * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, data.shape[0], rows, cols))
        f.write(data.tobytes())


def write_idx_labels(labels: np.ndarray, path) -> None:
    labels = np.asarray(labels).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABELS_MAGIC, labels.shape[0]))
        f.write(labels.tobytes())
