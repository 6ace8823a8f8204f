"""Checkpoint serialization and the deployable model package.

Checkpoint layout (little-endian):

    8 bytes   magic "CSFCKPT\\0"
    u32       format version
    u32       metadata length N
    N bytes   UTF-8 JSON: {"config": ..., "dtype": "f32"|"f16",
               "tensors": [{"name", "shape", "offset", "nbytes"}, ...]}
    payload   packed tensor data, contiguous in table order
    u32       CRC32 of the payload

A package directory holds model.bin, tokenizer.json, config.json,
labels.json, and manifest.json (SHA-256 digest per file); it is sufficient
for inference with no other inputs.
"""

from __future__ import annotations

import hashlib
import json
import struct
import zlib
from collections import OrderedDict
from pathlib import Path

import numpy as np

from .model import ModelConfig, ModelParameters, parameter_shapes
from .schema import labels_mapping
from .tensor import Tensor
from .tokenizer import BpeTokenizer

MAGIC = b"CSFCKPT\x00"
FORMAT_VERSION = 1

MODEL_FILE = "model.bin"
TOKENIZER_FILE = "tokenizer.json"
CONFIG_FILE = "config.json"
LABELS_FILE = "labels.json"
MANIFEST_FILE = "manifest.json"
PACKAGE_FILES = (MODEL_FILE, TOKENIZER_FILE, CONFIG_FILE, LABELS_FILE)

_DTYPES = {"f32": np.float32, "f16": np.float16}


class StoreError(ValueError):
    pass


class CorruptCheckpointError(StoreError):
    pass


class VersionMismatchError(StoreError):
    pass


class MissingTensorError(StoreError):
    pass


def save_checkpoint(params: ModelParameters, config: ModelConfig, path, dtype: str = "f32") -> None:
    if dtype not in _DTYPES:
        raise StoreError(f"unsupported payload dtype {dtype!r}; expected one of {sorted(_DTYPES)}")
    np_dtype = np.dtype(_DTYPES[dtype]).newbyteorder("<")
    table = []
    chunks = []
    offset = 0
    for name, tensor in params:
        raw = np.ascontiguousarray(tensor.data, dtype=np_dtype).tobytes()
        table.append(
            {"name": name, "shape": list(tensor.shape), "offset": offset, "nbytes": len(raw)}
        )
        chunks.append(raw)
        offset += len(raw)
    payload = b"".join(chunks)
    meta = json.dumps(
        {"config": config.to_dict(), "dtype": dtype, "tensors": table},
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<I", len(meta)))
        fh.write(meta)
        fh.write(payload)
        fh.write(struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF))


def load_checkpoint(path) -> tuple[ModelParameters, ModelConfig]:
    blob = Path(path).read_bytes()
    if len(blob) < len(MAGIC) + 8 or blob[: len(MAGIC)] != MAGIC:
        raise CorruptCheckpointError(f"{path}: bad magic")
    version = struct.unpack_from("<I", blob, len(MAGIC))[0]
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    meta_len = struct.unpack_from("<I", blob, len(MAGIC) + 4)[0]
    meta_start = len(MAGIC) + 8
    payload_start = meta_start + meta_len
    if payload_start + 4 > len(blob):
        raise CorruptCheckpointError(f"{path}: truncated metadata")
    try:
        meta = json.loads(blob[meta_start:payload_start].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CorruptCheckpointError(f"{path}: unreadable metadata: {e}") from e
    payload = blob[payload_start:-4]
    (crc_stored,) = struct.unpack_from("<I", blob, len(blob) - 4)
    if zlib.crc32(payload) & 0xFFFFFFFF != crc_stored:
        raise CorruptCheckpointError(f"{path}: payload checksum mismatch")

    dtype = meta.get("dtype", "f32")
    if dtype not in _DTYPES:
        raise CorruptCheckpointError(f"{path}: unknown payload dtype {dtype!r}")
    np_dtype = np.dtype(_DTYPES[dtype]).newbyteorder("<")
    config = ModelConfig.from_dict(meta["config"])

    table = {entry["name"]: entry for entry in meta["tensors"]}
    expected_offset = 0
    for entry in meta["tensors"]:
        if entry["offset"] != expected_offset:
            raise CorruptCheckpointError(f"{path}: non-contiguous tensor table at {entry['name']}")
        expected_offset += entry["nbytes"]
    if expected_offset != len(payload):
        raise CorruptCheckpointError(
            f"{path}: payload is {len(payload)} bytes, table covers {expected_offset}"
        )

    tensors: "OrderedDict[str, Tensor]" = OrderedDict()
    for name, shape in parameter_shapes(config).items():
        entry = table.get(name)
        if entry is None:
            raise MissingTensorError(f"{path}: missing tensor {name}")
        if tuple(entry["shape"]) != shape:
            raise CorruptCheckpointError(
                f"{path}: tensor {name} has shape {entry['shape']}, expected {list(shape)}"
            )
        raw = payload[entry["offset"] : entry["offset"] + entry["nbytes"]]
        data = np.frombuffer(raw, dtype=np_dtype).reshape(shape).astype(np.float32)
        tensors[name] = Tensor(data.copy(), requires_grad=True, name=name)
    return ModelParameters(tensors), config


# -- package ------------------------------------------------------------------


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            digest.update(block)
    return "sha256:" + digest.hexdigest()


def build_package(
    params: ModelParameters,
    config: ModelConfig,
    tokenizer: BpeTokenizer,
    out_dir,
    dtype: str = "f32",
) -> dict:
    """Write the self-sufficient inference bundle; returns the manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(params, config, out / MODEL_FILE, dtype=dtype)
    tokenizer.save(out / TOKENIZER_FILE)
    (out / CONFIG_FILE).write_text(config.to_json(), encoding="utf-8")
    with open(out / LABELS_FILE, "w", encoding="utf-8") as fh:
        json.dump(labels_mapping(), fh, ensure_ascii=False, indent=1)
        fh.write("\n")
    files = {name: _sha256(out / name) for name in PACKAGE_FILES}
    manifest = {
        "files": files,
        "total_bytes": sum((out / name).stat().st_size for name in PACKAGE_FILES),
        "payload_dtype": dtype,
    }
    with open(out / MANIFEST_FILE, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return manifest


def load_package(package_dir) -> tuple[ModelParameters, ModelConfig, BpeTokenizer]:
    """Load and digest-check a package directory."""
    root = Path(package_dir)
    manifest_path = root / MANIFEST_FILE
    if not manifest_path.exists():
        raise StoreError(f"not a model package (no {MANIFEST_FILE}): {root}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    for name, digest in manifest["files"].items():
        target = root / name
        if not target.exists():
            raise StoreError(f"package file missing: {target}")
        actual = _sha256(target)
        if actual != digest:
            raise CorruptCheckpointError(f"digest mismatch for {target}: {actual} != {digest}")
    params, config = load_checkpoint(root / MODEL_FILE)
    file_config = ModelConfig.from_json((root / CONFIG_FILE).read_text(encoding="utf-8"))
    if file_config != config:
        raise StoreError(f"{CONFIG_FILE} disagrees with the checkpoint config")
    with open(root / LABELS_FILE, encoding="utf-8") as fh:
        if json.load(fh) != labels_mapping():
            raise StoreError(f"{LABELS_FILE} does not match the built-in schema")
    tokenizer = BpeTokenizer.load(root / TOKENIZER_FILE)
    return params, config, tokenizer
