"""
Checkpoint container for faultsynth
-----------------------------------
Every trained generator (N2FGAN, CGAN, WGAN-GP) is stored in the same
binary N2FC container: a canonical JSON spec block followed by named
float32 tensors. The spec block carries a `kind` tag so each augmenter
knows how to rebuild its networks.
"""

import hashlib
import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from src.errors import CheckpointError

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"N2FC"
CHECKPOINT_VERSION = 1
KINDS = ("n2fgan", "cgan", "wgan_gp")


def canonical_json(document):
    return json.dumps(document, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def tensor_manifest_hash(tensors):
    """SHA-256 over the sorted (name, shape) list of a tensor mapping."""
    manifest = [[name, list(np.shape(tensors[name]))] for name in sorted(tensors)]
    return hashlib.sha256(canonical_json(manifest).encode("utf-8")).hexdigest()


@dataclass
class Checkpoint:
    """
    A trained model: `spec` is a JSON-serialisable description (network
    specs, training config, step, seed, condition, normalizers), `tensors`
    maps dotted names to float32 arrays (parameters, buffers, optimizer
    moments).
    """

    kind: str
    spec: dict
    tensors: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise CheckpointError(f"unknown checkpoint kind {self.kind!r}")

    def spec_block(self):
        document = dict(self.spec)
        document["kind"] = self.kind
        document["tensor_manifest"] = tensor_manifest_hash(self.tensors)
        return canonical_json(document).encode("utf-8")

    def prefixed(self, prefix):
        """Tensors under `prefix.` with the prefix stripped."""
        head = prefix + "."
        return {name[len(head):]: value for name, value in self.tensors.items() if name.startswith(head)}

    @property
    def step(self):
        return int(self.spec.get("step", 0))


def save_checkpoint(checkpoint, path):
    """Write `checkpoint` to `path`; tensors are stored in sorted-name order."""
    spec_bytes = checkpoint.spec_block()
    chunks = [CHECKPOINT_MAGIC, struct.pack("<H", CHECKPOINT_VERSION),
              struct.pack("<I", len(spec_bytes)), spec_bytes,
              struct.pack("<I", len(checkpoint.tensors))]
    for name in sorted(checkpoint.tensors):
        array = np.ascontiguousarray(checkpoint.tensors[name], dtype="<f4")
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<B", array.ndim))
        chunks.append(struct.pack(f"<{array.ndim}I", *array.shape))
        chunks.append(array.tobytes())
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(b"".join(chunks))
    logger.info("saved %s checkpoint (%d tensors) to %s", checkpoint.kind, len(checkpoint.tensors), path)
    return path


class _Reader:
    def __init__(self, raw, path):
        self.raw = raw
        self.pos = 0
        self.path = path

    def take(self, size):
        if self.pos + size > len(self.raw):
            raise CheckpointError(f"{self.path}: truncated at byte {self.pos}")
        chunk = self.raw[self.pos:self.pos + size]
        self.pos += size
        return chunk

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path):
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    reader = _Reader(path.read_bytes(), path)
    if reader.take(4) != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not an N2FC checkpoint")
    (version,) = reader.unpack("<H")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    (spec_len,) = reader.unpack("<I")
    try:
        document = json.loads(reader.take(spec_len).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: unreadable spec block ({exc})") from None
    (count,) = reader.unpack("<I")
    tensors = {}
    for _ in range(count):
        (name_len,) = reader.unpack("<H")
        name = reader.take(name_len).decode("utf-8")
        (rank,) = reader.unpack("<B")
        shape = reader.unpack(f"<{rank}I") if rank else ()
        size = int(np.prod(shape)) if rank else 1
        tensors[name] = np.frombuffer(reader.take(4 * size), dtype="<f4").reshape(shape).astype(np.float32)
    if reader.pos != len(reader.raw):
        raise CheckpointError(f"{path}: {len(reader.raw) - reader.pos} trailing bytes")

    kind = document.pop("kind", None)
    manifest = document.pop("tensor_manifest", None)
    if manifest != tensor_manifest_hash(tensors):
        raise CheckpointError(f"{path}: spec hash does not match stored tensors")
    return Checkpoint(kind, document, tensors)
