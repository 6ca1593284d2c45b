"""
Run utilities for faultsynth
----------------------------
File digests, run manifests and the output-directory helpers every CLI
command shares.
"""

import hashlib
import json
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

TOOL_NAME = "faultsynth"
TOOL_VERSION = "1.0.0"
MANIFEST_NAME = "manifest.json"


def file_digest(path, chunk_size=1 << 20):
    """SHA-256 hex digest of a file's bytes."""
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(chunk_size), b""):
            digest.update(chunk)
    return digest.hexdigest()


def file_digests(paths):
    return {str(p): file_digest(p) for p in paths}


def utc_now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    """
    What a command did: the resolved-config hash and input digests make a
    run checkable, the artifact list says what it produced.
    """

    command: str
    config_hash: str
    inputs: dict = field(default_factory=dict)
    artifacts: list = field(default_factory=list)
    started_at: str = field(default_factory=utc_now)
    finished_at: str = ""
    tool_version: str = f"{TOOL_NAME} {TOOL_VERSION}"

    def add_artifact(self, path):
        self.artifacts.append(str(path))
        return path

    def finish(self, out_dir):
        """Stamp the end time and write manifest.json into `out_dir`."""
        self.finished_at = utc_now()
        path = Path(out_dir) / MANIFEST_NAME
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path


def ensure_dir(path):
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    return path
