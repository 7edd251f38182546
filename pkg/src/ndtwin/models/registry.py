"""Directory-backed versioned model registry.

Each entry is a subdirectory holding the serialized parameters, a metadata
JSON (frozen at registration), and a SHA-256 digest guarding against
artifact corruption.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from .common import TrainedModel

PARAMS_FILE = "params.json"
METADATA_FILE = "metadata.json"
DIGEST_FILE = "digest.txt"


class RegistryError(Exception):
    pass


class DuplicateModelIdError(RegistryError):
    pass


class ModelNotFoundError(RegistryError):
    pass


class CorruptArtifactError(RegistryError):
    pass


@dataclass
class RegistryEntry:
    model_id: str
    kind: str
    metadata: dict


class ModelRegistry:
    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _entry_dir(self, model_id: str) -> Path:
        if not model_id or "/" in model_id or model_id.startswith("."):
            raise RegistryError(f"invalid model_id: {model_id!r}")
        return self.root / model_id

    def save(self, model: TrainedModel, model_id: str, metadata: dict = None) -> RegistryEntry:
        entry_dir = self._entry_dir(model_id)
        if entry_dir.exists():
            raise DuplicateModelIdError(model_id)
        entry_dir.mkdir(parents=True)
        params_bytes = json.dumps(model.to_dict(), sort_keys=True).encode()
        (entry_dir / PARAMS_FILE).write_bytes(params_bytes)
        digest = hashlib.sha256(params_bytes).hexdigest()
        (entry_dir / DIGEST_FILE).write_text(digest)
        meta = {
            "model_id": model_id,
            "kind": model.kind,
            "config": model.config,
            "feature_schema_hash": model.feature_schema_hash,
            "params_digest": digest,
            "created_at": datetime.now(timezone.utc).isoformat(),
            **(metadata or {}),
        }
        (entry_dir / METADATA_FILE).write_text(json.dumps(meta, indent=2, sort_keys=True))
        return RegistryEntry(model_id=model_id, kind=model.kind, metadata=meta)

    def load(self, model_id: str) -> TrainedModel:
        entry_dir = self._entry_dir(model_id)
        params_path = entry_dir / PARAMS_FILE
        if not params_path.exists():
            raise ModelNotFoundError(model_id)
        params_bytes = params_path.read_bytes()
        stored = (entry_dir / DIGEST_FILE).read_text().strip()
        if hashlib.sha256(params_bytes).hexdigest() != stored:
            raise CorruptArtifactError(f"digest mismatch for {model_id}")
        return TrainedModel.from_dict(json.loads(params_bytes))

    def get_metadata(self, model_id: str) -> dict:
        entry_dir = self._entry_dir(model_id)
        meta_path = entry_dir / METADATA_FILE
        if not meta_path.exists():
            raise ModelNotFoundError(model_id)
        return json.loads(meta_path.read_text())

    def list(self) -> list:
        entries = []
        for child in sorted(self.root.iterdir()):
            if child.is_dir() and (child / METADATA_FILE).exists():
                meta = json.loads((child / METADATA_FILE).read_text())
                entries.append(
                    RegistryEntry(model_id=child.name, kind=meta.get("kind", "?"), metadata=meta)
                )
        return entries
