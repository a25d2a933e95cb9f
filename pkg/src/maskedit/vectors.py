"""On-disk library of named editing vectors.

Vectors are latent-space objects tied to the generator whose latent space
they were learned in, so every record stores that generator's weights hash
and loading verifies it against the active generator.
"""

from __future__ import annotations

import os
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from maskedit import containers
from maskedit.containers import VECTOR_MAGIC, ContainerError
from maskedit.editing import EditingVector

VECTOR_SUFFIX = ".egv"


class VectorCompatibilityError(ValueError):
    def __init__(self, record_hash: str, active_hash: str):
        super().__init__(
            f"editing vector was learned against generator {record_hash[:12]}... "
            f"but the active generator is {active_hash[:12]}...")
        self.record_hash = record_hash
        self.active_hash = active_hash


@dataclass
class VectorRecord:
    vector: EditingVector
    generator_checkpoint_hash: str
    created_at: float = field(default_factory=time.time)
    notes: str = ""


def save_vector(record: VectorRecord, directory: str | os.PathLike) -> Path:
    """Write one record as <name>.egv; atomic, byte-exact round trip."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    vec = record.vector
    meta = {
        "name": vec.name,
        "label_set": sorted(vec.label_set),
        "source_image_hash": vec.source_image_hash,
        "trained_scale": vec.trained_scale,
        "generator_checkpoint_hash": record.generator_checkpoint_hash,
        "created_at": record.created_at,
        "notes": record.notes,
    }
    path = directory / f"{vec.name}{VECTOR_SUFFIX}"
    containers.write_container(path, VECTOR_MAGIC, meta, [("delta", vec.delta)])
    return path


def load_vector(path: str | os.PathLike, active_generator_hash: Optional[str] = None
                ) -> VectorRecord:
    """Read a record; verify compatibility when an active hash is given."""
    meta, arrays = containers.read_container(path, VECTOR_MAGIC)
    if "delta" not in arrays:
        raise containers.CorruptFileError(f"{path}: missing delta array")
    record = VectorRecord(
        vector=EditingVector(
            delta=arrays["delta"],
            name=meta["name"],
            label_set=frozenset(meta["label_set"]),
            source_image_hash=meta.get("source_image_hash", ""),
            trained_scale=float(meta.get("trained_scale", 1.0)),
        ),
        generator_checkpoint_hash=meta["generator_checkpoint_hash"],
        created_at=float(meta.get("created_at", 0.0)),
        notes=meta.get("notes", ""),
    )
    if (active_generator_hash is not None
            and record.generator_checkpoint_hash != active_generator_hash):
        raise VectorCompatibilityError(record.generator_checkpoint_hash, active_generator_hash)
    return record


@dataclass
class CatalogEntry:
    name: str
    path: str
    label_set: list[int]
    generator_checkpoint_hash: str
    created_at: float
    notes: str
    compatible: Optional[bool] = None


@dataclass
class VectorCatalog:
    entries: list[CatalogEntry] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "entries": [vars(e) for e in self.entries],
            "warnings": list(self.warnings),
        }


def list_vectors(directory: str | os.PathLike,
                 active_generator_hash: Optional[str] = None) -> VectorCatalog:
    """Catalog the .egv files in a directory, lexicographic by name.

    Unreadable files become warnings instead of failures; incompatible
    entries are flagged, not hidden.
    """
    directory = Path(directory)
    catalog = VectorCatalog()
    if not directory.is_dir():
        return catalog
    for path in sorted(directory.glob(f"*{VECTOR_SUFFIX}")):
        try:
            record = load_vector(path)
        except (ContainerError, KeyError, ValueError) as exc:
            message = f"{path.name}: unreadable vector file ({exc})"
            catalog.warnings.append(message)
            warnings.warn(message, stacklevel=2)
            continue
        compatible = None
        if active_generator_hash is not None:
            compatible = record.generator_checkpoint_hash == active_generator_hash
        catalog.entries.append(CatalogEntry(
            name=record.vector.name,
            path=str(path),
            label_set=sorted(record.vector.label_set),
            generator_checkpoint_hash=record.generator_checkpoint_hash,
            created_at=record.created_at,
            notes=record.notes,
            compatible=compatible,
        ))
    catalog.entries.sort(key=lambda e: e.name)
    return catalog
