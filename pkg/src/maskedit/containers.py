"""Versioned binary containers for checkpoints, latents, and editing vectors.

All three formats share one layout: a 4-byte magic/version tag, a canonical
JSON header (UTF-8, sorted keys) prefixed by its little-endian uint32 length,
then little-endian float32 array data concatenated in header order. The
header's ``arrays`` list records each blob's name and shape, which makes the
files self-describing.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import tempfile
from typing import Iterable

import numpy as np

CHECKPOINT_MAGIC = b"EGW1"
LATENT_MAGIC = b"EGL1"
VECTOR_MAGIC = b"EGV1"


class ContainerError(Exception):
    """Base error for container I/O."""


class CorruptFileError(ContainerError):
    """File is truncated or structurally invalid."""


class VersionMismatchError(ContainerError):
    """Magic tag found but with an unsupported version."""

    def __init__(self, found: str, expected: str):
        super().__init__(f"container version {found!r} not supported, expected {expected!r}")
        self.found = found
        self.expected = expected


def canonical_json(obj) -> bytes:
    """Canonical JSON bytes: sorted keys, no whitespace padding, UTF-8."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def write_container(path: str | os.PathLike, magic: bytes, meta: dict,
                    arrays: Iterable[tuple[str, np.ndarray]]) -> None:
    """Serialize named float32 arrays with a metadata header, atomically.

    The write goes to a temp file in the target directory followed by an
    atomic rename, so readers never observe a partially written file.
    """
    if len(magic) != 4:
        raise ValueError("magic must be 4 bytes")
    items = [(str(name), np.ascontiguousarray(arr, dtype="<f4")) for name, arr in arrays]
    header = dict(meta)
    header["arrays"] = [{"name": name, "shape": list(arr.shape)} for name, arr in items]
    header_bytes = canonical_json(header)

    payload = bytearray()
    payload += magic
    payload += struct.pack("<I", len(header_bytes))
    payload += header_bytes
    for _, arr in items:
        payload += arr.tobytes()

    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp_path = tempfile.mkstemp(dir=directory, prefix=".tmp-container-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(bytes(payload))
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise


def read_container(path: str | os.PathLike, magic: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    """Read a container, returning (header metadata, name -> float32 array).

    Raises VersionMismatchError when the 3-byte family prefix matches but the
    version digit differs, CorruptFileError for anything else that is wrong.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 8:
        raise CorruptFileError(f"{path}: file too short to hold a header")
    found_magic = blob[:4]
    if found_magic != magic:
        if found_magic[:3] == magic[:3]:
            raise VersionMismatchError(found_magic.decode("ascii", "replace"),
                                       magic.decode("ascii"))
        raise CorruptFileError(f"{path}: bad magic {found_magic!r}, expected {magic!r}")
    (header_len,) = struct.unpack_from("<I", blob, 4)
    header_end = 8 + header_len
    if header_end > len(blob):
        raise CorruptFileError(f"{path}: truncated header")
    try:
        header = json.loads(blob[8:header_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptFileError(f"{path}: undecodable header ({exc})") from exc
    if not isinstance(header, dict) or "arrays" not in header:
        raise CorruptFileError(f"{path}: header missing arrays index")

    arrays: dict[str, np.ndarray] = {}
    offset = header_end
    for entry in header["arrays"]:
        shape = tuple(int(s) for s in entry["shape"])
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        nbytes = count * 4
        if offset + nbytes > len(blob):
            raise CorruptFileError(f"{path}: truncated data for array {entry['name']!r}")
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=offset).reshape(shape)
        arrays[entry["name"]] = arr.copy()
        offset += nbytes
    if offset != len(blob):
        raise CorruptFileError(f"{path}: {len(blob) - offset} trailing bytes after arrays")
    meta = {k: v for k, v in header.items() if k != "arrays"}
    return meta, arrays


def container_bytes(magic: bytes, meta: dict, arrays: Iterable[tuple[str, np.ndarray]]) -> bytes:
    """Serialize to bytes without touching disk (used for hashing)."""
    items = [(str(name), np.ascontiguousarray(arr, dtype="<f4")) for name, arr in arrays]
    header = dict(meta)
    header["arrays"] = [{"name": name, "shape": list(arr.shape)} for name, arr in items]
    header_bytes = canonical_json(header)
    out = bytearray()
    out += magic
    out += struct.pack("<I", len(header_bytes))
    out += header_bytes
    for _, arr in items:
        out += arr.tobytes()
    return bytes(out)


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()
