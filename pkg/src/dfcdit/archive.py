"""Weight archive: a length-prefixed JSON header followed by raw tensors.

Layout::

    uint64 little-endian   header length in bytes
    UTF-8 JSON             header
    payload                little-endian float32, row-major, one tensor
                           after another at the offsets the header lists

Header keys: ``format``, ``version``, ``architecture``, ``config`` (free-form
architecture parameters), ``means`` (optional per-channel preprocessing
means) and ``tensors`` (ordered list of ``{name, shape, offset}``; offsets
are relative to the payload start).
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import ArchiveError

FORMAT_NAME = "dfc-dit-weights"
FORMAT_VERSION = 1
_LEN = struct.Struct("<Q")
_LE_F32 = np.dtype("<f4")


def build_header(architecture, tensors, config=None, means=None, extra=None) -> dict:
    entries = []
    offset = 0
    for name, arr in tensors.items():
        shape = [int(s) for s in np.shape(arr)]
        entries.append({"name": name, "shape": shape, "offset": offset})
        offset += int(np.prod(shape, dtype=np.int64)) * 4
    header = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "architecture": architecture,
        "config": dict(config or {}),
        "tensors": entries,
    }
    if means is not None:
        header["means"] = [float(m) for m in means]
    if extra:
        header["extra"] = extra
    return header


def dumps(architecture, tensors, config=None, means=None, extra=None) -> bytes:
    header = build_header(architecture, tensors, config, means, extra)
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [_LEN.pack(len(blob)), blob]
    for arr in tensors.values():
        parts.append(np.ascontiguousarray(arr, dtype=_LE_F32).tobytes())
    return b"".join(parts)


def save(path, architecture, tensors, config=None, means=None, extra=None):
    Path(path).write_bytes(dumps(architecture, tensors, config, means, extra))


def loads(data: bytes, source="<bytes>"):
    """Parse an archive. Returns ``(header, {name: float32 array})``."""
    if len(data) < _LEN.size:
        raise ArchiveError(f"{source}: truncated archive (no header length)")
    (hlen,) = _LEN.unpack_from(data)
    if _LEN.size + hlen > len(data):
        raise ArchiveError(f"{source}: truncated archive (header claims {hlen} bytes)")
    try:
        header = json.loads(data[_LEN.size : _LEN.size + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ArchiveError(f"{source}: unreadable archive header ({exc})") from None
    if not isinstance(header, dict) or header.get("format") != FORMAT_NAME:
        raise ArchiveError(f"{source}: not a {FORMAT_NAME} archive")
    if header.get("version") != FORMAT_VERSION:
        raise ArchiveError(f"{source}: unsupported archive version {header.get('version')!r}")
    payload = memoryview(data)[_LEN.size + hlen :]
    tensors = {}
    for entry in header.get("tensors", []):
        name = entry.get("name")
        try:
            shape = tuple(int(s) for s in entry["shape"])
            offset = int(entry["offset"])
        except (KeyError, TypeError, ValueError):
            raise ArchiveError(f"{source}: malformed tensor entry {name!r}") from None
        nbytes = int(np.prod(shape, dtype=np.int64)) * 4
        if offset < 0 or offset + nbytes > len(payload):
            raise ArchiveError(f"{source}: truncated payload for tensor {name!r}")
        arr = np.frombuffer(payload[offset : offset + nbytes], dtype=_LE_F32).reshape(shape)
        tensors[name] = arr.astype(np.float32)
    return header, tensors


def load(path):
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise ArchiveError(f"{path}: cannot read archive ({exc.strerror})") from None
    return loads(data, str(path))


def require(tensors, name, shape, source="archive"):
    """Fetch ``name`` and check its shape, naming the tensor on failure."""
    if name not in tensors:
        raise ArchiveError(f"{source}: missing tensor {name!r}")
    arr = tensors[name]
    if tuple(arr.shape) != tuple(shape):
        raise ArchiveError(f"{source}: tensor {name!r} has shape {tuple(arr.shape)}, expected {tuple(shape)}")
    return arr
