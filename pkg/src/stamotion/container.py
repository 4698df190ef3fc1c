"""Self-describing binary container: JSON manifest followed by raw sections.

Layout (all integers little-endian)::

    [0:8)        uint64  manifest length L in bytes
    [8:8+L)      UTF-8 JSON manifest
    [8+L:...)    payload; each section is a C-ordered array at its offset

Manifest keys: ``version`` (string), ``meta`` (free JSON), ``sections``
(list of ``{name, shape, dtype, offset, nbytes}``; offsets are relative
to the payload start). Section dtypes are ``<f4`` or ``<i4``.
"""

from __future__ import annotations

import json
import os
import struct

import numpy as np

_ALLOWED = {"<f4", "<i4"}


class ContainerError(Exception):
    """Base class for container read/write failures."""


class VersionError(ContainerError):
    pass


class CorruptSectionError(ContainerError):
    pass


class ShapeMismatchError(ContainerError):
    pass


class MissingFileError(ContainerError, FileNotFoundError):
    pass


def _coerce(arr):
    arr = np.asarray(arr)
    if np.issubdtype(arr.dtype, np.floating):
        return np.ascontiguousarray(arr, dtype="<f4")
    if np.issubdtype(arr.dtype, np.integer) or arr.dtype == bool:
        return np.ascontiguousarray(arr, dtype="<i4")
    raise ContainerError(f"unsupported dtype {arr.dtype}")


def write_container(path, version, sections, meta=None):
    """Write ``sections`` (ordered name -> array) to ``path`` atomically."""
    entries = []
    blobs = []
    offset = 0
    for name, arr in sections.items():
        a = _coerce(arr)
        entries.append({"name": name, "shape": list(a.shape), "dtype": a.dtype.str,
                        "offset": offset, "nbytes": a.nbytes})
        blobs.append(a.tobytes())
        offset += a.nbytes
    manifest = json.dumps({"version": version, "meta": meta or {}, "sections": entries},
                          sort_keys=True).encode("utf-8")
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(struct.pack("<Q", len(manifest)))
        fh.write(manifest)
        for b in blobs:
            fh.write(b)
    os.replace(tmp, path)


def read_manifest(path):
    if not os.path.exists(path):
        raise MissingFileError(f"no such file: {path}")
    with open(path, "rb") as fh:
        head = fh.read(8)
        if len(head) != 8:
            raise CorruptSectionError(f"{path}: file too short for header")
        (length,) = struct.unpack("<Q", head)
        raw = fh.read(length)
    if len(raw) != length:
        raise CorruptSectionError(f"{path}: manifest truncated")
    try:
        manifest = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptSectionError(f"{path}: unreadable manifest") from exc
    return manifest, 8 + length


def read_container(path, expected_version):
    """Return ``(meta, sections)``; raises on version or payload problems."""
    manifest, start = read_manifest(path)
    version = manifest.get("version")
    if version != expected_version:
        raise VersionError(f"{path}: version {version!r}, expected {expected_version!r}")
    with open(path, "rb") as fh:
        fh.seek(start)
        payload = fh.read()
    sections = {}
    for entry in manifest.get("sections", []):
        dtype = entry.get("dtype")
        if dtype not in _ALLOWED:
            raise CorruptSectionError(f"section {entry.get('name')!r}: bad dtype {dtype!r}")
        shape = tuple(entry["shape"])
        nbytes = int(np.prod(shape, dtype=np.int64)) * 4
        if nbytes != entry["nbytes"]:
            raise ShapeMismatchError(
                f"section {entry['name']!r}: shape {shape} disagrees with {entry['nbytes']} bytes")
        lo, hi = entry["offset"], entry["offset"] + nbytes
        if hi > len(payload):
            raise CorruptSectionError(f"section {entry['name']!r} truncated")
        sections[entry["name"]] = np.frombuffer(payload[lo:hi], dtype=dtype).reshape(shape).copy()
    return manifest.get("meta", {}), sections
