"""Binary checkpoint format.

Layout::

    b"RREP1"                       5-byte magic
    uint32 little-endian           header length in bytes
    UTF-8 JSON header              version, architecture, metadata, manifest
    float32 little-endian blobs    one per manifest entry, in manifest order

The header is serialized with sorted keys and no whitespace so that
save -> load -> save is byte-identical.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from typing import Any, Dict, List

import numpy as np

from .nn.network import Network

MAGIC = b"RREP1"
FORMAT_VERSION = 1
_LEN = struct.Struct("<I")


class CheckpointError(Exception):
    """Base class for checkpoint format errors."""


class BadMagicError(CheckpointError):
    pass


class VersionMismatchError(CheckpointError):
    pass


class TruncatedBlobError(CheckpointError):
    pass


class SizeMismatchError(CheckpointError):
    """Parameter manifest disagrees with the architecture, or stray trailing bytes."""


@dataclass
class Checkpoint:
    network: Network
    metadata: Dict[str, Any] = field(default_factory=dict)
    version: int = FORMAT_VERSION

    @property
    def class_names(self) -> List[str]:
        return self.network.class_names


def _header_bytes(net: Network, meta: Dict[str, Any]) -> bytes:
    manifest = [{"name": k, "shape": list(t.shape)} for k, t in net.params.items()]
    header = {
        "version": FORMAT_VERSION,
        "architecture": net.architecture(),
        "metadata": meta,
        "manifest": manifest,
    }
    return json.dumps(header, sort_keys=True, separators=(",", ":"), ensure_ascii=False,
                      allow_nan=False).encode("utf-8")


def dumps_checkpoint(net: Network, meta: Dict[str, Any] | None = None) -> bytes:
    header = _header_bytes(net, dict(meta or {}))
    parts = [MAGIC, _LEN.pack(len(header)), header]
    for t in net.params.values():
        parts.append(np.ascontiguousarray(t.data, dtype="<f4").tobytes())
    return b"".join(parts)


def save_checkpoint(net: Network, meta: Dict[str, Any] | None, path: str) -> str:
    blob = dumps_checkpoint(net, meta)
    with open(path, "wb") as fh:
        fh.write(blob)
    return path


def loads_checkpoint(blob: bytes) -> Checkpoint:
    if len(blob) < len(MAGIC) or blob[:len(MAGIC)] != MAGIC:
        raise BadMagicError("not a checkpoint file (bad magic bytes)")
    pos = len(MAGIC)
    if len(blob) < pos + _LEN.size:
        raise TruncatedBlobError("file ends inside the header length field")
    (hlen,) = _LEN.unpack_from(blob, pos)
    pos += _LEN.size
    if len(blob) < pos + hlen:
        raise TruncatedBlobError(f"header declares {hlen} bytes, only {len(blob) - pos} present")
    try:
        header = json.loads(blob[pos:pos + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"malformed header: {exc}") from None
    pos += hlen

    version = header.get("version")
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"checkpoint version {version!r}, expected {FORMAT_VERSION}")

    arch = header["architecture"]
    probe = Network.from_architecture(arch)
    expected = {k: tuple(t.shape) for k, t in probe.params.items()}
    manifest = [(m["name"], tuple(m["shape"])) for m in header["manifest"]]
    if [m[0] for m in manifest] != list(expected):
        raise SizeMismatchError("parameter manifest names do not match the architecture")
    for name, shape in manifest:
        if expected[name] != shape:
            raise SizeMismatchError(f"parameter {name}: manifest shape {shape}, "
                                    f"architecture needs {expected[name]}")

    params = {}
    for name, shape in manifest:
        nbytes = 4 * int(np.prod(shape))
        if len(blob) < pos + nbytes:
            raise TruncatedBlobError(f"blob for {name} truncated")
        params[name] = np.frombuffer(blob, dtype="<f4", count=nbytes // 4, offset=pos) \
            .astype(np.float32).reshape(shape)
        pos += nbytes
    if pos != len(blob):
        raise SizeMismatchError(f"{len(blob) - pos} unexpected trailing bytes")
    return Checkpoint(Network.from_architecture(arch, params), header.get("metadata", {}), version)


def load_checkpoint(path: str) -> Checkpoint:
    with open(path, "rb") as fh:
        return loads_checkpoint(fh.read())
