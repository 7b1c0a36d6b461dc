"""Versioned binary checkpoint container.

Layout: magic, format version, manifest length, JSON manifest (config,
stage, metric history, tensor table), then raw little-endian tensor
payloads at the recorded offsets. Loading reads and validates the whole
file before any state is handed out, so failures never leave partial state.
"""

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"PXFL"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIQ")


class CheckpointError(Exception):
    pass


class CorruptCheckpointError(CheckpointError):
    pass


class VersionMismatchError(CheckpointError):
    pass


def save_checkpoint(path, state, extra=None):
    """state: flat name -> ndarray mapping; extra: JSON-serializable manifest fields."""
    tensors = []
    payload = bytearray()
    for name in sorted(state):
        arr = np.ascontiguousarray(state[name])
        le = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
        raw = le.tobytes()
        tensors.append({
            "name": name,
            "dtype": le.dtype.str,
            "shape": list(arr.shape),
            "offset": len(payload),
            "nbytes": len(raw),
        })
        payload.extend(raw)
    manifest = dict(extra or {})
    manifest["format_version"] = FORMAT_VERSION
    manifest["tensors"] = tensors
    manifest["payload_nbytes"] = len(payload)
    mbytes = json.dumps(manifest).encode()
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, len(mbytes)))
        fh.write(mbytes)
        fh.write(payload)


def load_checkpoint(path):
    """Returns (state dict, manifest dict); validates structure end to end."""
    blob = Path(path).read_bytes()
    if len(blob) < _HEADER.size:
        raise CorruptCheckpointError(f"{path}: file shorter than header")
    magic, version, mlen = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise CorruptCheckpointError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise VersionMismatchError(
            f"{path}: format version {version}, this build reads {FORMAT_VERSION}")
    if len(blob) < _HEADER.size + mlen:
        raise CorruptCheckpointError(f"{path}: truncated manifest")
    try:
        manifest = json.loads(blob[_HEADER.size : _HEADER.size + mlen])
    except json.JSONDecodeError as e:
        raise CorruptCheckpointError(f"{path}: manifest is not valid JSON: {e}") from None
    payload = blob[_HEADER.size + mlen :]
    if len(payload) != manifest.get("payload_nbytes", -1):
        raise CorruptCheckpointError(
            f"{path}: payload is {len(payload)} bytes, manifest says {manifest.get('payload_nbytes')}")
    state = {}
    for t in manifest["tensors"]:
        raw = payload[t["offset"] : t["offset"] + t["nbytes"]]
        if len(raw) != t["nbytes"]:
            raise CorruptCheckpointError(f"{path}: tensor {t['name']!r} truncated")
        state[t["name"]] = np.frombuffer(raw, dtype=np.dtype(t["dtype"])).reshape(t["shape"])
    return state, manifest


def state_digest(state):
    """Stable SHA-256 over a flat tensor mapping; used by freeze contracts."""
    h = hashlib.sha256()
    for name in sorted(state):
        arr = np.ascontiguousarray(state[name])
        h.update(name.encode())
        h.update(str(arr.dtype).encode())
        h.update(str(arr.shape).encode())
        h.update(arr.tobytes())
    return h.hexdigest()
