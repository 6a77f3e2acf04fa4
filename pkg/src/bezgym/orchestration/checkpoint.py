"""Binary checkpoint container.

Layout (all integers little-endian)::

    magic      16 bytes  b"BEZGYM-CKPT\\x00\\x00\\x00\\x00\\x00"
    version    u32
    n_sections u32
    sections   n x (u32 name length, name utf-8, u64 payload length, payload)
    checksum   32 bytes  sha256 of everything above

Section ``meta`` is JSON holding every non-array value with arrays replaced
by ``{"__array__": k}``; section ``array.k`` is the ``.npy`` encoding of the
k-th array.  JSON keeps Python ints exact (generator states are 128-bit) and
``repr``-round-trips floats, so save followed by load is bitwise.
"""
from __future__ import annotations

import hashlib
import io
import json
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from bezgym.errors import CorruptFile, VersionMismatch

MAGIC = b"BEZGYM-CKPT" + b"\x00" * 5
FORMAT_VERSION = 1
CHECKSUM_BYTES = 32


@dataclass
class Checkpoint:
    trainer: dict                   # PpoTrainer.state_dict()
    config: dict                    # raw config mapping the run was built from
    config_hash: str
    stage_index: int = 0
    stage_iteration: int = 0        # iterations completed within the current stage
    stage_done: bool = False
    extra: dict = field(default_factory=dict)
    version: int = FORMAT_VERSION

    @property
    def iteration(self) -> int:
        return int(self.trainer.get("iteration", 0))


def _flatten(obj, arrays: list):
    if isinstance(obj, np.ndarray):
        arrays.append(obj)
        return {"__array__": len(arrays) - 1}
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, dict):
        if any(not isinstance(k, str) for k in obj):
            raise TypeError("checkpoint dict keys must be strings")
        return {k: _flatten(v, arrays) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_flatten(v, arrays) for v in obj]
    if obj is None or isinstance(obj, (bool, int, float, str)):
        return obj
    raise TypeError(f"cannot checkpoint value of type {type(obj).__name__}")


def _unflatten(obj, arrays: list):
    if isinstance(obj, dict):
        if set(obj) == {"__array__"}:
            return arrays[obj["__array__"]]
        return {k: _unflatten(v, arrays) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_unflatten(v, arrays) for v in obj]
    return obj


def _npy_bytes(a: np.ndarray) -> bytes:
    buf = io.BytesIO()
    np.lib.format.write_array(buf, np.ascontiguousarray(a), allow_pickle=False)
    return buf.getvalue()


def encode_checkpoint(ckpt: Checkpoint) -> bytes:
    arrays: list[np.ndarray] = []
    meta = {
        "trainer": _flatten(ckpt.trainer, arrays),
        "config": _flatten(ckpt.config, arrays),
        "config_hash": ckpt.config_hash,
        "stage_index": ckpt.stage_index,
        "stage_iteration": ckpt.stage_iteration,
        "stage_done": ckpt.stage_done,
        "extra": _flatten(ckpt.extra, arrays),
    }
    sections = [("meta", json.dumps(meta, sort_keys=True, allow_nan=True).encode())]
    sections += [(f"array.{k}", _npy_bytes(a)) for k, a in enumerate(arrays)]
    out = bytearray(MAGIC)
    out += struct.pack("<II", ckpt.version, len(sections))
    for name, payload in sections:
        raw_name = name.encode()
        out += struct.pack("<I", len(raw_name)) + raw_name
        out += struct.pack("<Q", len(payload)) + payload
    out += hashlib.sha256(out).digest()
    return bytes(out)


def decode_checkpoint(data: bytes, expected_hash: str | None = None) -> Checkpoint:
    if len(data) < len(MAGIC) + 8 + CHECKSUM_BYTES or data[:len(MAGIC)] != MAGIC:
        raise CorruptFile("not a checkpoint file (bad magic or too short)")
    version, n_sections = struct.unpack_from("<II", data, len(MAGIC))
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"checkpoint format {version}, this build reads {FORMAT_VERSION}")
    body, digest = data[:-CHECKSUM_BYTES], data[-CHECKSUM_BYTES:]
    if hashlib.sha256(body).digest() != digest:
        raise CorruptFile("checksum mismatch (truncated or modified file)")
    pos = len(MAGIC) + 8
    sections = {}
    try:
        for _ in range(n_sections):
            (n,) = struct.unpack_from("<I", body, pos)
            name = body[pos + 4:pos + 4 + n].decode()
            pos += 4 + n
            (size,) = struct.unpack_from("<Q", body, pos)
            pos += 8
            if pos + size > len(body):
                raise CorruptFile(f"section {name!r} runs past the end of the file")
            sections[name] = body[pos:pos + size]
            pos += size
    except struct.error as exc:
        raise CorruptFile(f"malformed section table: {exc}") from exc
    if pos != len(body) or "meta" not in sections:
        raise CorruptFile("section table does not cover the file")
    arrays = [np.lib.format.read_array(io.BytesIO(sections[f"array.{k}"]), allow_pickle=False)
              for k in range(len(sections) - 1)]
    meta = json.loads(sections["meta"])
    ckpt = Checkpoint(trainer=_unflatten(meta["trainer"], arrays), config=_unflatten(meta["config"], arrays),
                      config_hash=meta["config_hash"], stage_index=meta["stage_index"],
                      stage_iteration=meta["stage_iteration"], stage_done=meta["stage_done"],
                      extra=_unflatten(meta["extra"], arrays), version=version)
    if expected_hash is not None and expected_hash != ckpt.config_hash:
        warnings.warn(f"checkpoint config hash {ckpt.config_hash} differs from the current config "
                      f"{expected_hash}", stacklevel=2)
    return ckpt


def save_checkpoint(path, ckpt: Checkpoint) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(encode_checkpoint(ckpt))
    tmp.replace(path)
    return path


def load_checkpoint(path, expected_hash: str | None = None) -> Checkpoint:
    return decode_checkpoint(Path(path).read_bytes(), expected_hash)
