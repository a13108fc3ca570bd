"""Versioned model checkpoints: JSON header plus raw float64 payload.

Layout:

    #EMOFUSE-CKPT v1\n
    <header_byte_length>\n
    <UTF-8 JSON, sorted keys>
    <concatenated little-endian float64 arrays, header manifest order>

The header stores kind, architecture, label vocabularies, normalization
statistics flagging, the training-config echo, and a parameter manifest of
(name, shape) pairs that locates each array in the payload. Loading a file
that declares a newer format version fails rather than guessing. A
save/load round trip is bit-exact, so reloaded models score identically.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from emofuse.errors import EmofuseError

CKPT_MAGIC = b"#EMOFUSE-CKPT v1"
FORMAT_VERSION = 1


class CheckpointError(EmofuseError):
    def __init__(self, path, message: str):
        self.path = str(path)
        super().__init__(f"{self.path}: {message}")


@dataclass
class Checkpoint:
    kind: str
    architecture: dict
    params: dict[str, np.ndarray]
    labels: dict[str, list[str]] = field(default_factory=dict)
    normalization: dict[str, np.ndarray] | None = None
    config: dict = field(default_factory=dict)

    def param(self, name: str) -> np.ndarray:
        if name not in self.params:
            raise KeyError(f"checkpoint has no parameter {name!r}")
        return self.params[name]


def save_checkpoint(ckpt: Checkpoint, path):
    path = Path(path)
    arrays: list[tuple[str, np.ndarray]] = []
    manifest = []
    for name, arr in ckpt.params.items():
        a = np.ascontiguousarray(np.asarray(arr, dtype=np.float64))
        arrays.append((name, a))
        manifest.append({"name": name, "shape": list(a.shape)})
    norm_header = None
    if ckpt.normalization is not None:
        norm_header = {}
        for key, arr in ckpt.normalization.items():
            a = np.ascontiguousarray(np.asarray(arr, dtype=np.float64))
            pname = f"__norm__.{key}"
            arrays.append((pname, a))
            manifest.append({"name": pname, "shape": list(a.shape)})
            norm_header[key] = pname
    header = {
        "format_version": FORMAT_VERSION,
        "kind": ckpt.kind,
        "architecture": ckpt.architecture,
        "labels": ckpt.labels,
        "normalization": norm_header,
        "params": manifest,
        "config": ckpt.config,
    }
    blob = json.dumps(header, sort_keys=True, ensure_ascii=False).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CKPT_MAGIC + b"\n")
        f.write(f"{len(blob)}\n".encode())
        f.write(blob)
        for _, a in arrays:
            f.write(a.astype("<f8", copy=False).tobytes())


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(path, "checkpoint file not found")
    with open(path, "rb") as f:
        magic = f.readline().rstrip(b"\n")
        if not magic.startswith(b"#EMOFUSE-CKPT"):
            raise CheckpointError(path, "not a checkpoint file (bad magic)")
        if magic != CKPT_MAGIC:
            raise CheckpointError(
                path, f"unsupported checkpoint version {magic.decode(errors='replace')!r}"
            )
        try:
            header_len = int(f.readline().rstrip(b"\n"))
        except ValueError:
            raise CheckpointError(path, "bad header length line") from None
        blob = f.read(header_len)
        if len(blob) != header_len:
            raise CheckpointError(path, "truncated header")
        try:
            header = json.loads(blob.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise CheckpointError(path, f"unreadable header ({e})") from None
        if header.get("format_version") != FORMAT_VERSION:
            raise CheckpointError(
                path, f"unsupported format_version {header.get('format_version')!r}"
            )
        params: dict[str, np.ndarray] = {}
        for entry in header["params"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape, dtype=np.int64)) if shape else 1
            payload = f.read(count * 8)
            if len(payload) != count * 8:
                raise CheckpointError(path, f"truncated payload at parameter {entry['name']!r}")
            params[entry["name"]] = np.frombuffer(payload, dtype="<f8").reshape(shape).copy()
        trailing = f.read(1)
        if trailing:
            raise CheckpointError(path, "unexpected trailing bytes after payload")
    normalization = None
    if header.get("normalization") is not None:
        normalization = {
            key: params.pop(pname) for key, pname in header["normalization"].items()
        }
    return Checkpoint(
        kind=header["kind"],
        architecture=header["architecture"],
        params=params,
        labels=header.get("labels", {}),
        normalization=normalization,
        config=header.get("config", {}),
    )
