"""Feature file serialization.

Layout (text header, then binary records):

    #EMOFUSE-FEAT v1
    #kind: llds | functionals | embedding
    #dim: <D>
    #frame_ms: 25          (sequence kinds only)
    #hop_ms: 10
    #feature_names: a,b,c  (optional)
    #end-header
    <id> <T> <D>\n         (ascii record line)
    ... T*D little-endian float32 ...

Functional/embedding records have T = 1. Readers return float64 arrays:
(T, D) matrices for 'llds', flat (D,) vectors otherwise.

External per-utterance embedding files (referenced from the manifest) are
plain text: whitespace-separated reals, one vector per file.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from emofuse.errors import EmofuseError

FEAT_MAGIC = b"#EMOFUSE-FEAT v1"
KINDS = ("llds", "functionals", "embedding")


class FeatureFileError(EmofuseError):
    def __init__(self, path, message: str):
        self.path = str(path)
        super().__init__(f"{self.path}: {message}")


def write_features(
    path,
    kind: str,
    records: dict[str, np.ndarray],
    feature_names: tuple[str, ...] | None = None,
    frame_ms: int | None = None,
    hop_ms: int | None = None,
):
    """Write id -> array records (vectors as (D,), sequences as (T, D))."""
    path = Path(path)
    if kind not in KINDS:
        raise FeatureFileError(path, f"unknown feature kind {kind!r}")
    if not records:
        raise FeatureFileError(path, "refusing to write an empty feature file")
    prepared: list[tuple[str, np.ndarray]] = []
    dims = set()
    for utt_id, arr in records.items():
        if "\n" in utt_id or " " in utt_id:
            raise FeatureFileError(path, f"utterance id {utt_id!r} contains whitespace")
        a = np.asarray(arr, dtype=np.float64)
        if a.ndim == 1:
            a = a[None, :]
        if not np.all(np.isfinite(a)):
            raise FeatureFileError(path, f"non-finite features for utterance {utt_id!r}")
        dims.add(a.shape[1])
        prepared.append((utt_id, a))
    if len(dims) != 1:
        raise FeatureFileError(
            path, f"inconsistent feature dimensions across records: {sorted(dims)}"
        )
    dim = dims.pop()
    if feature_names is not None and len(feature_names) != dim:
        raise FeatureFileError(path, f"{len(feature_names)} feature names for dimension {dim}")

    with open(path, "wb") as f:
        f.write(FEAT_MAGIC + b"\n")
        f.write(f"#kind: {kind}\n".encode())
        f.write(f"#dim: {dim}\n".encode())
        if frame_ms is not None:
            f.write(f"#frame_ms: {frame_ms}\n".encode())
        if hop_ms is not None:
            f.write(f"#hop_ms: {hop_ms}\n".encode())
        if feature_names is not None:
            f.write(("#feature_names: " + ",".join(feature_names) + "\n").encode())
        f.write(b"#end-header\n")
        for utt_id, a in prepared:
            f.write(f"{utt_id} {a.shape[0]} {a.shape[1]}\n".encode())
            f.write(np.ascontiguousarray(a, dtype="<f4").tobytes())


def read_features(path) -> tuple[str, dict[str, np.ndarray], dict]:
    """Returns (kind, records, header) where header carries dim/names/frame info."""
    path = Path(path)
    if not path.is_file():
        raise FeatureFileError(path, "feature file not found")
    with open(path, "rb") as f:
        if f.readline().rstrip(b"\n") != FEAT_MAGIC:
            raise FeatureFileError(path, f"missing magic line {FEAT_MAGIC.decode()!r}")
        header: dict = {}
        while True:
            line = f.readline()
            if not line:
                raise FeatureFileError(path, "truncated header (no #end-header)")
            line = line.rstrip(b"\n")
            if line == b"#end-header":
                break
            try:
                key, value = line.decode().lstrip("#").split(": ", 1)
            except ValueError:
                raise FeatureFileError(path, f"bad header line {line!r}") from None
            header[key] = value
        kind = header.get("kind")
        if kind not in KINDS:
            raise FeatureFileError(path, f"unknown feature kind {kind!r}")
        try:
            dim = int(header["dim"])
        except (KeyError, ValueError):
            raise FeatureFileError(path, "missing or bad #dim header") from None
        header["dim"] = dim
        for key in ("frame_ms", "hop_ms"):
            if key in header:
                try:
                    header[key] = int(header[key])
                except ValueError:
                    raise FeatureFileError(path, f"bad #{key} header") from None
        if "feature_names" in header:
            header["feature_names"] = tuple(header["feature_names"].split(","))

        records: dict[str, np.ndarray] = {}
        while True:
            line = f.readline()
            if not line:
                break
            parts = line.rstrip(b"\n").decode().split(" ")
            if len(parts) != 3:
                raise FeatureFileError(path, f"bad record line {line!r}")
            utt_id, t_str, d_str = parts
            try:
                t, d = int(t_str), int(d_str)
            except ValueError:
                raise FeatureFileError(path, f"bad record line {line!r}") from None
            if d != dim:
                raise FeatureFileError(
                    path, f"record {utt_id!r} declares dim {d}, header says {dim}"
                )
            if utt_id in records:
                raise FeatureFileError(path, f"duplicate record id {utt_id!r}")
            payload = f.read(t * d * 4)
            if len(payload) != t * d * 4:
                raise FeatureFileError(path, f"truncated payload for record {utt_id!r}")
            arr = np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(t, d)
            records[utt_id] = arr if kind == "llds" else arr[0]
        return kind, records, header


def load_embedding(path, expected_dim: int | None = None) -> np.ndarray:
    """Load one plain-text embedding vector (whitespace-separated reals)."""
    path = Path(path)
    if not path.is_file():
        raise FeatureFileError(path, "embedding file not found")
    try:
        vec = np.array([float(tok) for tok in path.read_text().split()], dtype=np.float64)
    except ValueError as e:
        raise FeatureFileError(path, f"non-numeric embedding entry ({e})") from None
    if vec.size == 0:
        raise FeatureFileError(path, "empty embedding file")
    if not np.all(np.isfinite(vec)):
        raise FeatureFileError(path, "non-finite embedding entry")
    if expected_dim is not None and vec.size != expected_dim:
        raise FeatureFileError(path, f"expected {expected_dim} dims, found {vec.size}")
    return vec


def write_embedding(path, vec: np.ndarray):
    vec = np.asarray(vec, dtype=np.float64)
    Path(path).write_text(" ".join(f"{v:.10g}" for v in vec) + "\n")
