"""File formats and reports.

Vector ingestion supports the two de-facto ANN benchmark formats:

  fvecs: repeated records [int32 d][d * float32], little-endian
  fbin:  header [int32 N][int32 d], then N*d float32, little-endian

Loading streams in chunks (peak memory = output + one chunk buffer) and
validates record dims and finiteness. Centroid models persist in a small
versioned container with a CRC32 checksum; run reports are versioned JSON.
"""

from __future__ import annotations

import hashlib
import json
import struct
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .evaluation import GroundTruth
from .model import (
    ChecksumMismatch,
    InconsistentDim,
    MalformedHeader,
    NonFiniteValue,
    TruncatedFile,
    VersionMismatch,
)

MODEL_MAGIC = b"SKMC"
MODEL_VERSION = 1
REPORT_VERSION = 1
GT_MAGIC = b"SKGT"

_CHUNK_ROWS = 4096


def infer_format(path) -> str:
    suffix = Path(path).suffix.lower()
    if suffix == ".fvecs":
        return "fvecs"
    if suffix in (".fbin", ".bin"):
        return "fbin"
    raise MalformedHeader(f"cannot infer format from suffix {suffix!r}")


def _check_finite(chunk: np.ndarray, row_base: int) -> None:
    if not np.all(np.isfinite(chunk)):
        r, c = np.argwhere(~np.isfinite(chunk))[0]
        raise NonFiniteValue(row_base + int(r), int(c))


def _load_fvecs(path) -> np.ndarray:
    size = Path(path).stat().st_size
    if size < 4:
        raise MalformedHeader(f"{path}: too small for an fvecs header")
    with open(path, "rb") as f:
        dim = struct.unpack("<i", f.read(4))[0]
        if dim <= 0:
            raise MalformedHeader(f"{path}: first record declares dim {dim}")
        f.seek(0)
        rec_size = 4 * (dim + 1)
        n_rows = size // rec_size
        leftover = size - n_rows * rec_size
        rec_dtype = np.dtype([("dim", "<i4"), ("vec", "<f4", (dim,))])
        out = np.empty((n_rows, dim), dtype=np.float32)
        done = 0
        while done < n_rows:
            chunk = np.fromfile(f, dtype=rec_dtype, count=min(_CHUNK_ROWS, n_rows - done))
            bad = np.flatnonzero(chunk["dim"] != dim)
            if bad.size:
                row = done + int(bad[0])
                raise InconsistentDim(row, dim, int(chunk["dim"][bad[0]]))
            _check_finite(chunk["vec"], done)
            out[done : done + len(chunk)] = chunk["vec"]
            done += len(chunk)
        if leftover:
            if leftover >= 4:
                trail_dim = struct.unpack("<i", f.read(4))[0]
                if trail_dim != dim:
                    raise InconsistentDim(n_rows, dim, trail_dim)
            raise TruncatedFile(f"{path}: {leftover} trailing bytes after {n_rows} records")
    return out


def _load_fbin(path) -> np.ndarray:
    size = Path(path).stat().st_size
    if size < 8:
        raise MalformedHeader(f"{path}: too small for an fbin header")
    with open(path, "rb") as f:
        n_rows, dim = struct.unpack("<ii", f.read(8))
        if n_rows < 0 or dim <= 0:
            raise MalformedHeader(f"{path}: header declares N={n_rows}, d={dim}")
        available = (size - 8) // 4
        if available < n_rows * dim:
            raise TruncatedFile(
                f"{path}: header promises {n_rows * dim} floats, file holds {available}"
            )
        out = np.empty((n_rows, dim), dtype=np.float32)
        done = 0
        while done < n_rows:
            rows = min(_CHUNK_ROWS, n_rows - done)
            chunk = np.fromfile(f, dtype="<f4", count=rows * dim).reshape(rows, dim)
            _check_finite(chunk, done)
            out[done : done + rows] = chunk
            done += rows
    return out


def load_vectors(path, fmt: str | None = None, normalize: bool = False) -> np.ndarray:
    """Load a vector file; optionally L2-normalize rows (angular -> L2)."""
    fmt = fmt or infer_format(path)
    if fmt == "fvecs":
        out = _load_fvecs(path)
    elif fmt == "fbin":
        out = _load_fbin(path)
    else:
        raise MalformedHeader(f"unknown format {fmt!r}")
    if normalize:
        norms = np.linalg.norm(out, axis=1, keepdims=True)
        norms[norms == 0] = 1.0
        out /= norms
    return out


def write_fvecs(path, x: np.ndarray) -> None:
    x = np.ascontiguousarray(x, dtype=np.float32)
    n, d = x.shape
    rec = np.empty(n, dtype=np.dtype([("dim", "<i4"), ("vec", "<f4", (d,))]))
    rec["dim"] = d
    rec["vec"] = x
    rec.tofile(path)


def write_fbin(path, x: np.ndarray) -> None:
    x = np.ascontiguousarray(x, dtype=np.float32)
    with open(path, "wb") as f:
        f.write(struct.pack("<ii", x.shape[0], x.shape[1]))
        x.tofile(f)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


@dataclass
class CentroidModel:
    """A persisted index: centroids in the original space plus the rotation seed."""

    centroids: np.ndarray
    rotation_seed: int
    cluster_lists: list | None = None

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]


def save_centroids(path, centroids: np.ndarray, rotation_seed: int,
                   cluster_lists=None) -> None:
    centroids = np.ascontiguousarray(centroids, dtype=np.float32)
    k, d = centroids.shape
    meta = {
        "k": k,
        "dim": d,
        "rotation_seed": int(rotation_seed),
        "has_lists": cluster_lists is not None,
    }
    meta_bytes = json.dumps(meta, sort_keys=True).encode()
    payload = bytearray(centroids.tobytes())
    if cluster_lists is not None:
        lengths = np.asarray([len(c) for c in cluster_lists], dtype=np.int64)
        flat = np.concatenate([np.asarray(c, dtype=np.int64) for c in cluster_lists]) \
            if lengths.sum() else np.empty(0, dtype=np.int64)
        payload += lengths.tobytes()
        payload += flat.tobytes()
    crc = zlib.crc32(meta_bytes + bytes(payload))
    with open(path, "wb") as f:
        f.write(MODEL_MAGIC)
        f.write(struct.pack("<I", MODEL_VERSION))
        f.write(struct.pack("<Q", len(meta_bytes)))
        f.write(meta_bytes)
        f.write(payload)
        f.write(struct.pack("<I", crc))


def load_centroids(path) -> CentroidModel:
    raw = Path(path).read_bytes()
    if len(raw) < 20 or raw[:4] != MODEL_MAGIC:
        raise MalformedHeader(f"{path}: not a centroid model file")
    version = struct.unpack("<I", raw[4:8])[0]
    if version != MODEL_VERSION:
        raise VersionMismatch(
            f"{path}: file version {version}, this build reads version {MODEL_VERSION}"
        )
    meta_len = struct.unpack("<Q", raw[8:16])[0]
    meta_end = 16 + meta_len
    body, crc_stored = raw[16:-4], struct.unpack("<I", raw[-4:])[0]
    if zlib.crc32(body) != crc_stored:
        raise ChecksumMismatch(f"{path}: checksum mismatch, file is corrupted")
    meta = json.loads(raw[16:meta_end].decode())
    k, d = meta["k"], meta["dim"]
    pos = meta_end
    cent_bytes = k * d * 4
    centroids = np.frombuffer(raw[pos : pos + cent_bytes], dtype=np.float32).reshape(k, d).copy()
    pos += cent_bytes
    lists = None
    if meta["has_lists"]:
        lengths = np.frombuffer(raw[pos : pos + 8 * k], dtype=np.int64)
        pos += 8 * k
        flat = np.frombuffer(raw[pos : pos + 8 * int(lengths.sum())], dtype=np.int64)
        lists = np.split(flat.copy(), np.cumsum(lengths)[:-1])
    return CentroidModel(centroids=centroids, rotation_seed=meta["rotation_seed"],
                         cluster_lists=lists)


def save_ground_truth(path, gt: GroundTruth) -> None:
    with open(path, "wb") as f:
        f.write(GT_MAGIC)
        f.write(struct.pack("<II", gt.indices.shape[0], gt.indices.shape[1]))
        gt.indices.astype("<i4").tofile(f)
        gt.distances.astype("<f4").tofile(f)


def load_ground_truth(path) -> GroundTruth:
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != GT_MAGIC:
        raise MalformedHeader(f"{path}: not a ground-truth file")
    nq, k = struct.unpack("<II", raw[4:12])
    need = 12 + nq * k * 8
    if len(raw) < need:
        raise TruncatedFile(f"{path}: expected {need} bytes, found {len(raw)}")
    idx = np.frombuffer(raw[12 : 12 + nq * k * 4], dtype="<i4").reshape(nq, k)
    dist = np.frombuffer(raw[12 + nq * k * 4 : need], dtype="<f4").reshape(nq, k)
    return GroundTruth(indices=idx.astype(np.int64), distances=dist.astype(np.float32),
                       k_gt=k)


@dataclass
class RunReport:
    """Structured, versioned record of a fit or eval run.

    JSON round-trips losslessly; `comparable()` drops wall-clock fields so
    two runs can be diffed for determinism.
    """

    command: str
    config: dict
    dataset: dict
    iterations: list
    final_metrics: dict
    phase_seconds: dict
    terminated_by: str
    notes: dict = field(default_factory=dict)
    version: int = REPORT_VERSION

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunReport":
        data = json.loads(text)
        version = data.pop("version")
        if version != REPORT_VERSION:
            raise VersionMismatch(f"report version {version} != {REPORT_VERSION}")
        return cls(version=version, **data)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "RunReport":
        return cls.from_json(Path(path).read_text())

    def comparable(self) -> dict:
        data = asdict(self)
        data.pop("phase_seconds", None)
        for it in data.get("iterations", []):
            it.pop("timings", None)
        data.get("final_metrics", {}).pop("wall_clock_seconds", None)
        return data
