"""Region feature vectors and sparse random projection.

Two feature sources exist: a built-in analytic descriptor (gradient-histogram
plus intensity cells, dim 144) that keeps the whole pipeline testable offline,
and externally computed network features ingested from LDDF files. Either way,
high-dimensional vectors are reduced with a database-friendly random
projection whose entries are drawn from {-sqrt(3), 0, +sqrt(3)} with
probabilities (1/6, 2/3, 1/6).
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .imaging import GrayImage, gradient_map, resize_bilinear
from .proposals import Box

RAW = "raw"
PROJECTED = "projected"

LDDF_MAGIC = b"LDDF"
LDDF_VERSION = 1

_PATCH = 32  # region patch edge
_GRID = 4  # spatial cells per axis
_BINS = 8  # orientation histogram bins
BUILTIN_DIM = _GRID * _GRID * (_BINS + 1)  # 128 histogram + 16 intensity dims

_SQRT3 = math.sqrt(3.0)


class FeatureFileError(ValueError):
    """Raised for malformed LDDF feature files."""


@dataclass(frozen=True, eq=False)
class FeatureVector:
    """Dense real vector, comparable via cosine once kinds match."""

    values: np.ndarray  # 1-D float32
    kind: str = RAW

    def __post_init__(self):
        if self.kind not in (RAW, PROJECTED):
            raise ValueError(f"unknown feature kind {self.kind!r}")
        if self.values.ndim != 1 or len(self.values) == 0:
            raise ValueError("feature values must be a non-empty 1-D array")
        if self.values.dtype != np.float32:
            raise ValueError("feature values must be float32")
        if not np.isfinite(self.values).all():
            raise ValueError("feature values must be finite")

    @property
    def dim(self) -> int:
        return len(self.values)

    @classmethod
    def from_array(cls, values, kind: str = RAW) -> FeatureVector:
        return cls(values=np.ascontiguousarray(values, dtype=np.float32), kind=kind)


@dataclass(frozen=True)
class ProjectionMatrix:
    """Seed-defined sparse projection; rows are regenerated on demand.

    Row ``i`` is drawn from a Philox counter-based generator keyed by
    ``(seed, i)``, so any row can be reproduced independently and the full
    d_out x d_in matrix never needs to be stored.
    """

    seed: int
    d_in: int
    d_out: int

    def __post_init__(self):
        if not (0 <= self.seed < 2**64):
            raise ValueError("seed must fit in an unsigned 64-bit integer")
        if not (1 <= self.d_out < self.d_in):
            raise ValueError(f"need 1 <= d_out < d_in, got d_out={self.d_out}, d_in={self.d_in}")

    def row_block(self, start: int, count: int) -> np.ndarray:
        """Materialise rows [start, start+count) as a (count, d_in) float32 array."""
        if start < 0 or start + count > self.d_out:
            raise ValueError("row block outside matrix")
        block = np.zeros((count, self.d_in), dtype=np.float32)
        for k in range(count):
            rng = np.random.Generator(np.random.Philox(key=[self.seed, start + k]))
            u = rng.random(self.d_in)
            row = block[k]
            row[u < 1.0 / 6.0] = _SQRT3
            row[u >= 5.0 / 6.0] = -_SQRT3
        return block

    def materialize(self) -> np.ndarray:
        return self.row_block(0, self.d_out)


def make_projection(seed: int, d_in: int, d_out: int) -> ProjectionMatrix:
    """Deterministic sparse projection matrix for (seed, d_in, d_out)."""
    return ProjectionMatrix(seed=seed, d_in=d_in, d_out=d_out)


def project_batch(matrix: ProjectionMatrix, vectors: np.ndarray) -> np.ndarray:
    """Project an (n, d_in) batch to (n, d_out), scaled by 1/sqrt(d_out).

    The scale makes projected Euclidean norms unbiased estimates of the input
    norms. Rows of the matrix are generated block-wise to bound memory.
    """
    vectors = np.ascontiguousarray(vectors, dtype=np.float32)
    if vectors.ndim != 2 or vectors.shape[1] != matrix.d_in:
        raise ValueError(f"expected (n, {matrix.d_in}) input, got {vectors.shape}")
    out = np.empty((vectors.shape[0], matrix.d_out), dtype=np.float32)
    block_rows = max(1, (32 << 20) // (4 * matrix.d_in))
    vt = vectors.T
    for start in range(0, matrix.d_out, block_rows):
        count = min(block_rows, matrix.d_out - start)
        block = matrix.row_block(start, count)
        out[:, start : start + count] = (block @ vt).T
    out *= np.float32(1.0 / math.sqrt(matrix.d_out))
    return out


def project(matrix: ProjectionMatrix, v: FeatureVector) -> FeatureVector:
    """Project a raw feature vector down to ``matrix.d_out`` dimensions."""
    if v.kind != RAW:
        raise ValueError("can only project raw feature vectors")
    if v.dim != matrix.d_in:
        raise ValueError(f"dimension mismatch: vector {v.dim}, matrix expects {matrix.d_in}")
    out = project_batch(matrix, v.values[None, :])[0]
    return FeatureVector(values=out, kind=PROJECTED)


def builtin_descriptor(img: GrayImage, box: Box) -> FeatureVector:
    """Analytic region descriptor: oriented-gradient histograms + intensity cells.

    The region is resized to 32x32 and split into a 4x4 grid; each cell
    contributes an 8-bin gradient-orientation histogram weighted by magnitude
    (the 128-dim block is L2-normalised as a whole) and its mean intensity.
    Deterministic stand-in for network features so the pipeline runs offline.
    """
    if not (0 <= box.x1 < box.x2 <= img.width and 0 <= box.y1 < box.y2 <= img.height):
        raise ValueError(f"box {box.as_tuple()} outside image {img.width}x{img.height}")
    patch = resize_bilinear(img.crop(box.x1, box.y1, box.x2, box.y2), _PATCH, _PATCH)
    grad = gradient_map(patch)
    cell = _PATCH // _GRID
    bins = np.minimum((grad.orientation / (math.pi / _BINS)).astype(np.intp), _BINS - 1)
    hist = np.zeros((_GRID, _GRID, _BINS), dtype=np.float64)
    for gy in range(_GRID):
        for gx in range(_GRID):
            sl = (slice(gy * cell, (gy + 1) * cell), slice(gx * cell, (gx + 1) * cell))
            hist[gy, gx] = np.bincount(
                bins[sl].ravel(), weights=grad.magnitude[sl].ravel(), minlength=_BINS
            )
    hist = hist.ravel()
    norm = np.linalg.norm(hist)
    if norm > 0.0:
        hist = hist / norm
    intensity = patch.data.reshape(_GRID, cell, _GRID, cell).mean(axis=(1, 3)).ravel()
    return FeatureVector.from_array(np.concatenate([hist, intensity]), kind=RAW)


def save_features(path: str | Path, features: Mapping[Box, FeatureVector]) -> None:
    """Write a box -> feature table in the LDDF binary format (little endian)."""
    entries = list(features.items())
    dims = {fv.dim for _, fv in entries}
    if len(dims) > 1:
        raise FeatureFileError(f"non-uniform feature dims {sorted(dims)}")
    dim = dims.pop() if dims else 0
    for box, _ in entries:
        if box.x2 > 0xFFFF or box.y2 > 0xFFFF:
            raise FeatureFileError(f"box {box.as_tuple()} exceeds u16 coordinate range")
    with Path(path).open("wb") as fh:
        fh.write(LDDF_MAGIC)
        fh.write(struct.pack("<III", LDDF_VERSION, len(entries), dim))
        for box, fv in entries:
            fh.write(struct.pack("<HHHH", box.x1, box.y1, box.x2, box.y2))
            fh.write(fv.values.astype("<f4", copy=False).tobytes())


def load_features(path: str | Path) -> dict[Box, FeatureVector]:
    """Read an LDDF feature file into a box -> raw FeatureVector map."""
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < 16 or blob[:4] != LDDF_MAGIC:
        raise FeatureFileError(f"{path}: not an LDDF file (bad magic)")
    version, count, dim = struct.unpack_from("<III", blob, 4)
    if version != LDDF_VERSION:
        raise FeatureFileError(f"{path}: unsupported LDDF version {version}")
    record = 8 + 4 * dim
    expected = 16 + count * record
    if len(blob) != expected:
        raise FeatureFileError(f"{path}: truncated or oversized file ({len(blob)} bytes, expected {expected})")
    out: dict[Box, FeatureVector] = {}
    off = 16
    for _ in range(count):
        x1, y1, x2, y2 = struct.unpack_from("<HHHH", blob, off)
        off += 8
        values = np.frombuffer(blob, dtype="<f4", count=dim, offset=off).copy()
        off += 4 * dim
        box = Box(x1, y1, x2, y2)
        if box in out:
            raise FeatureFileError(f"{path}: duplicate box {box.as_tuple()}")
        out[box] = FeatureVector(values=values, kind=RAW)
    return out
