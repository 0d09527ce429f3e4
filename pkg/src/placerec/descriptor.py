"""Per-view landmark descriptors and descriptor-database persistence.

A view descriptor stacks landmark features in left-to-right order of their
boxes and records which overlapping sections each landmark belongs to; the
ordering is what makes the descriptor sensitive to landmark layout. Databases
bundle many view descriptors with the metadata (feature dim, projection seed,
section geometry, budgets) needed to build comparable query descriptors later.
"""
from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .features import RAW, FeatureVector
from .proposals import Box, LandmarkProposal, SectionLayout

LDDB_MAGIC = b"LDDB"
LDDB_VERSION = 1
MAX_SECTIONS = 8  # section membership is persisted as a u8 bitmask


class DatabaseFormatError(ValueError):
    """Raised for malformed or corrupt LDDB files."""


@dataclass(frozen=True, eq=False)
class LandmarkEntry:
    """A landmark box, its feature, and the sections wholly containing it."""

    box: Box
    feature: FeatureVector
    sections: frozenset[int]

    def __post_init__(self):
        if not self.sections:
            raise ValueError("landmark entry must belong to at least one section")

    @property
    def order_key(self) -> float:
        return self.box.center_x


@dataclass(frozen=True, eq=False)
class LandmarkDescriptor:
    """Landmark features of one view, sorted by horizontal box centre.

    ``whole_image`` optionally carries a single full-frame feature so the same
    database also serves whole-image baseline comparisons; it takes no part in
    section matching.
    """

    view_id: str
    entries: tuple[LandmarkEntry, ...]
    layout: SectionLayout
    whole_image: FeatureVector | None = None

    def __post_init__(self):
        prev = None
        seen_boxes = set()
        dims = set()
        for e in self.entries:
            key = (e.order_key, e.box.x1, e.box.y1, e.box.x2, e.box.y2)
            if prev is not None and key < prev:
                raise ValueError("entries must be sorted by horizontal centre")
            prev = key
            if e.box in seen_boxes:
                raise ValueError(f"duplicate entry box {e.box.as_tuple()}")
            seen_boxes.add(e.box)
            if e.sections != self.layout.sections_containing(e.box):
                raise ValueError(
                    f"entry sections {sorted(e.sections)} inconsistent with layout "
                    f"for box {e.box.as_tuple()}"
                )
            dims.add(e.feature.dim)
        if self.whole_image is not None:
            dims.add(self.whole_image.dim)
        if len(dims) > 1:
            raise ValueError(f"mixed feature dims {sorted(dims)} in one descriptor")

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def feature_dim(self) -> int | None:
        if self.entries:
            return self.entries[0].feature.dim
        if self.whole_image is not None:
            return self.whole_image.dim
        return None

    def section_entries(self, s: int) -> list[tuple[int, LandmarkEntry]]:
        """(index, entry) pairs for the members of section ``s``, in order."""
        return [(i, e) for i, e in enumerate(self.entries) if s in e.sections]


def build_descriptor(
    view_id: str,
    section_lists: Sequence[Sequence[LandmarkProposal]],
    features: Mapping[Box, FeatureVector],
    layout: SectionLayout,
    whole_image: FeatureVector | None = None,
) -> LandmarkDescriptor:
    """Assemble a view descriptor from per-section proposal selections.

    Proposals appearing in two adjacent sections are stored once with both
    memberships. Every selected box must have a feature of uniform dimension.
    """
    if len(section_lists) != layout.section_count:
        raise ValueError(f"expected {layout.section_count} section lists, got {len(section_lists)}")
    by_box: dict[Box, frozenset[int]] = {}
    for selected in section_lists:
        for prop in selected:
            by_box.setdefault(prop.box, prop.sections)
    entries = []
    for box, sections in by_box.items():
        feature = features.get(box)
        if feature is None:
            raise ValueError(f"no feature for selected box {box.as_tuple()}")
        entries.append(LandmarkEntry(box=box, feature=feature, sections=sections))
    entries.sort(key=lambda e: (e.order_key, e.box.x1, e.box.y1, e.box.x2, e.box.y2))
    return LandmarkDescriptor(
        view_id=view_id, entries=tuple(entries), layout=layout, whole_image=whole_image
    )


@dataclass(frozen=True)
class DbMeta:
    """Build parameters every descriptor in a database shares."""

    feature_dim: int
    seed: int
    budgets: tuple[int, ...]
    section_width: int
    overlap: float
    layout: SectionLayout  # base layout (default-centred sections)
    image_height: int

    def __post_init__(self):
        if self.feature_dim < 1:
            raise ValueError("feature dim must be >= 1")
        if not (0 <= self.seed < 2**64):
            raise ValueError("seed must fit in an unsigned 64-bit integer")
        if len(self.budgets) != self.layout.section_count:
            raise ValueError("one budget per section required")
        if self.image_height < 1:
            raise ValueError("image height must be >= 1")

    @property
    def section_count(self) -> int:
        return self.layout.section_count

    @property
    def image_width(self) -> int:
        return self.layout.image_width


@dataclass(eq=False)
class DescriptorDB:
    """Reference descriptors keyed by view id, in insertion order."""

    meta: DbMeta
    descriptors: dict[str, LandmarkDescriptor] = field(default_factory=dict)

    def __post_init__(self):
        for d in self.descriptors.values():
            self._check_compatible(d)

    def _check_compatible(self, d: LandmarkDescriptor) -> None:
        if d.layout.section_count != self.meta.section_count:
            raise ValueError(
                f"view {d.view_id!r} has {d.layout.section_count} sections, "
                f"database has {self.meta.section_count}"
            )
        if d.layout.image_width != self.meta.image_width:
            raise ValueError(f"view {d.view_id!r} image width differs from database meta")
        dim = d.feature_dim
        if dim is not None and dim != self.meta.feature_dim:
            raise ValueError(
                f"view {d.view_id!r} feature dim {dim} != database dim {self.meta.feature_dim}"
            )
        if len(d.entries) > sum(self.meta.budgets):
            raise ValueError(f"view {d.view_id!r} exceeds the total section budget")

    def add(self, d: LandmarkDescriptor) -> None:
        if d.view_id in self.descriptors:
            raise ValueError(f"duplicate view id {d.view_id!r}")
        self._check_compatible(d)
        self.descriptors[d.view_id] = d

    def __len__(self) -> int:
        return len(self.descriptors)

    @property
    def view_ids(self) -> list[str]:
        return list(self.descriptors.keys())


def _pack_intervals(intervals: Iterable[tuple[int, int]]) -> bytes:
    return b"".join(struct.pack("<II", a, b) for a, b in intervals)


def _entry_records(d: LandmarkDescriptor, image_height: int) -> list[tuple[Box, int, FeatureVector]]:
    records = [(e.box, _sections_to_mask(e.sections), e.feature) for e in d.entries]
    if d.whole_image is not None:
        full = Box(0, 0, d.layout.image_width, image_height)
        records.append((full, 0, d.whole_image))
    return records


def _sections_to_mask(sections: frozenset[int]) -> int:
    mask = 0
    for s in sections:
        if not (0 <= s < MAX_SECTIONS):
            raise DatabaseFormatError(f"section index {s} not representable in a u8 bitmask")
        mask |= 1 << s
    return mask


def save_db(db: DescriptorDB, path: str | Path) -> None:
    """Serialise a database to an LDDB file (little endian, CRC32 trailer)."""
    meta = db.meta
    if meta.section_count > MAX_SECTIONS:
        raise DatabaseFormatError(f"at most {MAX_SECTIONS} sections can be persisted")
    if meta.image_width > 0xFFFF or meta.image_height > 0xFFFF:
        raise DatabaseFormatError("image dimensions exceed u16 box coordinate range")
    parts = [LDDB_MAGIC]
    parts.append(struct.pack("<II", LDDB_VERSION, meta.feature_dim))
    parts.append(struct.pack("<Q", meta.seed))
    parts.append(struct.pack("<B", meta.section_count))
    parts.append(struct.pack(f"<{meta.section_count}I", *meta.budgets))
    parts.append(struct.pack("<IIId", meta.image_width, meta.image_height, meta.section_width, meta.overlap))
    parts.append(_pack_intervals(meta.layout.intervals))
    parts.append(struct.pack("<I", len(db.descriptors)))
    for view_id, d in db.descriptors.items():
        ident = view_id.encode("utf-8")
        if len(ident) > 0xFFFF:
            raise DatabaseFormatError(f"view id too long: {view_id!r}")
        parts.append(struct.pack("<H", len(ident)))
        parts.append(ident)
        parts.append(_pack_intervals(d.layout.intervals))
        records = _entry_records(d, meta.image_height)
        parts.append(struct.pack("<I", len(records)))
        for box, mask, feature in records:
            parts.append(struct.pack("<HHHHB", box.x1, box.y1, box.x2, box.y2, mask))
            parts.append(feature.values.astype("<f4", copy=False).tobytes())
    blob = b"".join(parts)
    blob += struct.pack("<I", zlib.crc32(blob))
    Path(path).write_bytes(blob)


class _Reader:
    def __init__(self, blob: bytes, path: Path):
        self.blob = blob
        self.off = 0
        self.path = path

    def take(self, fmt: str):
        size = struct.calcsize(fmt)
        if self.off + size > len(self.blob):
            raise DatabaseFormatError(f"{self.path}: truncated file")
        vals = struct.unpack_from(fmt, self.blob, self.off)
        self.off += size
        return vals

    def take_bytes(self, n: int) -> bytes:
        if self.off + n > len(self.blob):
            raise DatabaseFormatError(f"{self.path}: truncated file")
        out = self.blob[self.off : self.off + n]
        self.off += n
        return out


def load_db(path: str | Path) -> DescriptorDB:
    """Load an LDDB file, verifying version and checksum."""
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < 8 or blob[:4] != LDDB_MAGIC:
        raise DatabaseFormatError(f"{path}: not an LDDB file (bad magic)")
    (stored_crc,) = struct.unpack_from("<I", blob, len(blob) - 4)
    body = blob[:-4]
    if zlib.crc32(body) != stored_crc:
        raise DatabaseFormatError(f"{path}: checksum mismatch")
    r = _Reader(body, path)
    r.take_bytes(4)  # magic
    version, dim = r.take("<II")
    if version != LDDB_VERSION:
        raise DatabaseFormatError(f"{path}: unsupported LDDB version {version}")
    (seed,) = r.take("<Q")
    (s_count,) = r.take("<B")
    budgets = r.take(f"<{s_count}I")
    image_width, image_height, section_width, overlap = r.take("<IIId")
    base_intervals = tuple((a, b) for a, b in zip(*[iter(r.take(f"<{2 * s_count}I"))] * 2))
    try:
        meta = DbMeta(
            feature_dim=dim,
            seed=seed,
            budgets=tuple(budgets),
            section_width=section_width,
            overlap=overlap,
            layout=SectionLayout(intervals=base_intervals, image_width=image_width),
            image_height=image_height,
        )
    except ValueError as exc:
        raise DatabaseFormatError(f"{path}: invalid metadata: {exc}") from exc
    (view_count,) = r.take("<I")
    db = DescriptorDB(meta=meta)
    for _ in range(view_count):
        (id_len,) = r.take("<H")
        view_id = r.take_bytes(id_len).decode("utf-8")
        intervals = tuple((a, b) for a, b in zip(*[iter(r.take(f"<{2 * s_count}I"))] * 2))
        layout = SectionLayout(intervals=intervals, image_width=image_width)
        (entry_count,) = r.take("<I")
        entries = []
        whole_image = None
        try:
            for _ in range(entry_count):
                x1, y1, x2, y2, mask = r.take("<HHHHB")
                values = np.frombuffer(r.take_bytes(4 * dim), dtype="<f4").copy()
                feature = FeatureVector(values=values, kind=RAW)
                box = Box(x1, y1, x2, y2)
                if mask == 0:
                    if whole_image is not None:
                        raise DatabaseFormatError(f"{path}: view {view_id!r} has two whole-image records")
                    if box != Box(0, 0, image_width, image_height):
                        raise DatabaseFormatError(
                            f"{path}: whole-image record box {box.as_tuple()} is not the full frame"
                        )
                    whole_image = feature
                else:
                    sections = frozenset(s for s in range(s_count) if mask & (1 << s))
                    entries.append(LandmarkEntry(box=box, feature=feature, sections=sections))
            descriptor = LandmarkDescriptor(
                view_id=view_id, entries=tuple(entries), layout=layout, whole_image=whole_image
            )
            db.add(descriptor)
        except DatabaseFormatError:
            raise
        except ValueError as exc:
            raise DatabaseFormatError(f"{path}: invalid view {view_id!r}: {exc}") from exc
    if r.off != len(body):
        raise DatabaseFormatError(f"{path}: trailing bytes after last view")
    return db
