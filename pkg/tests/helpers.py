"""Shared construction helpers for the test suite."""
from __future__ import annotations

import numpy as np

from placerec.descriptor import LandmarkDescriptor, LandmarkEntry
from placerec.features import FeatureVector
from placerec.imaging import GrayImage
from placerec.matching import MatchResult, SectionMatch, cosine_matrix
from placerec.proposals import Box, SectionLayout


def gray(rows) -> GrayImage:
    return GrayImage.from_array(np.asarray(rows, dtype=np.float64))


def feature(values) -> FeatureVector:
    return FeatureVector.from_array(np.asarray(values, dtype=np.float32))


def make_entry(box: Box, values, layout: SectionLayout) -> LandmarkEntry:
    sections = layout.sections_containing(box)
    return LandmarkEntry(box=box, feature=feature(values), sections=sections)


def make_descriptor(
    view_id: str,
    layout: SectionLayout,
    items,  # iterable of (Box, feature values)
    whole=None,
) -> LandmarkDescriptor:
    entries = [make_entry(box, values, layout) for box, values in items]
    entries.sort(key=lambda e: (e.order_key, e.box.x1, e.box.y1, e.box.x2, e.box.y2))
    whole_vec = feature(whole) if whole is not None else None
    return LandmarkDescriptor(
        view_id=view_id, entries=tuple(entries), layout=layout, whole_image=whole_vec
    )


def random_section_box(rng: np.random.Generator, layout: SectionLayout, height: int) -> Box:
    """A box wholly inside at least one section of the layout."""
    s = int(rng.integers(0, layout.section_count))
    a, b = layout.intervals[s]
    x1 = int(rng.integers(a, b - 1))
    x2 = int(rng.integers(x1 + 1, b + 1))
    y1 = int(rng.integers(0, height - 1))
    y2 = int(rng.integers(y1 + 1, height + 1))
    return Box(x1, y1, x2, y2)


def random_descriptor(
    rng: np.random.Generator,
    layout: SectionLayout,
    view_id: str,
    height: int = 100,
    dim: int = 8,
    max_per_section: int = 4,
    with_whole: bool = True,
) -> LandmarkDescriptor:
    """Random valid descriptor with at most ``max_per_section`` members per section."""
    per_section = [0] * layout.section_count
    items = []
    used_boxes = set()
    for _ in range(max_per_section * layout.section_count * 4):
        box = random_section_box(rng, layout, height)
        if box in used_boxes:
            continue
        memberships = layout.sections_containing(box)
        if not memberships:
            continue
        if any(per_section[s] >= max_per_section for s in memberships):
            continue
        for s in memberships:
            per_section[s] += 1
        used_boxes.add(box)
        items.append((box, rng.normal(size=dim)))
    whole = rng.normal(size=dim) if with_whole else None
    return make_descriptor(view_id, layout, items, whole=whole)


def scaled_descriptor(d: LandmarkDescriptor, c: float) -> LandmarkDescriptor:
    """Copy of ``d`` with every feature multiplied by ``c``."""
    entries = tuple(
        type(e)(
            box=e.box,
            feature=FeatureVector.from_array(e.feature.values * np.float32(c)),
            sections=e.sections,
        )
        for e in d.entries
    )
    whole = (
        FeatureVector.from_array(d.whole_image.values * np.float32(c))
        if d.whole_image is not None
        else None
    )
    return LandmarkDescriptor(view_id=d.view_id, entries=entries, layout=d.layout, whole_image=whole)


def greedy_oracle(a: LandmarkDescriptor, b: LandmarkDescriptor) -> MatchResult:
    """Reference reimplementation of the greedy sectioned assignment."""
    s_count = a.layout.section_count
    if not a.entries or not b.entries:
        return MatchResult(score=0.0, pairs=())
    stack_a = np.stack([e.feature.values for e in a.entries]).astype(np.float64)
    stack_b = np.stack([e.feature.values for e in b.entries]).astype(np.float64)
    ok_a = np.einsum("ij,ij->i", stack_a, stack_a) > 0.0
    ok_b = np.einsum("ij,ij->i", stack_b, stack_b) > 0.0
    sim = cosine_matrix(stack_a, stack_b)

    per_section = []
    for s in range(s_count):
        cands = [
            (float(sim[i, j]), i, j)
            for i, ea in enumerate(a.entries)
            if s in ea.sections and ok_a[i]
            for j, eb in enumerate(b.entries)
            if s in eb.sections and ok_b[j]
        ]
        per_section.append(cands)

    order = sorted(
        (s for s in range(s_count) if per_section[s]),
        key=lambda s: (-max(c[0] for c in per_section[s]), s),
    )
    used_a: set[int] = set()
    used_b: set[int] = set()
    picked = []
    for s in order:
        best = None
        for c in per_section[s]:
            if c[1] in used_a or c[2] in used_b:
                continue
            if best is None or c[0] > best[0]:
                best = c
        if best is None:
            continue
        used_a.add(best[1])
        used_b.add(best[2])
        picked.append(SectionMatch(section=s, index_a=best[1], index_b=best[2], similarity=best[0]))
    picked.sort(key=lambda m: m.section)
    return MatchResult(score=float(sum(m.similarity for m in picked)), pairs=tuple(picked))
