"""Descriptor comparison: sectioned landmark matching plus two baselines.

``match_ldd`` scores a pair of views by picking, for every section, the most
similar landmark pair under a global no-reuse constraint, and summing the S
cosine similarities. The baselines are a landmark-shape matcher (``clm_score``)
and a whole-image cosine (``cwi_score``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .descriptor import LandmarkDescriptor


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine similarity in [-1, 1]; zero-norm input is an error.

    Bit-identical inputs return exactly 1.0 (and -1.0 for an exact negation):
    the denominator sqrt(<u,u><v,v>) reuses the same dot-product kernel as the
    numerator, so the quotient cancels without rounding residue.
    """
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    if u.shape != v.shape:
        raise ValueError(f"shape mismatch {u.shape} vs {v.shape}")
    nu2 = float(np.dot(u, u))
    nv2 = float(np.dot(v, v))
    if nu2 == 0.0 or nv2 == 0.0:
        raise ValueError("cosine similarity undefined for zero-norm vectors")
    value = float(np.dot(u, v)) / math.sqrt(nu2 * nv2)
    return min(1.0, max(-1.0, value))


def cosine_matrix(feats_a: np.ndarray, feats_b: np.ndarray) -> np.ndarray:
    """All-pairs cosine of two row-stacked feature sets, clamped to [-1, 1].

    Rows with zero norm yield NaN against everything. Bit-identical row pairs
    are forced to exactly 1.0 so that self-comparison is free of last-ulp
    noise from the blocked matrix product.
    """
    a = np.ascontiguousarray(feats_a, dtype=np.float64)
    b = np.ascontiguousarray(feats_b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ValueError(f"incompatible feature stacks {a.shape} vs {b.shape}")
    na2 = np.einsum("ij,ij->i", a, a)
    nb2 = np.einsum("ij,ij->i", b, b)
    with np.errstate(divide="ignore", invalid="ignore"):
        sim = (a @ b.T) / np.sqrt(np.outer(na2, nb2))
    np.clip(sim, -1.0, 1.0, out=sim)
    by_content: dict[bytes, list[int]] = {}
    for i in range(a.shape[0]):
        if na2[i] > 0.0:
            by_content.setdefault(a[i].tobytes(), []).append(i)
    for j in range(b.shape[0]):
        if nb2[j] > 0.0:
            for i in by_content.get(b[j].tobytes(), ()):
                sim[i, j] = 1.0
    return sim


@dataclass(frozen=True)
class SectionMatch:
    """Winning landmark pair of one section."""

    section: int
    index_a: int
    index_b: int
    similarity: float


@dataclass(frozen=True)
class MatchResult:
    score: float
    pairs: tuple[SectionMatch, ...]

    @property
    def matched_sections(self) -> int:
        return len(self.pairs)


def _section_candidates(
    a: LandmarkDescriptor, b: LandmarkDescriptor
) -> list[list[tuple[float, int, int]]]:
    """Per section: (similarity, a_index, b_index) for all usable pairs.

    Landmarks with zero-norm features cannot participate (cosine undefined);
    candidate order is entry order so later ties resolve on (a_index, b_index).
    """
    s_count = a.layout.section_count
    if not a.entries or not b.entries:
        return [[] for _ in range(s_count)]
    stack_a = np.stack([e.feature.values for e in a.entries]).astype(np.float64)
    stack_b = np.stack([e.feature.values for e in b.entries]).astype(np.float64)
    usable_a = np.einsum("ij,ij->i", stack_a, stack_a) > 0.0
    usable_b = np.einsum("ij,ij->i", stack_b, stack_b) > 0.0
    sim = cosine_matrix(stack_a, stack_b)
    out: list[list[tuple[float, int, int]]] = []
    for s in range(s_count):
        members_a = [i for i, e in enumerate(a.entries) if s in e.sections and usable_a[i]]
        members_b = [j for j, e in enumerate(b.entries) if s in e.sections and usable_b[j]]
        out.append(
            [(float(sim[i, j]), i, j) for i in members_a for j in members_b]
        )
    return out


def _greedy_assign(candidates: list[list[tuple[float, int, int]]]) -> list[SectionMatch]:
    """Resolve sections in descending order of their unconstrained best pair.

    Ties between sections break on ascending section index; ties within a
    section break on entry order (a index, then b index). Sections whose
    candidates are all consumed contribute nothing.
    """
    order = []
    for s, cands in enumerate(candidates):
        if cands:
            best = max(sim for sim, _, _ in cands)
            order.append((-best, s))
    order.sort()
    used_a: set[int] = set()
    used_b: set[int] = set()
    matches = []
    for _, s in order:
        best = None
        for sim, i, j in candidates[s]:
            if i in used_a or j in used_b:
                continue
            if best is None or sim > best[0]:
                best = (sim, i, j)
        if best is None:
            continue
        sim, i, j = best
        used_a.add(i)
        used_b.add(j)
        matches.append(SectionMatch(section=s, index_a=i, index_b=j, similarity=sim))
    matches.sort(key=lambda m: m.section)
    return matches


def _exhaustive_assign(candidates: list[list[tuple[float, int, int]]]) -> list[SectionMatch]:
    """Best total score over all conflict-free pair selections (small inputs)."""
    best_score = -math.inf
    best: list[SectionMatch] = []

    def recurse(s: int, used_a: frozenset, used_b: frozenset, acc: list, score: float):
        nonlocal best_score, best
        if s == len(candidates):
            if score > best_score:
                best_score = score
                best = list(acc)
            return
        # Leaving the section unmatched is always legal.
        recurse(s + 1, used_a, used_b, acc, score)
        for sim, i, j in candidates[s]:
            if i in used_a or j in used_b:
                continue
            acc.append(SectionMatch(section=s, index_a=i, index_b=j, similarity=sim))
            recurse(s + 1, used_a | {i}, used_b | {j}, acc, score + sim)
            acc.pop()

    recurse(0, frozenset(), frozenset(), [], 0.0)
    best.sort(key=lambda m: m.section)
    return best


def match_ldd(
    a: LandmarkDescriptor, b: LandmarkDescriptor, exhaustive: bool = False
) -> MatchResult:
    """Sectioned matching score of view ``a`` against view ``b``.

    Each section contributes the cosine similarity of its best available
    landmark pair; a landmark already claimed by a higher-priority section is
    unavailable. Empty or exhausted sections contribute zero, so the score
    lies in [-S, S]. ``exhaustive`` replaces the greedy resolution by a full
    search over conflict-free selections (exponential; for oracle use only).
    """
    if a.layout.section_count != b.layout.section_count:
        raise ValueError(
            f"section counts differ: {a.layout.section_count} vs {b.layout.section_count}"
        )
    dim_a, dim_b = a.feature_dim, b.feature_dim
    if dim_a is not None and dim_b is not None and dim_a != dim_b:
        raise ValueError(f"feature dims differ: {dim_a} vs {dim_b}")
    candidates = _section_candidates(a, b)
    matches = _exhaustive_assign(candidates) if exhaustive else _greedy_assign(candidates)
    score = float(sum(m.similarity for m in matches))
    return MatchResult(score=score, pairs=tuple(matches))


def shape_similarity(size_a: tuple[float, float], size_b: tuple[float, float]) -> float:
    """Similarity of two box shapes from relative width and height differences.

    Identical shapes score 1; the score decreases with the average relative
    difference and reaches 0 when both sides differ maximally.
    """
    wa, ha = size_a
    wb, hb = size_b
    if min(wa, ha, wb, hb) <= 0:
        raise ValueError("box sides must be positive")
    dw = abs(wa - wb) / max(wa, wb)
    dh = abs(ha - hb) / max(ha, hb)
    return 1.0 - 0.5 * (dw + dh)


def _mutual_nearest(sim: np.ndarray) -> list[tuple[int, int]]:
    """Index pairs that are each other's most similar row/column.

    Ties take the lowest index, matching argmax order.
    """
    best_for_a = sim.argmax(axis=1)
    best_for_b = sim.argmax(axis=0)
    return [(i, int(j)) for i, j in enumerate(best_for_a) if best_for_b[j] == i]


def clm_score(a: LandmarkDescriptor, b: LandmarkDescriptor) -> float:
    """Landmark-baseline score: appearance times shape over mutual best pairs.

    For every mutually-nearest landmark pair (by feature cosine) the product
    of cosine similarity and box-shape similarity is accumulated, normalised
    by the product of landmark counts.
    """
    n_a, n_b = len(a.entries), len(b.entries)
    if n_a == 0 or n_b == 0:
        return 0.0
    stack_a = np.stack([e.feature.values for e in a.entries]).astype(np.float64)
    stack_b = np.stack([e.feature.values for e in b.entries]).astype(np.float64)
    if np.any(np.einsum("ij,ij->i", stack_a, stack_a) == 0.0) or np.any(
        np.einsum("ij,ij->i", stack_b, stack_b) == 0.0
    ):
        raise ValueError("zero-norm landmark feature")
    sim = cosine_matrix(stack_a, stack_b)
    total = 0.0
    for i, j in _mutual_nearest(sim):
        box_a, box_b = a.entries[i].box, b.entries[j].box
        s_ij = shape_similarity((box_a.width, box_a.height), (box_b.width, box_b.height))
        total += float(sim[i, j]) * s_ij
    return total / (n_a * n_b)


def cwi_score(f1, f2) -> float:
    """Whole-image baseline: cosine of the two full-frame feature vectors."""
    return cosine(
        f1.values if hasattr(f1, "values") else f1,
        f2.values if hasattr(f2, "values") else f2,
    )
