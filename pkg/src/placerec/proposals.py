"""Landmark proposal generation and per-section selection.

Boxes are ranked by how much edge-contour mass they wholly enclose, normalised
by box perimeter — boxes that tightly wrap complete contours win. The image is
divided into overlapping horizontal sections and each section keeps its own
budget of top-ranked proposals.
"""
from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, replace
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .imaging import GradientMap, GrayImage, gradient_map

DEFAULT_ORIENTATION_SPLIT = math.pi / 4
DEFAULT_KAPPA = 1.5

# 8-neighbourhood in fixed scan order; grouping is deterministic because seeds
# are visited row-major and neighbours always in this order.
_NEIGHBOURS = ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1))


@dataclass(frozen=True, order=True)
class Box:
    """Axis-aligned box with inclusive-exclusive pixel coordinates."""

    x1: int
    y1: int
    x2: int
    y2: int

    def __post_init__(self):
        if self.x1 < 0 or self.y1 < 0 or self.x1 >= self.x2 or self.y1 >= self.y2:
            raise ValueError(f"degenerate box ({self.x1},{self.y1},{self.x2},{self.y2})")

    @property
    def width(self) -> int:
        return self.x2 - self.x1

    @property
    def height(self) -> int:
        return self.y2 - self.y1

    @property
    def area(self) -> int:
        return self.width * self.height

    @property
    def center_x(self) -> float:
        return (self.x1 + self.x2) / 2.0

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.x1, self.y1, self.x2, self.y2)


def box_iou(a: Box, b: Box) -> float:
    ix = min(a.x2, b.x2) - max(a.x1, b.x1)
    iy = min(a.y2, b.y2) - max(a.y1, b.y1)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


@dataclass(frozen=True, eq=False)
class Contour:
    """A chain of connected edge pixels with coherent orientation."""

    pixels: np.ndarray  # (n, 2) int columns (x, y)
    weight: float  # sum of member gradient magnitudes
    centroid: tuple[float, float]

    def __post_init__(self):
        if len(self.pixels) == 0:
            raise ValueError("contour must contain at least one pixel")
        if self.weight <= 0.0:
            raise ValueError("contour weight must be positive")

    @property
    def bounds(self) -> tuple[int, int, int, int]:
        """Inclusive pixel bounds (min_x, min_y, max_x, max_y)."""
        xs, ys = self.pixels[:, 0], self.pixels[:, 1]
        return int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max())


@dataclass(frozen=True, eq=False)
class ContourSet:
    contours: tuple[Contour, ...]

    def __len__(self) -> int:
        return len(self.contours)

    @cached_property
    def bounds(self) -> np.ndarray:
        """(n, 4) inclusive pixel bounds per contour."""
        if not self.contours:
            return np.zeros((0, 4), dtype=np.int64)
        return np.array([c.bounds for c in self.contours], dtype=np.int64)

    @cached_property
    def weights(self) -> np.ndarray:
        return np.array([c.weight for c in self.contours], dtype=np.float64)


@dataclass(frozen=True)
class SectionLayout:
    """Horizontal intervals (start_x, end_x) partitioning the image width."""

    intervals: tuple[tuple[int, int], ...]
    image_width: int

    def __post_init__(self):
        if len(self.intervals) < 1:
            raise ValueError("layout needs at least one section")
        prev_start = -1
        for a, b in self.intervals:
            if not (0 <= a < b <= self.image_width):
                raise ValueError(f"interval ({a},{b}) outside image width {self.image_width}")
            if a < prev_start:
                raise ValueError("intervals must be sorted by start")
            prev_start = a

    @property
    def section_count(self) -> int:
        return len(self.intervals)

    def sections_containing(self, box: Box) -> frozenset[int]:
        """Indices of sections that wholly contain the box horizontally."""
        return frozenset(
            s for s, (a, b) in enumerate(self.intervals) if box.x1 >= a and box.x2 <= b
        )


@dataclass(frozen=True)
class LandmarkProposal:
    """A scored candidate landmark box and its section memberships."""

    box: Box
    score: float
    sections: frozenset[int] = frozenset()

    def __post_init__(self):
        if self.score < 0.0:
            raise ValueError("proposal score must be >= 0")


@dataclass(frozen=True)
class ProposalConfig:
    """Sliding-window generation and scoring parameters."""

    scales: tuple[int, ...] = (32, 64, 128, 256)
    aspect_ratios: tuple[float, ...] = (0.5, 1.0, 2.0)
    step_fraction: float = 0.25  # window step = scale * step_fraction
    nms_iou: float = 0.7
    max_candidates: int = 2000
    magnitude_threshold: float = 0.1
    orientation_split: float = DEFAULT_ORIENTATION_SPLIT
    kappa: float = DEFAULT_KAPPA

    def __post_init__(self):
        if not self.scales or any(s < 3 for s in self.scales):
            raise ValueError("scales must be non-empty with entries >= 3")
        if not self.aspect_ratios or any(r <= 0 for r in self.aspect_ratios):
            raise ValueError("aspect ratios must be positive")
        if not (0.0 < self.step_fraction <= 1.0):
            raise ValueError("step_fraction must be in (0, 1]")
        if not (0.0 <= self.nms_iou <= 1.0):
            raise ValueError("nms_iou must be in [0, 1]")
        if self.max_candidates < 1:
            raise ValueError("max_candidates must be >= 1")
        if self.kappa <= 0.0:
            raise ValueError("kappa must be positive")


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def section_layout(
    image_width: int,
    section_width: int,
    s_count: int,
    center_x: float | None = None,
    overlap: float = 0.5,
) -> SectionLayout:
    """Lay out ``s_count`` sections of ``section_width`` pixels over the image.

    Adjacent sections overlap by ``overlap`` (default 50%, i.e. stride of half
    a section). The middle section is centred on ``center_x`` when given —
    e.g. on a vanishing point — otherwise on the image centre. Intervals are
    clipped to the image. With the default centre the union must cover the
    whole image; an explicit centre may leave an edge strip uncovered.
    """
    if s_count < 1:
        raise ValueError("need at least one section")
    if not (1 <= section_width <= image_width):
        raise ValueError(f"section width {section_width} must be in [1, {image_width}]")
    if not (0.0 <= overlap < 1.0):
        raise ValueError("overlap must be in [0, 1)")
    stride = section_width * (1.0 - overlap)
    center = image_width / 2.0 if center_x is None else float(center_x)
    intervals = []
    for s in range(s_count):
        c = center + (s - (s_count - 1) / 2.0) * stride
        start = _round_half_up(c - section_width / 2.0)
        end = start + section_width
        a, b = max(0, start), min(image_width, end)
        if a >= b:
            raise ValueError(f"section {s} falls outside the image after clipping")
        intervals.append((a, b))
    if center_x is None:
        covered = 0
        for a, b in intervals:
            if a > covered:
                raise ValueError(
                    f"sections leave [{covered},{a}) uncovered; increase the "
                    "section width or count"
                )
            covered = max(covered, b)
        if covered < image_width:
            raise ValueError(
                f"sections cover only [0,{covered}) of width {image_width}; "
                "increase the section width or count"
            )
    return SectionLayout(intervals=tuple(intervals), image_width=image_width)


def group_contours(
    grad: GradientMap,
    magnitude_threshold: float,
    orientation_split: float = DEFAULT_ORIENTATION_SPLIT,
) -> ContourSet:
    """Group edge pixels into contours.

    Pixels with magnitude above the threshold are grown into 8-connected
    groups, splitting a group once the orientation difference accumulated
    along the discovery chain exceeds ``orientation_split``. Orientation
    differences respect the [0, pi) wrap.
    """
    if magnitude_threshold < 0.0:
        raise ValueError("magnitude threshold must be >= 0")
    mag = grad.magnitude
    ori = grad.orientation
    mask = mag > magnitude_threshold
    h, w = mask.shape
    visited = np.zeros_like(mask, dtype=bool)
    contours: list[Contour] = []

    edge_ys, edge_xs = np.nonzero(mask)
    for sy, sx in zip(edge_ys.tolist(), edge_xs.tolist()):
        if visited[sy, sx]:
            continue
        visited[sy, sx] = True
        members = [(sx, sy)]
        weight = mag[sy, sx]
        queue = deque([(sy, sx, 0.0)])
        while queue:
            cy, cx, drift = queue.popleft()
            cori = ori[cy, cx]
            for dy, dx in _NEIGHBOURS:
                ny, nx = cy + dy, cx + dx
                if ny < 0 or ny >= h or nx < 0 or nx >= w:
                    continue
                if visited[ny, nx] or not mask[ny, nx]:
                    continue
                diff = abs(ori[ny, nx] - cori)
                diff = min(diff, math.pi - diff)
                ndrift = drift + diff
                if ndrift > orientation_split:
                    continue  # seeds a new contour later
                visited[ny, nx] = True
                members.append((nx, ny))
                weight += mag[ny, nx]
                queue.append((ny, nx, ndrift))
        pixels = np.array(members, dtype=np.int64)
        centroid = (float(pixels[:, 0].mean()), float(pixels[:, 1].mean()))
        contours.append(Contour(pixels=pixels, weight=float(weight), centroid=centroid))
    return ContourSet(contours=tuple(contours))


def score_boxes(boxes: np.ndarray, contours: ContourSet, kappa: float = DEFAULT_KAPPA) -> np.ndarray:
    """Vectorised enclosure score for an (m, 4) array of boxes.

    A contour counts only if every pixel lies inside the box, which for the
    tight pixel bounds is equivalent to bounds containment.
    """
    if kappa <= 0.0:
        raise ValueError("kappa must be positive")
    boxes = np.asarray(boxes, dtype=np.int64)
    m = len(boxes)
    perim = 2.0 * ((boxes[:, 2] - boxes[:, 0]) + (boxes[:, 3] - boxes[:, 1]))
    denom = np.power(perim, kappa)
    if len(contours) == 0:
        return np.zeros(m, dtype=np.float64)
    cb = contours.bounds
    cw = contours.weights
    scores = np.empty(m, dtype=np.float64)
    chunk = max(1, 4_000_000 // max(1, len(contours)))
    for lo in range(0, m, chunk):
        b = boxes[lo : lo + chunk]
        inside = (
            (b[:, 0, None] <= cb[None, :, 0])
            & (cb[None, :, 2] <= b[:, 2, None] - 1)
            & (b[:, 1, None] <= cb[None, :, 1])
            & (cb[None, :, 3] <= b[:, 3, None] - 1)
        )
        scores[lo : lo + len(b)] = inside.astype(np.float64) @ cw
    return scores / denom


def score_box(box: Box, contours: ContourSet, kappa: float = DEFAULT_KAPPA) -> float:
    """Sum of wholly-enclosed contour weights over (2(w+h))^kappa."""
    arr = np.array([box.as_tuple()], dtype=np.int64)
    return float(score_boxes(arr, contours, kappa)[0])


def _window_boxes(width: int, height: int, config: ProposalConfig) -> np.ndarray:
    boxes = []
    for scale in config.scales:
        step = max(1, int(round(scale * config.step_fraction)))
        for ratio in config.aspect_ratios:
            w = _round_half_up(scale * math.sqrt(ratio))
            h = _round_half_up(scale / math.sqrt(ratio))
            if w < 1 or h < 1 or w > width or h > height:
                continue
            xs = list(range(0, width - w + 1, step))
            if xs[-1] != width - w:
                xs.append(width - w)
            ys = list(range(0, height - h + 1, step))
            if ys[-1] != height - h:
                ys.append(height - h)
            xs_a = np.array(xs, dtype=np.int64)
            ys_a = np.array(ys, dtype=np.int64)
            gx, gy = np.meshgrid(xs_a, ys_a)
            n = gx.size
            block = np.empty((n, 4), dtype=np.int64)
            block[:, 0] = gx.ravel()
            block[:, 1] = gy.ravel()
            block[:, 2] = gx.ravel() + w
            block[:, 3] = gy.ravel() + h
            boxes.append(block)
    if not boxes:
        return np.zeros((0, 4), dtype=np.int64)
    return np.concatenate(boxes, axis=0)


def _nms_keep(boxes: np.ndarray, iou_threshold: float) -> list[int]:
    """Greedy NMS over rank-ordered boxes; suppress IoU strictly above threshold."""
    x1 = boxes[:, 0].astype(np.float64)
    y1 = boxes[:, 1].astype(np.float64)
    x2 = boxes[:, 2].astype(np.float64)
    y2 = boxes[:, 3].astype(np.float64)
    areas = (x2 - x1) * (y2 - y1)
    order = np.arange(len(boxes))
    keep: list[int] = []
    while order.size > 0:
        i = order[0]
        keep.append(int(i))
        rest = order[1:]
        ix = np.minimum(x2[i], x2[rest]) - np.maximum(x1[i], x1[rest])
        iy = np.minimum(y2[i], y2[rest]) - np.maximum(y1[i], y1[rest])
        inter = np.maximum(ix, 0.0) * np.maximum(iy, 0.0)
        iou = inter / (areas[i] + areas[rest] - inter)
        order = rest[iou <= iou_threshold]
    return keep


def generate_proposals(img: GrayImage, config: ProposalConfig | None = None) -> list[LandmarkProposal]:
    """Score sliding windows by contour enclosure and rank them.

    Zero-scoring windows are dropped, the rest are ordered by score (ties:
    lower x1, lower y1, smaller area), capped at ``max_candidates`` and passed
    through NMS. Deterministic for fixed input and config.
    """
    config = config or ProposalConfig()
    grad = gradient_map(img)
    contours = group_contours(grad, config.magnitude_threshold, config.orientation_split)
    boxes = _window_boxes(img.width, img.height, config)
    if len(boxes) == 0 or len(contours) == 0:
        return []
    scores = score_boxes(boxes, contours, config.kappa)
    positive = scores > 0.0
    boxes, scores = boxes[positive], scores[positive]
    if len(boxes) == 0:
        return []
    area = (boxes[:, 2] - boxes[:, 0]) * (boxes[:, 3] - boxes[:, 1])
    order = np.lexsort((area, boxes[:, 1], boxes[:, 0], -scores))
    order = order[: config.max_candidates]
    boxes, scores = boxes[order], scores[order]
    keep = _nms_keep(boxes, config.nms_iou)
    return [
        LandmarkProposal(box=Box(*(int(v) for v in boxes[i])), score=float(scores[i]))
        for i in keep
    ]


def select_per_section(
    proposals: Sequence[LandmarkProposal],
    layout: SectionLayout,
    budgets: Sequence[int],
) -> list[list[LandmarkProposal]]:
    """Per section, the top-budget proposals whose box lies wholly within it.

    A proposal may appear in two adjacent overlapping sections; proposals that
    fit in no section are discarded. Returned proposals carry their full
    section-membership set.
    """
    if len(budgets) != layout.section_count:
        raise ValueError(f"expected {layout.section_count} budgets, got {len(budgets)}")
    if any(b < 0 for b in budgets):
        raise ValueError("budgets must be >= 0")
    selected: list[list[LandmarkProposal]] = [[] for _ in layout.intervals]
    for prop in proposals:
        memberships = layout.sections_containing(prop.box)
        if not memberships:
            continue
        tagged = replace(prop, sections=memberships)
        for s in memberships:
            if len(selected[s]) < budgets[s]:
                selected[s].append(tagged)
    return selected


def load_proposals(path: str | Path) -> list[LandmarkProposal]:
    """Read externally generated proposals from JSON and rank them.

    Expected shape: ``[{"x1":..,"y1":..,"x2":..,"y2":..,"score":..}, ...]``,
    in any order; re-sorted descending by score with the standard tie-break.
    """
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        records = json.load(fh)
    if not isinstance(records, list):
        raise ValueError(f"proposal file {path} must contain a JSON list")
    props = []
    for rec in records:
        try:
            box = Box(int(rec["x1"]), int(rec["y1"]), int(rec["x2"]), int(rec["y2"]))
            score = float(rec["score"])
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed proposal record in {path}: {rec!r}") from exc
        props.append(LandmarkProposal(box=box, score=score))
    props.sort(key=lambda p: (-p.score, p.box.x1, p.box.y1, p.box.area))
    return props
