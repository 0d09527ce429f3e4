"""End-to-end orchestration: images to descriptors, databases, evaluations.

Query-time descriptors are always built from the database's stored metadata
(projection seed, section geometry, budgets, feature dim), never from the
caller's build parameters, so a query is comparable with the references by
construction or fails loudly.
"""
from __future__ import annotations

import dataclasses
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .config import FEATURES_BUILTIN, FeatureSource, PipelineConfig
from .descriptor import DbMeta, DescriptorDB, LandmarkDescriptor, build_descriptor
from .evaluation import (
    DatasetManifest,
    PrPoint,
    RankedQueryResult,
    confusion_matrix,
    method_shift,
    pr_curve,
    rank_references,
    write_confusion_csv,
    write_pr_csv,
    write_summary_json,
)
from .features import PROJECTED, FeatureVector, builtin_descriptor, load_features, make_projection, project_batch
from .imaging import GrayImage, load_image, resize_bilinear, save_png
from .matching import MatchResult, match_ldd
from .proposals import (
    Box,
    ProposalConfig,
    SectionLayout,
    generate_proposals,
    section_layout,
    select_per_section,
)

log = logging.getLogger("placerec")

REFERENCE = "reference"
TEST = "test"

DEFAULT_TAU_GRID = tuple(round(i / 20, 2) for i in range(21))


def view_key(location_id: str, which: str) -> str:
    return f"{location_id}__{which}"


def load_view_image(path: str | Path, config: PipelineConfig) -> GrayImage:
    img = load_image(path)
    if (img.width, img.height) != (config.image_width, config.image_height):
        img = resize_bilinear(img, config.image_width, config.image_height)
    return img


def _proposal_config(config: PipelineConfig) -> ProposalConfig:
    return ProposalConfig(nms_iou=config.nms_iou, kappa=config.kappa)


def _view_layout(config: PipelineConfig, vp_x: int | None) -> SectionLayout:
    return section_layout(
        config.image_width,
        config.section_width,
        config.section_count,
        center_x=vp_x,
        overlap=config.overlap,
    )


def _selected_boxes(section_lists) -> list[Box]:
    seen: dict[Box, None] = {}
    for selected in section_lists:
        for prop in selected:
            seen.setdefault(prop.box, None)
    return list(seen)


def _view_features(
    img: GrayImage, boxes: Sequence[Box], view_id: str, config: PipelineConfig
) -> tuple[dict[Box, FeatureVector], FeatureVector | None]:
    full = Box(0, 0, img.width, img.height)
    if config.feature_source.kind == FEATURES_BUILTIN:
        feats = {box: builtin_descriptor(img, box) for box in boxes}
        return feats, builtin_descriptor(img, full)
    path = config.feature_source.directory / f"{view_id}.lddf"
    loaded = load_features(path)
    missing = [box for box in boxes if box not in loaded]
    if missing:
        raise ValueError(
            f"{path}: no feature for {len(missing)} selected box(es), "
            f"first {missing[0].as_tuple()}; exported regions out of date?"
        )
    return {box: loaded[box] for box in boxes}, loaded.get(full)


def _maybe_project(
    feats: dict[Box, FeatureVector], whole: FeatureVector | None, config: PipelineConfig
) -> tuple[dict[Box, FeatureVector], FeatureVector | None]:
    """Project features down to ``projected_dim`` when they are wider than it."""
    dims = {fv.dim for fv in feats.values()}
    if whole is not None:
        dims.add(whole.dim)
    if not dims:
        return feats, whole
    if len(dims) > 1:
        raise ValueError(f"mixed feature dims {sorted(dims)} for one view")
    dim = dims.pop()
    if dim <= config.projected_dim:
        return feats, whole
    matrix = make_projection(config.seed, dim, config.projected_dim)
    boxes = list(feats)
    rows = [feats[b].values for b in boxes]
    if whole is not None:
        rows.append(whole.values)
    out = project_batch(matrix, np.stack(rows))
    projected = {
        b: FeatureVector(values=out[i], kind=PROJECTED) for i, b in enumerate(boxes)
    }
    new_whole = FeatureVector(values=out[-1], kind=PROJECTED) if whole is not None else None
    return projected, new_whole


def describe_view(
    image_path: str | Path,
    view_id: str,
    config: PipelineConfig,
    vp_x: int | None = None,
) -> LandmarkDescriptor:
    """Full single-view pipeline: proposals, selection, features, projection."""
    img = load_view_image(image_path, config)
    layout = _view_layout(config, vp_x)
    proposals = generate_proposals(img, _proposal_config(config))
    section_lists = select_per_section(proposals, layout, config.budgets)
    boxes = _selected_boxes(section_lists)
    feats, whole = _view_features(img, boxes, view_id, config)
    feats, whole = _maybe_project(feats, whole, config)
    return build_descriptor(view_id, section_lists, feats, layout, whole_image=whole)


@dataclass(frozen=True)
class _ViewJob:
    image_path: Path
    view_id: str
    config: PipelineConfig
    vp_x: int | None


def _describe_job(job: _ViewJob) -> LandmarkDescriptor:
    return describe_view(job.image_path, job.view_id, job.config, vp_x=job.vp_x)


def _describe_batch(jobs: Sequence[_ViewJob], workers: int) -> list[LandmarkDescriptor]:
    """Run view jobs, optionally across processes; output keeps job order."""
    if workers <= 1 or len(jobs) <= 1:
        return [_describe_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_describe_job, jobs))


def _location_jobs(
    manifest: DatasetManifest, config: PipelineConfig, which: str
) -> list[_ViewJob]:
    if which not in (REFERENCE, TEST):
        raise ValueError(f"which must be '{REFERENCE}' or '{TEST}', got {which!r}")
    jobs = []
    for loc in manifest.locations:
        if which == REFERENCE:
            path, vp = loc.reference_path, loc.vp_x_reference
        else:
            path, vp = loc.test_path, loc.vp_x_test
        jobs.append(
            _ViewJob(
                image_path=Path(path),
                view_id=view_key(loc.location_id, which),
                config=config,
                vp_x=vp,
            )
        )
    return jobs


def build_database(
    manifest: DatasetManifest,
    config: PipelineConfig,
    which: str = REFERENCE,
    jobs: int = 1,
) -> DescriptorDB:
    """One descriptor per manifest location, plus shared build metadata."""
    descriptors = _describe_batch(_location_jobs(manifest, config, which), jobs)
    dim = next((d.feature_dim for d in descriptors if d.feature_dim is not None), None)
    if dim is None:
        raise ValueError("no view produced a single feature; cannot size the database")
    meta = DbMeta(
        feature_dim=dim,
        seed=config.seed,
        budgets=tuple(config.budgets),
        section_width=config.section_width,
        overlap=config.overlap,
        layout=_view_layout(config, None),
        image_height=config.image_height,
    )
    db = DescriptorDB(meta=meta)
    for d in descriptors:
        db.add(d)
        log.info("described %s: %d landmarks", d.view_id, len(d))
    log.info("database built: %d views, dim %d", len(db), meta.feature_dim)
    return db


def query_config(meta: DbMeta, config: PipelineConfig) -> PipelineConfig:
    """Build parameters for query views: geometry and seed come from the db."""
    return dataclasses.replace(
        config,
        proposals_per_view=sum(meta.budgets),
        budgets=meta.budgets,
        image_width=meta.image_width,
        image_height=meta.image_height,
        section_width=meta.section_width,
        overlap=meta.overlap,
        seed=meta.seed,
        projected_dim=meta.feature_dim,
    )


@dataclass(frozen=True, eq=False)
class EvalOutcome:
    dataset: str
    method: str
    points: tuple[PrPoint, ...]
    full_recall: PrPoint
    results: tuple[RankedQueryResult, ...]
    margins: Mapping[str, float | None]  # correct score minus best impostor
    confusion: np.ndarray
    confusion_query_ids: tuple[str, ...]
    confusion_reference_ids: tuple[str, ...]

    @property
    def margin_positive_fraction(self) -> float | None:
        values = [m for m in self.margins.values() if m is not None]
        if not values:
            return None
        return sum(1 for m in values if m > 0) / len(values)


def evaluate_database(
    manifest: DatasetManifest,
    db: DescriptorDB,
    config: PipelineConfig,
    method: str,
    tau_grid: Sequence[float] = DEFAULT_TAU_GRID,
    jobs: int = 1,
    confusion_limit: int = 30,
) -> EvalOutcome:
    """Rank every test view against the database and sweep the ratio test."""
    qconfig = query_config(db.meta, config)
    queries = _describe_batch(_location_jobs(manifest, qconfig, TEST), jobs)
    gt = {
        view_key(loc.location_id, TEST): view_key(loc.location_id, REFERENCE)
        for loc in manifest.locations
    }
    missing = [ref for ref in gt.values() if ref not in db.descriptors]
    if missing:
        raise ValueError(f"database lacks {len(missing)} ground-truth reference(s), first {missing[0]!r}")
    results = tuple(rank_references(q, db, method) for q in queries)
    shift = method_shift(method, db.meta.section_count)
    points = tuple(pr_curve(results, gt, tau_grid, shift))
    full_recall = next(pt for pt in points if pt.tau == 1.0)
    margins: dict[str, float | None] = {}
    for res in results:
        scores = dict(res.ranked)
        correct = gt[res.query_id]
        impostors = [s for rid, s in res.ranked if rid != correct]
        margins[res.query_id] = scores[correct] - max(impostors) if impostors else None
    k = min(confusion_limit, len(queries), len(db))
    confusion = confusion_matrix(queries, db, method, limit=k)
    return EvalOutcome(
        dataset=manifest.name,
        method=method,
        points=points,
        full_recall=full_recall,
        results=results,
        margins=margins,
        confusion=confusion,
        confusion_query_ids=tuple(q.view_id for q in queries[:k]),
        confusion_reference_ids=tuple(db.view_ids[:k]),
    )


def _json_safe(value):
    if isinstance(value, float) and math.isnan(value):
        return None
    return value


def outcome_summary(outcome: EvalOutcome) -> dict:
    def point_dict(pt: PrPoint) -> dict:
        return {
            "tau": pt.tau,
            "precision": _json_safe(pt.precision),
            "recall": _json_safe(pt.recall),
            "tp": pt.tp,
            "fp": pt.fp,
            "fn": pt.fn,
        }

    return {
        "dataset": outcome.dataset,
        "method": outcome.method,
        "queries": len(outcome.results),
        "full_recall": point_dict(outcome.full_recall),
        "margin_positive_fraction": outcome.margin_positive_fraction,
        "curve": [point_dict(pt) for pt in outcome.points],
    }


def write_reports(outcome: EvalOutcome, out_dir: str | Path) -> dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "summary": out_dir / "summary.json",
        "pr_curve": out_dir / "pr_curve.csv",
        "confusion": out_dir / "confusion.csv",
    }
    write_summary_json(paths["summary"], outcome_summary(outcome))
    write_pr_csv(paths["pr_curve"], outcome.points)
    write_confusion_csv(
        paths["confusion"],
        outcome.confusion,
        outcome.confusion_query_ids,
        outcome.confusion_reference_ids,
    )
    return paths


def match_images(
    path_a: str | Path, path_b: str | Path, config: PipelineConfig
) -> tuple[MatchResult, dict]:
    """Single-pair diagnostic: always computes features in-process."""
    cfg = dataclasses.replace(config, feature_source=FeatureSource(kind=FEATURES_BUILTIN))
    da = describe_view(path_a, "a", cfg)
    db_ = describe_view(path_b, "b", cfg)
    result = match_ldd(da, db_)
    payload = {
        "score": result.score,
        "section_count": da.layout.section_count,
        "pairs": [
            {
                "section": m.section,
                "similarity": m.similarity,
                "box_a": list(da.entries[m.index_a].box.as_tuple()),
                "box_b": list(db_.entries[m.index_b].box.as_tuple()),
            }
            for m in result.pairs
        ],
    }
    return result, payload


def propose_image(
    image_path: str | Path, config: PipelineConfig, top: int | None = None
) -> list[dict]:
    """Ranked proposals of one image as JSON-ready records."""
    img = load_view_image(image_path, config)
    proposals = generate_proposals(img, _proposal_config(config))
    if top is not None:
        proposals = proposals[:top]
    return [
        {
            "x1": p.box.x1,
            "y1": p.box.y1,
            "x2": p.box.x2,
            "y2": p.box.y2,
            "score": p.score,
        }
        for p in proposals
    ]


def export_view_regions(
    image_path: str | Path,
    view_id: str,
    config: PipelineConfig,
    out_dir: str | Path,
    vp_x: int | None = None,
) -> dict:
    """Write region crops plus a box list for the offline feature exporter."""
    img = load_view_image(image_path, config)
    layout = _view_layout(config, vp_x)
    proposals = generate_proposals(img, _proposal_config(config))
    section_lists = select_per_section(proposals, layout, config.budgets)
    boxes = sorted(
        _selected_boxes(section_lists),
        key=lambda b: (b.center_x, b.x1, b.y1, b.x2, b.y2),
    )
    view_dir = Path(out_dir) / view_id
    view_dir.mkdir(parents=True, exist_ok=True)
    regions = []
    for i, box in enumerate(boxes):
        crop_name = f"region_{i:03d}.png"
        save_png(img.crop(box.x1, box.y1, box.x2, box.y2), view_dir / crop_name)
        regions.append(
            {"x1": box.x1, "y1": box.y1, "x2": box.x2, "y2": box.y2, "crop": crop_name}
        )
    save_png(img, view_dir / "full.png")
    listing = {
        "view_id": view_id,
        "image_width": img.width,
        "image_height": img.height,
        "regions": regions,
        "whole_image": {"box": [0, 0, img.width, img.height], "crop": "full.png"},
    }
    (view_dir / "boxes.json").write_text(json.dumps(listing, indent=2) + "\n")
    return listing


def export_regions(
    manifest: DatasetManifest,
    config: PipelineConfig,
    out_dir: str | Path,
    which: str = "both",
) -> list[dict]:
    sides = (REFERENCE, TEST) if which == "both" else (which,)
    listings = []
    for side in sides:
        for job in _location_jobs(manifest, config, side):
            listings.append(
                export_view_regions(job.image_path, job.view_id, config, out_dir, vp_x=job.vp_x)
            )
            log.info("exported regions for %s", job.view_id)
    return listings
