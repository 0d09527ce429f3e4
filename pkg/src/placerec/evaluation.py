"""Dataset manifests, reference ranking, ratio-test thresholding, PR curves.

Ground truth is positional: the test view of location i matches the reference
view of location i and nothing else (there are no true negatives). A query is
accepted when the ratio of its second-best to best score, after a shift that
makes scores nonnegative, falls at or below tau; tau=1 is the full-recall
operating point. Accepted queries count as tp when the top-ranked reference
is the ground truth and fp otherwise; rejected queries count as fn even when
their top match was wrong.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .descriptor import DescriptorDB, LandmarkDescriptor
from .matching import clm_score, cwi_score, match_ldd

METHOD_LDD = "ldd"
METHOD_CLM = "clm"
METHOD_CWI = "cwi"
METHODS = (METHOD_LDD, METHOD_CLM, METHOD_CWI)


class ManifestError(ValueError):
    """Raised for malformed dataset manifests."""


@dataclass(frozen=True)
class LocationRecord:
    """One location: a reference view and a test view of the same place."""

    location_id: str
    reference_path: Path
    test_path: Path
    vp_x_reference: int | None = None
    vp_x_test: int | None = None


@dataclass(frozen=True)
class DatasetManifest:
    name: str
    locations: tuple[LocationRecord, ...]

    def __post_init__(self):
        if not self.locations:
            raise ManifestError("manifest contains no locations")
        seen = set()
        for loc in self.locations:
            if loc.location_id in seen:
                raise ManifestError(f"duplicate location id {loc.location_id!r}")
            seen.add(loc.location_id)

    def __len__(self) -> int:
        return len(self.locations)


def load_manifest(path: str | Path) -> DatasetManifest:
    """Parse a manifest JSON file; image paths resolve relative to the file."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(raw, dict) or "locations" not in raw:
        raise ManifestError(f"{path}: expected an object with a 'locations' list")
    base = path.parent
    records = []
    for i, loc in enumerate(raw["locations"]):
        try:
            location_id = str(loc["id"])
            reference = base / loc["reference"]
            test = base / loc["test"]
        except (TypeError, KeyError) as exc:
            raise ManifestError(f"{path}: location {i} missing field: {exc}") from exc
        for p in (reference, test):
            if not p.is_file():
                raise ManifestError(f"{path}: image not found: {p}")
        records.append(
            LocationRecord(
                location_id=location_id,
                reference_path=reference,
                test_path=test,
                vp_x_reference=_opt_int(loc, "vp_x_reference"),
                vp_x_test=_opt_int(loc, "vp_x_test"),
            )
        )
    return DatasetManifest(name=str(raw.get("name", path.stem)), locations=tuple(records))


def _opt_int(loc: Mapping, key: str) -> int | None:
    value = loc.get(key)
    return None if value is None else int(value)


@dataclass(frozen=True)
class RankedQueryResult:
    """All references scored against one query, best first."""

    query_id: str
    ranked: tuple[tuple[str, float], ...]

    def __post_init__(self):
        if not self.ranked:
            raise ValueError("ranking must cover at least one reference")
        scores = [s for _, s in self.ranked]
        if any(scores[i] < scores[i + 1] for i in range(len(scores) - 1)):
            raise ValueError("ranking must be sorted by descending score")

    @property
    def best(self) -> tuple[str, float]:
        return self.ranked[0]

    @property
    def second_best(self) -> tuple[str, float] | None:
        """None on a single-reference database."""
        return self.ranked[1] if len(self.ranked) > 1 else None


def score_pair(query: LandmarkDescriptor, reference: LandmarkDescriptor, method: str) -> float:
    if method == METHOD_LDD:
        return match_ldd(query, reference).score
    if method == METHOD_CLM:
        return clm_score(query, reference)
    if method == METHOD_CWI:
        if query.whole_image is None or reference.whole_image is None:
            raise ValueError("whole-image method needs full-frame features on both views")
        return cwi_score(query.whole_image, reference.whole_image)
    raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")


def method_shift(method: str, section_count: int) -> float:
    """Additive shift making scores of the given method nonnegative."""
    if method == METHOD_LDD:
        return float(section_count)
    if method in (METHOD_CLM, METHOD_CWI):
        return 1.0
    raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")


def rank_references(
    query: LandmarkDescriptor, db: DescriptorDB, method: str
) -> RankedQueryResult:
    """Score the query against every reference; ties break on reference id."""
    if not db.descriptors:
        raise ValueError("database is empty")
    scored = [
        (ref_id, score_pair(query, ref, method)) for ref_id, ref in db.descriptors.items()
    ]
    scored.sort(key=lambda item: (-item[1], item[0]))
    return RankedQueryResult(query_id=query.view_id, ranked=tuple(scored))


def ratio_accept(
    best: float, second: float | None, tau: float, shift: float = 0.0
) -> bool:
    """Accept iff (second+shift)/(best+shift) <= tau.

    ``shift`` must be large enough to make both scores nonnegative. A missing
    second score (single-reference database) always accepts; a fully ambiguous
    query (best+shift == 0) has ratio 1 and is only accepted at tau >= 1.
    """
    if second is None:
        return True
    if best < second:
        raise ValueError(f"best score {best} below second score {second}")
    num = second + shift
    den = best + shift
    if num < 0.0 or den < 0.0:
        raise ValueError(f"shift {shift} leaves scores negative ({num}, {den})")
    ratio = 1.0 if den == 0.0 else num / den
    return ratio <= tau


def precision_recall(tp: int, fp: int, fn: int) -> tuple[float, float]:
    """P = tp/(tp+fp), R = tp/(tp+fn); undefined quotients come back as NaN."""
    if min(tp, fp, fn) < 0:
        raise ValueError("counts must be nonnegative")
    if tp + fp + fn == 0:
        raise ValueError("at least one query decision required")
    p = tp / (tp + fp) if tp + fp > 0 else math.nan
    r = tp / (tp + fn) if tp + fn > 0 else math.nan
    return p, r


@dataclass(frozen=True)
class PrPoint:
    tau: float
    precision: float
    recall: float
    tp: int
    fp: int
    fn: int


def classify(
    results: Sequence[RankedQueryResult],
    ground_truth: Mapping[str, str],
    tau: float,
    shift: float,
) -> tuple[int, int, int]:
    """tp/fp/fn counts over all queries at one ratio threshold."""
    tp = fp = fn = 0
    for res in results:
        if res.query_id not in ground_truth:
            raise ValueError(f"no ground truth for query {res.query_id!r}")
        second = res.second_best[1] if res.second_best is not None else None
        if ratio_accept(res.best[1], second, tau, shift):
            if res.best[0] == ground_truth[res.query_id]:
                tp += 1
            else:
                fp += 1
        else:
            fn += 1
    return tp, fp, fn


def pr_curve(
    results: Sequence[RankedQueryResult],
    ground_truth: Mapping[str, str],
    tau_grid: Sequence[float],
    shift: float,
) -> list[PrPoint]:
    """PR points over the threshold grid; tau=1 is always included."""
    if not tau_grid:
        raise ValueError("tau grid is empty")
    taus = sorted(set(float(t) for t in tau_grid) | {1.0})
    points = []
    for tau in taus:
        tp, fp, fn = classify(results, ground_truth, tau, shift)
        p, r = precision_recall(tp, fp, fn)
        points.append(PrPoint(tau=tau, precision=p, recall=r, tp=tp, fp=fp, fn=fn))
    return points


def confusion_matrix(
    queries: Sequence[LandmarkDescriptor],
    db: DescriptorDB,
    method: str,
    limit: int | None = None,
) -> np.ndarray:
    """M[i][j] = score(query_i, reference_j), rows in query order.

    ``limit`` keeps the first k queries and references (deterministic subset).
    """
    refs = list(db.descriptors.values())
    queries = list(queries)
    if limit is not None:
        queries = queries[:limit]
        refs = refs[:limit]
    if not queries or not refs:
        raise ValueError("confusion matrix needs at least one query and one reference")
    out = np.empty((len(queries), len(refs)), dtype=np.float64)
    for i, q in enumerate(queries):
        for j, ref in enumerate(refs):
            out[i, j] = score_pair(q, ref, method)
    return out


def write_pr_csv(path: str | Path, points: Sequence[PrPoint]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["tau", "precision", "recall"])
        for pt in points:
            writer.writerow([f"{pt.tau:.6g}", f"{pt.precision:.6f}", f"{pt.recall:.6f}"])


def write_confusion_csv(
    path: str | Path,
    matrix: np.ndarray,
    query_ids: Sequence[str],
    reference_ids: Sequence[str],
) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["query_id", *reference_ids])
        for qid, row in zip(query_ids, matrix):
            writer.writerow([qid, *(f"{v:.6f}" for v in row)])


def write_summary_json(path: str | Path, summary: Mapping) -> None:
    Path(path).write_text(json.dumps(summary, indent=2, allow_nan=True) + "\n")
