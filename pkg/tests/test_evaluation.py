import csv
import json
import math

import numpy as np
import pytest

from placerec.descriptor import DbMeta, DescriptorDB
from placerec.evaluation import (
    METHOD_CLM,
    METHOD_CWI,
    METHOD_LDD,
    ManifestError,
    PrPoint,
    RankedQueryResult,
    classify,
    confusion_matrix,
    load_manifest,
    method_shift,
    pr_curve,
    precision_recall,
    rank_references,
    ratio_accept,
    score_pair,
    write_confusion_csv,
    write_pr_csv,
    write_summary_json,
)
from placerec.imaging import GrayImage, save_png
from placerec.proposals import Box, section_layout

from helpers import make_descriptor, random_descriptor

LAYOUT = section_layout(640, 320, 3)


def _write_image(path):
    save_png(GrayImage.from_array(np.full((8, 8), 0.5)), path)


def _manifest_file(tmp_path, n=2, name="demo"):
    locations = []
    for i in range(n):
        ref = tmp_path / f"loc{i}_ref.png"
        test = tmp_path / f"loc{i}_test.png"
        _write_image(ref)
        _write_image(test)
        locations.append({"id": f"loc{i}", "reference": ref.name, "test": test.name})
    p = tmp_path / "manifest.json"
    p.write_text(json.dumps({"name": name, "locations": locations}))
    return p


def _db_of(descriptors, dim=8):
    meta = DbMeta(
        feature_dim=dim,
        seed=7,
        budgets=(5, 15, 5),
        section_width=320,
        overlap=0.5,
        layout=LAYOUT,
        image_height=480,
    )
    db = DescriptorDB(meta=meta)
    for d in descriptors:
        db.add(d)
    return db


class TestLoadManifest:
    def test_valid(self, tmp_path):
        p = _manifest_file(tmp_path, n=3)
        m = load_manifest(p)
        assert m.name == "demo"
        assert len(m) == 3
        assert m.locations[0].location_id == "loc0"
        assert m.locations[0].reference_path.is_file()

    def test_relative_paths_resolve_to_manifest_dir(self, tmp_path):
        sub = tmp_path / "data"
        sub.mkdir()
        p = _manifest_file(sub)
        m = load_manifest(p)
        for loc in m.locations:
            assert loc.reference_path.parent == sub

    def test_name_defaults_to_stem(self, tmp_path):
        p = _manifest_file(tmp_path)
        raw = json.loads(p.read_text())
        del raw["name"]
        p.write_text(json.dumps(raw))
        assert load_manifest(p).name == "manifest"

    def test_vanishing_point_fields(self, tmp_path):
        p = _manifest_file(tmp_path, n=1)
        raw = json.loads(p.read_text())
        raw["locations"][0]["vp_x_reference"] = 400
        raw["locations"][0]["vp_x_test"] = 250
        p.write_text(json.dumps(raw))
        loc = load_manifest(p).locations[0]
        assert loc.vp_x_reference == 400
        assert loc.vp_x_test == 250

    def test_empty_locations(self, tmp_path):
        p = tmp_path / "m.json"
        p.write_text(json.dumps({"name": "x", "locations": []}))
        with pytest.raises(ManifestError):
            load_manifest(p)

    def test_duplicate_id_named_in_error(self, tmp_path):
        p = _manifest_file(tmp_path, n=2)
        raw = json.loads(p.read_text())
        raw["locations"][1]["id"] = "loc0"
        p.write_text(json.dumps(raw))
        with pytest.raises(ManifestError, match="loc0"):
            load_manifest(p)

    def test_missing_image(self, tmp_path):
        p = _manifest_file(tmp_path, n=1)
        (tmp_path / "loc0_ref.png").unlink()
        with pytest.raises(ManifestError):
            load_manifest(p)

    def test_malformed_json(self, tmp_path):
        p = tmp_path / "m.json"
        p.write_text("{not json")
        with pytest.raises(ManifestError):
            load_manifest(p)

    def test_missing_field(self, tmp_path):
        p = tmp_path / "m.json"
        p.write_text(json.dumps({"locations": [{"id": "a", "reference": "r.png"}]}))
        with pytest.raises(ManifestError):
            load_manifest(p)


class TestRankedQueryResult:
    def test_best_and_second(self):
        r = RankedQueryResult(query_id="q", ranked=(("a", 2.0), ("b", 1.0)))
        assert r.best == ("a", 2.0)
        assert r.second_best == ("b", 1.0)

    def test_single_reference_flagged(self):
        r = RankedQueryResult(query_id="q", ranked=(("a", 2.0),))
        assert r.second_best is None

    def test_unsorted_rejected(self):
        with pytest.raises(ValueError):
            RankedQueryResult(query_id="q", ranked=(("a", 1.0), ("b", 2.0)))

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            RankedQueryResult(query_id="q", ranked=())


class TestRankReferences:
    def test_self_retrieval(self):
        rng = np.random.default_rng(0)
        refs = [random_descriptor(rng, LAYOUT, f"ref{i}") for i in range(4)]
        db = _db_of(refs)
        result = rank_references(refs[2], db, METHOD_LDD)
        assert result.best[0] == "ref2"
        assert result.best[1] == 3.0
        assert len(result.ranked) == 4

    def test_single_reference_db(self):
        rng = np.random.default_rng(1)
        ref = random_descriptor(rng, LAYOUT, "only")
        db = _db_of([ref])
        result = rank_references(ref, db, METHOD_LDD)
        assert result.second_best is None

    def test_tie_breaks_on_reference_id(self):
        rng = np.random.default_rng(2)
        proto = random_descriptor(rng, LAYOUT, "zz")
        import dataclasses

        twin_b = dataclasses.replace(proto, view_id="ref_b")
        twin_a = dataclasses.replace(proto, view_id="ref_a")
        db = _db_of([twin_b, twin_a])
        result = rank_references(proto, db, METHOD_LDD)
        assert result.ranked[0][0] == "ref_a"
        assert result.ranked[0][1] == result.ranked[1][1]

    def test_empty_db_rejected(self):
        rng = np.random.default_rng(3)
        q = random_descriptor(rng, LAYOUT, "q")
        with pytest.raises(ValueError):
            rank_references(q, _db_of([]), METHOD_LDD)

    def test_cwi_requires_whole_image(self):
        rng = np.random.default_rng(4)
        bare = random_descriptor(rng, LAYOUT, "bare", with_whole=False)
        with_whole = random_descriptor(rng, LAYOUT, "full")
        with pytest.raises(ValueError):
            score_pair(bare, with_whole, METHOD_CWI)

    def test_unknown_method(self):
        rng = np.random.default_rng(5)
        q = random_descriptor(rng, LAYOUT, "q")
        with pytest.raises(ValueError):
            score_pair(q, q, "hog")

    def test_method_shift_values(self):
        assert method_shift(METHOD_LDD, 3) == 3.0
        assert method_shift(METHOD_CLM, 3) == 1.0
        assert method_shift(METHOD_CWI, 5) == 1.0
        with pytest.raises(ValueError):
            method_shift("hog", 3)


class TestRatioAccept:
    def test_tau_one_accepts_everything(self):
        assert ratio_accept(5.9, 5.0, 1.0)
        assert ratio_accept(2.0, 2.0, 1.0)
        assert ratio_accept(0.1, 0.0, 1.0)

    def test_shifted_ldd_example(self):
        # best 2.9, second 2.0 with shift 3: 5.0/5.9 = 0.847 > 0.8.
        assert not ratio_accept(2.9, 2.0, 0.8, shift=3.0)
        assert ratio_accept(2.9, 2.0, 0.85, shift=3.0)

    def test_equal_scores_rejected_below_one(self):
        assert not ratio_accept(2.0, 2.0, 0.99, shift=1.0)

    def test_missing_second_accepts(self):
        assert ratio_accept(1.5, None, 0.0)

    def test_best_below_second_rejected(self):
        with pytest.raises(ValueError):
            ratio_accept(1.0, 2.0, 0.5)

    def test_insufficient_shift_rejected(self):
        with pytest.raises(ValueError):
            ratio_accept(1.0, -2.0, 0.5, shift=0.5)

    def test_zero_denominator_is_full_ambiguity(self):
        assert ratio_accept(-3.0, -3.0, 1.0, shift=3.0)
        assert not ratio_accept(-3.0, -3.0, 0.9, shift=3.0)


class TestPrecisionRecall:
    def test_worked_example(self):
        p, r = precision_recall(150, 30, 20)
        assert round(p, 4) == 0.8333
        assert round(r, 4) == 0.8824

    def test_full_recall_statistic(self):
        p, r = precision_recall(140, 60, 0)
        assert p == pytest.approx(0.70)
        assert r == 1.0

    def test_perfect(self):
        assert precision_recall(10, 0, 0) == (1.0, 1.0)

    def test_undefined_precision_is_nan(self):
        p, r = precision_recall(0, 0, 5)
        assert math.isnan(p)
        assert r == 0.0

    def test_all_zero_rejected(self):
        with pytest.raises(ValueError):
            precision_recall(0, 0, 0)

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            precision_recall(-1, 0, 5)


def _toy_results():
    results = [
        RankedQueryResult(query_id="q0", ranked=(("r0", 9.0), ("r1", 0.0))),
        RankedQueryResult(query_id="q1", ranked=(("r0", 9.0), ("r1", 0.0))),
        RankedQueryResult(query_id="q2", ranked=(("r2", 9.0), ("r0", 8.0))),
    ]
    gt = {"q0": "r0", "q1": "r1", "q2": "r2"}
    return results, gt


class TestClassify:
    def test_counts_at_half_tau(self):
        results, gt = _toy_results()
        # q0: accepted+correct, q1: accepted+wrong, q2: margin too small.
        tp, fp, fn = classify(results, gt, tau=0.5, shift=0.0)
        assert (tp, fp, fn) == (1, 1, 1)

    def test_counts_at_full_recall(self):
        results, gt = _toy_results()
        tp, fp, fn = classify(results, gt, tau=1.0, shift=0.0)
        assert (tp, fp, fn) == (2, 1, 0)

    def test_missing_ground_truth(self):
        results, gt = _toy_results()
        del gt["q1"]
        with pytest.raises(ValueError):
            classify(results, gt, tau=1.0, shift=0.0)


class TestPrCurve:
    def test_tau_one_always_included(self):
        results, gt = _toy_results()
        points = pr_curve(results, gt, [0.5], shift=0.0)
        assert [pt.tau for pt in points] == [0.5, 1.0]

    def test_full_recall_point(self):
        results, gt = _toy_results()
        points = pr_curve(results, gt, [1.0], shift=0.0)
        assert len(points) == 1
        pt = points[0]
        assert pt.fn == 0
        assert pt.tp + pt.fp == len(results)
        assert pt.recall == 1.0

    def test_recall_monotone_in_tau(self):
        rng = np.random.default_rng(6)
        results = []
        gt = {}
        for i in range(30):
            scores = np.sort(rng.uniform(0.0, 10.0, size=5))[::-1]
            refs = [f"r{j}" for j in range(5)]
            rng.shuffle(refs)
            results.append(
                RankedQueryResult(
                    query_id=f"q{i}",
                    ranked=tuple((refs[j], float(scores[j])) for j in range(5)),
                )
            )
            gt[f"q{i}"] = refs[0] if i % 2 == 0 else refs[1]
        grid = [round(0.05 * k, 2) for k in range(1, 21)]
        points = pr_curve(results, gt, grid, shift=0.0)
        recalls = [pt.recall for pt in points]
        assert all(recalls[i] <= recalls[i + 1] + 1e-12 for i in range(len(recalls) - 1))

    def test_separable_case_perfect_precision(self):
        results = [
            RankedQueryResult(query_id=f"q{i}", ranked=((f"r{i}", 100.0), ("other", 0.1)))
            for i in range(5)
        ]
        gt = {f"q{i}": f"r{i}" for i in range(5)}
        points = pr_curve(results, gt, [0.2, 0.5, 1.0], shift=0.0)
        assert all(pt.precision == 1.0 for pt in points)

    def test_empty_grid_rejected(self):
        results, gt = _toy_results()
        with pytest.raises(ValueError):
            pr_curve(results, gt, [], shift=0.0)


class TestConfusionMatrix:
    def test_diagonal_dominates_for_self_queries(self):
        rng = np.random.default_rng(7)
        refs = [random_descriptor(rng, LAYOUT, f"ref{i}") for i in range(5)]
        db = _db_of(refs)
        m = confusion_matrix(refs, db, METHOD_LDD)
        assert m.shape == (5, 5)
        for i in range(5):
            assert m[i].argmax() == i
            assert m[i, i] == 3.0

    def test_limit_keeps_first_k(self):
        rng = np.random.default_rng(8)
        refs = [random_descriptor(rng, LAYOUT, f"ref{i}") for i in range(6)]
        db = _db_of(refs)
        full = confusion_matrix(refs, db, METHOD_LDD)
        small = confusion_matrix(refs, db, METHOD_LDD, limit=3)
        assert small.shape == (3, 3)
        np.testing.assert_array_equal(small, full[:3, :3])

    def test_single_location(self):
        rng = np.random.default_rng(9)
        ref = random_descriptor(rng, LAYOUT, "ref0")
        m = confusion_matrix([ref], _db_of([ref]), METHOD_LDD)
        assert m.shape == (1, 1)
        assert m[0, 0] == 3.0

    def test_empty_queries_rejected(self):
        rng = np.random.default_rng(10)
        ref = random_descriptor(rng, LAYOUT, "ref0")
        with pytest.raises(ValueError):
            confusion_matrix([], _db_of([ref]), METHOD_LDD)

    def test_clm_and_cwi_methods_apply(self):
        rng = np.random.default_rng(11)
        refs = [random_descriptor(rng, LAYOUT, f"ref{i}") for i in range(2)]
        db = _db_of(refs)
        m_clm = confusion_matrix(refs, db, METHOD_CLM)
        m_cwi = confusion_matrix(refs, db, METHOD_CWI)
        assert m_cwi[0, 0] == 1.0
        assert m_clm.shape == (2, 2)


class TestReportWriters:
    def test_pr_csv_round_trip(self, tmp_path):
        points = [
            PrPoint(tau=0.5, precision=1.0, recall=0.5, tp=1, fp=0, fn=1),
            PrPoint(tau=1.0, precision=math.nan, recall=1.0, tp=0, fp=0, fn=0),
        ]
        p = tmp_path / "pr.csv"
        write_pr_csv(p, points)
        with open(p, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["tau", "precision", "recall"]
        assert float(rows[1][0]) == 0.5
        assert float(rows[1][1]) == 1.0
        assert math.isnan(float(rows[2][1]))

    def test_confusion_csv(self, tmp_path):
        m = np.array([[3.0, 1.0], [0.5, 2.5]])
        p = tmp_path / "confusion.csv"
        write_confusion_csv(p, m, ["q0", "q1"], ["r0", "r1"])
        with open(p, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["query_id", "r0", "r1"]
        assert rows[1][0] == "q0"
        assert float(rows[2][2]) == 2.5

    def test_summary_json(self, tmp_path):
        p = tmp_path / "summary.json"
        write_summary_json(p, {"method": "ldd", "precision": 0.75})
        assert json.loads(p.read_text())["precision"] == 0.75
