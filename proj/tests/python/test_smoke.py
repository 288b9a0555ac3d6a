import json

import pytest

import cilbench as cb


def test_iou_and_bounds():
    a = cb.BBox(0, 0, 2, 2)
    b = cb.BBox(1, 1, 3, 3)
    assert cb.iou(a, b) == pytest.approx(1 / 7, abs=1e-15)
    assert cb.iou(a, a) == 1.0
    assert cb.mask_bounds([(1, 2), (5, 2), (3, 7)]) == cb.BBox(1, 2, 5, 7)
    with pytest.raises(ValueError):
        cb.BBox(3, 0, 1, 1)


def test_average_precision_example():
    gt_box = cb.BBox(0, 0, 10, 10)
    other = cb.BBox(20, 20, 30, 30)
    gts = [[cb.GroundTruth(gt_box, 0), cb.GroundTruth(other, 0)]]
    dets = [[cb.Detection(gt_box, 0, 0.9),
             cb.Detection(cb.BBox(50, 50, 60, 60), 0, 0.8),
             cb.Detection(other, 0, 0.7)]]
    expected = (51 + 50 * 2 / 3) / 101
    assert cb.average_precision(dets, gts, 0, 0.5) == pytest.approx(expected, abs=1e-12)
    assert cb.average_precision([[]], gts, 1, 0.5) is None
    assert cb.map_50_95([[cb.Detection(gt_box, 0, 0.9)]], [[cb.GroundTruth(gt_box, 0)]], [0]) == 1.0


def test_matching_and_nms():
    box = cb.BBox(0, 0, 10, 10)
    dets = [cb.Detection(box, 0, 0.9), cb.Detection(box, 0, 0.8)]
    kept = cb.nms(dets, 0.7)
    assert len(kept) == 1 and kept[0].confidence == 0.9
    m = cb.greedy_match(dets, [cb.GroundTruth(box, 0)])
    assert [(p.detection, p.gt) for p in m.pairs] == [(0, 0)]
    assert m.unmatched_detections == [1]
    assert cb.image_recall(dets, [cb.GroundTruth(box, 1)]) == 0.0
    assert len(cb.postprocess(dets, conf_threshold=0.85)) == 1


def test_acc_bwt():
    r = cb.EvalMatrix(3)
    for (j, i), v in {(0, 0): 1.0, (1, 0): 0.8, (1, 1): 0.9,
                      (2, 0): 0.6, (2, 1): 0.7, (2, 2): 0.95}.items():
        r.set(j, i, v)
    assert r.complete()
    assert cb.acc(r) == pytest.approx(0.75, abs=1e-12)
    assert cb.bwt(r) == pytest.approx(-0.3, abs=1e-12)
    with pytest.raises(IndexError):
        r.at(0, 2)
    partial = cb.EvalMatrix(2)
    partial.set(0, 0, 0.5)
    assert partial.at(1, 0) is None
    with pytest.raises(cb.CilbenchError):
        cb.bwt(cb.EvalMatrix(1))


def test_replay_selection():
    assert cb.resolve_budget(0.15, 10) == 2
    assert cb.resolve_budget(0.05, 9) == 1
    with pytest.raises(cb.ConfigError):
        cb.resolve_budget(0.0, 10)

    pool = ["a", "b", "c", "d", "e"]
    recall = {"a": 1.0, "b": 0.2, "c": 0.5, "d": 0.0, "e": 0.9}
    assert cb.mir_select(pool, recall, k_select=2) == ["b", "d"]
    assert cb.mir_select(pool, recall, k_select=3, limit=1) == ["d"]

    base = {"a": 0.9, "b": 0.5, "c": 1.0, "d": 0.2}
    now = {"a": 0.3, "b": 0.6, "c": 0.4, "d": 0.2}
    scores = cb.far_scores(base, now)
    assert scores["a"] == pytest.approx(0.6, abs=1e-12)
    assert scores["b"] == 0.0
    assert cb.far_select(base, now, k_select=2) == ["a", "c"]

    picked = cb.er_select([str(k) for k in range(50)], 10, 7)
    assert len(picked) == 10 and picked == sorted(set(picked))
    assert picked == cb.er_select([str(k) for k in range(50)], 10, 7)


def test_echo_run_is_perfect(tmp_path):
    dataset = cb.make_sim_scenario(tasks=3, train_per_task=8, test_per_task=4)
    assert dataset.task_count == 3
    assert not set(dataset.train_ids(0)) & set(dataset.test_ids(0))
    cfg = cb.default_scenario_config()
    cfg["detector"]["backend"] = "echo"
    cfg["seeds"] = [1]
    cfg["budgets"] = [0.25]
    cfg["strategy"]["kinds"] = ["naive", "er", "mir", "far", "joint"]
    result = cb.run_experiment(cfg, dataset, report_dir=str(tmp_path / "out"))
    assert result["completed_seeds"] == result["configured_seeds"]
    for cell in result["cells"]:
        assert cell["acc_mean"] == 1.0
        assert cell["bwt_mean"] == 0.0
    on_disk = json.loads((tmp_path / "out" / "results.json").read_text())
    assert on_disk == result


def test_dataset_round_trip(tmp_path):
    dataset = cb.make_sim_scenario(tasks=2, train_per_task=4, test_per_task=2)
    dataset.save(str(tmp_path))
    loaded = cb.load_dataset(str(tmp_path))
    assert loaded.to_dict() == dataset.to_dict()
    with pytest.raises(cb.DatasetError):
        cb.load_dataset(str(tmp_path / "missing"))


def test_annotation_helpers():
    assert cb.yolo_line(1, cb.BBox(0, 0, 320, 240), 640, 480).startswith("1 0.25 0.25 0.5 0.5")
    auto = {"f1": [(0, (10, 10, 20, 20))], "f2": [(0, (0, 0, 5, 5))]}
    reviewed = {"f1": [(0, (10, 10, 20, 20.5))], "f2": [(1, (0, 0, 5, 5))]}
    report = cb.agreement_report(auto, reviewed)
    assert report["total_frames"] == 2
    assert report["edited_frames"] == 1
    assert report["agreement"] == 0.5
