#include <doctest.h>

#include <cmath>
#include <vector>

#include "cilbench/error.hpp"
#include "cilbench/metrics.hpp"
#include "oracles/ap_oracle.hpp"
#include "support.hpp"

using namespace cilbench;

namespace {

const BBox kGt(0, 0, 10, 10);

}  // namespace

TEST_CASE("greedy_match worked examples") {
  const std::vector<GroundTruthInstance> gt = {{kGt, 0}};

  SUBCASE("exact detection") {
    const std::vector<Detection> d = {{kGt, 0, 0.9}};
    const auto m = greedy_match(d, gt, 0.5);
    REQUIRE(m.pairs.size() == 1);
    CHECK(m.pairs[0].detection == 0);
    CHECK(m.pairs[0].gt == 0);
    CHECK(m.pairs[0].iou == 1.0);
    CHECK(m.unmatched_detections.empty());
    CHECK(m.unmatched_gts.empty());
    CHECK(image_recall(d, gt, 0.5) == 1.0);
  }
  SUBCASE("higher confidence wins the gt") {
    // IoU 0.55 listed first, 0.6 second, so order comes from confidence.
    const std::vector<Detection> d = {{BBox(0, 0, 10, 5.5), 0, 0.8},
                                      {BBox(0, 0, 10, 6), 0, 0.9}};
    CHECK(std::abs(iou(d[1].bbox, kGt) - 0.6) <= 1e-12);
    CHECK(std::abs(iou(d[0].bbox, kGt) - 0.55) <= 1e-12);
    const auto m = greedy_match(d, gt, 0.5);
    REQUIRE(m.pairs.size() == 1);
    CHECK(m.pairs[0].detection == 1);
    CHECK(m.unmatched_detections == std::vector<std::size_t>{0});
    CHECK(m.unmatched_gts.empty());
  }
  SUBCASE("below threshold") {
    const std::vector<Detection> d = {{BBox(0, 0, 10, 4.9), 0, 0.9}};
    const auto m = greedy_match(d, gt, 0.5);
    CHECK(m.pairs.empty());
    CHECK(m.unmatched_detections == std::vector<std::size_t>{0});
    CHECK(m.unmatched_gts == std::vector<std::size_t>{0});
  }
  SUBCASE("threshold is inclusive") {
    const std::vector<Detection> d = {{BBox(0, 0, 10, 5), 0, 0.9}};
    CHECK(greedy_match(d, gt, 0.5).pairs.size() == 1);
  }
  SUBCASE("class awareness") {
    const std::vector<Detection> d = {{kGt, 1, 0.9}};
    CHECK(greedy_match(d, gt, 0.5, true).pairs.empty());
    CHECK(greedy_match(d, gt, 0.5, false).pairs.size() == 1);
  }
  SUBCASE("empty inputs") {
    const auto m = greedy_match({}, {}, 0.5);
    CHECK(m.pairs.empty());
    CHECK(m.unmatched_detections.empty());
    CHECK(m.unmatched_gts.empty());
  }
}

TEST_CASE("greedy_match tie-breaks") {
  // Equal confidences: the lower detection index matches first.
  const std::vector<GroundTruthInstance> gt = {{kGt, 0}};
  const std::vector<Detection> d = {{BBox(0, 0, 10, 6), 0, 0.5}, {kGt, 0, 0.5}};
  auto m = greedy_match(d, gt, 0.5);
  REQUIRE(m.pairs.size() == 1);
  CHECK(m.pairs[0].detection == 0);
  // Equal IoU to two gts: the lower gt index is taken.
  const std::vector<GroundTruthInstance> twin = {{kGt, 0}, {kGt, 0}};
  m = greedy_match(std::vector<Detection>{{kGt, 0, 0.7}}, twin, 0.5);
  REQUIRE(m.pairs.size() == 1);
  CHECK(m.pairs[0].gt == 0);
  CHECK(m.unmatched_gts == std::vector<std::size_t>{1});
}

TEST_CASE("image_recall worked examples") {
  const std::vector<GroundTruthInstance> two = {{kGt, 0}, {BBox(20, 20, 30, 30), 0}};
  CHECK(image_recall({}, two, 0.5) == 0.0);
  CHECK(image_recall(std::vector<Detection>{{kGt, 0, 0.9}}, two, 0.5) == 0.5);
  CHECK(image_recall(std::vector<Detection>{{kGt, 0, 0.9}}, {}, 0.5) == 1.0);
  CHECK(image_recall({}, {}, 0.5) == 1.0);
}

TEST_CASE("greedy_match and image_recall properties") {
  Rng rng(21);
  for (int i = 0; i < 500; ++i) {
    const auto inst = testsupport::random_detection_instance(rng, 1, 12, 2);
    const auto& d = inst.dets[0];
    const auto& g = inst.gts[0];
    const auto m = greedy_match(d, g, 0.5);
    std::vector<int> det_used(d.size()), gt_used(g.size());
    for (const auto& p : m.pairs) {
      CHECK(++det_used[p.detection] == 1);
      CHECK(++gt_used[p.gt] == 1);
      CHECK(p.iou >= 0.5);
      CHECK(d[p.detection].class_id == g[p.gt].class_id);
    }
    CHECK(m.pairs.size() <= std::min(d.size(), g.size()));
    CHECK(m.pairs.size() + m.unmatched_detections.size() == d.size());
    CHECK(m.pairs.size() + m.unmatched_gts.size() == g.size());
    // recall never drops as the threshold loosens
    double prev = -1.0;
    for (double thr : {0.9, 0.75, 0.5, 0.3, 0.1}) {
      const double r = image_recall(d, g, thr);
      CHECK(r >= prev);
      prev = r;
    }
  }
}

TEST_CASE("nms worked examples") {
  // IoU 0.8: (0,0,10,10) vs (0,0,10,8)
  const std::vector<Detection> heavy = {{BBox(0, 0, 10, 8), 0, 0.8}, {kGt, 0, 0.9}};
  const auto kept = nms(heavy, 0.7);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].confidence == 0.9);
  // IoU 0.5: (0,0,10,10) vs (0,0,10,5)
  const std::vector<Detection> light = {{kGt, 0, 0.9}, {BBox(0, 0, 10, 5), 0, 0.8}};
  CHECK(nms(light, 0.7).size() == 2);
  CHECK(nms({}, 0.7).empty());
  // other class is never suppressed
  const std::vector<Detection> cross = {{kGt, 0, 0.9}, {kGt, 1, 0.8}};
  CHECK(nms(cross, 0.7).size() == 2);
  // IoU exactly at the threshold survives
  const std::vector<Detection> edge = {{kGt, 0, 0.9}, {BBox(0, 0, 10, 7), 0, 0.8}};
  CHECK(nms(edge, 0.7).size() == 2);
}

TEST_CASE("nms properties") {
  Rng rng(3);
  for (int i = 0; i < 500; ++i) {
    const auto inst = testsupport::random_detection_instance(rng, 1, 15, 3);
    const auto& d = inst.dets[0];
    const auto kept = nms(d, 0.7);
    CHECK(kept.size() <= d.size());
    for (std::size_t a = 0; a < kept.size(); ++a) {
      CHECK(std::find(d.begin(), d.end(), kept[a]) != d.end());
      if (a > 0) CHECK(kept[a - 1].confidence >= kept[a].confidence);
      for (std::size_t b = a + 1; b < kept.size(); ++b) {
        if (kept[a].class_id == kept[b].class_id) CHECK(iou(kept[a].bbox, kept[b].bbox) <= 0.7);
      }
    }
    CHECK(nms(d, 0.7) == kept);
  }
}

TEST_CASE("postprocess filters, suppresses and caps") {
  InferenceConfig cfg;
  std::vector<Detection> d = {{kGt, 0, 0.24}, {kGt, 0, 0.25}, {BBox(0, 0, 10, 9), 0, 0.3}};
  auto out = postprocess(d, cfg);
  REQUIRE(out.size() == 1);
  CHECK(out[0].confidence == 0.3);

  std::vector<Detection> many;
  for (int i = 0; i < 150; ++i) {
    many.emplace_back(BBox(i * 20.0, 0, i * 20.0 + 10, 10), 0, 0.3 + i * 0.004);
  }
  out = postprocess(many, cfg);
  REQUIRE(out.size() == 100);
  CHECK(out.front().confidence == many.back().confidence);

  InferenceConfig bad;
  bad.conf_threshold = 1.5;
  CHECK_THROWS(bad.validate());
}

TEST_CASE("average_precision worked examples") {
  const std::vector<ImageGroundTruth> one = {{{kGt, 0}}};
  CHECK(average_precision(std::vector<ImageDetections>{{{kGt, 0, 0.9}}}, one, 0, 0.5) == 1.0);
  CHECK(average_precision(std::vector<ImageDetections>{{}}, one, 0, 0.5) == 0.0);
  CHECK_FALSE(average_precision(std::vector<ImageDetections>{{}}, one, 1, 0.5).has_value());

  // TP at 0.9, FP at 0.8, TP at 0.7 over two gts: precision 1, 1/2, 2/3 at
  // recall 1/2, 1/2, 1. Grid points 0..0.50 read 1, 0.51..1 read 2/3.
  const BBox other(20, 20, 30, 30);
  const std::vector<ImageGroundTruth> two = {{{kGt, 0}, {other, 0}}};
  const std::vector<ImageDetections> dets = {
      {{kGt, 0, 0.9}, {BBox(50, 50, 60, 60), 0, 0.8}, {other, 0, 0.7}}};
  const double expected = (51.0 + 50.0 * (2.0 / 3.0)) / 101.0;
  const auto ap = average_precision(dets, two, 0, 0.5);
  REQUIRE(ap.has_value());
  CHECK(std::abs(*ap - expected) <= 1e-12);
  CHECK(std::abs(*ap - *oracle::average_precision(dets, two, 0, 0.5)) <= 1e-12);
}

TEST_CASE("map_50_95 worked examples") {
  const std::vector<ImageGroundTruth> one = {{{kGt, 0}}};
  const std::vector<ClassId> cls = {0};
  CHECK(map_50_95(std::vector<ImageDetections>{{{kGt, 0, 0.9}}}, one, cls) == 1.0);
  const auto m = map_50_95(std::vector<ImageDetections>{{{BBox(0, 0, 10, 6), 0, 0.9}}}, one, cls);
  REQUIRE(m.has_value());
  CHECK(std::abs(*m - 0.3) <= 1e-12);
  const std::vector<ClassId> absent = {3};
  CHECK_FALSE(map_50_95(std::vector<ImageDetections>{{}}, one, absent).has_value());
  const auto t = coco_iou_thresholds();
  CHECK(t.front() == 0.5);
  CHECK(t.back() == 0.95);
}

TEST_CASE("average_precision agrees with the brute-force oracle") {
  Rng rng(2024);
  for (int i = 0; i < 300; ++i) {
    const auto inst = testsupport::random_detection_instance(rng);
    for (int c : inst.classes) {
      for (double thr : {0.5, 0.75, 0.9}) {
        const auto got = average_precision(inst.dets, inst.gts, c, thr);
        const auto want = oracle::average_precision(inst.dets, inst.gts, c, thr);
        REQUIRE(got.has_value() == want.has_value());
        if (got) CHECK(std::abs(*got - *want) <= 1e-9);
      }
    }
    const auto got = map_50_95(inst.dets, inst.gts, inst.classes);
    const auto want = oracle::map_50_95(inst.dets, inst.gts, inst.classes);
    REQUIRE(got.has_value() == want.has_value());
    if (got) {
      CHECK(std::abs(*got - *want) <= 1e-9);
      CHECK(*got >= 0.0);
      CHECK(*got <= 1.0);
    }
  }
}

TEST_CASE("a duplicate perfect detection never lowers mAP after NMS") {
  Rng rng(77);
  InferenceConfig cfg;
  cfg.conf_threshold = 1e-9;
  auto score = [&](const testsupport::DetectionInstance& inst) {
    std::vector<ImageDetections> pp;
    for (const auto& d : inst.dets) pp.push_back(postprocess(d, cfg));
    return map_50_95(pp, inst.gts, inst.classes);
  };
  int checked = 0;
  for (int i = 0; i < 300; ++i) {
    auto inst = testsupport::random_detection_instance(rng, 4, 10, 2);
    std::size_t im = 0;
    while (im < inst.gts.size() && inst.gts[im].empty()) ++im;
    if (im == inst.gts.size()) continue;
    const auto& g = inst.gts[im][rng.below(inst.gts[im].size())];
    const Detection perfect(g.bbox, g.class_id, testsupport::random_conf(rng));
    inst.dets[im].push_back(perfect);
    const auto before = score(inst);
    inst.dets[im].push_back(perfect);
    const auto after = score(inst);
    REQUIRE(before.has_value());
    REQUIRE(after.has_value());
    CHECK(*after >= *before);
    ++checked;
  }
  CHECK(checked > 100);
}

TEST_CASE("acc and bwt worked examples") {
  EvalMatrix one(1);
  one.set(0, 0, 0.7);
  CHECK(acc(one) == 0.7);
  CHECK_THROWS_AS(bwt(one), Error);

  EvalMatrix r(3);
  r.set(0, 0, 1.0);
  r.set(1, 0, 0.8);
  r.set(1, 1, 0.9);
  CHECK_THROWS_AS(acc(r), Error);
  r.set(2, 0, 0.6);
  r.set(2, 1, 0.7);
  r.set(2, 2, 0.95);
  CHECK(std::abs(acc(r) - 0.75) <= 1e-12);
  CHECK(std::abs(bwt(r) - (-0.3)) <= 1e-12);

  EvalMatrix flat(2);
  flat.set(0, 0, 1.0);
  flat.set(1, 0, 1.0);
  flat.set(1, 1, 0.9);
  CHECK(bwt(flat) == 0.0);

  EvalMatrix up(2);
  up.set(0, 0, 0.5);
  up.set(1, 0, 0.8);
  up.set(1, 1, 0.9);
  CHECK(bwt(up) > 0.0);

  EvalMatrix ones(4);
  for (std::size_t j = 0; j < 4; ++j) {
    for (std::size_t i = 0; i <= j; ++i) ones.set(j, i, 1.0);
  }
  CHECK(acc(ones) == 1.0);
  CHECK(bwt(ones) == 0.0);
}

TEST_CASE("eval matrix is lower triangular") {
  EvalMatrix r(3);
  CHECK_THROWS(r.set(0, 1, 0.5));
  CHECK_THROWS(r.set(3, 0, 0.5));
  CHECK_THROWS(r.set(1, 0, 1.5));
  CHECK_FALSE(r.at(0, 0).has_value());
  r.set(0, 0, 0.5);
  CHECK(r.row_complete(0));
  CHECK(r.completed_rows() == 1);
  CHECK_FALSE(r.complete());
}
