#include <doctest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "cilbench/annotate.hpp"
#include "cilbench/error.hpp"
#include "support.hpp"

using namespace cilbench;

namespace {

Polygon square(double x0, double y0, double x1, double y1) {
  return {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}};
}

TeacherPrediction pred(double conf, Polygon mask, BBox box, const std::string& cls = "car",
                       const ImageId& id = "f1") {
  return {id, std::move(mask), box, conf, cls, "a photo of a " + cls};
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

}  // namespace

TEST_CASE("teacher filter gates") {
  const AnnotationConfig cfg;  // 0.75, 0.5
  const BBox box(0, 0, 10, 10);
  const std::vector<TeacherPrediction> preds = {
      pred(0.9, square(0, 0, 10, 10), box),
      pred(0.74, square(0, 0, 10, 10), box),
      pred(0.75, square(0, 0, 10, 10), box),
      // mask bounds (0,0,10,3): IoU 0.3 with the box
      pred(0.95, square(0, 0, 10, 3), box),
      // IoU exactly 0.5 passes
      pred(0.95, square(0, 0, 10, 5), box),
      pred(0.95, {{1, 1}, {2, 2}}, box),
      pred(0.95, {{1, 1}, {1, 5}, {1, 9}}, box),
  };
  const auto r = filter_teacher(preds, cfg);
  REQUIRE(r.accepted.size() == 3);
  CHECK(r.accepted[0].confidence == 0.9);
  CHECK(r.accepted[1].confidence == 0.75);
  CHECK(r.accepted[2].mask.size() == 4);
  CHECK(r.accepted[0].prompt == "a photo of a car");
  REQUIRE(r.rejected.size() == 4);
  CHECK(r.rejected[0].reason == RejectReason::kLowConfidence);
  CHECK(r.rejected[1].reason == RejectReason::kMaskBoxMismatch);
  CHECK(r.rejected[2].reason == RejectReason::kDegenerateMask);
  CHECK(r.rejected[3].reason == RejectReason::kDegenerateMask);
  CHECK(to_string(RejectReason::kMaskBoxMismatch) == "mask_box_mismatch");

  // A degenerate mask with low confidence is reported as low confidence.
  const std::vector<TeacherPrediction> both = {pred(0.1, {}, box)};
  CHECK(filter_teacher(both, cfg).rejected.at(0).reason == RejectReason::kLowConfidence);
}

TEST_CASE("teacher filter is idempotent") {
  Rng rng(8);
  std::vector<TeacherPrediction> preds;
  for (int k = 0; k < 300; ++k) {
    const BBox b = testsupport::random_box(rng);
    const BBox m = testsupport::perturb(rng, b, 0.4);
    preds.push_back(pred(rng.uniform(), square(m.x_min(), m.y_min(), m.x_max(), m.y_max()), b));
  }
  const AnnotationConfig cfg;
  const auto once = filter_teacher(preds, cfg);
  CHECK(once.accepted.size() + once.rejected.size() == preds.size());
  const auto twice = filter_teacher(once.accepted, cfg);
  CHECK(twice.accepted.size() == once.accepted.size());
  CHECK(twice.rejected.empty());
}

TEST_CASE("annotation config validation") {
  AnnotationConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.conf_threshold = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("teacher JSONL") {
  std::istringstream good(
      R"({"image_id":"f1","mask":[[0,0],[10,0],[10,10]],"box":[0,0,10,10],"confidence":0.8,"class":"car"})"
      "\n\n"
      R"({"image_id":"f2","mask":[[0,0],[5,0],[5,5]],"box":[0,0,5,5],"confidence":0.9,"class":"drone","prompt":"drone"})"
      "\n");
  const auto preds = read_teacher_jsonl(good);
  REQUIRE(preds.size() == 2);
  CHECK(preds[1].prompt == "drone");
  CHECK(preds[0].box == BBox(0, 0, 10, 10));

  std::istringstream bad_conf(
      "\n" R"({"image_id":"f1","mask":[],"box":[0,0,1,1],"confidence":1.2,"class":"car"})");
  try {
    read_teacher_jsonl(bad_conf);
    FAIL("expected DatasetError");
  } catch (const DatasetError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  std::istringstream missing(R"({"image_id":"f1"})");
  CHECK_THROWS_AS(read_teacher_jsonl(missing), DatasetError);
  std::istringstream garbage("nope");
  CHECK_THROWS_AS(read_teacher_jsonl(garbage), DatasetError);
}

TEST_CASE("frames_from_teacher") {
  const std::vector<std::string> classes = {"car", "drone"};
  const std::vector<ImageId> frames = {"f1", "f2"};
  const std::vector<TeacherPrediction> acc = {pred(0.9, {}, BBox(0, 0, 5, 5), "drone", "f1")};
  const auto f = frames_from_teacher(acc, frames, classes);
  CHECK(f.size() == 2);
  CHECK(f.at("f1").at(0).class_id == 1);
  CHECK(f.at("f2").empty());
  const std::vector<TeacherPrediction> unknown = {pred(0.9, {}, BBox(0, 0, 5, 5), "tank")};
  CHECK_THROWS_AS(frames_from_teacher(unknown, frames, classes), DatasetError);
}

TEST_CASE("agreement worked examples") {
  const BBox a(0, 0, 10, 10), b(20, 20, 40, 40);
  FrameAnnotations autom = {{"f1", {{0, a}, {1, b}}}, {"f2", {{0, a}}}, {"f3", {}}, {"f4", {{0, a}}}};
  SUBCASE("identical and reordered") {
    FrameAnnotations rev = autom;
    std::swap(rev["f1"][0], rev["f1"][1]);
    rev["f4"] = {{0, BBox(0.5, -0.5, 11, 9)}};  // within 1 px
    const auto r = agreement_report(autom, rev);
    CHECK(r.total_frames == 4);
    CHECK(r.edited_frames == 0);
    CHECK(r.agreement == 1.0);
  }
  SUBCASE("each kind of edit") {
    FrameAnnotations rev = autom;
    rev["f1"][1].class_id = 0;                 // class change
    rev["f2"] = {{0, BBox(0, 0, 12, 10)}};     // box edit
    rev["f3"] = {{1, b}};                      // insertion
    rev["f4"] = {};                            // deletion
    const auto r = agreement_report(autom, rev);
    CHECK(r.edited_frames == 4);
    CHECK(r.agreement == 0.0);
    REQUIRE(r.flagged.size() == 4);
    CHECK(r.flagged[0].reasons == std::vector<std::string>{"class_change:1"});
    CHECK(r.flagged[1].reasons == std::vector<std::string>{"box_edit:1"});
    CHECK(r.flagged[2].reasons == std::vector<std::string>{"insertion:1"});
    CHECK(r.flagged[3].reasons == std::vector<std::string>{"deletion:1"});
    const auto j = report_to_json(r);
    CHECK(j["edited_frames"] == 4);
    CHECK(j["flagged"][0]["image_id"] == "f1");
  }
  SUBCASE("one edited frame of four") {
    FrameAnnotations rev = autom;
    rev["f2"].push_back({0, a});  // duplicate box counts
    const auto r = agreement_report(autom, rev);
    CHECK(r.edited_frames == 1);
    CHECK(r.agreement == 0.75);
  }
  SUBCASE("frame sets must agree") {
    FrameAnnotations rev = autom;
    rev.erase("f3");
    CHECK_THROWS_AS(agreement_report(autom, rev), Error);
    rev = autom;
    rev["f9"] = {};
    CHECK_THROWS_AS(agreement_report(autom, rev), Error);
  }
  CHECK(agreement_report({}, {}).agreement == 1.0);
}

TEST_CASE("YOLO lines") {
  CHECK(yolo_line(2, BBox(0, 0, 50, 50), 100, 100) == "2 0.25 0.25 0.5 0.5");
  CHECK(yolo_line(0, BBox(0, 0, 640, 480), 640, 480) == "0 0.5 0.5 1.0 1.0");
  const auto back = parse_yolo("2 0.25 0.25 0.5 0.5\n\n0 0.5 0.5 1.0 1.0\n", 100, 100);
  REQUIRE(back.size() == 2);
  CHECK(back[0].bbox == BBox(0, 0, 50, 50));
  CHECK(back[0].class_id == 2);
  CHECK(back[1].bbox == BBox(0, 0, 100, 100));
  CHECK_THROWS_AS(parse_yolo("1 0.5 0.5\n", 100, 100), DatasetError);
  CHECK_THROWS_AS(parse_yolo("-1 0.5 0.5 0.1 0.1\n", 100, 100), DatasetError);
  CHECK_THROWS_AS(parse_yolo("0 0.5 0.5 0 0.1\n", 100, 100), DatasetError);
  CHECK(format_number(1.0) == "1.0");
  CHECK(format_number(0.1) == "0.1");
}

TEST_CASE("out-of-image boxes are rejected on export") {
  LabelSet labels;
  labels.classes = {"car"};
  ImageRecord rec;
  rec.image_id = "f1";
  rec.width = 100;
  rec.height = 100;
  rec.gt.emplace_back(BBox(90, 90, 110, 100), 0);
  labels.images.emplace("f1", rec);
  try {
    to_yolo(labels);
    FAIL("expected DatasetError");
  } catch (const DatasetError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("f1") != std::string::npos);
    CHECK(msg.find("instance 0") != std::string::npos);
  }
  CHECK_THROWS_AS(to_coco(labels), DatasetError);
}

TEST_CASE("YOLO and COCO round trips") {
  Rng rng(99);
  LabelSet labels;
  labels.classes = {"car", "bus", "drone"};
  for (int im = 0; im < 40; ++im) {
    ImageRecord rec;
    rec.image_id = testsupport::numbered_id("frame_", static_cast<std::size_t>(im));
    rec.width = 640;
    rec.height = 480;
    for (int k = 0; k < 5; ++k) {
      const double x = rng.uniform(0, 600), y = rng.uniform(0, 440);
      rec.gt.emplace_back(BBox(x, y, x + rng.uniform(1, 40), y + rng.uniform(1, 40)),
                          static_cast<int>(rng.below(3)));
    }
    labels.images.emplace(rec.image_id, rec);
  }
  {
    auto& g = labels.images.begin()->second.gt[0];
    g = GroundTruthInstance(g.bbox, g.class_id,
                            square(g.bbox.x_min(), g.bbox.y_min(), g.bbox.x_max(), g.bbox.y_max()));
  }

  const auto coco = to_coco(labels);
  CHECK(coco["categories"][0]["id"] == 1);
  CHECK(coco["annotations"][0]["category_id"] == labels.images.begin()->second.gt[0].class_id + 1);
  const auto from = from_coco(coco);
  CHECK(from.classes == labels.classes);

  const auto dir = testsupport::scratch_dir("yolo_roundtrip");
  write_yolo_dir(labels, dir);
  const auto yolo = read_yolo_dir(dir, 640, 480);
  CHECK(yolo.classes == labels.classes);

  for (const auto* back : {&from, &yolo}) {
    REQUIRE(back->images.size() == labels.images.size());
    for (const auto& [id, rec] : labels.images) {
      const auto& other = back->images.at(id);
      REQUIRE(other.gt.size() == rec.gt.size());
      for (std::size_t k = 0; k < rec.gt.size(); ++k) {
        const auto& p = rec.gt[k].bbox;
        const auto& q = other.gt[k].bbox;
        CHECK(other.gt[k].class_id == rec.gt[k].class_id);
        CHECK(rel_err(q.x_min(), p.x_min()) <= 1e-6);
        CHECK(rel_err(q.y_min(), p.y_min()) <= 1e-6);
        CHECK(rel_err(q.x_max(), p.x_max()) <= 1e-6);
        CHECK(rel_err(q.y_max(), p.y_max()) <= 1e-6);
      }
    }
  }
  CHECK(from.images.begin()->second.gt[0].mask.has_value());
}

TEST_CASE("COCO ids and file names") {
  CHECK(coco_image_key("frame_001.jpg") == "frame_001");
  CHECK(coco_image_key("frame_001.PNG") == "frame_001");
  CHECK(coco_image_key("frame_001") == "frame_001");
  CHECK(coco_image_key("run.2") == "run.2");
  const auto doc = nlohmann::json::parse(R"({
    "images":[{"id":7,"file_name":"a.jpg","width":10,"height":10}],
    "annotations":[{"id":1,"image_id":7,"category_id":5,"bbox":[1,1,2,2]}],
    "categories":[{"id":5,"name":"drone"},{"id":2,"name":"car"}]})");
  const auto ids = coco_ids(doc);
  CHECK(ids.class_names == std::vector<std::string>{"car", "drone"});
  CHECK(ids.categories.at(5) == 1);
  CHECK(ids.images.at(7) == "a");
  const auto labels = from_coco(doc);
  CHECK(labels.images.at("a").gt.at(0).class_id == 1);
  CHECK(labels.images.at("a").gt.at(0).bbox == BBox(1, 1, 3, 3));

  auto bad = doc;
  bad["annotations"][0]["category_id"] = 9;
  CHECK_THROWS_AS(from_coco(bad), DatasetError);
  bad = doc;
  bad["annotations"][0]["image_id"] = 8;
  CHECK_THROWS_AS(from_coco(bad), DatasetError);
  bad = doc;
  bad.erase("images");
  CHECK_THROWS_AS(from_coco(bad), DatasetError);
}
