#include "cilbench/annotate.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <set>
#include <sstream>

#include "cilbench/dataset_io.hpp"
#include "cilbench/error.hpp"

namespace cilbench {

using nlohmann::json;

namespace {

std::string describe(const BBox& b) {
  return "(" + format_number(b.x_min()) + ", " + format_number(b.y_min()) +
         ", " + format_number(b.x_max()) + ", " + format_number(b.y_max()) + ")";
}

void check_inside(const ImageRecord& rec) {
  for (std::size_t k = 0; k < rec.gt.size(); ++k) {
    const BBox& b = rec.gt[k].bbox;
    if (b.x_min() < 0 || b.y_min() < 0 || b.x_max() > rec.width ||
        b.y_max() > rec.height) {
      throw DatasetError("image " + rec.image_id + " instance " +
                         std::to_string(k) + ": box " + describe(b) +
                         " outside " + std::to_string(rec.width) + "x" +
                         std::to_string(rec.height));
    }
  }
}

bool is_image_extension(const std::string& ext) {
  static const std::set<std::string> kExt = {".jpg", ".jpeg", ".png",
                                             ".bmp", ".tif",  ".tiff"};
  std::string lower = ext;
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return kExt.contains(lower);
}

std::vector<std::string> frame_edits(std::vector<LabeledBox> automatic,
                                     std::vector<LabeledBox> reviewed,
                                     double tol) {
  // Exact pairs first: same class, all coordinates within tolerance.
  auto pair_off = [&](auto match) {
    std::size_t n = 0;
    for (auto a = automatic.begin(); a != automatic.end();) {
      auto r = std::find_if(reviewed.begin(), reviewed.end(),
                            [&](const LabeledBox& rb) { return match(*a, rb); });
      if (r != reviewed.end()) {
        reviewed.erase(r);
        a = automatic.erase(a);
        ++n;
      } else {
        ++a;
      }
    }
    return n;
  };
  pair_off([&](const LabeledBox& a, const LabeledBox& r) {
    return a.class_id == r.class_id && boxes_close(a.box, r.box, tol);
  });
  if (automatic.empty() && reviewed.empty()) return {};

  std::vector<std::string> reasons;
  const std::size_t class_changes =
      pair_off([&](const LabeledBox& a, const LabeledBox& r) {
        return boxes_close(a.box, r.box, tol);
      });
  const std::size_t box_edits = pair_off(
      [](const LabeledBox& a, const LabeledBox& r) { return a.class_id == r.class_id; });
  if (class_changes) reasons.push_back("class_change:" + std::to_string(class_changes));
  if (box_edits) reasons.push_back("box_edit:" + std::to_string(box_edits));
  if (!automatic.empty()) reasons.push_back("deletion:" + std::to_string(automatic.size()));
  if (!reviewed.empty()) reasons.push_back("insertion:" + std::to_string(reviewed.size()));
  return reasons;
}

}  // namespace

std::string format_number(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  std::string s(buf, end);
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

void AnnotationConfig::validate() const {
  if (!(conf_threshold > 0.0 && conf_threshold < 1.0) ||
      !(mask_box_iou > 0.0 && mask_box_iou < 1.0)) {
    throw ConfigError("annotation thresholds must lie in (0,1)");
  }
}

std::string_view to_string(RejectReason reason) {
  switch (reason) {
    case RejectReason::kLowConfidence:
      return "low_confidence";
    case RejectReason::kDegenerateMask:
      return "degenerate_mask";
    case RejectReason::kMaskBoxMismatch:
      return "mask_box_mismatch";
  }
  return "unknown";
}

FilterResult filter_teacher(std::span<const TeacherPrediction> preds,
                            const AnnotationConfig& cfg) {
  FilterResult out;
  for (const auto& p : preds) {
    if (!(p.confidence >= cfg.conf_threshold)) {
      out.rejected.push_back({p, RejectReason::kLowConfidence,
                              "confidence " + format_number(p.confidence) +
                                  " < " + format_number(cfg.conf_threshold)});
      continue;
    }
    std::optional<BBox> bounds;
    try {
      bounds = mask_bounds(p.mask);
    } catch (const std::invalid_argument& e) {
      out.rejected.push_back({p, RejectReason::kDegenerateMask, e.what()});
      continue;
    }
    const double overlap = iou(*bounds, p.box);
    if (!(overlap >= cfg.mask_box_iou)) {
      out.rejected.push_back({p, RejectReason::kMaskBoxMismatch,
                              "mask/box IoU " + format_number(overlap) + " < " +
                                  format_number(cfg.mask_box_iou)});
      continue;
    }
    out.accepted.push_back(p);
  }
  return out;
}

std::vector<TeacherPrediction> read_teacher_jsonl(std::istream& in) {
  std::vector<TeacherPrediction> preds;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      Polygon mask;
      for (const auto& p : j.at("mask")) {
        mask.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
      }
      const double conf = j.at("confidence").get<double>();
      if (!(conf >= 0.0 && conf <= 1.0)) {
        throw std::invalid_argument("confidence outside [0,1]");
      }
      preds.push_back({j.at("image_id").get<std::string>(), std::move(mask),
                       bbox_from_json(j.at("box")), conf,
                       j.at("class").get<std::string>(),
                       j.value("prompt", std::string())});
    } catch (const std::exception& e) {
      throw DatasetError("teacher predictions line " + std::to_string(line_no) +
                         ": " + e.what());
    }
  }
  return preds;
}

FrameAnnotations frames_from_teacher(std::span<const TeacherPrediction> accepted,
                                     std::span<const ImageId> frames,
                                     std::span<const std::string> classes) {
  FrameAnnotations out;
  for (const auto& f : frames) out[f];
  for (const auto& p : accepted) {
    auto it = std::find(classes.begin(), classes.end(), p.class_name);
    if (it == classes.end()) {
      throw DatasetError("teacher class '" + p.class_name +
                         "' is not in the class list");
    }
    out[p.image_id].push_back(
        {static_cast<ClassId>(it - classes.begin()), p.box});
  }
  return out;
}

ReviewReport agreement_report(const FrameAnnotations& automatic,
                              const FrameAnnotations& reviewed,
                              double tolerance) {
  if (automatic.size() != reviewed.size() ||
      !std::equal(automatic.begin(), automatic.end(), reviewed.begin(),
                  [](const auto& a, const auto& b) { return a.first == b.first; })) {
    for (const auto& [id, _] : automatic) {
      if (!reviewed.contains(id)) throw Error("frame missing from review: " + id);
    }
    for (const auto& [id, _] : reviewed) {
      if (!automatic.contains(id)) {
        throw Error("reviewed frame has no automatic labels: " + id);
      }
    }
  }
  ReviewReport report;
  report.total_frames = automatic.size();
  auto r = reviewed.begin();
  for (auto a = automatic.begin(); a != automatic.end(); ++a, ++r) {
    auto reasons = frame_edits(a->second, r->second, tolerance);
    if (!reasons.empty()) report.flagged.push_back({a->first, std::move(reasons)});
  }
  report.edited_frames = report.flagged.size();
  report.agreement =
      report.total_frames == 0
          ? 1.0
          : 1.0 - static_cast<double>(report.edited_frames) /
                      static_cast<double>(report.total_frames);
  return report;
}

json report_to_json(const ReviewReport& report) {
  json flagged = json::array();
  for (const auto& f : report.flagged) {
    flagged.push_back({{"image_id", f.image_id}, {"reasons", f.reasons}});
  }
  return {{"total_frames", report.total_frames},
          {"edited_frames", report.edited_frames},
          {"agreement", report.agreement},
          {"flagged", std::move(flagged)}};
}

LabelSet labels_of(const DatasetIndex& index) {
  return {index.classes, index.images};
}

FrameAnnotations frames_of(const LabelSet& labels) {
  FrameAnnotations out;
  for (const auto& [id, rec] : labels.images) {
    auto& boxes = out[id];
    for (const auto& g : rec.gt) boxes.push_back({g.class_id, g.bbox});
  }
  return out;
}

std::string yolo_line(ClassId class_id, const BBox& box, int width,
                      int height) {
  const double w = width, h = height;
  const double cx = (box.x_min() + box.x_max()) / 2.0 / w;
  const double cy = (box.y_min() + box.y_max()) / 2.0 / h;
  return std::to_string(class_id) + " " + format_number(cx) + " " +
         format_number(cy) + " " + format_number(box.width() / w) + " " +
         format_number(box.height() / h);
}

std::map<ImageId, std::string> to_yolo(const LabelSet& labels) {
  std::map<ImageId, std::string> out;
  for (const auto& [id, rec] : labels.images) {
    check_inside(rec);
    std::string text;
    for (const auto& g : rec.gt) {
      text += yolo_line(g.class_id, g.bbox, rec.width, rec.height);
      text += '\n';
    }
    out.emplace(id, std::move(text));
  }
  return out;
}

std::vector<GroundTruthInstance> parse_yolo(std::string_view text, int width,
                                            int height) {
  std::vector<GroundTruthInstance> out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream fields(line);
    int cls;
    double cx, cy, w, h;
    if (!(fields >> cls >> cx >> cy >> w >> h) || cls < 0) {
      throw DatasetError("bad YOLO line " + std::to_string(line_no) + ": '" +
                         line + "'");
    }
    const double x0 = (cx - w / 2.0) * width;
    const double x1 = (cx + w / 2.0) * width;
    const double y0 = (cy - h / 2.0) * height;
    const double y1 = (cy + h / 2.0) * height;
    try {
      out.emplace_back(BBox(x0, y0, x1, y1), cls);
    } catch (const std::invalid_argument& e) {
      throw DatasetError("YOLO line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

json to_coco(const LabelSet& labels) {
  json images = json::array();
  json annotations = json::array();
  json categories = json::array();
  for (std::size_t c = 0; c < labels.classes.size(); ++c) {
    categories.push_back({{"id", c + 1}, {"name", labels.classes[c]}});
  }
  std::size_t image_num = 0;
  std::size_t ann_num = 0;
  for (const auto& [id, rec] : labels.images) {
    check_inside(rec);
    ++image_num;
    images.push_back({{"id", image_num},
                      {"file_name", id},
                      {"width", rec.width},
                      {"height", rec.height}});
    for (const auto& g : rec.gt) {
      json ann = {{"id", ++ann_num},
                  {"image_id", image_num},
                  {"category_id", g.class_id + 1},
                  {"bbox",
                   {g.bbox.x_min(), g.bbox.y_min(), g.bbox.width(),
                    g.bbox.height()}},
                  {"area", g.bbox.area()},
                  {"iscrowd", 0}};
      if (g.mask) {
        json flat = json::array();
        for (const auto& p : *g.mask) {
          flat.push_back(p.x);
          flat.push_back(p.y);
        }
        ann["segmentation"] = json::array({std::move(flat)});
      }
      annotations.push_back(std::move(ann));
    }
  }
  return {{"images", std::move(images)},
          {"annotations", std::move(annotations)},
          {"categories", std::move(categories)}};
}

ImageId coco_image_key(const std::string& file_name) {
  const std::filesystem::path file = file_name;
  return is_image_extension(file.extension().string()) ? file.stem().string()
                                                       : file.string();
}

CocoIds coco_ids(const json& doc) {
  CocoIds ids;
  try {
    std::vector<std::pair<long long, std::string>> cats;
    for (const auto& c : doc.at("categories")) {
      cats.emplace_back(c.at("id").get<long long>(), c.at("name").get<std::string>());
    }
    std::sort(cats.begin(), cats.end());
    for (const auto& [cid, name] : cats) {
      ids.categories[cid] = static_cast<ClassId>(ids.class_names.size());
      ids.class_names.push_back(name);
    }
    for (const auto& im : doc.at("images")) {
      ids.images[im.at("id").get<long long>()] =
          coco_image_key(im.at("file_name").get<std::string>());
    }
  } catch (const json::exception& e) {
    throw DatasetError(std::string("malformed COCO document: ") + e.what());
  }
  return ids;
}

LabelSet from_coco(const json& doc) {
  LabelSet out;
  try {
    const CocoIds ids = coco_ids(doc);
    out.classes = ids.class_names;
    const auto& cat_to_class = ids.categories;
    const auto& image_ids = ids.images;
    for (const auto& im : doc.at("images")) {
      const ImageId id = image_ids.at(im.at("id").get<long long>());
      ImageRecord rec;
      rec.image_id = id;
      rec.width = im.at("width").get<int>();
      rec.height = im.at("height").get<int>();
      if (!out.images.emplace(id, std::move(rec)).second) {
        throw DatasetError("duplicate COCO image " + id);
      }
    }
    for (const auto& a : doc.at("annotations")) {
      const auto img = image_ids.find(a.at("image_id").get<long long>());
      if (img == image_ids.end()) throw DatasetError("annotation for unknown image");
      const auto cls = cat_to_class.find(a.at("category_id").get<long long>());
      if (cls == cat_to_class.end()) {
        throw DatasetError("annotation with unknown category");
      }
      const auto& b = a.at("bbox");
      const double x = b.at(0).get<double>(), y = b.at(1).get<double>();
      const double w = b.at(2).get<double>(), h = b.at(3).get<double>();
      std::optional<Polygon> mask;
      if (a.contains("segmentation") && a["segmentation"].is_array() &&
          a["segmentation"].size() == 1) {
        const auto& flat = a["segmentation"][0];
        Polygon poly;
        for (std::size_t k = 0; k + 1 < flat.size(); k += 2) {
          poly.push_back({flat[k].get<double>(), flat[k + 1].get<double>()});
        }
        mask = std::move(poly);
      }
      out.images.at(img->second)
          .gt.emplace_back(BBox(x, y, x + w, y + h), cls->second, std::move(mask));
    }
  } catch (const json::exception& e) {
    throw DatasetError(std::string("malformed COCO document: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw DatasetError(std::string("invalid COCO annotation: ") + e.what());
  }
  return out;
}

void write_yolo_dir(const LabelSet& labels, const std::filesystem::path& dir) {
  const auto texts = to_yolo(labels);
  std::filesystem::create_directories(dir / "labels");
  {
    std::ofstream names(dir / "classes.txt");
    if (!names) throw DatasetError("cannot write " + (dir / "classes.txt").string());
    for (const auto& c : labels.classes) names << c << '\n';
  }
  for (const auto& [id, text] : texts) {
    std::ofstream out(dir / "labels" / (id + ".txt"));
    if (!out) throw DatasetError("cannot write YOLO labels for " + id);
    out << text;
  }
}

LabelSet read_yolo_dir(const std::filesystem::path& dir, int width, int height) {
  LabelSet out;
  std::ifstream names(dir / "classes.txt");
  for (std::string line; std::getline(names, line);) {
    if (!line.empty()) out.classes.push_back(line);
  }
  const auto label_dir = dir / "labels";
  if (!std::filesystem::is_directory(label_dir)) {
    throw DatasetError("no labels/ directory under " + dir.string());
  }
  for (const auto& entry : std::filesystem::directory_iterator(label_dir)) {
    if (entry.path().extension() != ".txt") continue;
    std::ifstream in(entry.path());
    std::stringstream text;
    text << in.rdbuf();
    ImageRecord rec;
    rec.image_id = entry.path().stem().string();
    rec.width = width;
    rec.height = height;
    rec.gt = parse_yolo(text.str(), width, height);
    out.images.emplace(rec.image_id, std::move(rec));
  }
  return out;
}

}  // namespace cilbench
