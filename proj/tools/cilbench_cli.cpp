// cilbench command-line driver: run experiments, score predictions, convert
// label formats and audit teacher annotations.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cilbench/annotate.hpp"
#include "cilbench/dataset_io.hpp"
#include "cilbench/error.hpp"
#include "cilbench/metrics.hpp"
#include "cilbench/runner.hpp"
#include "cilbench/simworld.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace cilbench;

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kUsage = 2, kData = 3, kBackend = 4 };

json read_json_file(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw DatasetError("cannot open " + file.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw DatasetError("cannot parse " + file.string() + ": " + e.what());
  }
}

void write_text(const fs::path& file, const std::string& text) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + file.string());
  out << text;
}

bool is_dataset_doc(const json& doc) {
  return doc.is_object() && doc.contains("tasks") && doc.contains("images");
}

// dataset.json (file or root), COCO json, or a YOLO label directory.
LabelSet load_labels(const fs::path& path, int width, int height) {
  if (fs::is_directory(path)) {
    if (fs::exists(path / kDatasetIndexFile)) return labels_of(load_dataset(path));
    if (width <= 0 || height <= 0) {
      throw ConfigError("reading a YOLO directory needs --width and --height");
    }
    return read_yolo_dir(path, width, height);
  }
  const json doc = read_json_file(path);
  if (is_dataset_doc(doc)) return labels_of(dataset_from_json(doc));
  if (doc.is_object() && doc.contains("annotations")) return from_coco(doc);
  throw DatasetError(path.string() + " is neither a dataset index nor a COCO document");
}

// --------------------------------------------------------------- run

struct RunArgs {
  std::string config;
  std::string dataset;
  std::string output;
  std::vector<std::string> strategies;
  std::vector<double> budgets;
  std::vector<std::uint64_t> seeds;
  std::string detector;
  std::string eval_mode;
  bool quiet = false;
};

int cmd_run(const RunArgs& a) {
  RunConfig cfg = load_run_config(a.config);
  const fs::path config_dir = fs::absolute(a.config).parent_path();
  if (!a.dataset.empty()) cfg.dataset_root = a.dataset;
  if (!a.output.empty()) cfg.output_dir = a.output;
  if (!a.strategies.empty()) {
    cfg.strategies.clear();
    for (const auto& s : a.strategies) cfg.strategies.push_back(parse_strategy(s));
  }
  if (!a.budgets.empty()) cfg.budgets = a.budgets;
  if (!a.seeds.empty()) cfg.seeds = a.seeds;
  if (!a.detector.empty()) cfg.detector = parse_detector_flag(a.detector, cfg.detector);
  if (!a.eval_mode.empty()) {
    if (a.eval_mode == "per_task") {
      cfg.eval_mode = EvalMode::kPerTask;
    } else if (a.eval_mode == "cumulative") {
      cfg.eval_mode = EvalMode::kCumulative;
    } else {
      throw ConfigError("unknown eval mode: " + a.eval_mode);
    }
  }
  if (cfg.dataset_root.empty()) throw ConfigError("dataset_root is not set");
  // Relative paths in a config file are relative to that file.
  if (a.dataset.empty() && fs::path(cfg.dataset_root).is_relative()) {
    cfg.dataset_root = (config_dir / cfg.dataset_root).lexically_normal().string();
  }
  if (a.output.empty() && fs::path(cfg.output_dir).is_relative()) {
    cfg.output_dir = (config_dir / cfg.output_dir).lexically_normal().string();
  }

  const RunResult result = run_experiment(cfg);
  emit_report(result, cfg.output_dir);
  if (!a.quiet) {
    std::cout << summary_table(result);
    std::cout << "results written to " << cfg.output_dir << "\n";
  }
  for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";
  if (result.completed_seeds() != result.configured_seeds()) {
    std::cerr << "error: detector: " << result.configured_seeds() - result.completed_seeds()
              << " of " << result.configured_seeds() << " seeds did not complete\n";
    return kBackend;
  }
  return kOk;
}

// --------------------------------------------------------------- eval

struct EvalArgs {
  std::string pred;
  std::string gt;
  bool raw = false;
  bool class_agnostic = false;
  double conf = 0.25;
  double nms_iou = 0.7;
};

int cmd_eval(const EvalArgs& a) {
  const json gt_doc = read_json_file(a.gt);
  LabelSet labels = is_dataset_doc(gt_doc) ? labels_of(dataset_from_json(gt_doc))
                                           : from_coco(gt_doc);
  // COCO results refer to images and categories by numeric id. Against a
  // dataset index, category_id is class id + 1 as in our COCO export.
  std::optional<CocoIds> coco;
  if (!is_dataset_doc(gt_doc)) coco = coco_ids(gt_doc);

  const json preds = read_json_file(a.pred);
  if (!preds.is_array()) throw DatasetError("predictions must be a COCO results array");
  std::map<ImageId, std::vector<Detection>> by_image;
  std::size_t index = 0;
  for (const auto& p : preds) {
    ++index;
    try {
      ImageId id;
      const auto& raw_id = p.at("image_id");
      if (raw_id.is_string()) {
        id = raw_id.get<std::string>();
      } else {
        if (!coco) throw DatasetError("numeric image_id needs a COCO gt");
        auto it = coco->images.find(raw_id.get<long long>());
        if (it == coco->images.end()) throw DatasetError("unknown image id");
        id = it->second;
      }
      if (!labels.images.contains(id)) throw DatasetError("image " + id + " not in gt");
      const auto b = p.at("bbox").get<std::vector<double>>();
      if (b.size() != 4) throw DatasetError("bbox needs 4 numbers");
      const long long category = p.at("category_id").get<long long>();
      ClassId cls = static_cast<ClassId>(category - 1);
      if (coco) {
        auto it = coco->categories.find(category);
        if (it == coco->categories.end()) throw DatasetError("unknown category id");
        cls = it->second;
      }
      by_image[id].emplace_back(BBox(b[0], b[1], b[0] + b[2], b[1] + b[3]), cls,
                                p.at("score").get<double>());
    } catch (const json::exception& e) {
      throw DatasetError("prediction " + std::to_string(index) + ": " + e.what());
    } catch (const std::invalid_argument& e) {
      throw DatasetError("prediction " + std::to_string(index) + ": " + e.what());
    } catch (const DatasetError& e) {
      throw DatasetError("prediction " + std::to_string(index) + ": " + e.what());
    }
  }

  InferenceConfig inf;
  inf.conf_threshold = a.conf;
  inf.nms_iou = a.nms_iou;
  inf.class_aware = !a.class_agnostic;
  inf.validate();

  std::vector<ImageDetections> dets;
  std::vector<ImageGroundTruth> gts;
  double recall_sum = 0.0;
  for (const auto& [id, rec] : labels.images) {
    auto it = by_image.find(id);
    ImageDetections d = it == by_image.end() ? ImageDetections{} : it->second;
    if (!a.raw) d = postprocess(d, inf);
    recall_sum += image_recall(d, rec.gt, inf.match_iou, inf.class_aware);
    dets.push_back(std::move(d));
    gts.push_back(rec.gt);
  }

  std::vector<ClassId> all;
  json per_class = json::object();
  for (std::size_t c = 0; c < labels.classes.size(); ++c) {
    const auto cls = static_cast<ClassId>(c);
    all.push_back(cls);
    const auto m = map_50_95(dets, gts, std::vector<ClassId>{cls});
    const auto ap50 = average_precision(dets, gts, cls, 0.5);
    per_class[labels.classes[c]] = {{"ap50", ap50 ? json(*ap50) : json(nullptr)},
                                    {"map50_95", m ? json(*m) : json(nullptr)}};
  }
  const auto m = map_50_95(dets, gts, all);
  std::optional<double> map50;
  {
    double sum = 0.0;
    int n = 0;
    for (ClassId c : all) {
      if (auto ap = average_precision(dets, gts, c, 0.5)) {
        sum += *ap;
        ++n;
      }
    }
    if (n > 0) map50 = sum / n;
  }
  json out = {{"images", labels.images.size()},
              {"map50_95", m ? json(*m) : json(nullptr)},
              {"map50", map50 ? json(*map50) : json(nullptr)},
              {"mean_image_recall50",
               labels.images.empty() ? json(nullptr)
                                     : json(recall_sum / labels.images.size())},
              {"per_class", per_class}};
  std::cout << out.dump(2) << "\n";
  return kOk;
}

// --------------------------------------------------------------- convert

struct ConvertArgs {
  std::string input;
  std::string to;
  std::string out;
  int width = 0;
  int height = 0;
};

int cmd_convert(const ConvertArgs& a) {
  const LabelSet labels = load_labels(a.input, a.width, a.height);
  if (a.to == "yolo") {
    write_yolo_dir(labels, a.out);
  } else if (a.to == "coco") {
    write_text(a.out, to_coco(labels).dump(2) + "\n");
  } else {
    throw ConfigError("unknown target format: " + a.to);
  }
  std::cout << "converted " << labels.images.size() << " images to " << a.to
            << " at " << a.out << "\n";
  return kOk;
}

// --------------------------------------------------------------- audit

struct AuditArgs {
  std::string teacher;
  std::string reviewed;
  std::string out;
  double conf = 0.75;
  double mask_iou = 0.5;
  double tolerance = 1.0;
  int width = 0;
  int height = 0;
};

int cmd_audit(const AuditArgs& a) {
  std::ifstream in(a.teacher);
  if (!in) throw DatasetError("cannot open " + a.teacher);
  const auto preds = read_teacher_jsonl(in);

  AnnotationConfig cfg;
  cfg.conf_threshold = a.conf;
  cfg.mask_box_iou = a.mask_iou;
  cfg.validate();
  const FilterResult filtered = filter_teacher(preds, cfg);

  const LabelSet reviewed = load_labels(a.reviewed, a.width, a.height);
  std::set<ImageId> frame_set;
  for (const auto& p : preds) frame_set.insert(p.image_id);
  for (const auto& [id, _] : reviewed.images) frame_set.insert(id);
  const std::vector<ImageId> frames(frame_set.begin(), frame_set.end());

  const auto automatic = frames_from_teacher(filtered.accepted, frames, reviewed.classes);
  const ReviewReport report =
      agreement_report(automatic, frames_of(reviewed), a.tolerance);

  json reasons = json::object();
  for (const auto& r : filtered.rejected) {
    const std::string key(to_string(r.reason));
    reasons[key] = reasons.value(key, 0) + 1;
  }
  json doc = report_to_json(report);
  doc["filter"] = {{"predictions", preds.size()},
                   {"accepted", filtered.accepted.size()},
                   {"rejected", filtered.rejected.size()},
                   {"reasons", reasons},
                   {"conf_threshold", cfg.conf_threshold},
                   {"mask_box_iou", cfg.mask_box_iou}};
  if (!a.out.empty()) write_text(a.out, doc.dump(2) + "\n");

  char line[160];
  std::snprintf(line, sizeof line, "frames %zu edited %zu agreement %.4f", report.total_frames,
                report.edited_frames, report.agreement);
  std::cout << line << "\n";
  return kOk;
}

// --------------------------------------------------------------- scenario

struct ScenarioArgs {
  std::string out;
  ScenarioParams params;
};

int cmd_scenario(const ScenarioArgs& a) {
  const DatasetIndex dataset = make_sim_scenario(a.params);
  const fs::path root = a.out;
  save_dataset(dataset, root);
  RunConfig cfg = default_scenario_config();
  cfg.dataset_root = ".";
  cfg.output_dir = "results";
  write_text(root / "config.json", run_config_to_json(cfg).dump(2) + "\n");
  std::cout << "wrote " << (root / kDatasetIndexFile).string() << " and "
            << (root / "config.json").string() << "\n";
  return kOk;
}

std::string one_line(std::string s) {
  for (char& c : s) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

int report_error(const char* kind, const std::exception& e, int code) {
  std::cerr << "error: " << kind << ": " << one_line(e.what()) << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Class-incremental detection replay benchmark"};
  app.set_version_flag("--version", std::string(kToolName) + " " + kToolVersion);
  app.require_subcommand(1);

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Run a replay experiment from a JSON config");
  run_cmd->add_option("--config", run.config, "Run config JSON")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("--dataset", run.dataset, "Override dataset_root");
  run_cmd->add_option("--out", run.output, "Override output_dir");
  run_cmd->add_option("--strategy", run.strategies, "naive|er|mir|far|joint (repeatable)");
  run_cmd->add_option("--budget", run.budgets, "Replay budget fraction (repeatable)");
  run_cmd->add_option("--seed", run.seeds, "Seed (repeatable)");
  run_cmd->add_option("--detector", run.detector, "sim | echo | cmd:\"<command line>\"");
  run_cmd->add_option("--eval-mode", run.eval_mode, "per_task | cumulative");
  run_cmd->add_flag("--quiet", run.quiet, "Do not print the summary table");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Score COCO-format predictions against ground truth");
  eval_cmd->add_option("--pred", ev.pred, "COCO results JSON")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--gt", ev.gt, "COCO JSON or dataset.json")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--conf", ev.conf, "Confidence threshold")->capture_default_str();
  eval_cmd->add_option("--nms-iou", ev.nms_iou, "NMS IoU threshold")->capture_default_str();
  eval_cmd->add_flag("--raw", ev.raw, "Skip confidence filtering and NMS");
  eval_cmd->add_flag("--class-agnostic", ev.class_agnostic, "Class-agnostic recall matching");

  ConvertArgs cv;
  auto* convert_cmd = app.add_subcommand("convert", "Convert labels between dataset, YOLO and COCO");
  convert_cmd->add_option("--input", cv.input, "dataset.json, COCO JSON or YOLO directory")
      ->required()
      ->check(CLI::ExistingPath);
  convert_cmd->add_option("--to", cv.to, "yolo | coco")->required()->check(CLI::IsMember({"yolo", "coco"}));
  convert_cmd->add_option("--out", cv.out, "Output directory (yolo) or file (coco)")->required();
  convert_cmd->add_option("--width", cv.width, "Image width for YOLO input");
  convert_cmd->add_option("--height", cv.height, "Image height for YOLO input");

  AuditArgs au;
  auto* audit_cmd = app.add_subcommand("audit", "Filter teacher predictions and measure review agreement");
  audit_cmd->add_option("--teacher", au.teacher, "Teacher predictions JSONL")->required()->check(CLI::ExistingFile);
  audit_cmd->add_option("--reviewed", au.reviewed, "Reviewed labels (dataset, COCO or YOLO dir)")
      ->required()
      ->check(CLI::ExistingPath);
  audit_cmd->add_option("--conf", au.conf, "Teacher confidence threshold")->capture_default_str();
  audit_cmd->add_option("--mask-iou", au.mask_iou, "Mask-bounds/box IoU gate")->capture_default_str();
  audit_cmd->add_option("--tolerance", au.tolerance, "Edit tolerance in pixels")->capture_default_str();
  audit_cmd->add_option("--out", au.out, "Write the report JSON here");
  audit_cmd->add_option("--width", au.width, "Image width for YOLO input");
  audit_cmd->add_option("--height", au.height, "Image height for YOLO input");

  ScenarioArgs sc;
  auto* scenario_cmd = app.add_subcommand("scenario", "Write the default simulated scenario and its config");
  scenario_cmd->add_option("--out", sc.out, "Output directory")->required();
  scenario_cmd->add_option("--seed", sc.params.seed, "Scenario seed")->capture_default_str();
  scenario_cmd->add_option("--train", sc.params.train_per_task, "Train images per task")->capture_default_str();
  scenario_cmd->add_option("--test", sc.params.test_per_task, "Test images per task")->capture_default_str();
  scenario_cmd->add_option("--max-instances", sc.params.max_instances, "Max boxes per image")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << one_line(e.what()) << "\n";
    return kUsage;
  }

  try {
    if (*run_cmd) return cmd_run(run);
    if (*eval_cmd) return cmd_eval(ev);
    if (*convert_cmd) return cmd_convert(cv);
    if (*audit_cmd) return cmd_audit(au);
    if (*scenario_cmd) return cmd_scenario(sc);
  } catch (const ConfigError& e) {
    return report_error("config", e, kUsage);
  } catch (const DatasetError& e) {
    return report_error("dataset", e, kData);
  } catch (const ProtocolError& e) {
    return report_error("protocol", e, kBackend);
  } catch (const DetectorError& e) {
    return report_error("detector", e, kBackend);
  } catch (const std::invalid_argument& e) {
    return report_error("invalid", e, kData);
  } catch (const std::exception& e) {
    return report_error("error", e, kFailure);
  }
  return kFailure;
}
