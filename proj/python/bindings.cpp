#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "cilbench/annotate.hpp"
#include "cilbench/dataset_io.hpp"
#include "cilbench/error.hpp"
#include "cilbench/metrics.hpp"
#include "cilbench/replay.hpp"
#include "cilbench/runner.hpp"
#include "cilbench/simworld.hpp"

namespace py = pybind11;
using namespace cilbench;

namespace {

using Box = std::tuple<double, double, double, double>;

BBox to_bbox(const Box& b) {
  return BBox(std::get<0>(b), std::get<1>(b), std::get<2>(b), std::get<3>(b));
}

StrategyConfig strategy_config(StrategyKind kind, std::size_t k_select, std::size_t pool_cap) {
  StrategyConfig cfg;
  cfg.kind = kind;
  cfg.k_select = k_select;
  cfg.pool_cap = pool_cap;
  cfg.validate();
  return cfg;
}

// Plain Python data crosses the boundary as JSON text.
py::object from_json(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

nlohmann::json to_json(const py::object& obj) {
  const auto text = py::module_::import("json").attr("dumps")(obj).cast<std::string>();
  return nlohmann::json::parse(text);
}

FrameAnnotations frames_from_py(
    const std::map<std::string, std::vector<std::pair<int, Box>>>& frames) {
  FrameAnnotations out;
  for (const auto& [id, boxes] : frames) {
    auto& dst = out[id];
    for (const auto& [cls, box] : boxes) dst.push_back({cls, to_bbox(box)});
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_cilbench, m) {
  m.doc() = "Class-incremental detection replay benchmark core";

  auto base = py::register_exception<Error>(m, "CilbenchError");
  py::register_exception<ConfigError>(m, "ConfigError", base);
  py::register_exception<DatasetError>(m, "DatasetError", base);
  auto detector = py::register_exception<DetectorError>(m, "DetectorError", base);
  py::register_exception<TimeoutError>(m, "TimeoutError", detector);
  py::register_exception<ProtocolError>(m, "ProtocolError", base);

  py::class_<BBox>(m, "BBox")
      .def(py::init<double, double, double, double>(), py::arg("x_min"), py::arg("y_min"),
           py::arg("x_max"), py::arg("y_max"))
      .def_property_readonly("x_min", &BBox::x_min)
      .def_property_readonly("y_min", &BBox::y_min)
      .def_property_readonly("x_max", &BBox::x_max)
      .def_property_readonly("y_max", &BBox::y_max)
      .def_property_readonly("width", &BBox::width)
      .def_property_readonly("height", &BBox::height)
      .def_property_readonly("area", &BBox::area)
      .def(py::self == py::self)
      .def("__repr__", [](const BBox& b) {
        return "BBox(" + format_number(b.x_min()) + ", " + format_number(b.y_min()) + ", " +
               format_number(b.x_max()) + ", " + format_number(b.y_max()) + ")";
      });

  py::class_<Detection>(m, "Detection")
      .def(py::init<BBox, ClassId, double>(), py::arg("bbox"), py::arg("class_id"),
           py::arg("confidence"))
      .def_readonly("bbox", &Detection::bbox)
      .def_readonly("class_id", &Detection::class_id)
      .def_readonly("confidence", &Detection::confidence)
      .def(py::self == py::self);

  py::class_<GroundTruthInstance>(m, "GroundTruth")
      .def(py::init([](BBox b, ClassId c) { return GroundTruthInstance(b, c); }),
           py::arg("bbox"), py::arg("class_id"))
      .def_readonly("bbox", &GroundTruthInstance::bbox)
      .def_readonly("class_id", &GroundTruthInstance::class_id);

  m.def("iou", &iou, py::arg("a"), py::arg("b"));
  m.def(
      "mask_bounds",
      [](const std::vector<std::pair<double, double>>& pts) {
        Polygon poly;
        for (const auto& [x, y] : pts) poly.push_back({x, y});
        return mask_bounds(poly);
      },
      py::arg("polygon"));

  py::class_<MatchedPair>(m, "MatchedPair")
      .def_readonly("detection", &MatchedPair::detection)
      .def_readonly("gt", &MatchedPair::gt)
      .def_readonly("iou", &MatchedPair::iou);
  py::class_<MatchResult>(m, "MatchResult")
      .def_readonly("pairs", &MatchResult::pairs)
      .def_readonly("unmatched_detections", &MatchResult::unmatched_detections)
      .def_readonly("unmatched_gts", &MatchResult::unmatched_gts);

  m.def(
      "greedy_match",
      [](const std::vector<Detection>& d, const std::vector<GroundTruthInstance>& g, double thr,
         bool class_aware) { return greedy_match(d, g, thr, class_aware); },
      py::arg("dets"), py::arg("gts"), py::arg("iou_threshold") = 0.5,
      py::arg("class_aware") = true);
  m.def(
      "image_recall",
      [](const std::vector<Detection>& d, const std::vector<GroundTruthInstance>& g, double thr,
         bool class_aware) { return image_recall(d, g, thr, class_aware); },
      py::arg("dets"), py::arg("gts"), py::arg("iou_threshold") = 0.5,
      py::arg("class_aware") = true);
  m.def(
      "nms", [](const std::vector<Detection>& d, double thr) { return nms(d, thr); },
      py::arg("dets"), py::arg("iou_threshold") = 0.7);
  m.def(
      "postprocess",
      [](const std::vector<Detection>& d, double conf, double nms_iou, std::size_t max_dets) {
        InferenceConfig cfg;
        cfg.conf_threshold = conf;
        cfg.nms_iou = nms_iou;
        cfg.max_detections = max_dets;
        cfg.validate();
        return postprocess(d, cfg);
      },
      py::arg("dets"), py::arg("conf_threshold") = 0.25, py::arg("nms_iou") = 0.7,
      py::arg("max_detections") = 100);
  m.def(
      "average_precision",
      [](const std::vector<ImageDetections>& d, const std::vector<ImageGroundTruth>& g,
         ClassId cls, double thr) { return average_precision(d, g, cls, thr); },
      py::arg("dets"), py::arg("gts"), py::arg("class_id"), py::arg("iou_threshold"));
  m.def(
      "map_50_95",
      [](const std::vector<ImageDetections>& d, const std::vector<ImageGroundTruth>& g,
         const std::vector<ClassId>& classes) { return map_50_95(d, g, classes); },
      py::arg("dets"), py::arg("gts"), py::arg("classes"));

  py::class_<EvalMatrix>(m, "EvalMatrix")
      .def(py::init<std::size_t>(), py::arg("tasks"))
      .def_property_readonly("tasks", &EvalMatrix::tasks)
      .def("set", &EvalMatrix::set, py::arg("after_task"), py::arg("on_task"), py::arg("value"))
      .def("at", &EvalMatrix::at, py::arg("after_task"), py::arg("on_task"))
      .def("complete", &EvalMatrix::complete);
  m.def("acc", &acc, py::arg("matrix"));
  m.def("bwt", &bwt, py::arg("matrix"));

  m.def("resolve_budget", &resolve_budget, py::arg("fraction"), py::arg("prior_pool_size"));
  m.def(
      "er_select",
      [](const std::vector<ImageId>& pool, std::size_t count, std::uint64_t seed) {
        return er_select(pool, count, seed);
      },
      py::arg("pool"), py::arg("count"), py::arg("seed"));
  m.def(
      "mir_select",
      [](const std::vector<ImageId>& pool, const RecallMap& recall, std::size_t k_select,
         std::size_t pool_cap, std::optional<std::size_t> limit) {
        return mir_select(pool, recall, strategy_config(StrategyKind::kMir, k_select, pool_cap), limit);
      },
      py::arg("pool"), py::arg("recall"), py::arg("k_select") = 200, py::arg("pool_cap") = 800,
      py::arg("limit") = py::none());
  m.def(
      "far_select",
      [](const RecallMap& baseline, const RecallMap& current, std::size_t k_select,
         std::size_t pool_cap, std::optional<std::size_t> limit) {
        const auto cfg = strategy_config(StrategyKind::kFar, k_select, pool_cap);
        std::vector<ImageId> pool;
        for (const auto& [id, _] : baseline) pool.push_back(id);
        const auto cache = far_cache_baseline(pool, baseline, 0, cfg);
        return far_select(cache, current, cfg, limit);
      },
      py::arg("baseline"), py::arg("current"), py::arg("k_select") = 200,
      py::arg("pool_cap") = 800, py::arg("limit") = py::none());
  m.def(
      "far_scores",
      [](const RecallMap& baseline, const RecallMap& current) {
        RecallCache cache;
        cache.entries = baseline;
        return far_scores(cache, current);
      },
      py::arg("baseline"), py::arg("current"));

  py::class_<DatasetIndex>(m, "Dataset")
      .def_readonly("classes", &DatasetIndex::classes)
      .def_property_readonly("task_count", &DatasetIndex::task_count)
      .def_property_readonly("image_ids",
                             [](const DatasetIndex& d) {
                               std::vector<ImageId> ids;
                               for (const auto& [id, _] : d.images) ids.push_back(id);
                               return ids;
                             })
      .def("train_ids", [](const DatasetIndex& d, std::size_t t) { return d.tasks.at(t).train_ids; })
      .def("test_ids", [](const DatasetIndex& d, std::size_t t) { return d.tasks.at(t).test_ids; })
      .def("ground_truth", [](const DatasetIndex& d, const ImageId& id) { return d.image(id).gt; })
      .def("to_dict", [](const DatasetIndex& d) { return from_json(dataset_to_json(d)); })
      .def("save", [](const DatasetIndex& d, const std::filesystem::path& root) {
        save_dataset(d, root);
      });
  m.def("load_dataset", &load_dataset, py::arg("root"));
  m.def(
      "make_sim_scenario",
      [](std::size_t tasks, std::size_t train, std::size_t test, std::size_t max_instances,
         std::uint64_t seed) {
        ScenarioParams p;
        p.tasks = tasks;
        p.train_per_task = train;
        p.test_per_task = test;
        p.max_instances = max_instances;
        p.seed = seed;
        return make_sim_scenario(p);
      },
      py::arg("tasks") = 5, py::arg("train_per_task") = 40, py::arg("test_per_task") = 10,
      py::arg("max_instances") = 3, py::arg("seed") = 2024);

  m.def("default_scenario_config", [] { return from_json(run_config_to_json(default_scenario_config())); });
  m.def(
      "run_experiment",
      [](const py::object& config, const DatasetIndex* dataset,
         std::optional<std::filesystem::path> report_dir) {
        const RunConfig cfg = run_config_from_json(to_json(config));
        nlohmann::json out;
        {
          py::gil_scoped_release release;
          const RunResult result = dataset ? run_experiment(cfg, *dataset) : run_experiment(cfg);
          if (report_dir) emit_report(result, *report_dir);
          out = result_to_json(result);
        }
        return from_json(out);
      },
      py::arg("config"), py::arg("dataset") = nullptr, py::arg("report_dir") = py::none());

  m.def("yolo_line", [](ClassId c, const BBox& b, int w, int h) { return yolo_line(c, b, w, h); },
        py::arg("class_id"), py::arg("bbox"), py::arg("width"), py::arg("height"));
  m.def(
      "agreement_report",
      [](const std::map<std::string, std::vector<std::pair<int, Box>>>& automatic,
         const std::map<std::string, std::vector<std::pair<int, Box>>>& reviewed,
         double tolerance) {
        return from_json(report_to_json(
            agreement_report(frames_from_py(automatic), frames_from_py(reviewed), tolerance)));
      },
      py::arg("automatic"), py::arg("reviewed"), py::arg("tolerance") = 1.0);

  m.attr("__version__") = kToolVersion;
}
