#include "cilbench/runner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "cilbench/annotate.hpp"
#include "cilbench/dataset_io.hpp"
#include "cilbench/error.hpp"
#include "cilbench/random.hpp"

namespace cilbench {

using nlohmann::json;

namespace {

bool has_budget(StrategyKind kind) {
  return kind == StrategyKind::kEr || kind == StrategyKind::kMir ||
         kind == StrategyKind::kFar;
}

json optional_json(const std::optional<double>& v) {
  return v ? json(*v) : json(nullptr);
}

std::string percent_cell(const Aggregate& a) {
  if (!a.mean) return "n/a";
  char buf[64];
  if (a.std) {
    std::snprintf(buf, sizeof(buf), "%.2f±%.2f", *a.mean * 100.0, *a.std * 100.0);
  } else {
    std::snprintf(buf, sizeof(buf), "%.2f", *a.mean * 100.0);
  }
  return buf;
}

std::string csv_number(const std::optional<double>& v) {
  if (!v) return "";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", *v);
  return buf;
}

std::string budget_label(double b) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g%%", b * 100.0);
  return buf;
}

const std::vector<Detection>& predictions_for(IncrementState& st,
                                              const ImageId& id,
                                              const InferenceConfig& inf) {
  auto it = st.predictions.find(id);
  if (it == st.predictions.end()) {
    const auto raw = st.detector.predict(id);
    it = st.predictions.emplace(id, postprocess(raw, inf)).first;
  }
  return it->second;
}

RecallMap score_recalls(IncrementState& st, std::span<const ImageId> ids,
                        const InferenceConfig& inf) {
  RecallMap out;
  for (const auto& id : ids) {
    const auto& rec = st.dataset.image(id);
    out[id] = image_recall(predictions_for(st, id, inf), rec.gt, inf.match_iou,
                           inf.class_aware);
  }
  return out;
}

std::optional<double> score_split(IncrementState& st,
                                  std::span<const ImageId> test_ids,
                                  const std::set<ClassId>& classes,
                                  const InferenceConfig& inf) {
  std::vector<ImageDetections> dets;
  std::vector<ImageGroundTruth> gts;
  for (const auto& id : test_ids) {
    dets.push_back(predictions_for(st, id, inf));
    ImageGroundTruth g;
    for (const auto& inst : st.dataset.image(id).gt) {
      if (classes.contains(inst.class_id)) g.push_back(inst);
    }
    gts.push_back(std::move(g));
  }
  const std::vector<ClassId> cls(classes.begin(), classes.end());
  return map_50_95(dets, gts, cls);
}

}  // namespace

// ---------------------------------------------------------------- config

void RunConfig::validate() const {
  if (seeds.empty()) throw ConfigError("at least one seed is required");
  if (strategies.empty()) throw ConfigError("at least one strategy is required");
  const bool needs_budget = std::any_of(strategies.begin(), strategies.end(), has_budget);
  if (needs_budget && budgets.empty()) {
    throw ConfigError("replay strategies need at least one budget");
  }
  for (double b : budgets) {
    if (!(b > 0.0 && b <= 1.0)) throw ConfigError("budgets must lie in (0,1]");
  }
  strategy.validate();
  inference.validate();
  detector.sim.validate();
  if (detector.backend == BackendKind::kExternal && detector.external.command.empty()) {
    throw ConfigError("external detector needs a command");
  }
}

RunConfig run_config_from_json(const json& doc) {
  RunConfig cfg;
  try {
    cfg.dataset_root = doc.value("dataset_root", cfg.dataset_root);
    cfg.output_dir = doc.value("output_dir", cfg.output_dir);
    if (doc.contains("strategy")) {
      const auto& s = doc["strategy"];
      if (s.is_string()) {
        cfg.strategies = {parse_strategy(s.get<std::string>())};
      } else {
        cfg.strategy.pool_cap = s.value("pool_cap", cfg.strategy.pool_cap);
        cfg.strategy.k_select = s.value("k_select", cfg.strategy.k_select);
        if (s.contains("far_baseline")) {
          cfg.strategy.far_baseline =
              parse_far_baseline(s["far_baseline"].get<std::string>());
        }
        if (s.contains("kind")) {
          cfg.strategies = {parse_strategy(s["kind"].get<std::string>())};
        }
        if (s.contains("kinds")) {
          cfg.strategies.clear();
          for (const auto& k : s["kinds"]) {
            cfg.strategies.push_back(parse_strategy(k.get<std::string>()));
          }
        }
      }
    }
    if (doc.contains("budgets")) cfg.budgets = doc["budgets"].get<std::vector<double>>();
    if (doc.contains("seeds")) cfg.seeds = doc["seeds"].get<std::vector<std::uint64_t>>();
    if (doc.contains("inference")) {
      const auto& i = doc["inference"];
      auto& inf = cfg.inference;
      inf.conf_threshold = i.value("conf_threshold", inf.conf_threshold);
      inf.nms_iou = i.value("nms_iou", inf.nms_iou);
      inf.match_iou = i.value("match_iou", inf.match_iou);
      inf.class_aware = i.value("class_aware", inf.class_aware);
      inf.max_detections = i.value("max_detections", inf.max_detections);
    }
    if (doc.contains("detector")) {
      const auto& d = doc["detector"];
      const std::string backend = d.value("backend", std::string("sim"));
      if (backend == "sim") {
        cfg.detector.backend = BackendKind::kSim;
      } else if (backend == "echo") {
        cfg.detector.backend = BackendKind::kEcho;
      } else if (backend == "external") {
        cfg.detector.backend = BackendKind::kExternal;
      } else {
        throw ConfigError("unknown detector backend: " + backend);
      }
      auto& ext = cfg.detector.external;
      ext.command = d.value("command", ext.command);
      ext.working_dir = d.value("working_dir", ext.working_dir);
      ext.timeout_s = d.value("timeout_s", ext.timeout_s);
      if (d.contains("env")) ext.env = d["env"].get<std::map<std::string, std::string>>();
      if (d.contains("sim")) {
        const auto& s = d["sim"];
        auto& sim = cfg.detector.sim;
        sim.learn_rate = s.value("learn_rate", sim.learn_rate);
        sim.decay_rate = s.value("decay_rate", sim.decay_rate);
        sim.jitter_scale = s.value("jitter_scale", sim.jitter_scale);
        sim.fp_rate = s.value("fp_rate", sim.fp_rate);
        sim.saturation = s.value("saturation", sim.saturation);
        sim.persistent_hardness = s.value("persistent_hardness", sim.persistent_hardness);
      }
    }
    if (doc.contains("eval_mode")) {
      const auto mode = doc["eval_mode"].get<std::string>();
      if (mode == "per_task") {
        cfg.eval_mode = EvalMode::kPerTask;
      } else if (mode == "cumulative") {
        cfg.eval_mode = EvalMode::kCumulative;
      } else {
        throw ConfigError("unknown eval_mode: " + mode);
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed run config: ") + e.what());
  }
  return cfg;
}

json run_config_to_json(const RunConfig& cfg) {
  json kinds = json::array();
  for (auto k : cfg.strategies) kinds.push_back(std::string(to_string(k)));
  const auto& ext = cfg.detector.external;
  const auto& sim = cfg.detector.sim;
  const char* backend = cfg.detector.backend == BackendKind::kSim    ? "sim"
                        : cfg.detector.backend == BackendKind::kEcho ? "echo"
                                                                     : "external";
  json detector = {{"backend", backend},
                   {"timeout_s", ext.timeout_s},
                   {"sim",
                    {{"learn_rate", sim.learn_rate},
                     {"decay_rate", sim.decay_rate},
                     {"jitter_scale", sim.jitter_scale},
                     {"fp_rate", sim.fp_rate},
                     {"saturation", sim.saturation},
                     {"persistent_hardness", sim.persistent_hardness}}}};
  if (cfg.detector.backend == BackendKind::kExternal) {
    detector["command"] = ext.command;
    detector["working_dir"] = ext.working_dir;
    detector["env"] = ext.env;
  }
  return {{"dataset_root", cfg.dataset_root},
          {"output_dir", cfg.output_dir},
          {"strategy",
           {{"kinds", kinds},
            {"pool_cap", cfg.strategy.pool_cap},
            {"k_select", cfg.strategy.k_select},
            {"far_baseline", std::string(to_string(cfg.strategy.far_baseline))}}},
          {"budgets", cfg.budgets},
          {"seeds", cfg.seeds},
          {"inference",
           {{"conf_threshold", cfg.inference.conf_threshold},
            {"nms_iou", cfg.inference.nms_iou},
            {"match_iou", cfg.inference.match_iou},
            {"class_aware", cfg.inference.class_aware},
            {"max_detections", cfg.inference.max_detections}}},
          {"detector", detector},
          {"eval_mode", cfg.eval_mode == EvalMode::kPerTask ? "per_task" : "cumulative"}};
}

RunConfig default_scenario_config() {
  RunConfig cfg;
  cfg.strategies = {StrategyKind::kNaive, StrategyKind::kEr, StrategyKind::kMir,
                    StrategyKind::kFar, StrategyKind::kJoint};
  cfg.seeds = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  cfg.detector.backend = BackendKind::kSim;
  cfg.detector.sim.learn_rate = 0.8;
  cfg.detector.sim.saturation = 0.15;
  cfg.detector.sim.persistent_hardness = true;
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open config " + file.string());
  try {
    return run_config_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ConfigError("cannot parse config " + file.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------- increments

IncrementState::IncrementState(const DatasetIndex& dataset_, Detector& detector_,
                               StrategyConfig strategy_, double budget_,
                               std::uint64_t seed_)
    : dataset(dataset_),
      detector(detector_),
      strategy(strategy_),
      budget(budget_),
      seed(seed_),
      matrix(dataset_.task_count()),
      cumulative(dataset_.task_count()) {}

IncrementOutcome run_increment(IncrementState& st, std::size_t task_index,
                               const RunConfig& cfg) {
  const auto& tasks = st.dataset.tasks;
  if (task_index >= tasks.size()) throw Error("task index out of range");
  if (task_index != st.next_task) {
    throw Error("task " + std::to_string(task_index) + " run before task " +
                std::to_string(st.next_task));
  }
  const auto& inf = cfg.inference;
  const TaskSpec& task = tasks[task_index];

  std::vector<ImageId> prior;
  for (std::size_t i = 0; i < task_index; ++i) {
    prior.insert(prior.end(), tasks[i].train_ids.begin(), tasks[i].train_ids.end());
  }

  IncrementOutcome out;
  const std::size_t budget_count =
      prior.empty() ? 0 : resolve_budget(st.budget, prior.size());
  const std::size_t count = replay_count(st.strategy, budget_count);
  switch (st.strategy.kind) {
    case StrategyKind::kNaive:
      break;
    case StrategyKind::kJoint:
      out.replayed = capped_pool(prior, prior.size());
      break;
    case StrategyKind::kEr:
      out.replayed = er_select(prior, count, mix_seed(st.seed, task_index));
      break;
    case StrategyKind::kMir: {
      if (count == 0) break;
      const auto pool = capped_pool(prior, st.strategy.pool_cap);
      out.replayed = mir_select(pool, score_recalls(st, pool, inf), st.strategy, count);
      break;
    }
    case StrategyKind::kFar: {
      if (count == 0 || !st.far_enabled || st.far_cache.entries.empty()) break;
      std::vector<ImageId> cached;
      for (const auto& [id, _] : st.far_cache.entries) cached.push_back(id);
      out.replayed =
          far_select(st.far_cache, score_recalls(st, cached, inf), st.strategy, count);
      break;
    }
  }
  st.replay_sizes.push_back(out.replayed.size());

  out.train_set = task.train_ids;
  std::set<ImageId> current(task.train_ids.begin(), task.train_ids.end());
  for (const auto& id : out.replayed) {
    if (!current.contains(id)) out.train_set.push_back(id);
  }

  st.detector.train_task(static_cast<int>(task_index), out.train_set);
  st.predictions.clear();

  for (std::size_t i = 0; i <= task_index; ++i) {
    const auto score =
        score_split(st, tasks[i].test_ids, {tasks[i].introduced_class}, inf);
    out.row.push_back(score);
    if (score) {
      st.matrix.set(task_index, i, *score);
    } else {
      st.warnings.push_back("task " + std::to_string(i) +
                            " test split has no ground truth");
    }
  }
  if (cfg.eval_mode == EvalMode::kCumulative) {
    std::vector<ImageId> seen_tests;
    std::set<ClassId> seen_classes;
    for (std::size_t i = 0; i <= task_index; ++i) {
      seen_tests.insert(seen_tests.end(), tasks[i].test_ids.begin(),
                        tasks[i].test_ids.end());
      seen_classes.insert(tasks[i].introduced_class);
    }
    st.cumulative[task_index] = score_split(st, seen_tests, seen_classes, inf);
  }

  if (st.strategy.kind == StrategyKind::kFar && st.far_enabled) {
    const Ack ack = st.detector.snapshot("task-" + std::to_string(task_index));
    if (ack.unsupported) {
      st.far_enabled = false;
      st.warnings.push_back("backend cannot snapshot; FAR replay disabled");
    } else {
      std::vector<ImageId> pool = prior;
      pool.insert(pool.end(), task.train_ids.begin(), task.train_ids.end());
      const auto capped = capped_pool(pool, st.strategy.pool_cap);
      const int checkpoint = static_cast<int>(task_index);
      if (st.strategy.far_baseline == FarBaseline::kRefresh) {
        st.far_cache = far_cache_baseline(capped, score_recalls(st, capped, inf),
                                          checkpoint, st.strategy);
      } else {
        std::vector<ImageId> fresh;
        for (const auto& id : capped) {
          if (!st.far_cache.entries.contains(id)) fresh.push_back(id);
        }
        far_extend_baseline(st.far_cache, capped, score_recalls(st, fresh, inf),
                            checkpoint, st.strategy);
      }
    }
  }

  ++st.next_task;
  return out;
}

// ---------------------------------------------------------------- seeds

Aggregate aggregate(const std::vector<std::optional<double>>& values) {
  std::vector<double> v;
  for (const auto& x : values) {
    if (x) v.push_back(*x);
  }
  Aggregate a;
  if (v.empty()) return a;
  double sum = 0.0;
  for (double x : v) sum += x;
  const double mean = sum / static_cast<double>(v.size());
  a.mean = mean;
  if (v.size() >= 2) {
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    a.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return a;
}

std::size_t CellResult::completed_seeds() const {
  return static_cast<std::size_t>(std::count_if(
      seeds.begin(), seeds.end(), [](const SeedResult& s) { return s.completed; }));
}

std::size_t RunResult::configured_seeds() const {
  std::size_t n = 0;
  for (const auto& c : cells) n += c.seeds.size();
  return n;
}

std::size_t RunResult::completed_seeds() const {
  std::size_t n = 0;
  for (const auto& c : cells) n += c.completed_seeds();
  return n;
}

const CellResult* RunResult::find(StrategyKind kind,
                                  std::optional<double> budget) const {
  for (const auto& c : cells) {
    if (c.strategy != kind) continue;
    if (!has_budget(kind) || (budget && c.budget && *c.budget == *budget)) return &c;
  }
  return nullptr;
}

SeedResult run_seed(const RunConfig& cfg, const DatasetIndex& dataset,
                    StrategyKind kind, double budget, std::uint64_t seed) {
  SeedResult result;
  result.seed = seed;
  result.matrix = EvalMatrix(dataset.task_count());
  StrategyConfig strategy = cfg.strategy;
  strategy.kind = kind;

  std::unique_ptr<Detector> detector;
  std::optional<IncrementState> state;
  try {
    detector = make_detector(cfg.detector, dataset, cfg.dataset_root, seed);
    detector->init(cfg.dataset_root, dataset.classes);
    state.emplace(dataset, *detector, strategy, budget, seed);
    for (std::size_t t = 0; t < dataset.task_count(); ++t) {
      run_increment(*state, t, cfg);
    }
    detector->shutdown();
    result.completed = true;
  } catch (const std::exception& e) {
    result.error = e.what();
  }
  if (state) {
    result.matrix = state->matrix;
    result.cumulative = state->cumulative;
    result.replay_sizes = state->replay_sizes;
    result.warnings = state->warnings;
  }
  if (result.completed) {
    if (result.matrix.row_complete(dataset.task_count() - 1)) {
      result.acc = acc(result.matrix);
    }
    if (dataset.task_count() >= 2) {
      try {
        result.bwt = bwt(result.matrix);
      } catch (const Error&) {
      }
    }
  }
  return result;
}

RunResult run_experiment(const RunConfig& cfg, const DatasetIndex& dataset) {
  cfg.validate();
  RunResult result;
  result.config = cfg;
  for (StrategyKind kind : cfg.strategies) {
    std::vector<std::optional<double>> budgets;
    if (has_budget(kind)) {
      budgets.assign(cfg.budgets.begin(), cfg.budgets.end());
    } else {
      budgets.push_back(std::nullopt);
    }
    for (const auto& budget : budgets) {
      CellResult cell;
      cell.strategy = kind;
      cell.budget = budget;
      std::vector<std::optional<double>> accs, bwts;
      for (std::uint64_t seed : cfg.seeds) {
        auto s = run_seed(cfg, dataset, kind, budget.value_or(1.0), seed);
        if (s.completed) {
          accs.push_back(s.acc);
          bwts.push_back(s.bwt);
        } else {
          std::string what = std::string(to_string(kind));
          if (budget) what += " @ " + budget_label(*budget);
          result.warnings.push_back(what + " seed " + std::to_string(seed) +
                                    " aborted: " + s.error.value_or("unknown"));
        }
        cell.seeds.push_back(std::move(s));
      }
      cell.acc = aggregate(accs);
      cell.bwt = aggregate(bwts);
      result.cells.push_back(std::move(cell));
    }
  }
  return result;
}

RunResult run_experiment(const RunConfig& cfg) {
  const DatasetIndex dataset = load_dataset(cfg.dataset_root);
  return run_experiment(cfg, dataset);
}

// ---------------------------------------------------------------- report

json result_to_json(const RunResult& result) {
  json cells = json::array();
  for (const auto& c : result.cells) {
    json seeds = json::array();
    for (const auto& s : c.seeds) {
      json rows = json::array();
      for (std::size_t j = 0; j < s.matrix.tasks(); ++j) {
        json row = json::array();
        for (std::size_t i = 0; i <= j; ++i) row.push_back(optional_json(s.matrix.at(j, i)));
        rows.push_back(std::move(row));
      }
      json cumulative = json::array();
      for (const auto& v : s.cumulative) cumulative.push_back(optional_json(v));
      seeds.push_back({{"seed", s.seed},
                       {"completed", s.completed},
                       {"error", s.error ? json(*s.error) : json(nullptr)},
                       {"matrix", std::move(rows)},
                       {"cumulative", std::move(cumulative)},
                       {"acc", optional_json(s.acc)},
                       {"bwt", optional_json(s.bwt)},
                       {"replay_sizes", s.replay_sizes},
                       {"warnings", s.warnings}});
    }
    cells.push_back({{"strategy", std::string(to_string(c.strategy))},
                     {"budget", optional_json(c.budget)},
                     {"configured_seeds", c.seeds.size()},
                     {"completed_seeds", c.completed_seeds()},
                     {"acc_mean", optional_json(c.acc.mean)},
                     {"acc_std", optional_json(c.acc.std)},
                     {"bwt_mean", optional_json(c.bwt.mean)},
                     {"bwt_std", optional_json(c.bwt.std)},
                     {"seeds", std::move(seeds)}});
  }
  return {{"tool", {{"name", kToolName}, {"version", kToolVersion}}},
          {"config", run_config_to_json(result.config)},
          {"configured_seeds", result.configured_seeds()},
          {"completed_seeds", result.completed_seeds()},
          {"warnings", result.warnings},
          {"cells", std::move(cells)}};
}

std::string summary_csv(const RunResult& result) {
  std::string out = "strategy,budget,acc_mean,acc_std,bwt_mean,bwt_std\n";
  for (const auto& c : result.cells) {
    out += std::string(to_string(c.strategy)) + ",";
    out += c.budget ? format_number(*c.budget) : std::string();
    out += "," + csv_number(c.acc.mean) + "," + csv_number(c.acc.std) + "," +
           csv_number(c.bwt.mean) + "," + csv_number(c.bwt.std) + "\n";
  }
  return out;
}

std::string summary_table(const RunResult& result) {
  std::vector<StrategyKind> replay;
  std::vector<StrategyKind> others;
  for (auto k : result.config.strategies) {
    (has_budget(k) ? replay : others).push_back(k);
  }
  constexpr int kCol = 16;
  std::ostringstream os;
  auto cell = [&](const std::string& s) {
    os << s;
    for (int pad = kCol - static_cast<int>(s.size()); pad > 0; --pad) os << ' ';
  };
  os << "mAP50-95 ACC and BWT (%), mean±std over seeds\n";
  if (!replay.empty()) {
    cell("Buffer");
    for (auto k : replay) cell("ACC " + std::string(to_string(k)));
    for (auto k : replay) cell("BWT " + std::string(to_string(k)));
    os << '\n';
    for (double b : result.config.budgets) {
      cell(budget_label(b));
      for (auto k : replay) {
        const auto* c = result.find(k, b);
        cell(c ? percent_cell(c->acc) : "n/a");
      }
      for (auto k : replay) {
        const auto* c = result.find(k, b);
        cell(c ? percent_cell(c->bwt) : "n/a");
      }
      os << '\n';
    }
  }
  for (auto k : others) {
    const auto* c = result.find(k);
    if (!c) continue;
    cell(std::string(to_string(k)));
    cell(percent_cell(c->acc));
    cell(percent_cell(c->bwt));
    os << '\n';
  }
  return os.str();
}

void emit_report(const RunResult& result, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error("cannot create output dir " + dir.string() + ": " + ec.message());
  auto write = [&](const char* name, const std::string& content) {
    std::ofstream out(dir / name, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + (dir / name).string());
    out << content;
    if (!out) throw Error("failed writing " + (dir / name).string());
  };
  write("results.json", result_to_json(result).dump(2) + "\n");
  write("summary.csv", summary_csv(result));
  write("table.txt", summary_table(result));
}

}  // namespace cilbench
