#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cilbench/detector.hpp"
#include "cilbench/metrics.hpp"
#include "cilbench/replay.hpp"
#include "cilbench/types.hpp"

namespace cilbench {

inline constexpr const char* kToolName = "cilbench";
inline constexpr const char* kToolVersion = "0.3.0";

enum class EvalMode {
  // Each task's test split scored on that task's class only.
  kPerTask,
  // Additionally scores the union of seen test splits over all seen classes.
  kCumulative,
};

struct RunConfig {
  std::string dataset_root;
  // pool_cap, k_select and far_baseline are shared by every strategy below.
  StrategyConfig strategy;
  std::vector<StrategyKind> strategies = {StrategyKind::kEr};
  // Fractions of the prior-task image pool.
  std::vector<double> budgets = {0.05, 0.10, 0.25, 0.50};
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  InferenceConfig inference;
  DetectorSpec detector;
  std::string output_dir = "results";
  EvalMode eval_mode = EvalMode::kPerTask;

  void validate() const;
};

RunConfig run_config_from_json(const nlohmann::json& doc);
nlohmann::json run_config_to_json(const RunConfig& cfg);
RunConfig load_run_config(const std::filesystem::path& file);

// Every strategy, seeds 1-10, and the sim parameters tuned for the stream
// from make_sim_scenario() with default ScenarioParams.
RunConfig default_scenario_config();

// Mutable state of one seed's pass over the task stream.
struct IncrementState {
  IncrementState(const DatasetIndex& dataset, Detector& detector,
                 StrategyConfig strategy, double budget, std::uint64_t seed);

  const DatasetIndex& dataset;
  Detector& detector;
  StrategyConfig strategy;
  double budget;
  std::uint64_t seed;

  EvalMatrix matrix;
  std::vector<std::optional<double>> cumulative;
  RecallCache far_cache;
  bool far_enabled = true;
  std::size_t next_task = 0;
  std::vector<std::size_t> replay_sizes;
  std::vector<std::string> warnings;
  // Post-processed predictions of the current model; cleared on training.
  std::map<ImageId, std::vector<Detection>> predictions;
};

struct IncrementOutcome {
  std::vector<ImageId> train_set;
  std::vector<ImageId> replayed;
  std::vector<std::optional<double>> row;
};

// Trains task `task_index` on its train ids plus the strategy's replay
// selection, then scores every test split i <= task_index. Tasks must be run
// in order.
IncrementOutcome run_increment(IncrementState& state, std::size_t task_index,
                               const RunConfig& cfg);

struct SeedResult {
  std::uint64_t seed = 0;
  bool completed = false;
  std::optional<std::string> error;
  EvalMatrix matrix{1};
  std::vector<std::optional<double>> cumulative;
  std::optional<double> acc;
  std::optional<double> bwt;
  std::vector<std::size_t> replay_sizes;
  std::vector<std::string> warnings;
};

struct Aggregate {
  std::optional<double> mean;
  // Sample standard deviation (n - 1); null below two values.
  std::optional<double> std;
};

Aggregate aggregate(const std::vector<std::optional<double>>& values);

struct CellResult {
  StrategyKind strategy = StrategyKind::kEr;
  // Unset for naive and joint, which ignore the budget.
  std::optional<double> budget;
  std::vector<SeedResult> seeds;
  Aggregate acc;
  Aggregate bwt;

  std::size_t completed_seeds() const;
};

struct RunResult {
  RunConfig config;
  std::vector<CellResult> cells;
  std::vector<std::string> warnings;

  std::size_t configured_seeds() const;
  std::size_t completed_seeds() const;
  const CellResult* find(StrategyKind kind,
                         std::optional<double> budget = std::nullopt) const;
};

SeedResult run_seed(const RunConfig& cfg, const DatasetIndex& dataset,
                    StrategyKind kind, double budget, std::uint64_t seed);

RunResult run_experiment(const RunConfig& cfg, const DatasetIndex& dataset);
// Loads and validates cfg.dataset_root first.
RunResult run_experiment(const RunConfig& cfg);

nlohmann::json result_to_json(const RunResult& result);
std::string summary_csv(const RunResult& result);
std::string summary_table(const RunResult& result);

// Writes results.json, summary.csv and table.txt. Throws cilbench::Error
// when the directory cannot be written.
void emit_report(const RunResult& result, const std::filesystem::path& dir);

}  // namespace cilbench
