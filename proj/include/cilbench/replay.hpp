#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "cilbench/types.hpp"

namespace cilbench {

enum class StrategyKind { kNaive, kEr, kMir, kFar, kJoint };

std::string_view to_string(StrategyKind kind);
// Accepts "naive", "er", "mir", "far", "joint". Throws ConfigError otherwise.
StrategyKind parse_strategy(std::string_view name);

// When FAR takes its baseline recall for a prior image.
enum class FarBaseline {
  // Once, with the checkpoint that finished the image's own task. Later
  // rescoring then measures the drop since the image was learned.
  kPerTask,
  // Re-taken for the whole pool after every task.
  kRefresh,
};

std::string_view to_string(FarBaseline mode);
FarBaseline parse_far_baseline(std::string_view name);

struct StrategyConfig {
  StrategyKind kind = StrategyKind::kEr;
  std::size_t pool_cap = 800;
  std::size_t k_select = 200;
  FarBaseline far_baseline = FarBaseline::kPerTask;

  void validate() const;
};

using RecallMap = std::map<ImageId, double>;

// round(fraction * pool_size), half up, at least 1 for a non-empty pool.
// The budget counts images, not annotation instances.
std::size_t resolve_budget(double fraction, std::size_t prior_pool_size);

// Sorted, duplicate-free copy of the pool truncated to `cap` ids.
std::vector<ImageId> capped_pool(std::span<const ImageId> pool,
                                 std::size_t cap);

// Number of replayed images for a strategy given the resolved budget:
// MIR and FAR are further limited by k_select, naive and joint ignore it.
std::size_t replay_count(const StrategyConfig& cfg, std::size_t budget_count);

// Uniform sample without replacement, returned sorted by id. `count` is
// clamped to the pool size.
std::vector<ImageId> er_select(std::span<const ImageId> prior_pool,
                               std::size_t count, std::uint64_t seed);

// The lowest-recall ids of the capped pool, ties by ascending id, returned
// sorted by id. At most min(k_select, limit) ids.
std::vector<ImageId> mir_select(std::span<const ImageId> prior_pool,
                                const RecallMap& recall_of,
                                const StrategyConfig& cfg,
                                std::optional<std::size_t> limit = {});

struct RecallCache {
  int checkpoint_task = -1;
  std::map<ImageId, double> entries;
};

RecallCache far_cache_baseline(std::span<const ImageId> prior_pool,
                               const RecallMap& recall_of, int checkpoint_task,
                               const StrategyConfig& cfg);

// Caps the pool, forgets ids that fell out of it and takes baselines for the
// ids not cached yet. Existing baselines are kept. `recall_of` only has to
// cover the new ids.
void far_extend_baseline(RecallCache& cache,
                         std::span<const ImageId> prior_pool,
                         const RecallMap& recall_of, int checkpoint_task,
                         const StrategyConfig& cfg);

// max(0, baseline - current) for every cached id.
std::map<ImageId, double> far_scores(const RecallCache& cache,
                                     const RecallMap& current_recall_of);

// The largest-drop ids, ties by ascending id, returned sorted by id.
std::vector<ImageId> far_select(const RecallCache& cache,
                                const RecallMap& current_recall_of,
                                const StrategyConfig& cfg,
                                std::optional<std::size_t> limit = {});

}  // namespace cilbench
