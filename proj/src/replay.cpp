#include "cilbench/replay.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>

#include "cilbench/error.hpp"
#include "cilbench/random.hpp"

namespace cilbench {

namespace {

double lookup_recall(const RecallMap& m, const ImageId& id,
                     std::string_view what) {
  auto it = m.find(id);
  if (it == m.end()) {
    throw Error(std::string(what) + ": no recall for pooled image " + id);
  }
  if (!(it->second >= 0.0 && it->second <= 1.0)) {
    throw Error(std::string(what) + ": recall outside [0,1] for " + id);
  }
  return it->second;
}

// Ranks (score, id) pairs with `before` and returns the first `n` ids sorted.
template <typename Before>
std::vector<ImageId> take_ranked(std::vector<std::pair<double, ImageId>> scored,
                                 std::size_t n, Before before) {
  n = std::min(n, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<long>(n),
                    scored.end(), [&](const auto& a, const auto& b) {
                      if (a.first != b.first) return before(a.first, b.first);
                      return a.second < b.second;
                    });
  std::vector<ImageId> out;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) out.push_back(scored[k].second);
  std::sort(out.begin(), out.end());
  return out;
}

std::size_t selection_size(const StrategyConfig& cfg,
                           std::optional<std::size_t> limit) {
  return limit ? std::min(cfg.k_select, *limit) : cfg.k_select;
}

}  // namespace

std::string_view to_string(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::kNaive:
      return "naive";
    case StrategyKind::kEr:
      return "er";
    case StrategyKind::kMir:
      return "mir";
    case StrategyKind::kFar:
      return "far";
    case StrategyKind::kJoint:
      return "joint";
  }
  return "unknown";
}

StrategyKind parse_strategy(std::string_view name) {
  for (auto k : {StrategyKind::kNaive, StrategyKind::kEr, StrategyKind::kMir,
                 StrategyKind::kFar, StrategyKind::kJoint}) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("unknown strategy: " + std::string(name));
}

std::string_view to_string(FarBaseline mode) {
  return mode == FarBaseline::kPerTask ? "per_task" : "refresh";
}

FarBaseline parse_far_baseline(std::string_view name) {
  if (name == "per_task") return FarBaseline::kPerTask;
  if (name == "refresh") return FarBaseline::kRefresh;
  throw ConfigError("unknown far_baseline mode: " + std::string(name));
}

void StrategyConfig::validate() const {
  if (pool_cap == 0 || k_select == 0) {
    throw ConfigError("pool_cap and k_select must be positive");
  }
  if (k_select > pool_cap) throw ConfigError("k_select exceeds pool_cap");
}

std::size_t resolve_budget(double fraction, std::size_t prior_pool_size) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw ConfigError("replay budget fraction must lie in (0,1]");
  }
  if (prior_pool_size == 0) return 0;
  // The epsilon keeps exact halves such as 0.15 * 10 from rounding down.
  const double scaled = fraction * static_cast<double>(prior_pool_size);
  auto count = static_cast<std::size_t>(std::floor(scaled + 0.5 + 1e-9));
  return std::clamp<std::size_t>(count, 1, prior_pool_size);
}

std::vector<ImageId> capped_pool(std::span<const ImageId> pool,
                                 std::size_t cap) {
  std::vector<ImageId> ids(pool.begin(), pool.end());
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  if (ids.size() > cap) ids.resize(cap);
  return ids;
}

std::size_t replay_count(const StrategyConfig& cfg, std::size_t budget_count) {
  switch (cfg.kind) {
    case StrategyKind::kEr:
      return budget_count;
    case StrategyKind::kMir:
    case StrategyKind::kFar:
      return std::min(budget_count, cfg.k_select);
    case StrategyKind::kNaive:
    case StrategyKind::kJoint:
      return 0;
  }
  return 0;
}

std::vector<ImageId> er_select(std::span<const ImageId> prior_pool,
                               std::size_t count, std::uint64_t seed) {
  std::vector<ImageId> ids =
      capped_pool(prior_pool, std::numeric_limits<std::size_t>::max());
  count = std::min(count, ids.size());
  // Partial Fisher-Yates over the canonical order.
  Rng rng(mix_seed(seed, 0x45525f73656c6563ULL));
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t j = k + rng.below(ids.size() - k);
    std::swap(ids[k], ids[j]);
  }
  ids.resize(count);
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::vector<ImageId> mir_select(std::span<const ImageId> prior_pool,
                                const RecallMap& recall_of,
                                const StrategyConfig& cfg,
                                std::optional<std::size_t> limit) {
  std::vector<std::pair<double, ImageId>> scored;
  for (auto& id : capped_pool(prior_pool, cfg.pool_cap)) {
    scored.emplace_back(lookup_recall(recall_of, id, "mir_select"),
                        std::move(id));
  }
  return take_ranked(std::move(scored), selection_size(cfg, limit),
                     [](double a, double b) { return a < b; });
}

RecallCache far_cache_baseline(std::span<const ImageId> prior_pool,
                               const RecallMap& recall_of, int checkpoint_task,
                               const StrategyConfig& cfg) {
  RecallCache cache;
  cache.checkpoint_task = checkpoint_task;
  for (auto& id : capped_pool(prior_pool, cfg.pool_cap)) {
    const double r = lookup_recall(recall_of, id, "far_cache_baseline");
    cache.entries.emplace(std::move(id), r);
  }
  return cache;
}

void far_extend_baseline(RecallCache& cache,
                         std::span<const ImageId> prior_pool,
                         const RecallMap& recall_of, int checkpoint_task,
                         const StrategyConfig& cfg) {
  std::map<ImageId, double> next;
  for (auto& id : capped_pool(prior_pool, cfg.pool_cap)) {
    auto it = cache.entries.find(id);
    const double r = it != cache.entries.end()
                         ? it->second
                         : lookup_recall(recall_of, id, "far_extend_baseline");
    next.emplace(std::move(id), r);
  }
  cache.entries = std::move(next);
  cache.checkpoint_task = checkpoint_task;
}

std::map<ImageId, double> far_scores(const RecallCache& cache,
                                     const RecallMap& current_recall_of) {
  std::map<ImageId, double> scores;
  for (const auto& [id, baseline] : cache.entries) {
    const double current = lookup_recall(current_recall_of, id, "far_select");
    scores.emplace(id, std::max(0.0, baseline - current));
  }
  return scores;
}

std::vector<ImageId> far_select(const RecallCache& cache,
                                const RecallMap& current_recall_of,
                                const StrategyConfig& cfg,
                                std::optional<std::size_t> limit) {
  std::vector<std::pair<double, ImageId>> scored;
  for (auto& [id, score] : far_scores(cache, current_recall_of)) {
    scored.emplace_back(score, id);
  }
  return take_ranked(std::move(scored), selection_size(cfg, limit),
                     [](double a, double b) { return a > b; });
}

}  // namespace cilbench
