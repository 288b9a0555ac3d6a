#include "cilbench/simworld.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <string>

#include "cilbench/error.hpp"
#include "cilbench/random.hpp"

namespace cilbench {

namespace {

constexpr double kConfidenceNoise = 0.05;
constexpr double kMinConfidence = 0.05;
constexpr double kFalsePositiveMaxOverlap = 0.3;
constexpr int kFalsePositiveTries = 8;

bool in_unit(double v) { return v >= 0.0 && v <= 1.0; }

std::string scenario_id(std::size_t task, const char* split, std::size_t k) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "t%zu_%s_%03zu", task, split, k);
  return buf;
}

}  // namespace

void SimParams::validate() const {
  if (!in_unit(learn_rate) || !in_unit(decay_rate)) {
    throw ConfigError("sim learn_rate and decay_rate must lie in [0,1]");
  }
  if (!(jitter_scale >= 0.0 && jitter_scale < 0.5)) {
    throw ConfigError("sim jitter_scale must lie in [0,0.5)");
  }
  if (!(fp_rate >= 0.0)) throw ConfigError("sim fp_rate must be >= 0");
  if (!(saturation > 0.0 && saturation <= 1.0)) {
    throw ConfigError("sim saturation must lie in (0,1]");
  }
}

SimSkillState SimSkillState::fresh(std::size_t num_classes, SimParams params,
                                   std::uint64_t seed) {
  params.validate();
  return SimSkillState{std::vector<double>(num_classes, 0.0), params, seed};
}

double SimSkillState::mean_skill() const {
  if (skill.empty()) return 0.0;
  return std::accumulate(skill.begin(), skill.end(), 0.0) /
         static_cast<double>(skill.size());
}

SimSkillState sim_train(const SimSkillState& state,
                        std::span<const ImageRecord* const> train_set) {
  if (train_set.empty()) throw Error("sim_train: empty train set");
  SimSkillState next = state;
  const auto& params = state.params;
  const std::size_t classes = next.skill.size();
  const double n = static_cast<double>(train_set.size());
  std::vector<double> share(classes, 0.0);
  for (std::size_t c = 0; c < classes; ++c) {
    std::size_t holding = 0;
    for (const ImageRecord* rec : train_set) {
      if (rec->contains_class(static_cast<ClassId>(c))) ++holding;
    }
    share[c] = static_cast<double>(holding) / n;
  }
  for (std::size_t c = 0; c < classes; ++c) {
    const double e = std::min(1.0, share[c] / params.saturation);
    const double s = state.skill[c];
    const double updated = s + params.learn_rate * e * (1.0 - s) -
                           params.decay_rate * (1.0 - e) * s;
    next.skill[c] = std::clamp(updated, 0.0, 1.0);
  }
  return next;
}

SimSkillState sim_train(const SimSkillState& state,
                        std::span<const ImageRecord> train_set) {
  std::vector<const ImageRecord*> ptrs;
  ptrs.reserve(train_set.size());
  for (const auto& rec : train_set) ptrs.push_back(&rec);
  return sim_train(state, ptrs);
}

std::vector<Detection> sim_predict(const SimSkillState& state,
                                   const ImageRecord& image,
                                   std::uint64_t step) {
  const std::uint64_t image_key = fnv1a64(image.image_id);
  Rng rng(mix_seed(state.seed, image_key, step));
  const double w_img = image.width;
  const double h_img = image.height;
  std::vector<Detection> out;

  for (std::size_t k = 0; k < image.gt.size(); ++k) {
    const auto& g = image.gt[k];
    const double s =
        static_cast<std::size_t>(g.class_id) < state.skill.size()
            ? state.skill[static_cast<std::size_t>(g.class_id)]
            : 0.0;
    // Always consume the same draws so emission decisions stay coupled
    // across skill levels.
    double u = rng.uniform();
    if (state.params.persistent_hardness) {
      u = Rng(mix_seed(state.seed ^ 0x68617264ULL, image_key, k)).uniform();
    }
    double side[4];
    for (double& v : side) v = rng.uniform(-1.0, 1.0);
    const double noise = rng.uniform(-kConfidenceNoise, kConfidenceNoise);
    if (!(u < s)) continue;

    const double m = state.params.jitter_scale * (1.0 - s);
    const double bw = g.bbox.width();
    const double bh = g.bbox.height();
    const double x0 = std::clamp(g.bbox.x_min() + side[0] * m * bw, 0.0, w_img);
    const double y0 = std::clamp(g.bbox.y_min() + side[1] * m * bh, 0.0, h_img);
    const double x1 = std::clamp(g.bbox.x_max() + side[2] * m * bw, 0.0, w_img);
    const double y1 = std::clamp(g.bbox.y_max() + side[3] * m * bh, 0.0, h_img);
    if (!(x0 < x1 && y0 < y1)) continue;
    const double conf = std::clamp(s + noise, kMinConfidence, 1.0);
    out.emplace_back(BBox(x0, y0, x1, y1), g.class_id, conf);
  }

  const std::size_t classes = state.skill.size();
  const double expected_fp =
      state.params.fp_rate * (1.0 - state.mean_skill());
  if (classes == 0 || expected_fp <= 0.0) return out;
  auto fp_count = static_cast<std::size_t>(std::floor(expected_fp));
  if (rng.uniform() < expected_fp - std::floor(expected_fp)) ++fp_count;

  for (std::size_t k = 0; k < fp_count; ++k) {
    const auto cls = static_cast<ClassId>(rng.below(classes));
    const double conf = rng.uniform(kMinConfidence, 0.5);
    for (int attempt = 0; attempt < kFalsePositiveTries; ++attempt) {
      const double bw = rng.uniform(0.05, 0.3) * w_img;
      const double bh = rng.uniform(0.05, 0.3) * h_img;
      const double x0 = rng.uniform(0.0, w_img - bw);
      const double y0 = rng.uniform(0.0, h_img - bh);
      const BBox box(x0, y0, x0 + bw, y0 + bh);
      const bool overlaps = std::any_of(
          image.gt.begin(), image.gt.end(), [&](const GroundTruthInstance& g) {
            return iou(box, g.bbox) >= kFalsePositiveMaxOverlap;
          });
      if (!overlaps) {
        out.emplace_back(box, cls, conf);
        break;
      }
    }
  }
  return out;
}

DatasetIndex make_sim_scenario(const ScenarioParams& params) {
  DatasetIndex index;
  index.classes = default_class_names();
  while (index.classes.size() < params.tasks) {
    index.classes.push_back("class_" + std::to_string(index.classes.size()));
  }
  index.classes.resize(std::max<std::size_t>(params.tasks, 1));

  Rng rng(mix_seed(params.seed, 0x7363656e6172696fULL));
  const double w = params.image_width;
  const double h = params.image_height;

  auto make_image = [&](std::string id, std::size_t task) {
    ImageRecord rec;
    rec.image_id = std::move(id);
    rec.width = params.image_width;
    rec.height = params.image_height;
    rec.source_task = static_cast<int>(task);
    const std::size_t n = 1 + rng.below(std::max<std::size_t>(params.max_instances, 1));
    // Redraw boxes that overlap an earlier one too much; a perfect detector
    // must survive NMS.
    for (std::size_t k = 0; k < n; ++k) {
      for (int attempt = 0; attempt < 16; ++attempt) {
        const double bw = rng.uniform(0.08, 0.25) * w;
        const double bh = rng.uniform(0.08, 0.25) * h;
        const double x0 = rng.uniform(0.0, w - bw);
        const double y0 = rng.uniform(0.0, h - bh);
        const BBox box(x0, y0, x0 + bw, y0 + bh);
        const bool crowded = std::any_of(rec.gt.begin(), rec.gt.end(), [&](const auto& g) {
          return iou(g.bbox, box) > 0.3;
        });
        if (crowded) continue;
        rec.gt.emplace_back(box, static_cast<ClassId>(task));
        break;
      }
    }
    return rec;
  };

  const std::size_t per_task = params.train_per_task + params.test_per_task;
  std::vector<std::size_t> frame(params.tasks * per_task);
  for (std::size_t i = 0; i < frame.size(); ++i) frame[i] = i;
  Rng shuffle(mix_seed(params.seed, 0x6672616d6573ULL));
  for (std::size_t i = frame.size(); i > 1; --i) {
    std::swap(frame[i - 1], frame[shuffle.below(i)]);
  }
  auto next_id = [&](std::size_t t, bool train, std::size_t k) {
    if (params.task_prefixed_ids) return scenario_id(t, train ? "train" : "test", k);
    const std::size_t slot = t * per_task + (train ? k : params.train_per_task + k);
    char buf[32];
    std::snprintf(buf, sizeof buf, "frame_%05zu", frame[slot]);
    return std::string(buf);
  };

  for (std::size_t t = 0; t < params.tasks; ++t) {
    TaskSpec task;
    task.task_index = static_cast<int>(t);
    task.introduced_class = static_cast<ClassId>(t);
    for (std::size_t k = 0; k < params.train_per_task; ++k) {
      auto rec = make_image(next_id(t, true, k), t);
      task.train_ids.push_back(rec.image_id);
      index.images.emplace(rec.image_id, std::move(rec));
    }
    for (std::size_t k = 0; k < params.test_per_task; ++k) {
      auto rec = make_image(next_id(t, false, k), t);
      task.test_ids.push_back(rec.image_id);
      index.images.emplace(rec.image_id, std::move(rec));
    }
    index.tasks.push_back(std::move(task));
  }
  return index;
}

}  // namespace cilbench
