#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "cilbench/types.hpp"

namespace cilbench {

struct SimParams {
  double learn_rate = 0.5;
  double decay_rate = 0.4;
  double jitter_scale = 0.05;
  double fp_rate = 0.5;
  // Image fraction at which a class counts as fully exposed:
  // exposure_c = min(1, p_c / saturation). 1.0 gives the plain fraction.
  double saturation = 1.0;
  // When set, the emission draw of each gt instance depends only on
  // (seed, image id, instance index), so an instance stays detected as long
  // as its class skill stays above that draw. Jitter and confidence noise
  // still vary with the step.
  bool persistent_hardness = false;

  void validate() const;
};

// Per-class detector quality of the simulated learner. Skills stay in [0,1].
struct SimSkillState {
  std::vector<double> skill;  // indexed by class id
  SimParams params;
  std::uint64_t seed = 0;

  static SimSkillState fresh(std::size_t num_classes, SimParams params,
                             std::uint64_t seed);
  double mean_skill() const;
};

// One update per call. With p_c the fraction of images holding class c and
// e_c = min(1, p_c / saturation):
//   skill_c += lr * e_c * (1 - skill_c) - decay * (1 - e_c) * skill_c
// then clamped to [0,1]. Throws cilbench::Error on an empty train set.
SimSkillState sim_train(const SimSkillState& state,
                        std::span<const ImageRecord* const> train_set);
SimSkillState sim_train(const SimSkillState& state,
                        std::span<const ImageRecord> train_set);

// Raw detections for one image. Fully determined by (state.seed, image id,
// step); no shared RNG state, so images can be scored concurrently.
//
// Each gt of class c is emitted with probability skill_c, its sides jittered
// by up to jitter_scale * (1 - skill_c) of the box size; confidence is
// skill_c +- 0.05 clamped to [0.05, 1]. False positives average
// fp_rate * (1 - mean skill) per image and never overlap a gt with IoU >= 0.3.
std::vector<Detection> sim_predict(const SimSkillState& state,
                                   const ImageRecord& image,
                                   std::uint64_t step);

struct ScenarioParams {
  std::size_t tasks = 5;
  std::size_t train_per_task = 40;
  std::size_t test_per_task = 10;
  int image_width = 640;
  int image_height = 480;
  std::size_t max_instances = 3;
  std::uint64_t seed = 2024;
  // "t2_train_017" style ids. Otherwise ids are "frame_00123" numbered by a
  // seeded permutation, so canonical order is unrelated to task order.
  bool task_prefixed_ids = false;
};

// Synthetic stream with one class per task, in the default class order.
DatasetIndex make_sim_scenario(const ScenarioParams& params = {});

}  // namespace cilbench
