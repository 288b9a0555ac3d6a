#pragma once

// Random instance generators shared by the unit and acceptance tests.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "cilbench/random.hpp"
#include "cilbench/types.hpp"

namespace testsupport {

inline cilbench::BBox random_box(cilbench::Rng& rng, double extent = 100.0) {
  const double w = rng.uniform(1.0, extent / 2);
  const double h = rng.uniform(1.0, extent / 2);
  const double x = rng.uniform(0.0, extent - w);
  const double y = rng.uniform(0.0, extent - h);
  return cilbench::BBox(x, y, x + w, y + h);
}

// Shifted and rescaled copy, so detections land at a spread of IoUs.
inline cilbench::BBox perturb(cilbench::Rng& rng, const cilbench::BBox& b, double amount) {
  const double w = b.width(), h = b.height();
  const double x0 = b.x_min() + rng.uniform(-amount, amount) * w;
  const double y0 = b.y_min() + rng.uniform(-amount, amount) * h;
  const double x1 = std::max(x0 + 0.5, b.x_max() + rng.uniform(-amount, amount) * w);
  const double y1 = std::max(y0 + 0.5, b.y_max() + rng.uniform(-amount, amount) * h);
  return cilbench::BBox(x0, y0, x1, y1);
}

// Confidences drawn from a coarse grid half the time so ties occur.
inline double random_conf(cilbench::Rng& rng) {
  if (rng.uniform() < 0.5) return static_cast<double>(1 + rng.below(10)) / 10.0;
  return rng.uniform();
}

struct DetectionInstance {
  std::vector<std::vector<cilbench::Detection>> dets;
  std::vector<std::vector<cilbench::GroundTruthInstance>> gts;
  std::vector<int> classes;
};

// <= max_images images, <= max_boxes gt boxes in total, <= max_classes
// classes. Detections are perturbed gts, duplicates and clutter.
inline DetectionInstance random_detection_instance(cilbench::Rng& rng,
                                                   std::size_t max_images = 10,
                                                   std::size_t max_boxes = 20,
                                                   int max_classes = 3) {
  DetectionInstance inst;
  const int classes = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_classes)));
  for (int c = 0; c < classes; ++c) inst.classes.push_back(c);
  const std::size_t images = 1 + rng.below(max_images);
  std::size_t budget = rng.below(max_boxes + 1);
  inst.dets.resize(images);
  inst.gts.resize(images);
  for (std::size_t im = 0; im < images; ++im) {
    const std::size_t n = im + 1 == images ? budget : rng.below(budget + 1);
    budget -= n;
    for (std::size_t k = 0; k < n; ++k) {
      const int cls = static_cast<int>(rng.below(static_cast<std::uint64_t>(classes)));
      inst.gts[im].emplace_back(random_box(rng), cls);
    }
    for (const auto& g : inst.gts[im]) {
      const std::size_t copies = rng.below(3);
      for (std::size_t c = 0; c < copies; ++c) {
        const int cls = rng.uniform() < 0.85 ? g.class_id
                                             : static_cast<int>(rng.below(static_cast<std::uint64_t>(classes)));
        inst.dets[im].emplace_back(perturb(rng, g.bbox, rng.uniform(0.0, 0.3)), cls,
                                   random_conf(rng));
      }
    }
    const std::size_t clutter = rng.below(3);
    for (std::size_t k = 0; k < clutter; ++k) {
      inst.dets[im].emplace_back(random_box(rng),
                                 static_cast<int>(rng.below(static_cast<std::uint64_t>(classes))),
                                 random_conf(rng));
    }
  }
  return inst;
}

inline std::string numbered_id(const char* prefix, std::size_t n) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%s%05zu", prefix, n);
  return buf;
}

// Fresh, empty scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("cilbench_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testsupport
