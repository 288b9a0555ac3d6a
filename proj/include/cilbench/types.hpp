#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cilbench/geometry.hpp"

namespace cilbench {

using ClassId = int;
using ImageId = std::string;

struct Detection {
  Detection(BBox bbox, ClassId class_id, double confidence);

  BBox bbox;
  ClassId class_id;
  double confidence;

  friend bool operator==(const Detection&, const Detection&) = default;
};

struct GroundTruthInstance {
  GroundTruthInstance(BBox bbox, ClassId class_id,
                      std::optional<Polygon> mask = std::nullopt);

  BBox bbox;
  ClassId class_id;
  std::optional<Polygon> mask;
};

struct ImageRecord {
  ImageId image_id;
  int width = 0;
  int height = 0;
  std::vector<GroundTruthInstance> gt;
  int source_task = 0;

  // Throws DatasetError when dimensions are non-positive or a box leaves
  // the image frame.
  void validate() const;
  bool contains_class(ClassId c) const;
};

struct TaskSpec {
  int task_index = 0;
  ClassId introduced_class = 0;
  std::vector<ImageId> train_ids;
  std::vector<ImageId> test_ids;
};

// The class-incremental data model: one new class per task.
struct DatasetIndex {
  std::vector<std::string> classes;
  std::vector<TaskSpec> tasks;
  std::map<ImageId, ImageRecord> images;

  std::size_t task_count() const { return tasks.size(); }
  const ImageRecord& image(const ImageId& id) const;
  std::optional<ClassId> class_id_of(const std::string& name) const;

  // Checks referential integrity: ids resolve, splits are disjoint, each
  // task introduces a distinct class, image records are valid.
  void validate() const;
};

// Three vehicle classes, then drone, then human.
std::vector<std::string> default_class_names();

}  // namespace cilbench
