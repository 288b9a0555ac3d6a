#include "cilbench/types.hpp"

#include <cmath>
#include <set>
#include <stdexcept>
#include <utility>

#include "cilbench/error.hpp"

namespace cilbench {

Detection::Detection(BBox bbox_, ClassId class_id_, double confidence_)
    : bbox(bbox_), class_id(class_id_), confidence(confidence_) {
  if (class_id < 0) throw std::invalid_argument("class id must be >= 0");
  if (!(confidence >= 0.0 && confidence <= 1.0)) {
    throw std::invalid_argument("detection confidence must lie in [0,1]");
  }
}

GroundTruthInstance::GroundTruthInstance(BBox bbox_, ClassId class_id_,
                                         std::optional<Polygon> mask_)
    : bbox(bbox_), class_id(class_id_), mask(std::move(mask_)) {
  if (class_id < 0) throw std::invalid_argument("class id must be >= 0");
  if (mask) {
    const BBox bounds = mask_bounds(*mask);
    if (!boxes_close(bounds, bbox, 1.0)) {
      throw std::invalid_argument("mask bounds disagree with bbox by > 1px");
    }
  }
}

void ImageRecord::validate() const {
  if (image_id.empty()) throw DatasetError("image with empty id");
  if (width <= 0 || height <= 0) {
    throw DatasetError("image " + image_id + " has non-positive size");
  }
  for (std::size_t k = 0; k < gt.size(); ++k) {
    const BBox& b = gt[k].bbox;
    if (b.x_min() < 0 || b.y_min() < 0 || b.x_max() > width ||
        b.y_max() > height) {
      throw DatasetError("image " + image_id + " instance " +
                         std::to_string(k) + " lies outside the image");
    }
  }
}

bool ImageRecord::contains_class(ClassId c) const {
  for (const auto& g : gt) {
    if (g.class_id == c) return true;
  }
  return false;
}

const ImageRecord& DatasetIndex::image(const ImageId& id) const {
  auto it = images.find(id);
  if (it == images.end()) throw DatasetError("unknown image id: " + id);
  return it->second;
}

std::optional<ClassId> DatasetIndex::class_id_of(const std::string& name) const {
  for (std::size_t c = 0; c < classes.size(); ++c) {
    if (classes[c] == name) return static_cast<ClassId>(c);
  }
  return std::nullopt;
}

void DatasetIndex::validate() const {
  if (tasks.empty()) throw DatasetError("dataset has no tasks");
  for (const auto& [id, rec] : images) {
    if (id != rec.image_id) {
      throw DatasetError("image key " + id + " != record id " + rec.image_id);
    }
    rec.validate();
    for (const auto& g : rec.gt) {
      if (static_cast<std::size_t>(g.class_id) >= classes.size()) {
        throw DatasetError("image " + id + " references unknown class " +
                           std::to_string(g.class_id));
      }
    }
  }
  std::set<ClassId> introduced;
  std::set<ImageId> seen_train, seen_test;
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    const TaskSpec& task = tasks[t];
    if (task.task_index != static_cast<int>(t)) {
      throw DatasetError("task " + std::to_string(t) + " has index " +
                         std::to_string(task.task_index));
    }
    if (task.introduced_class < 0 ||
        static_cast<std::size_t>(task.introduced_class) >= classes.size()) {
      throw DatasetError("task " + std::to_string(t) +
                         " introduces an unknown class");
    }
    if (!introduced.insert(task.introduced_class).second) {
      throw DatasetError("class introduced twice by task " + std::to_string(t));
    }
    for (const auto& id : task.train_ids) {
      image(id);
      if (!seen_train.insert(id).second) {
        throw DatasetError("train id listed twice: " + id);
      }
    }
    for (const auto& id : task.test_ids) {
      image(id);
      if (!seen_test.insert(id).second) {
        throw DatasetError("test id listed twice: " + id);
      }
    }
  }
  for (const auto& id : seen_test) {
    if (seen_train.contains(id)) {
      throw DatasetError("image used for both train and test: " + id);
    }
  }
}

std::vector<std::string> default_class_names() {
  return {"vehicle_1", "vehicle_2", "vehicle_3", "drone", "human"};
}

}  // namespace cilbench
