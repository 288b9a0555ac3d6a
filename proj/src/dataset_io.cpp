#include "cilbench/dataset_io.hpp"

#include <fstream>

#include "cilbench/error.hpp"

namespace cilbench {

using nlohmann::json;

json bbox_to_json(const BBox& b) {
  return json::array({b.x_min(), b.y_min(), b.x_max(), b.y_max()});
}

BBox bbox_from_json(const json& j) {
  if (!j.is_array() || j.size() != 4) {
    throw std::invalid_argument("bbox must be an array [x1,y1,x2,y2]");
  }
  for (const auto& v : j) {
    if (!v.is_number()) throw std::invalid_argument("bbox entries must be numbers");
  }
  return BBox(j[0].get<double>(), j[1].get<double>(), j[2].get<double>(),
              j[3].get<double>());
}

json dataset_to_json(const DatasetIndex& index) {
  json doc;
  doc["classes"] = index.classes;
  json tasks = json::array();
  for (const auto& t : index.tasks) {
    tasks.push_back({{"task_index", t.task_index},
                     {"introduced_class", t.introduced_class},
                     {"train_ids", t.train_ids},
                     {"test_ids", t.test_ids}});
  }
  doc["tasks"] = std::move(tasks);
  json images = json::array();
  for (const auto& [id, rec] : index.images) {
    json gt = json::array();
    for (const auto& g : rec.gt) {
      json inst = {{"bbox", bbox_to_json(g.bbox)}, {"class", g.class_id}};
      if (g.mask) {
        json poly = json::array();
        for (const auto& p : *g.mask) poly.push_back({p.x, p.y});
        inst["mask"] = std::move(poly);
      }
      gt.push_back(std::move(inst));
    }
    images.push_back({{"image_id", id},
                      {"width", rec.width},
                      {"height", rec.height},
                      {"source_task", rec.source_task},
                      {"gt", std::move(gt)}});
  }
  doc["images"] = std::move(images);
  return doc;
}

DatasetIndex dataset_from_json(const json& doc) {
  DatasetIndex index;
  try {
    index.classes = doc.at("classes").get<std::vector<std::string>>();
    for (const auto& t : doc.at("tasks")) {
      TaskSpec task;
      task.task_index = t.at("task_index").get<int>();
      task.introduced_class = t.at("introduced_class").get<ClassId>();
      task.train_ids = t.at("train_ids").get<std::vector<ImageId>>();
      task.test_ids = t.at("test_ids").get<std::vector<ImageId>>();
      index.tasks.push_back(std::move(task));
    }
    for (const auto& im : doc.at("images")) {
      ImageRecord rec;
      rec.image_id = im.at("image_id").get<std::string>();
      rec.width = im.at("width").get<int>();
      rec.height = im.at("height").get<int>();
      rec.source_task = im.value("source_task", 0);
      for (const auto& g : im.at("gt")) {
        std::optional<Polygon> mask;
        if (g.contains("mask") && !g["mask"].is_null()) {
          Polygon poly;
          for (const auto& p : g["mask"]) {
            poly.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
          }
          mask = std::move(poly);
        }
        rec.gt.emplace_back(bbox_from_json(g.at("bbox")),
                            g.at("class").get<ClassId>(), std::move(mask));
      }
      const std::string id = rec.image_id;
      if (!index.images.emplace(id, std::move(rec)).second) {
        throw DatasetError("duplicate image id: " + id);
      }
    }
  } catch (const json::exception& e) {
    throw DatasetError(std::string("malformed dataset index: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw DatasetError(std::string("invalid dataset record: ") + e.what());
  }
  index.validate();
  return index;
}

DatasetIndex load_dataset(const std::filesystem::path& root_or_file) {
  const auto path = std::filesystem::is_directory(root_or_file)
                        ? root_or_file / kDatasetIndexFile
                        : root_or_file;
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot open dataset index " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw DatasetError("cannot parse " + path.string() + ": " + e.what());
  }
  return dataset_from_json(doc);
}

void save_dataset(const DatasetIndex& index,
                  const std::filesystem::path& root) {
  std::filesystem::create_directories(root);
  const auto path = root / kDatasetIndexFile;
  std::ofstream out(path);
  if (!out) throw DatasetError("cannot write " + path.string());
  out << dataset_to_json(index).dump() << '\n';
}

}  // namespace cilbench
