#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "cilbench/types.hpp"

namespace cilbench {

// File name of the dataset index inside a dataset root.
inline constexpr const char* kDatasetIndexFile = "dataset.json";

// {"classes":[...], "tasks":[{"task_index","introduced_class","train_ids",
// "test_ids"}], "images":[{"image_id","width","height","source_task",
// "gt":[{"bbox":[x1,y1,x2,y2],"class":c,"mask":[[x,y],...]?}]}]}
nlohmann::json dataset_to_json(const DatasetIndex& index);
DatasetIndex dataset_from_json(const nlohmann::json& doc);

// Accepts either a dataset root directory or the index file itself.
DatasetIndex load_dataset(const std::filesystem::path& root_or_file);
void save_dataset(const DatasetIndex& index, const std::filesystem::path& root);

nlohmann::json bbox_to_json(const BBox& b);
BBox bbox_from_json(const nlohmann::json& j);

}  // namespace cilbench
