#include "cilbench/wire.hpp"

#include <cmath>

#include "cilbench/error.hpp"

namespace cilbench::wire {

using nlohmann::ordered_json;

namespace {

std::string dump_line(const ordered_json& j) {
  return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::strict);
}

std::string quote_line(std::string_view line) {
  constexpr std::size_t kMaxQuoted = 200;
  std::string s(line.substr(0, kMaxQuoted));
  if (line.size() > kMaxQuoted) s += "...";
  return "'" + s + "'";
}

}  // namespace

std::string encode_init(RequestId id, const std::string& dataset_root,
                        std::span<const std::string> classes) {
  ordered_json j;
  j["op"] = "init";
  j["id"] = id;
  j["dataset_root"] = dataset_root;
  j["classes"] = std::vector<std::string>(classes.begin(), classes.end());
  return dump_line(j);
}

std::string encode_train_task(RequestId id, int task,
                              std::span<const ImageId> image_ids) {
  ordered_json j;
  j["op"] = "train_task";
  j["id"] = id;
  j["task"] = task;
  j["image_ids"] = std::vector<ImageId>(image_ids.begin(), image_ids.end());
  return dump_line(j);
}

std::string encode_predict(RequestId id, const ImageId& image_id) {
  ordered_json j;
  j["op"] = "predict";
  j["id"] = id;
  j["image_id"] = image_id;
  return dump_line(j);
}

std::string encode_snapshot(RequestId id, const std::string& tag) {
  ordered_json j;
  j["op"] = "snapshot";
  j["id"] = id;
  j["tag"] = tag;
  return dump_line(j);
}

std::string encode_shutdown(RequestId id) {
  ordered_json j;
  j["op"] = "shutdown";
  j["id"] = id;
  return dump_line(j);
}

nlohmann::json parse_response(std::string_view line, RequestId expected_id) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error&) {
    throw ProtocolError("malformed response line " + quote_line(line));
  }
  if (!j.is_object() || !j.contains("id") || !j["id"].is_number_integer()) {
    throw ProtocolError("response without integer id: " + quote_line(line));
  }
  const auto id = j["id"].get<RequestId>();
  if (id != expected_id) {
    throw ProtocolError("response id " + std::to_string(id) +
                        " does not match request id " +
                        std::to_string(expected_id));
  }
  if (j.contains("error")) {
    const auto& e = j["error"];
    throw DetectorError(e.is_string() ? e.get<std::string>() : e.dump());
  }
  // "ok" may be omitted on success, but must not be anything but true.
  if (j.contains("ok") && j["ok"] != true) {
    throw ProtocolError("response with ok other than true and no error: " + quote_line(line));
  }
  return j;
}

std::vector<Detection> parse_detections(const nlohmann::json& response) {
  if (!response.contains("detections") || !response["detections"].is_array()) {
    throw ProtocolError("predict response lacks a detections array");
  }
  std::vector<Detection> out;
  const auto& arr = response["detections"];
  for (std::size_t k = 0; k < arr.size(); ++k) {
    const auto& d = arr[k];
    const std::string where = "detection " + std::to_string(k) + ": ";
    if (!d.is_object() || !d.contains("bbox") || !d.contains("class") ||
        !d.contains("conf")) {
      throw ProtocolError(where + "needs bbox, class and conf");
    }
    const auto& b = d["bbox"];
    if (!b.is_array() || b.size() != 4) {
      throw ProtocolError(where + "bbox must have 4 numbers");
    }
    double c[4];
    for (int i = 0; i < 4; ++i) {
      if (!b[i].is_number()) throw ProtocolError(where + "non-numeric bbox");
      c[i] = b[i].get<double>();
      if (!std::isfinite(c[i])) {
        throw ProtocolError(where + "non-finite coordinate");
      }
    }
    if (!d["class"].is_number_integer() || d["class"].get<int>() < 0) {
      throw ProtocolError(where + "class must be a non-negative integer");
    }
    if (!d["conf"].is_number()) throw ProtocolError(where + "non-numeric conf");
    const double conf = d["conf"].get<double>();
    if (!(conf >= 0.0 && conf <= 1.0)) {
      throw ProtocolError(where + "conf outside [0,1]");
    }
    try {
      out.emplace_back(BBox(c[0], c[1], c[2], c[3]), d["class"].get<int>(),
                       conf);
    } catch (const std::invalid_argument& e) {
      throw ProtocolError(where + e.what());
    }
  }
  return out;
}

nlohmann::json detections_to_json(std::span<const Detection> dets) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& d : dets) {
    arr.push_back({{"bbox",
                    {d.bbox.x_min(), d.bbox.y_min(), d.bbox.x_max(),
                     d.bbox.y_max()}},
                   {"class", d.class_id},
                   {"conf", d.confidence}});
  }
  return arr;
}

}  // namespace cilbench::wire
