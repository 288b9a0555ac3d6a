#pragma once

// Line-delimited JSON protocol spoken with external detector backends.
// One compact object per line, UTF-8. Requests:
//   {"op":"init","id":N,"dataset_root":str,"classes":[str]}
//   {"op":"train_task","id":N,"task":int,"image_ids":[str]}
//   {"op":"predict","id":N,"image_id":str}
//   {"op":"snapshot","id":N,"tag":str}
//   {"op":"shutdown","id":N}
// Responses are {"id":N,"ok":true,...} or {"id":N,"error":str}; "ok" may be
// left out on success. A predict success carries
// "detections":[{"bbox":[x1,y1,x2,y2],"class":int,"conf":x}].

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cilbench/types.hpp"

namespace cilbench::wire {

using RequestId = std::int64_t;

std::string encode_init(RequestId id, const std::string& dataset_root,
                        std::span<const std::string> classes);
std::string encode_train_task(RequestId id, int task,
                              std::span<const ImageId> image_ids);
std::string encode_predict(RequestId id, const ImageId& image_id);
std::string encode_snapshot(RequestId id, const std::string& tag);
std::string encode_shutdown(RequestId id);

// Parses one response line and checks its id. Throws ProtocolError for
// malformed lines (the message quotes the line) or an id mismatch, and
// DetectorError carrying the backend's message verbatim for error responses.
nlohmann::json parse_response(std::string_view line, RequestId expected_id);

// Reads the "detections" array of a predict response. Rejects non-finite or
// degenerate boxes and confidences outside [0,1] with ProtocolError.
std::vector<Detection> parse_detections(const nlohmann::json& response);

// Inverse of parse_detections, used by in-process test backends.
nlohmann::json detections_to_json(std::span<const Detection> dets);

}  // namespace cilbench::wire
