#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cilbench/types.hpp"

namespace cilbench {

// One box/mask proposal of the vision-language teacher.
struct TeacherPrediction {
  ImageId image_id;
  Polygon mask;
  BBox box;
  double confidence;
  std::string class_name;
  // Free-form text prompt metadata, carried through untouched.
  std::string prompt;
};

struct AnnotationConfig {
  double conf_threshold = 0.75;
  double mask_box_iou = 0.5;

  void validate() const;
};

enum class RejectReason { kLowConfidence, kDegenerateMask, kMaskBoxMismatch };

std::string_view to_string(RejectReason reason);

struct Rejection {
  TeacherPrediction prediction;
  RejectReason reason;
  std::string detail;
};

struct FilterResult {
  std::vector<TeacherPrediction> accepted;
  std::vector<Rejection> rejected;
};

// Keeps a prediction iff confidence >= conf_threshold and the IoU between its
// mask bounds and its reported box is >= mask_box_iou. Confidence is checked
// first; a degenerate mask is a rejection, never an exception.
FilterResult filter_teacher(std::span<const TeacherPrediction> preds,
                            const AnnotationConfig& cfg);

// One JSON object per line:
//   {"image_id":s,"mask":[[x,y],...],"box":[x1,y1,x2,y2],"confidence":c,
//    "class":s,"prompt":s?}
// Blank lines are skipped. Errors name the 1-based line number.
std::vector<TeacherPrediction> read_teacher_jsonl(std::istream& in);

struct LabeledBox {
  ClassId class_id;
  BBox box;
};

using FrameAnnotations = std::map<ImageId, std::vector<LabeledBox>>;

// Groups accepted predictions per frame. `frames` lists every frame that
// must appear, even with no accepted box. Unknown class names throw.
FrameAnnotations frames_from_teacher(std::span<const TeacherPrediction> accepted,
                                     std::span<const ImageId> frames,
                                     std::span<const std::string> classes);

struct FlaggedFrame {
  ImageId image_id;
  std::vector<std::string> reasons;  // e.g. "box_edit:1", "deletion:2"
};

struct ReviewReport {
  std::size_t total_frames = 0;
  std::size_t edited_frames = 0;
  double agreement = 1.0;
  std::vector<FlaggedFrame> flagged;  // frame-id order
};

// A frame is edited when its reviewed boxes cannot be paired one-to-one with
// the automatic ones by class and all four coordinates within `tolerance`
// pixels. Throws cilbench::Error when the frame sets differ.
ReviewReport agreement_report(const FrameAnnotations& automatic,
                              const FrameAnnotations& reviewed,
                              double tolerance = 1.0);

nlohmann::json report_to_json(const ReviewReport& report);

// Image records plus class names, without the task split.
struct LabelSet {
  std::vector<std::string> classes;
  std::map<ImageId, ImageRecord> images;
};

LabelSet labels_of(const DatasetIndex& index);
FrameAnnotations frames_of(const LabelSet& labels);

// "c cx cy w h" with center and size normalized by the image size.
std::string yolo_line(ClassId class_id, const BBox& box, int width, int height);

// Per-image YOLO label text. Throws DatasetError naming the instance when a
// box leaves its image.
std::map<ImageId, std::string> to_yolo(const LabelSet& labels);
std::vector<GroundTruthInstance> parse_yolo(std::string_view text, int width,
                                            int height);

// COCO document; bbox as [x, y, width, height] absolute pixels, category id
// = class id + 1, file_name = image id.
nlohmann::json to_coco(const LabelSet& labels);
LabelSet from_coco(const nlohmann::json& doc);

// Image id for a COCO file_name: the stem when the extension is an image
// type, the whole name otherwise.
ImageId coco_image_key(const std::string& file_name);

// Numeric COCO ids resolved the way from_coco does: categories sorted by id
// become classes 0..n-1.
struct CocoIds {
  std::vector<std::string> class_names;
  std::map<long long, ClassId> categories;
  std::map<long long, ImageId> images;
};
CocoIds coco_ids(const nlohmann::json& doc);

// Writes <dir>/classes.txt and <dir>/labels/<image_id>.txt.
void write_yolo_dir(const LabelSet& labels, const std::filesystem::path& dir);
// Reads a directory written by write_yolo_dir. All frames share one size.
LabelSet read_yolo_dir(const std::filesystem::path& dir, int width, int height);

// Shortest round-trip decimal form, always with a decimal point ("1.0").
std::string format_number(double v);

}  // namespace cilbench
