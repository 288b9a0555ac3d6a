#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cilbench/simworld.hpp"
#include "cilbench/types.hpp"
#include "cilbench/wire.hpp"

namespace cilbench {

struct Ack {
  bool ok = true;
  // snapshot only: the tag already existed and was replaced.
  bool overwritten = false;
  // snapshot only: the backend cannot retain model state.
  bool unsupported = false;
};

// What the harness needs from a detector. Calls on one instance are strictly
// sequential. predict returns raw detections; filtering and NMS are applied
// by the caller so every backend gets identical post-processing.
class Detector {
 public:
  virtual ~Detector() = default;

  virtual void init(const std::string& dataset_root,
                    std::span<const std::string> classes) = 0;
  virtual Ack train_task(int task_index, std::span<const ImageId> image_ids) = 0;
  virtual std::vector<Detection> predict(const ImageId& image_id) = 0;
  virtual Ack snapshot(const std::string& tag) = 0;
  virtual void shutdown() {}
};

class SimDetector : public Detector {
 public:
  SimDetector(const DatasetIndex& dataset, SimParams params,
              std::uint64_t seed);

  void init(const std::string& dataset_root,
            std::span<const std::string> classes) override;
  Ack train_task(int task_index, std::span<const ImageId> image_ids) override;
  std::vector<Detection> predict(const ImageId& image_id) override;
  Ack snapshot(const std::string& tag) override;

  const SimSkillState& state() const { return state_; }
  const SimSkillState* snapshot_state(const std::string& tag) const;
  std::uint64_t step() const { return step_; }

 private:
  const DatasetIndex& dataset_;
  SimSkillState state_;
  std::uint64_t step_ = 0;
  std::map<std::string, SimSkillState> snapshots_;
};

// Perfect in-process detector: every gt comes back with a fixed confidence.
class EchoDetector : public Detector {
 public:
  explicit EchoDetector(const DatasetIndex& dataset, double confidence = 0.99);

  void init(const std::string& dataset_root,
            std::span<const std::string> classes) override;
  Ack train_task(int task_index, std::span<const ImageId> image_ids) override;
  std::vector<Detection> predict(const ImageId& image_id) override;
  Ack snapshot(const std::string& tag) override;

 private:
  const DatasetIndex& dataset_;
  double confidence_;
};

struct ExternalBackendSpec {
  // Run through /bin/sh -c, with " --dataset-root <root>" appended.
  std::string command;
  std::string working_dir;
  std::map<std::string, std::string> env;
  double timeout_s = 600.0;
};

// Subprocess speaking the wire protocol over its stdin/stdout. Any protocol
// violation or timeout kills the child and leaves the handle dead; later
// calls throw DetectorError.
class ExternalDetector : public Detector {
 public:
  ExternalDetector(ExternalBackendSpec spec, std::string dataset_root);
  ~ExternalDetector() override;

  ExternalDetector(const ExternalDetector&) = delete;
  ExternalDetector& operator=(const ExternalDetector&) = delete;

  void init(const std::string& dataset_root,
            std::span<const std::string> classes) override;
  Ack train_task(int task_index, std::span<const ImageId> image_ids) override;
  std::vector<Detection> predict(const ImageId& image_id) override;
  Ack snapshot(const std::string& tag) override;
  void shutdown() override;

  bool alive() const { return pid_ > 0 && !dead_; }

 private:
  nlohmann::json roundtrip(const std::string& line, wire::RequestId id);
  std::string read_line(double timeout_s);
  void write_all(const std::string& data);
  void kill_child();

  ExternalBackendSpec spec_;
  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  bool dead_ = false;
  wire::RequestId next_id_ = 1;
  std::string buffer_;
};

enum class BackendKind { kSim, kEcho, kExternal };

struct DetectorSpec {
  BackendKind backend = BackendKind::kSim;
  SimParams sim;
  ExternalBackendSpec external;
};

// Parses "sim", "echo" or "cmd:<command line>".
DetectorSpec parse_detector_flag(const std::string& flag,
                                 DetectorSpec base = {});

// Fresh detector for one seed; init() has not been called yet.
std::unique_ptr<Detector> make_detector(const DetectorSpec& spec,
                                        const DatasetIndex& dataset,
                                        const std::string& dataset_root,
                                        std::uint64_t seed);

}  // namespace cilbench
