#include "cilbench/detector.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <mutex>
#include <thread>
#include <utility>

#include "cilbench/error.hpp"

extern char** environ;

namespace cilbench {

namespace {

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char ch : s) {
    if (ch == '\'') {
      out += "'\\''";
    } else {
      out += ch;
    }
  }
  return out + "'";
}

// Writes to a pipe whose reader died must surface as EPIPE, not kill us.
void ignore_sigpipe_once() {
  static std::once_flag flag;
  std::call_once(flag, [] { ::signal(SIGPIPE, SIG_IGN); });
}

}  // namespace

// ---------------------------------------------------------------- sim

SimDetector::SimDetector(const DatasetIndex& dataset, SimParams params,
                         std::uint64_t seed)
    : dataset_(dataset),
      state_(SimSkillState::fresh(dataset.classes.size(), params, seed)) {}

void SimDetector::init(const std::string&,
                       std::span<const std::string> classes) {
  if (classes.size() != state_.skill.size()) {
    throw DetectorError("sim detector: class list does not match dataset");
  }
}

Ack SimDetector::train_task(int, std::span<const ImageId> image_ids) {
  std::vector<const ImageRecord*> records;
  records.reserve(image_ids.size());
  for (const auto& id : image_ids) {
    auto it = dataset_.images.find(id);
    if (it == dataset_.images.end()) {
      throw DetectorError("unknown image id: " + id);
    }
    records.push_back(&it->second);
  }
  state_ = sim_train(state_, records);
  ++step_;
  return {};
}

std::vector<Detection> SimDetector::predict(const ImageId& image_id) {
  auto it = dataset_.images.find(image_id);
  if (it == dataset_.images.end()) {
    throw DetectorError("unknown image id: " + image_id);
  }
  return sim_predict(state_, it->second, step_);
}

Ack SimDetector::snapshot(const std::string& tag) {
  Ack ack;
  auto [it, inserted] = snapshots_.insert_or_assign(tag, state_);
  ack.overwritten = !inserted;
  return ack;
}

const SimSkillState* SimDetector::snapshot_state(const std::string& tag) const {
  auto it = snapshots_.find(tag);
  return it == snapshots_.end() ? nullptr : &it->second;
}

// ---------------------------------------------------------------- echo

EchoDetector::EchoDetector(const DatasetIndex& dataset, double confidence)
    : dataset_(dataset), confidence_(confidence) {}

void EchoDetector::init(const std::string&, std::span<const std::string>) {}

Ack EchoDetector::train_task(int, std::span<const ImageId> image_ids) {
  for (const auto& id : image_ids) {
    if (!dataset_.images.contains(id)) {
      throw DetectorError("unknown image id: " + id);
    }
  }
  return {};
}

std::vector<Detection> EchoDetector::predict(const ImageId& image_id) {
  auto it = dataset_.images.find(image_id);
  if (it == dataset_.images.end()) {
    throw DetectorError("unknown image id: " + image_id);
  }
  std::vector<Detection> out;
  for (const auto& g : it->second.gt) {
    out.emplace_back(g.bbox, g.class_id, confidence_);
  }
  return out;
}

Ack EchoDetector::snapshot(const std::string&) { return {}; }

// ---------------------------------------------------------------- external

ExternalDetector::ExternalDetector(ExternalBackendSpec spec,
                                   std::string dataset_root)
    : spec_(std::move(spec)) {
  if (spec_.command.empty()) throw ConfigError("external backend needs a command");
  if (!(spec_.timeout_s > 0.0)) throw ConfigError("timeout_s must be positive");
  ignore_sigpipe_once();

  const std::string full =
      spec_.command + " --dataset-root " + shell_quote(dataset_root);

  // Everything the child needs is built before fork.
  std::map<std::string, std::string> env_map;
  for (char** e = environ; e && *e; ++e) {
    std::string kv(*e);
    auto eq = kv.find('=');
    if (eq != std::string::npos) env_map[kv.substr(0, eq)] = kv.substr(eq + 1);
  }
  for (const auto& [k, v] : spec_.env) env_map[k] = v;
  std::vector<std::string> env_strings;
  for (const auto& [k, v] : env_map) env_strings.push_back(k + "=" + v);
  std::vector<char*> envp;
  for (auto& s : env_strings) envp.push_back(s.data());
  envp.push_back(nullptr);
  std::string sh = "/bin/sh", dash_c = "-c", cmd = full;
  char* argv[] = {sh.data(), dash_c.data(), cmd.data(), nullptr};
  const char* workdir =
      spec_.working_dir.empty() ? nullptr : spec_.working_dir.c_str();

  int down[2], up[2];
  if (::pipe2(down, O_CLOEXEC) != 0) {
    throw DetectorError(std::string("pipe: ") + std::strerror(errno));
  }
  if (::pipe2(up, O_CLOEXEC) != 0) {
    ::close(down[0]);
    ::close(down[1]);
    throw DetectorError(std::string("pipe: ") + std::strerror(errno));
  }
  const pid_t pid = ::fork();
  if (pid < 0) {
    for (int fd : {down[0], down[1], up[0], up[1]}) ::close(fd);
    throw DetectorError(std::string("fork: ") + std::strerror(errno));
  }
  if (pid == 0) {
    // Own process group, so a kill also reaches whatever the shell spawned.
    ::setpgid(0, 0);
    ::dup2(down[0], STDIN_FILENO);
    ::dup2(up[1], STDOUT_FILENO);
    if (workdir && ::chdir(workdir) != 0) ::_exit(126);
    ::execve("/bin/sh", argv, envp.data());
    ::_exit(127);
  }
  ::setpgid(pid, pid);
  ::close(down[0]);
  ::close(up[1]);
  pid_ = pid;
  to_child_ = down[1];
  from_child_ = up[0];
}

ExternalDetector::~ExternalDetector() {
  try {
    shutdown();
  } catch (...) {
    kill_child();
  }
}

void ExternalDetector::kill_child() {
  dead_ = true;
  if (to_child_ >= 0) ::close(to_child_);
  if (from_child_ >= 0) ::close(from_child_);
  to_child_ = from_child_ = -1;
  if (pid_ > 0) {
    ::kill(-pid_, SIGKILL);
    ::kill(pid_, SIGKILL);
    ::waitpid(pid_, nullptr, 0);
    pid_ = -1;
  }
}

void ExternalDetector::write_all(const std::string& data) {
  std::size_t done = 0;
  while (done < data.size()) {
    const ssize_t n = ::write(to_child_, data.data() + done, data.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      const std::string why = std::strerror(errno);
      kill_child();
      throw DetectorError("cannot write to backend: " + why);
    }
    done += static_cast<std::size_t>(n);
  }
}

std::string ExternalDetector::read_line(double timeout_s) {
  using Clock = std::chrono::steady_clock;
  const auto deadline =
      Clock::now() + std::chrono::duration_cast<Clock::duration>(
                         std::chrono::duration<double>(timeout_s));
  for (;;) {
    if (auto nl = buffer_.find('\n'); nl != std::string::npos) {
      std::string line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      return line;
    }
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
        deadline - Clock::now());
    if (left.count() <= 0) {
      kill_child();
      throw TimeoutError("backend did not answer within " +
                         std::to_string(timeout_s) + " s");
    }
    pollfd pfd{from_child_, POLLIN, 0};
    const int rc = ::poll(&pfd, 1, static_cast<int>(left.count()));
    if (rc < 0) {
      if (errno == EINTR) continue;
      kill_child();
      throw DetectorError(std::string("poll: ") + std::strerror(errno));
    }
    if (rc == 0) continue;
    char chunk[4096];
    const ssize_t n = ::read(from_child_, chunk, sizeof(chunk));
    if (n < 0) {
      if (errno == EINTR) continue;
      kill_child();
      throw DetectorError(std::string("read: ") + std::strerror(errno));
    }
    if (n == 0) {
      kill_child();
      throw DetectorError("backend closed its output");
    }
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

nlohmann::json ExternalDetector::roundtrip(const std::string& line,
                                           wire::RequestId id) {
  if (!alive()) throw DetectorError("detector handle is dead");
  write_all(line + "\n");
  const std::string reply = read_line(spec_.timeout_s);
  try {
    return wire::parse_response(reply, id);
  } catch (const ProtocolError&) {
    kill_child();
    throw;
  }
}

void ExternalDetector::init(const std::string& dataset_root,
                            std::span<const std::string> classes) {
  const auto id = next_id_++;
  roundtrip(wire::encode_init(id, dataset_root, classes), id);
}

Ack ExternalDetector::train_task(int task_index,
                                 std::span<const ImageId> image_ids) {
  const auto id = next_id_++;
  roundtrip(wire::encode_train_task(id, task_index, image_ids), id);
  return {};
}

std::vector<Detection> ExternalDetector::predict(const ImageId& image_id) {
  const auto id = next_id_++;
  const auto reply = roundtrip(wire::encode_predict(id, image_id), id);
  try {
    return wire::parse_detections(reply);
  } catch (const ProtocolError&) {
    kill_child();
    throw;
  }
}

Ack ExternalDetector::snapshot(const std::string& tag) {
  const auto id = next_id_++;
  const auto reply = roundtrip(wire::encode_snapshot(id, tag), id);
  Ack ack;
  ack.unsupported = reply.value("unsupported", false);
  ack.overwritten = reply.value("overwritten", false);
  return ack;
}

void ExternalDetector::shutdown() {
  if (!alive()) {
    kill_child();
    return;
  }
  const auto id = next_id_++;
  try {
    write_all(wire::encode_shutdown(id) + "\n");
    wire::parse_response(read_line(std::min(spec_.timeout_s, 5.0)), id);
  } catch (const Error&) {
    kill_child();
    return;
  }
  ::close(to_child_);
  to_child_ = -1;
  for (int i = 0; i < 200; ++i) {
    if (::waitpid(pid_, nullptr, WNOHANG) == pid_) {
      pid_ = -1;
      break;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  kill_child();
}

// ---------------------------------------------------------------- factory

DetectorSpec parse_detector_flag(const std::string& flag, DetectorSpec base) {
  if (flag == "sim") {
    base.backend = BackendKind::kSim;
  } else if (flag == "echo") {
    base.backend = BackendKind::kEcho;
  } else if (flag.rfind("cmd:", 0) == 0 && flag.size() > 4) {
    base.backend = BackendKind::kExternal;
    base.external.command = flag.substr(4);
  } else {
    throw ConfigError("detector must be sim, echo or cmd:<command>, got '" +
                      flag + "'");
  }
  return base;
}

std::unique_ptr<Detector> make_detector(const DetectorSpec& spec,
                                        const DatasetIndex& dataset,
                                        const std::string& dataset_root,
                                        std::uint64_t seed) {
  switch (spec.backend) {
    case BackendKind::kSim:
      return std::make_unique<SimDetector>(dataset, spec.sim, seed);
    case BackendKind::kEcho:
      return std::make_unique<EchoDetector>(dataset);
    case BackendKind::kExternal:
      return std::make_unique<ExternalDetector>(spec.external, dataset_root);
  }
  throw ConfigError("unknown detector backend");
}

}  // namespace cilbench
