#include "cokv/device.h"

#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <thread>

#include "cokv/compaction.h"
#include "cokv/env.h"
#include "cokv/logging.h"
#include "cokv/sstable.h"

extern char** environ;

namespace cokv {

Status ValidateDeviceConfig(const DeviceConfig& config) {
  if (!std::isfinite(config.slowdown_factor) || config.slowdown_factor < 0) {
    return Status::InvalidArgument("slowdown factor must be finite and non-negative");
  }
  if (config.db_path.empty()) return Status::InvalidArgument("device needs a db path");
  if (config.listen_endpoint.empty()) return Status::InvalidArgument("device needs an endpoint");
  return Status::OK();
}

Status RunDeviceCompaction(const CompactRequest& request, double slowdown_factor,
                           DeviceResult* result, DeviceErrorCode* code) {
  auto start = std::chrono::steady_clock::now();
  *result = DeviceResult();
  const SplitTask& task = request.task;
  if (task.side != SplitSide::kDevice || task.inputs_k.empty()) {
    *code = DeviceErrorCode::kBadRequest;
    return Status::InvalidArgument("request is not a device half");
  }

  std::vector<MergeSource> sources;
  for (const auto* group : {&task.inputs_k, &task.inputs_k1}) {
    for (const auto& f : *group) {
      std::string path = SSTableFileName(request.db_path, f.file_number);
      if (!FileExists(path)) {
        *code = DeviceErrorCode::kMissingInput;
        return Status::NotFound("missing input " + path);
      }
      std::shared_ptr<const Table> table;
      Status s = Table::Open(path, &table);
      if (!s.ok()) {
        *code = s.IsCorruption() ? DeviceErrorCode::kCorruption : DeviceErrorCode::kIOError;
        return s;
      }
      result->input_bytes += table->file_size();
      sources.push_back({std::move(table), task.key_filter});
    }
  }

  uint64_t next = request.first_file_number;
  const uint64_t end = request.first_file_number + request.file_number_count;
  TableOptions topts;
  if (request.block_size > 0) topts.block_size = request.block_size;
  OutputWriter out(request.db_path, topts,
                   request.target_file_size > 0 ? request.target_file_size : (2ull << 20),
                   [&]() -> std::optional<uint64_t> {
                     if (next >= end) return std::nullopt;
                     return next++;
                   });
  Status s = CompactSources(sources, task.key_filter, request.drop_tombstones, &out);
  if (!s.ok()) {
    out.Abandon();
    if (s.IsAborted()) {
      *code = DeviceErrorCode::kFileNumbersExhausted;
    } else if (s.IsCorruption()) {
      *code = DeviceErrorCode::kCorruption;
    } else {
      *code = DeviceErrorCode::kIOError;
    }
    return s;
  }

  if (slowdown_factor > 0) {
    double seconds = slowdown_factor * static_cast<double>(result->input_bytes) / kDeviceReferenceRate;
    std::this_thread::sleep_for(std::chrono::duration<double>(seconds));
  }
  result->new_files = out.outputs();
  result->bytes_written = out.bytes_written();
  result->device_elapsed_us = std::chrono::duration_cast<std::chrono::microseconds>(
                                  std::chrono::steady_clock::now() - start)
                                  .count();
  return Status::OK();
}

namespace {

bool DbUsable(const std::string& path) {
  std::error_code ec;
  return std::filesystem::is_directory(path, ec) && ::access(path.c_str(), R_OK | W_OK | X_OK) == 0;
}

SemanticMessage ErrorReply(MessageType type, uint64_t id, DeviceErrorCode code,
                           const std::string& text) {
  return {type, id, ErrorInfo{static_cast<uint32_t>(code), text}};
}

// Serves one session. Returns true when the device should exit.
bool ServeSession(Channel* ch, const DeviceConfig& config, DeviceStats* stats) {
  SemanticMessage msg;
  Status s = ch->Receive(&msg);
  if (!s.ok()) return false;
  if (msg.type == MessageType::kShutdown) return true;
  if (msg.type != MessageType::kHello) {
    Log(LogLevel::kWarn, "device: session did not start with HELLO");
    return false;
  }
  if (msg.compaction_id != kProtocolVersion) {
    ch->Send(ErrorReply(MessageType::kHello, kProtocolVersion, DeviceErrorCode::kVersionMismatch,
                        "unsupported protocol version " + std::to_string(msg.compaction_id)));
    return false;
  }
  if (!DbUsable(config.db_path)) {
    ch->Send(ErrorReply(MessageType::kHello, kProtocolVersion, DeviceErrorCode::kUnreadableDb,
                        "db path not readable/writable: " + config.db_path));
    return false;
  }
  if (!ch->Send(SemanticMessage::Hello()).ok()) return false;

  while (true) {
    s = ch->Receive(&msg);
    if (!s.ok()) return false;  // host went away; wait for the next one
    switch (msg.type) {
      case MessageType::kShutdown:
        return true;
      case MessageType::kHello:
        ch->Send(SemanticMessage::Hello());
        break;
      case MessageType::kCompactRequest: {
        stats->requests++;
        const auto& req = std::get<CompactRequest>(msg.payload);
        DeviceResult result;
        DeviceErrorCode code = DeviceErrorCode::kIOError;
        if (req.db_path != config.db_path) {
          s = Status::InvalidArgument("request for foreign db " + req.db_path);
          code = DeviceErrorCode::kBadRequest;
        } else {
          s = RunDeviceCompaction(req, config.slowdown_factor, &result, &code);
        }
        stats->internal_read_bytes += result.input_bytes;
        SemanticMessage reply;
        if (s.ok()) {
          stats->bytes_written += result.bytes_written;
          reply = {MessageType::kCompactDone, msg.compaction_id,
                   CompactDone{result.new_files, result.bytes_written, result.device_elapsed_us}};
        } else {
          stats->errors++;
          Log(LogLevel::kInfo, "device: compaction %llu failed: %s",
              static_cast<unsigned long long>(msg.compaction_id), s.ToString().c_str());
          reply = ErrorReply(MessageType::kCompactError, msg.compaction_id, code, s.ToString());
        }
        if (!ch->Send(reply).ok()) return false;
        break;
      }
      default:
        // Replies are never valid input on this side.
        Log(LogLevel::kWarn, "device: unexpected message type %d", static_cast<int>(msg.type));
        ch->Send(ErrorReply(MessageType::kCompactError, msg.compaction_id,
                            DeviceErrorCode::kBadRequest, "unexpected message"));
        break;
    }
  }
}

}  // namespace

Status DeviceMainLoop(const DeviceConfig& config, DeviceStats* stats) {
  Status s = ValidateDeviceConfig(config);
  if (!s.ok()) return s;
  DeviceStats local;
  if (stats == nullptr) stats = &local;
  std::unique_ptr<Listener> listener;
  s = Listener::Listen(config.listen_endpoint, &listener);
  if (!s.ok()) return s;
  Log(LogLevel::kInfo, "device: listening on %s (db %s, slowdown %.3f)",
      config.listen_endpoint.c_str(), config.db_path.c_str(), config.slowdown_factor);
  while (true) {
    std::unique_ptr<Channel> ch;
    s = listener->Accept(&ch);
    if (!s.ok()) return s;
    stats->sessions++;
    if (ServeSession(ch.get(), config, stats)) break;
  }
  Log(LogLevel::kInfo, "device: shutdown after %llu requests, %llu internal read bytes",
      static_cast<unsigned long long>(stats->requests),
      static_cast<unsigned long long>(stats->internal_read_bytes));
  return Status::OK();
}

Status DeviceProcess::Spawn(const std::string& binary, const DeviceConfig& config,
                            std::unique_ptr<DeviceProcess>* out,
                            std::chrono::milliseconds ready_timeout) {
  Status s = ValidateDeviceConfig(config);
  if (!s.ok()) return s;
  char slowdown[64];
  std::snprintf(slowdown, sizeof(slowdown), "%.17g", config.slowdown_factor);
  std::vector<std::string> args = {binary,   "--db",    config.db_path, "--listen",
                                   config.listen_endpoint, "--slowdown", slowdown};
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  argv.push_back(nullptr);

  // The socket path must not be a leftover from an earlier device.
  ::unlink(EndpointPath(config.listen_endpoint).c_str());
  pid_t pid = 0;
  int rc = ::posix_spawn(&pid, binary.c_str(), nullptr, nullptr, argv.data(), environ);
  if (rc != 0) return Status::IOError("spawn " + binary + ": " + std::strerror(rc));
  std::unique_ptr<DeviceProcess> proc(new DeviceProcess(pid, config.listen_endpoint));

  auto deadline = std::chrono::steady_clock::now() + ready_timeout;
  while (true) {
    int wstatus = 0;
    if (::waitpid(pid, &wstatus, WNOHANG) == pid) {
      proc->pid_ = -1;
      return Status::IOError("device exited during startup");
    }
    std::unique_ptr<Channel> ch;
    if (Channel::Connect(config.listen_endpoint, &ch).ok()) {
      SemanticMessage reply;
      s = ch->Send(SemanticMessage::Hello());
      if (s.ok()) s = ch->Receive(&reply);
      if (s.ok()) {
        if (const auto* err = std::get_if<ErrorInfo>(&reply.payload)) {
          return Status::IOError("device refused session: " + err->text);
        }
        break;
      }
    }
    if (std::chrono::steady_clock::now() >= deadline) {
      return Status::Timeout("device did not become ready");
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  *out = std::move(proc);
  return Status::OK();
}

int DeviceProcess::Reap() {
  int wstatus = 0;
  while (::waitpid(pid_, &wstatus, 0) < 0 && errno == EINTR) {
  }
  pid_ = -1;
  return wstatus;
}

void DeviceProcess::Kill() {
  if (pid_ <= 0) return;
  ::kill(pid_, SIGKILL);
  Reap();
}

Status DeviceProcess::Shutdown(int* exit_code) {
  if (pid_ <= 0) return Status::InvalidArgument("device not running");
  std::unique_ptr<Channel> ch;
  Status s = Channel::Connect(endpoint_, &ch);
  if (s.ok()) s = ch->Send(SemanticMessage::Shutdown());
  if (!s.ok()) {
    Kill();
    return s;
  }
  int wstatus = Reap();
  if (exit_code) *exit_code = WIFEXITED(wstatus) ? WEXITSTATUS(wstatus) : -1;
  return Status::OK();
}

DeviceProcess::~DeviceProcess() {
  if (pid_ <= 0) return;
  ::kill(pid_, SIGTERM);
  Reap();
}

std::string SiblingExecutable(const std::string& name) {
  std::error_code ec;
  auto self = std::filesystem::read_symlink("/proc/self/exe", ec);
  if (ec) return name;
  return (self.parent_path() / name).string();
}

}  // namespace cokv
