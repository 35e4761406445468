#pragma once

#include <sys/types.h>

#include <chrono>
#include <cstdint>
#include <string>
#include <vector>

#include "cokv/semantic.h"
#include "cokv/status.h"

namespace cokv {

// Bytes per second the slowdown factor is scaled against.
inline constexpr double kDeviceReferenceRate = 100.0 * 1000 * 1000;

struct DeviceConfig {
  std::string db_path;
  double slowdown_factor = 0.0;  // 0: no added delay
  std::string listen_endpoint;
};

Status ValidateDeviceConfig(const DeviceConfig& config);

struct DeviceResult {
  std::vector<SSTableMeta> new_files;
  uint64_t bytes_written = 0;
  uint64_t device_elapsed_us = 0;
  uint64_t input_bytes = 0;  // read from local files, not over the channel
};

// Executes the device half of a split compaction against the files in
// request.db_path. On failure no output file remains and *code says why.
Status RunDeviceCompaction(const CompactRequest& request, double slowdown_factor,
                           DeviceResult* result, DeviceErrorCode* code);

// Counters a device accumulates over its lifetime.
struct DeviceStats {
  uint64_t sessions = 0;
  uint64_t requests = 0;
  uint64_t errors = 0;
  uint64_t internal_read_bytes = 0;
  uint64_t bytes_written = 0;
};

// Serves sessions on config.listen_endpoint until a SHUTDOWN arrives.
// Returns OK on SHUTDOWN; a listening failure is returned as an error.
Status DeviceMainLoop(const DeviceConfig& config, DeviceStats* stats = nullptr);

// A device running as a child process. The destructor terminates it.
class DeviceProcess {
 public:
  // Starts `binary --db <db> --listen <endpoint> --slowdown <f>` and waits
  // until it completes a HELLO exchange.
  static Status Spawn(const std::string& binary, const DeviceConfig& config,
                      std::unique_ptr<DeviceProcess>* out,
                      std::chrono::milliseconds ready_timeout = std::chrono::seconds(10));
  ~DeviceProcess();

  pid_t pid() const { return pid_; }
  const std::string& endpoint() const { return endpoint_; }
  // SIGKILL, then reap.
  void Kill();
  // Sends SHUTDOWN over a fresh session and waits for exit. Returns the
  // exit status as reported by waitpid.
  Status Shutdown(int* exit_code = nullptr);
  bool running() const { return pid_ > 0; }

 private:
  DeviceProcess(pid_t pid, std::string endpoint) : pid_(pid), endpoint_(std::move(endpoint)) {}
  int Reap();

  pid_t pid_;
  std::string endpoint_;
};

// Path of a sibling executable next to the running binary.
std::string SiblingExecutable(const std::string& name);

}  // namespace cokv
