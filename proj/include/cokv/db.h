#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cokv/compaction.h"
#include "cokv/offload.h"
#include "cokv/status.h"

namespace cokv {

enum class CompactionMode { kBaseline, kCokv };

const char* CompactionModeName(CompactionMode m);
bool ParseCompactionMode(std::string_view s, CompactionMode* out);

struct Options {
  size_t memtable_capacity = 4ull << 20;
  uint64_t target_file_size = 2ull << 20;
  size_t block_size = 4096;
  LevelOptions levels;
  int num_levels = 7;
  // Writers sleep 1ms per write at the slowdown count and block at the
  // stop count of L0 files.
  int l0_slowdown_trigger = 8;
  int l0_stop_trigger = 12;
  // fdatasync the log on every write. Off by default: a killed process
  // loses nothing, a power failure may lose the tail.
  bool sync_writes = false;

  CompactionMode mode = CompactionMode::kBaseline;
  std::string device_endpoint;  // required in cokv mode
  std::chrono::milliseconds device_timeout{60000};
};

// Byte accounting. host_written() is the numerator of write
// amplification; device bytes stay out of it.
struct DbStats {
  uint64_t user_bytes = 0;
  uint64_t wal_bytes = 0;
  uint64_t manifest_bytes = 0;
  uint64_t flush_bytes = 0;
  uint64_t host_compaction_bytes = 0;
  uint64_t device_bytes = 0;
  uint64_t transfer_bytes = 0;
  uint64_t flushes = 0;
  uint64_t compactions = 0;
  uint64_t trivial_moves = 0;
  uint64_t collaborative = 0;
  uint64_t fallbacks = 0;
  uint64_t stall_micros = 0;

  uint64_t host_written() const {
    return wal_bytes + manifest_bytes + flush_bytes + host_compaction_bytes;
  }
};

struct CompactionRecord {
  uint64_t id = 0;
  int level_k = 0;
  int target_level = 1;
  size_t inputs_k = 0;
  size_t inputs_k1 = 0;
  uint64_t input_bytes = 0;
  CompactionPath path = CompactionPath::kBaseline;
  uint64_t host_bytes = 0;
  uint64_t device_bytes = 0;
  uint64_t elapsed_us = 0;
  uint64_t device_elapsed_us = 0;
};

class DB {
 public:
  // Opens (creating if needed) the store at `path`, replaying any logs.
  static Status Open(const Options& options, const std::string& path, std::unique_ptr<DB>* out);
  virtual ~DB() = default;

  virtual Status Put(std::string_view key, std::string_view value) = 0;
  virtual Status Delete(std::string_view key) = 0;
  // NotFound when absent or deleted.
  virtual Status Get(std::string_view key, std::string* value) = 0;

  // Every live key/value in key order.
  virtual Status ScanAll(std::vector<std::pair<std::string, std::string>>* out) = 0;

  // Seals the memtable and waits until it is on disk.
  virtual Status Flush() = 0;
  // Blocks until no flush or compaction is pending or running.
  virtual Status WaitForIdle() = 0;
  // Flushes, then rewrites every level into the bottom one.
  virtual Status CompactAll() = 0;

  virtual DbStats GetStats() const = 0;
  virtual std::vector<CompactionRecord> CompactionLog() const = 0;
  // Per-level file counts and byte totals.
  virtual std::vector<std::pair<size_t, uint64_t>> LevelSummary() const = 0;
  // True while cokv mode still has a usable device session.
  virtual bool DeviceHealthy() const = 0;
};

}  // namespace cokv
