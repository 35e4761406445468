#pragma once

// Write-ahead log. A log file starts with a 12-byte header
//   u64 base_seq | u32 crc32(base_seq)
// followed by records
//   u32 crc32(payload) | u32 payload_len | payload
//   payload: u8 kind | u16 key_len | key | value
// The i-th record (0-based) carries sequence number base_seq + i. Replay
// stops at the first torn or corrupt record.

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <string_view>

#include "cokv/env.h"
#include "cokv/format.h"
#include "cokv/status.h"

namespace cokv {

inline constexpr size_t kLogHeaderSize = 12;
inline constexpr size_t kLogRecordOverhead = 11;

class LogWriter {
 public:
  static Status Create(const std::string& path, SequenceNumber base_seq,
                       std::unique_ptr<LogWriter>* out);

  // Appends one record and hands it to the OS before returning.
  Status Add(RecordKind kind, std::string_view key, std::string_view value);

  uint64_t bytes_written() const { return file_->size(); }
  SequenceNumber next_seq() const { return next_seq_; }
  Status Sync() { return file_->Sync(); }

 private:
  LogWriter(std::unique_ptr<WritableFile> file, SequenceNumber base)
      : file_(std::move(file)), next_seq_(base) {}
  std::unique_ptr<WritableFile> file_;
  SequenceNumber next_seq_;
  std::string scratch_;
};

using LogRecordHandler =
    std::function<void(SequenceNumber seq, RecordKind kind, std::string_view key,
                       std::string_view value)>;

// Replays every intact record of the log at `path`. *end_seq receives the
// sequence number following the last intact record.
Status ReplayLog(const std::string& path, const LogRecordHandler& handler,
                 SequenceNumber* end_seq);

}  // namespace cokv
