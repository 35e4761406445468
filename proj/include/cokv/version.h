#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cokv/env.h"
#include "cokv/format.h"
#include "cokv/sstable.h"
#include "cokv/status.h"

namespace cokv {

// One change to the level layout, as logged to the manifest.
struct VersionEdit {
  std::vector<std::pair<int, uint64_t>> deleted_files;  // (level, file_number)
  std::vector<std::pair<int, SSTableMeta>> added_files;
  // Every record with seq < next_seq is durable in some table.
  std::optional<SequenceNumber> next_seq;
  std::optional<uint64_t> next_file_number;
  std::vector<std::pair<int, std::string>> cursors;  // per-level compaction cursor
  bool snapshot = false;  // replaces all prior state when replayed

  void DeleteFile(int level, uint64_t number) { deleted_files.emplace_back(level, number); }
  void AddFile(int level, SSTableMeta meta) { added_files.emplace_back(level, std::move(meta)); }
  bool empty() const {
    return deleted_files.empty() && added_files.empty() && !next_seq && !next_file_number &&
           cursors.empty();
  }

  void EncodeTo(std::string* dst) const;
  Status DecodeFrom(std::string_view src);
};

// A live SSTable: metadata plus open handle. The file is unlinked when the
// last reference goes away after MarkObsolete().
class TableFile {
 public:
  TableFile(SSTableMeta meta, std::string path, std::shared_ptr<const Table> table)
      : meta_(std::move(meta)), path_(std::move(path)), table_(std::move(table)) {}
  ~TableFile();
  TableFile(const TableFile&) = delete;
  TableFile& operator=(const TableFile&) = delete;

  const SSTableMeta& meta() const { return meta_; }
  const std::shared_ptr<const Table>& table() const { return table_; }
  void MarkObsolete() { obsolete_.store(true); }

 private:
  SSTableMeta meta_;
  std::string path_;
  std::shared_ptr<const Table> table_;
  std::atomic<bool> obsolete_{false};
};

// Immutable level layout. Level 0 is ordered by file number (flush order)
// and may overlap; every deeper level is sorted by min key and disjoint.
class Version {
 public:
  explicit Version(int num_levels = 7) : levels_(num_levels) {}

  int num_levels() const { return static_cast<int>(levels_.size()); }
  const std::vector<SSTableMeta>& files(int level) const { return levels_[level]; }
  uint64_t LevelBytes(int level) const;
  size_t TotalFiles() const;

  // Files of `level` whose ranges intersect `range`.
  std::vector<SSTableMeta> Overlapping(int level, const KeyRange& range) const;

  // Validated application of an edit; leaves *out untouched on error.
  Status Apply(const VersionEdit& edit, Version* out) const;
  Status CheckInvariants() const;

  // Open handles keyed by file number (empty for metadata-only versions).
  std::shared_ptr<TableFile> handle(uint64_t file_number) const;

  // Test helper: place a file directly.
  void AddFileForTest(int level, SSTableMeta meta);

 private:
  friend class VersionSet;
  std::vector<std::vector<SSTableMeta>> levels_;
  std::unordered_map<uint64_t, std::shared_ptr<TableFile>> handles_;
};

// Owns the manifest and the current Version. LogAndApply is called from a
// single thread; current() may be called from any thread.
class VersionSet {
 public:
  VersionSet(std::string db_path, int num_levels);

  // Loads MANIFEST when present and opens every referenced table.
  Status Recover();
  // Rewrites MANIFEST as one snapshot record and reopens it for appends.
  Status WriteSnapshot();
  // Opens added tables, appends the edit to the manifest, then installs.
  Status LogAndApply(VersionEdit edit);

  std::shared_ptr<const Version> current() const;

  uint64_t NewFileNumber() { return next_file_number_++; }
  // Reserves `n` consecutive file numbers and returns the first.
  uint64_t ReserveFileNumbers(uint64_t n) { return next_file_number_.fetch_add(n); }
  uint64_t next_file_number() const { return next_file_number_.load(); }
  void MarkFileNumberUsed(uint64_t number);

  SequenceNumber log_watermark() const { return log_watermark_; }
  std::string cursor(int level) const;
  uint64_t manifest_bytes_written() const { return manifest_bytes_.load(); }
  const std::string& db_path() const { return db_path_; }

 private:
  Status AppendRecord(const VersionEdit& edit);
  Status OpenHandles(Version* v, const Version* reuse);

  std::string db_path_;
  int num_levels_;
  mutable std::mutex mu_;
  std::shared_ptr<const Version> current_;
  std::unique_ptr<WritableFile> manifest_;
  std::atomic<uint64_t> next_file_number_{1};
  SequenceNumber log_watermark_ = 1;
  std::vector<std::string> cursors_;
  std::atomic<uint64_t> manifest_bytes_{0};
};

std::string ManifestFileName(const std::string& db_path);

}  // namespace cokv
