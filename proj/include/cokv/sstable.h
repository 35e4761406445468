#pragma once

// SSTable layout (all integers little-endian, fixed width):
//
//   data block*   : record* crc32(records)
//     record      : u16 key_len | u32 value_len | u64 tag | key | value
//   index block   : entry* crc32(entries)
//     entry       : u16 key_len | last_key | u64 block_offset | u32 block_len
//   footer (32B)  : u64 index_offset | u64 index_len | u64 record_count | magic[8]
//
// block_len and index_len count the payload bytes only; each block is
// followed on disk by its 4-byte checksum. tag = seq << 8 | kind.

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cokv/env.h"
#include "cokv/format.h"
#include "cokv/iterator.h"
#include "cokv/status.h"

namespace cokv {

inline constexpr size_t kFooterSize = 32;
inline constexpr char kTableMagic[8] = {'\xC0', '\x4B', '\x56', '\x4E', '\x44', '\x50', '\x01', '\x00'};
inline constexpr size_t kRecordHeaderSize = 14;
inline constexpr size_t kMaxKeySize = 0xffff;

struct TableOptions {
  size_t block_size = 4096;
};

// Bytes one record occupies inside a data block.
inline size_t EncodedRecordSize(size_t key_len, size_t value_len) {
  return kRecordHeaderSize + key_len + value_len;
}

// Streams records in internal order into one SSTable file. An out-of-order
// record fails the builder; Abandon() (or destruction without Finish())
// removes the partial file.
class TableBuilder {
 public:
  static Status Create(const std::string& path, uint64_t file_number, const TableOptions& opts,
                       std::unique_ptr<TableBuilder>* out);
  ~TableBuilder();

  Status Add(const RecordView& rec);
  Status Finish(SSTableMeta* meta);
  void Abandon();

  uint64_t FileSize() const { return file_->size() + pending_.size(); }
  uint64_t record_count() const { return record_count_; }
  bool empty() const { return record_count_ == 0; }
  std::string_view last_user_key() const { return last_key_; }

 private:
  TableBuilder(std::unique_ptr<WritableFile> file, uint64_t file_number, const TableOptions& opts)
      : file_(std::move(file)), file_number_(file_number), opts_(opts) {}
  Status FlushBlock();

  std::unique_ptr<WritableFile> file_;
  uint64_t file_number_;
  TableOptions opts_;
  std::string pending_;
  std::string index_;
  std::string first_key_;
  std::string last_key_;
  SequenceNumber last_seq_ = 0;
  uint64_t record_count_ = 0;
  bool finished_ = false;
  Status status_;
};

// Writes an ordered record list to `path`. Unsorted input is rejected
// before the file becomes visible.
Status SSTableWrite(std::span<const InternalRecord> records, const std::string& path,
                    uint64_t file_number, const TableOptions& opts, SSTableMeta* meta);

struct IndexEntry {
  std::string last_key;
  uint64_t offset;
  uint32_t length;
};

// An open, immutable SSTable. Thread-safe for concurrent readers.
class Table {
 public:
  static Status Open(const std::string& path, std::shared_ptr<const Table>* out);

  // Newest record for `user_key`, if any. *found is false when absent.
  Status Get(std::string_view user_key, bool* found, InternalRecord* rec) const;

  uint64_t record_count() const { return record_count_; }
  uint64_t file_size() const { return file_->size(); }
  const std::vector<IndexEntry>& index() const { return index_; }
  Status ReadBlock(const IndexEntry& e, std::string* contents) const;

 private:
  Table() = default;
  size_t FirstBlockFor(std::string_view key) const;

  std::unique_ptr<RandomAccessFile> file_;
  std::vector<IndexEntry> index_;
  uint64_t record_count_ = 0;
  uint64_t data_end_ = 0;

  friend class TableIterator;
};

// Records of `table` in internal order, restricted to `filter`. The
// iterator shares ownership of the table.
std::unique_ptr<RecordIterator> NewTableIterator(std::shared_ptr<const Table> table,
                                                 const KeyInterval& filter = {});

// Scans a table file and derives its metadata from the records present.
Status ReadTableMeta(const std::string& path, uint64_t file_number, SSTableMeta* meta);

// Convenience: open `path` and iterate it with `filter`.
Status SSTableIterate(const std::string& path, const KeyInterval& filter,
                      std::vector<InternalRecord>* out);

}  // namespace cokv
