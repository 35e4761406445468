#include "cokv/sstable.h"

#include <algorithm>
#include <cstring>

#include "cokv/coding.h"

namespace cokv {

namespace {

constexpr size_t kReadChunkSize = 256 * 1024;

// Decodes the record starting at `p` within [p, limit). Returns the number
// of bytes consumed, or 0 when the record is malformed.
size_t DecodeRecord(const char* p, const char* limit, RecordView* rec) {
  if (limit - p < static_cast<ptrdiff_t>(kRecordHeaderSize)) return 0;
  uint16_t klen = DecodeFixed16(p);
  uint32_t vlen = DecodeFixed32(p + 2);
  uint64_t tag = DecodeFixed64(p + 6);
  size_t total = kRecordHeaderSize + klen + static_cast<size_t>(vlen);
  if (static_cast<size_t>(limit - p) < total) return 0;
  uint8_t kind = static_cast<uint8_t>(tag & 0xff);
  if (kind > static_cast<uint8_t>(RecordKind::kPut)) return 0;
  rec->user_key = std::string_view(p + kRecordHeaderSize, klen);
  rec->value = std::string_view(p + kRecordHeaderSize + klen, vlen);
  rec->seq = TagSequence(tag);
  rec->kind = TagKind(tag);
  return total;
}

}  // namespace

Status TableBuilder::Create(const std::string& path, uint64_t file_number,
                            const TableOptions& opts, std::unique_ptr<TableBuilder>* out) {
  std::unique_ptr<WritableFile> file;
  Status s = WritableFile::Create(path, &file);
  if (!s.ok()) return s;
  out->reset(new TableBuilder(std::move(file), file_number, opts));
  return Status::OK();
}

TableBuilder::~TableBuilder() {
  if (!finished_) Abandon();
}

void TableBuilder::Abandon() {
  if (finished_) return;
  finished_ = true;
  file_->Close();
  RemoveFile(file_->path());
}

Status TableBuilder::Add(const RecordView& rec) {
  if (!status_.ok()) return status_;
  if (finished_) return Status::InvalidArgument("add after finish");
  if (rec.user_key.size() > kMaxKeySize) {
    status_ = Status::InvalidArgument("key too long");
    return status_;
  }
  if (record_count_ > 0 && CompareInternal(last_key_, last_seq_, rec.user_key, rec.seq) >= 0) {
    status_ = Status::InvalidArgument("records out of internal order at key '" +
                                      std::string(rec.user_key) + "'");
    return status_;
  }
  if (record_count_ == 0) first_key_.assign(rec.user_key);
  PutFixed16(&pending_, static_cast<uint16_t>(rec.user_key.size()));
  PutFixed32(&pending_, static_cast<uint32_t>(rec.value.size()));
  PutFixed64(&pending_, PackTag(rec.seq, rec.kind));
  pending_.append(rec.user_key);
  pending_.append(rec.value);
  last_key_.assign(rec.user_key);
  last_seq_ = rec.seq;
  record_count_++;
  if (pending_.size() >= opts_.block_size) return FlushBlock();
  return Status::OK();
}

Status TableBuilder::FlushBlock() {
  if (pending_.empty()) return Status::OK();
  uint64_t offset = file_->size();
  uint32_t crc = Crc32(pending_);
  PutFixed32(&pending_, crc);
  status_ = file_->Append(pending_);
  PutFixed16(&index_, static_cast<uint16_t>(last_key_.size()));
  index_.append(last_key_);
  PutFixed64(&index_, offset);
  PutFixed32(&index_, static_cast<uint32_t>(pending_.size() - 4));
  pending_.clear();
  return status_;
}

Status TableBuilder::Finish(SSTableMeta* meta) {
  if (finished_) return Status::InvalidArgument("table already finished");
  if (status_.ok() && record_count_ == 0) status_ = Status::InvalidArgument("empty table");
  if (status_.ok()) status_ = FlushBlock();
  if (!status_.ok()) {
    Abandon();
    return status_;
  }
  uint64_t index_offset = file_->size();
  uint64_t index_len = index_.size();
  PutFixed32(&index_, Crc32(index_));
  std::string footer;
  PutFixed64(&footer, index_offset);
  PutFixed64(&footer, index_len);
  PutFixed64(&footer, record_count_);
  footer.append(kTableMagic, sizeof(kTableMagic));
  Status s = file_->Append(index_);
  if (s.ok()) s = file_->Append(footer);
  if (s.ok()) s = file_->Close();
  if (!s.ok()) {
    Abandon();
    return s;
  }
  finished_ = true;
  meta->file_number = file_number_;
  meta->file_size = file_->size();
  meta->range = KeyRange{first_key_, last_key_};
  meta->record_count = record_count_;
  return Status::OK();
}

Status SSTableWrite(std::span<const InternalRecord> records, const std::string& path,
                    uint64_t file_number, const TableOptions& opts, SSTableMeta* meta) {
  if (records.empty()) return Status::InvalidArgument("empty record stream");
  for (size_t i = 1; i < records.size(); i++) {
    if (CompareInternal(records[i - 1].view(), records[i].view()) >= 0) {
      return Status::InvalidArgument("records out of internal order");
    }
  }
  std::unique_ptr<TableBuilder> builder;
  Status s = TableBuilder::Create(path, file_number, opts, &builder);
  for (size_t i = 0; s.ok() && i < records.size(); i++) s = builder->Add(records[i].view());
  if (!s.ok()) {
    if (builder) builder->Abandon();
    return s;
  }
  return builder->Finish(meta);
}

Status Table::Open(const std::string& path, std::shared_ptr<const Table>* out) {
  std::unique_ptr<RandomAccessFile> file;
  Status s = RandomAccessFile::Open(path, &file);
  if (!s.ok()) return s;
  if (file->size() < kFooterSize) return Status::Corruption(path + ": file too short");
  std::string footer;
  s = file->Read(file->size() - kFooterSize, kFooterSize, &footer);
  if (!s.ok()) return s;
  if (std::memcmp(footer.data() + 24, kTableMagic, sizeof(kTableMagic)) != 0) {
    return Status::Corruption(path + ": bad table magic");
  }
  uint64_t index_offset = DecodeFixed64(footer.data());
  uint64_t index_len = DecodeFixed64(footer.data() + 8);
  uint64_t record_count = DecodeFixed64(footer.data() + 16);
  if (index_offset + index_len + 4 + kFooterSize != file->size()) {
    return Status::Corruption(path + ": inconsistent footer");
  }
  std::string index;
  s = file->Read(index_offset, index_len + 4, &index);
  if (!s.ok()) return s;
  if (Crc32(std::string_view(index.data(), index_len)) != DecodeFixed32(index.data() + index_len)) {
    return Status::Corruption(path + ": index checksum mismatch");
  }
  std::shared_ptr<Table> table(new Table());
  Decoder d(std::string_view(index.data(), index_len));
  while (!d.empty()) {
    uint16_t klen;
    std::string_view key;
    IndexEntry e;
    if (!d.GetFixed16(&klen) || !d.GetBytes(klen, &key) || !d.GetFixed64(&e.offset) ||
        !d.GetFixed32(&e.length)) {
      return Status::Corruption(path + ": malformed index");
    }
    if (e.offset + e.length + 4 > index_offset) {
      return Status::Corruption(path + ": index entry out of bounds");
    }
    e.last_key.assign(key);
    table->index_.push_back(std::move(e));
  }
  table->file_ = std::move(file);
  table->record_count_ = record_count;
  table->data_end_ = index_offset;
  *out = std::move(table);
  return Status::OK();
}

Status Table::ReadBlock(const IndexEntry& e, std::string* contents) const {
  Status s = file_->Read(e.offset, e.length + 4, contents);
  if (!s.ok()) return s;
  if (Crc32(std::string_view(contents->data(), e.length)) !=
      DecodeFixed32(contents->data() + e.length)) {
    return Status::Corruption(file_->path() + ": block checksum mismatch");
  }
  contents->resize(e.length);
  return Status::OK();
}

size_t Table::FirstBlockFor(std::string_view key) const {
  auto it = std::lower_bound(index_.begin(), index_.end(), key,
                             [](const IndexEntry& e, std::string_view k) { return e.last_key < k; });
  return static_cast<size_t>(it - index_.begin());
}

Status Table::Get(std::string_view user_key, bool* found, InternalRecord* rec) const {
  *found = false;
  size_t b = FirstBlockFor(user_key);
  if (b == index_.size()) return Status::OK();
  std::string block;
  Status s = ReadBlock(index_[b], &block);
  if (!s.ok()) return s;
  const char* p = block.data();
  const char* limit = p + block.size();
  while (p < limit) {
    RecordView v;
    size_t n = DecodeRecord(p, limit, &v);
    if (n == 0) return Status::Corruption(file_->path() + ": malformed record");
    int c = v.user_key.compare(user_key);
    if (c == 0) {
      *found = true;
      *rec = InternalRecord(v);
      return Status::OK();
    }
    if (c > 0) break;
    p += n;
  }
  return Status::OK();
}

class TableIterator final : public RecordIterator {
 public:
  TableIterator(std::shared_ptr<const Table> table, KeyInterval filter)
      : table_(std::move(table)), filter_(std::move(filter)) {
    if (filter_.IsEmpty()) {
      done_ = true;
      return;
    }
    block_ = filter_.lo ? table_->FirstBlockFor(*filter_.lo) : 0;
    if (!LoadBlock()) return;
    // Skip to the first record at or above the lower bound.
    while (!done_ && filter_.lo && cur_.user_key < std::string_view(*filter_.lo)) Advance();
    CheckUpper();
  }

  bool Valid() const override { return !done_; }
  RecordView record() const override { return cur_; }
  Status status() const override { return status_; }

  void Next() override {
    Advance();
    CheckUpper();
  }

 private:
  void CheckUpper() {
    if (!done_ && filter_.hi && cur_.user_key >= std::string_view(*filter_.hi)) done_ = true;
  }

  // Positions on the first record of block_, reading a new chunk if needed.
  bool LoadBlock() {
    const auto& index = table_->index_;
    if (block_ >= index.size()) {
      done_ = true;
      return false;
    }
    if (block_ < chunk_first_ || block_ >= chunk_end_) {
      chunk_first_ = block_;
      chunk_end_ = block_;
      uint64_t start = index[block_].offset;
      uint64_t end = start;
      while (chunk_end_ < index.size() &&
             (chunk_end_ == block_ || end - start + index[chunk_end_].length + 4 <= kReadChunkSize)) {
        end = index[chunk_end_].offset + index[chunk_end_].length + 4;
        chunk_end_++;
      }
      chunk_offset_ = start;
      status_ = table_->file_->Read(start, end - start, &chunk_);
      if (!status_.ok()) {
        done_ = true;
        return false;
      }
    }
    const IndexEntry& e = index[block_];
    const char* base = chunk_.data() + (e.offset - chunk_offset_);
    if (Crc32(std::string_view(base, e.length)) != DecodeFixed32(base + e.length)) {
      status_ = Status::Corruption(table_->file_->path() + ": block checksum mismatch");
      done_ = true;
      return false;
    }
    p_ = base;
    limit_ = base + e.length;
    return Decode();
  }

  bool Decode() {
    size_t n = DecodeRecord(p_, limit_, &cur_);
    if (n == 0) {
      status_ = Status::Corruption(table_->file_->path() + ": malformed record");
      done_ = true;
      return false;
    }
    next_ = p_ + n;
    return true;
  }

  void Advance() {
    if (done_) return;
    p_ = next_;
    if (p_ < limit_) {
      Decode();
      return;
    }
    block_++;
    LoadBlock();
  }

  std::shared_ptr<const Table> table_;
  KeyInterval filter_;
  size_t block_ = 0;
  std::string chunk_;
  uint64_t chunk_offset_ = 0;
  size_t chunk_first_ = 1;
  size_t chunk_end_ = 0;
  const char* p_ = nullptr;
  const char* next_ = nullptr;
  const char* limit_ = nullptr;
  RecordView cur_;
  bool done_ = false;
  Status status_;
};

std::unique_ptr<RecordIterator> NewTableIterator(std::shared_ptr<const Table> table,
                                                 const KeyInterval& filter) {
  return std::make_unique<TableIterator>(std::move(table), filter);
}

Status ReadTableMeta(const std::string& path, uint64_t file_number, SSTableMeta* meta) {
  std::shared_ptr<const Table> table;
  Status s = Table::Open(path, &table);
  if (!s.ok()) return s;
  auto it = NewTableIterator(table);
  SSTableMeta m;
  m.file_number = file_number;
  m.file_size = table->file_size();
  for (; it->Valid(); it->Next()) {
    if (m.record_count == 0) m.range.min_key.assign(it->record().user_key);
    m.range.max_key.assign(it->record().user_key);
    m.record_count++;
  }
  if (!it->status().ok()) return it->status();
  if (m.record_count != table->record_count()) {
    return Status::Corruption(path + ": record count mismatch");
  }
  *meta = std::move(m);
  return Status::OK();
}

Status SSTableIterate(const std::string& path, const KeyInterval& filter,
                      std::vector<InternalRecord>* out) {
  std::shared_ptr<const Table> table;
  Status s = Table::Open(path, &table);
  if (!s.ok()) return s;
  auto it = NewTableIterator(table, filter);
  return CollectRecords(it.get(), out);
}

}  // namespace cokv
