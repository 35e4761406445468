#include "cokv/memtable.h"

#include "cokv/sstable.h"

namespace cokv {

void MemTable::Add(SequenceNumber seq, RecordKind kind, std::string_view key,
                   std::string_view value) {
  entries_.emplace(std::string(key), seq, kind, std::string(value));
  approximate_size_ += EncodedRecordSize(key.size(), value.size()) + kMemTableEntryOverhead;
}

bool MemTable::Get(std::string_view key, InternalRecord* rec) const {
  auto it = entries_.lower_bound(Probe{key, kMaxSequenceNumber});
  if (it == entries_.end() || it->user_key != key) return false;
  *rec = *it;
  return true;
}

class MemTableIterator final : public RecordIterator {
 public:
  explicit MemTableIterator(const MemTable* mem) : it_(mem->entries_.begin()), end_(mem->entries_.end()) {}
  bool Valid() const override { return it_ != end_; }
  void Next() override { ++it_; }
  RecordView record() const override { return it_->view(); }
  Status status() const override { return Status::OK(); }

 private:
  std::set<InternalRecord, MemTable::Less>::const_iterator it_;
  std::set<InternalRecord, MemTable::Less>::const_iterator end_;
};

std::unique_ptr<RecordIterator> MemTable::NewIterator() const {
  return std::make_unique<MemTableIterator>(this);
}

}  // namespace cokv
