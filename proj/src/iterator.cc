#include "cokv/iterator.h"

namespace cokv {

namespace {

class VectorIterator final : public RecordIterator {
 public:
  explicit VectorIterator(std::vector<InternalRecord> records) : records_(std::move(records)) {}

  bool Valid() const override { return pos_ < records_.size(); }
  void Next() override { pos_++; }
  RecordView record() const override { return records_[pos_].view(); }
  Status status() const override { return Status::OK(); }

 private:
  std::vector<InternalRecord> records_;
  size_t pos_ = 0;
};

}  // namespace

std::unique_ptr<RecordIterator> NewVectorIterator(std::vector<InternalRecord> records) {
  return std::make_unique<VectorIterator>(std::move(records));
}

Status CollectRecords(RecordIterator* it, std::vector<InternalRecord>* out) {
  out->clear();
  for (; it->Valid(); it->Next()) out->emplace_back(it->record());
  return it->status();
}

}  // namespace cokv
