#include "cokv/merge.h"

#include <algorithm>
#include <string>

namespace cokv {

namespace {

class MergingIterator final : public RecordIterator {
 public:
  MergingIterator(std::vector<std::unique_ptr<RecordIterator>> inputs, KeyInterval filter,
                  bool drop_tombstones)
      : children_(std::move(inputs)),
        prev_key_(children_.size()),
        prev_seq_(children_.size(), 0),
        filter_(std::move(filter)),
        drop_tombstones_(drop_tombstones) {
    for (size_t i = 0; i < children_.size(); i++) {
      if (children_[i]->Valid()) {
        heap_.push_back(i);
      } else if (!children_[i]->status().ok()) {
        status_ = children_[i]->status();
      }
    }
    if (!status_.ok()) {
      heap_.clear();
      return;
    }
    std::make_heap(heap_.begin(), heap_.end(), Greater{this});
    FindNext();
  }

  bool Valid() const override { return has_current_; }
  RecordView record() const override { return children_[current_]->record(); }
  Status status() const override { return status_; }

  void Next() override {
    if (!has_current_) return;
    has_current_ = false;
    AdvanceTop();
    FindNext();
  }

 private:
  struct Greater {
    const MergingIterator* self;
    bool operator()(size_t a, size_t b) const {
      int c = CompareInternal(self->children_[a]->record(), self->children_[b]->record());
      if (c != 0) return c > 0;
      return a > b;
    }
  };

  // Pops the smallest child, advances it and pushes it back if still valid.
  void AdvanceTop() {
    std::pop_heap(heap_.begin(), heap_.end(), Greater{this});
    size_t i = heap_.back();
    heap_.pop_back();
    RecordIterator* child = children_[i].get();
    RecordView prev = child->record();
    prev_key_[i].assign(prev.user_key);
    prev_seq_[i] = prev.seq;
    child->Next();
    if (!child->Valid()) {
      if (!child->status().ok()) Fail(child->status());
      return;
    }
    if (CompareInternal(prev_key_[i], prev_seq_[i], child->record().user_key,
                        child->record().seq) >= 0) {
      Fail(Status::InvalidArgument("merge input stream " + std::to_string(i) +
                                   " is not sorted at key '" +
                                   std::string(child->record().user_key) + "'"));
      return;
    }
    heap_.push_back(i);
    std::push_heap(heap_.begin(), heap_.end(), Greater{this});
  }

  void Fail(Status s) {
    status_ = std::move(s);
    heap_.clear();
  }

  void FindNext() {
    while (!heap_.empty()) {
      size_t i = heap_.front();
      RecordView v = children_[i]->record();
      bool emit = false;
      if (!has_last_key_ || v.user_key != std::string_view(last_key_)) {
        last_key_.assign(v.user_key);
        has_last_key_ = true;
        emit = filter_.Contains(v.user_key) &&
               !(drop_tombstones_ && v.kind == RecordKind::kDelete);
      }
      if (emit) {
        current_ = i;
        has_current_ = true;
        return;
      }
      AdvanceTop();
    }
  }

  std::vector<std::unique_ptr<RecordIterator>> children_;
  std::vector<std::string> prev_key_;
  std::vector<SequenceNumber> prev_seq_;
  std::vector<size_t> heap_;
  KeyInterval filter_;
  bool drop_tombstones_;
  std::string last_key_;
  bool has_last_key_ = false;
  size_t current_ = 0;
  bool has_current_ = false;
  Status status_;
};

}  // namespace

std::unique_ptr<RecordIterator> MergeRun(std::vector<std::unique_ptr<RecordIterator>> inputs,
                                         KeyInterval filter, bool drop_tombstones) {
  return std::make_unique<MergingIterator>(std::move(inputs), std::move(filter), drop_tombstones);
}

}  // namespace cokv
