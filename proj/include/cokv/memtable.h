#pragma once

#include <memory>
#include <set>
#include <string_view>

#include "cokv/format.h"
#include "cokv/iterator.h"

namespace cokv {

// Approximate per-entry bookkeeping cost charged on top of the encoded
// record size when sizing the memtable.
inline constexpr size_t kMemTableEntryOverhead = 16;

// Sorted in-memory write buffer. Not internally synchronized: the owner
// serializes writers, and an iterator requires the table to be sealed.
class MemTable {
 public:
  void Add(SequenceNumber seq, RecordKind kind, std::string_view key, std::string_view value);

  // Newest record for `key`; false when the key never appeared.
  bool Get(std::string_view key, InternalRecord* rec) const;

  size_t ApproximateSize() const { return approximate_size_; }
  size_t count() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  std::unique_ptr<RecordIterator> NewIterator() const;

 private:
  struct Probe {
    std::string_view key;
    SequenceNumber seq;
  };
  struct Less {
    using is_transparent = void;
    bool operator()(const InternalRecord& a, const InternalRecord& b) const {
      return CompareInternal(a.user_key, a.seq, b.user_key, b.seq) < 0;
    }
    bool operator()(const InternalRecord& a, const Probe& b) const {
      return CompareInternal(a.user_key, a.seq, b.key, b.seq) < 0;
    }
    bool operator()(const Probe& a, const InternalRecord& b) const {
      return CompareInternal(a.key, a.seq, b.user_key, b.seq) < 0;
    }
  };

  std::set<InternalRecord, Less> entries_;
  size_t approximate_size_ = 0;

  friend class MemTableIterator;
};

}  // namespace cokv
