#pragma once

#include <memory>
#include <vector>

#include "cokv/format.h"
#include "cokv/status.h"

namespace cokv {

// Forward-only ordered stream of records. A freshly created iterator is
// positioned on its first record (or is !Valid() when empty). Errors end
// the stream and are reported by status().
class RecordIterator {
 public:
  virtual ~RecordIterator() = default;

  virtual bool Valid() const = 0;
  virtual void Next() = 0;
  // Requires Valid(). The view is invalidated by Next().
  virtual RecordView record() const = 0;
  virtual Status status() const = 0;
};

std::unique_ptr<RecordIterator> NewVectorIterator(std::vector<InternalRecord> records);

// Drains an iterator into owned records.
Status CollectRecords(RecordIterator* it, std::vector<InternalRecord>* out);

}  // namespace cokv
