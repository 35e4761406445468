#pragma once

#include <memory>
#include <vector>

#include "cokv/format.h"
#include "cokv/iterator.h"

namespace cokv {

// K-way merge of internally sorted streams. For each user key only the
// highest-sequence record survives; a surviving DELETE is omitted when
// `drop_tombstones` is set, and keys outside `filter` are skipped. An input
// stream that is not strictly increasing in internal order ends the merge
// with an InvalidArgument status.
std::unique_ptr<RecordIterator> MergeRun(std::vector<std::unique_ptr<RecordIterator>> inputs,
                                         KeyInterval filter, bool drop_tombstones);

}  // namespace cokv
