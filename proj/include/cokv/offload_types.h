#pragma once

#include <cstdint>
#include <vector>

#include "cokv/format.h"

namespace cokv {

enum class SplitSide : uint8_t { kHost = 0, kDevice = 1 };

// One half of a CSA-split compaction: the shared L_k file(s), this side's
// subset of the L_{k+1} files, and the half-open key filter it owns.
struct SplitTask {
  SplitSide side = SplitSide::kHost;
  KeyInterval key_filter;
  std::vector<SSTableMeta> inputs_k;
  std::vector<SSTableMeta> inputs_k1;
  int target_level = 1;
  uint64_t compaction_id = 0;

  bool operator==(const SplitTask&) const = default;
};

}  // namespace cokv
