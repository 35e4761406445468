#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <vector>

#include "cokv/compaction.h"
#include "cokv/offload_types.h"
#include "cokv/semantic.h"
#include "cokv/status.h"
#include "cokv/version.h"

namespace cokv {

// A task is split only when it has exactly one L_k input (k >= 1) and at
// least two overlapping L_{k+1} files; everything else takes the baseline
// path.
bool OffloadEligible(const CompactionTask& task);

// Compaction-SSTables-Aware split. With m = |inputs_k1|, the host keeps the
// first floor(m/2) L_{k+1} files and the device the remaining ceil(m/2).
// The split key is the min key of the device's first file; the host owns
// [-inf, split) and the device [split, +inf), both over the shared L_k file.
Status CsaSplit(const CompactionTask& task, uint64_t compaction_id, SplitTask* host,
                SplitTask* device);

// Merges both halves' outputs into one edit that retires every input.
// Fails when host and device outputs are not pairwise disjoint.
Status IntegrateResults(const CompactionTask& task, const std::vector<SSTableMeta>& host_outputs,
                        const std::vector<SSTableMeta>& device_outputs, VersionEdit* edit);

enum class CompactionPath { kTrivialMove, kBaseline, kCollaborative, kFallback };

const char* CompactionPathName(CompactionPath p);

struct CompactionOutcome {
  CompactionPath path = CompactionPath::kBaseline;
  uint64_t host_bytes = 0;    // written by this process, including abandoned attempts
  uint64_t device_bytes = 0;  // reported by the device for integrated results
  uint64_t device_elapsed_us = 0;
  uint64_t host_outputs = 0;
  uint64_t device_outputs = 0;
  Status fallback_reason;
};

struct CollaborativeContext {
  CompactionEnv env;
  DeviceSession* session = nullptr;  // null: baseline only
  std::chrono::milliseconds device_timeout{60000};
  // Reserves n consecutive file numbers for the device; returns the first.
  std::function<uint64_t(uint64_t)> reserve_file_numbers;
  // Installs an edit (manifest append + version swap).
  std::function<Status(VersionEdit)> apply;
  uint64_t compaction_id = 0;
};

// Runs `task` collaboratively when eligible and a healthy session exists;
// otherwise, or after any device-side failure, runs the baseline path. The
// resulting edit has been applied when this returns OK.
Status RunCokvCompaction(const CompactionTask& task, bool drop_tombstones,
                         const CollaborativeContext& ctx, CompactionOutcome* outcome);

}  // namespace cokv
