#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cokv/format.h"
#include "cokv/iterator.h"
#include "cokv/memtable.h"
#include "cokv/sstable.h"
#include "cokv/status.h"
#include "cokv/version.h"

namespace cokv {

struct LevelOptions {
  int l0_compaction_trigger = 4;
  uint64_t l1_budget = 10ull << 20;
  double growth_factor = 10.0;

  // Byte budget of level >= 1.
  uint64_t LevelBudget(int level) const;
};

// Input set of one compaction: the L_k file(s) and every L_{k+1} file
// overlapping their union range, sorted by min key.
struct CompactionTask {
  int level_k = 0;
  std::vector<SSTableMeta> inputs_k;
  std::vector<SSTableMeta> inputs_k1;
  int target_level = 1;
  // Manual full compactions clear this so every file is rewritten.
  bool allow_trivial_move = true;

  bool IsTrivialMove() const {
    return allow_trivial_move && inputs_k1.empty() && inputs_k.size() == 1;
  }
  KeyRange InputRange() const;
  uint64_t InputBytes() const;
};

// L0 when its file count reaches the trigger, else the lowest level >= 1
// over budget. The last level never triggers.
std::optional<int> ShouldTrigger(const Version& version, const LevelOptions& opts);

// Chooses the inputs for a compaction out of `level`. For level >= 1 the
// victim is the first file whose min key is strictly greater than
// `cursor`, wrapping to the first file.
CompactionTask PickCompaction(const Version& version, int level, std::string_view cursor);

// True when no level below the task's target can hold any of its keys, so
// tombstones may be elided.
bool CanDropTombstones(const Version& version, const CompactionTask& task);

// Writes an ordered record stream into tables of roughly `target_file_size`
// bytes. A new file is started only at a user-key boundary, so outputs of a
// deduplicated stream are pairwise disjoint.
class OutputWriter {
 public:
  // Returns the next file number, or nullopt once the supply is exhausted.
  using FileNumberSource = std::function<std::optional<uint64_t>()>;

  OutputWriter(std::string db_path, TableOptions table_options, uint64_t target_file_size,
               FileNumberSource numbers)
      : db_path_(std::move(db_path)),
        table_options_(table_options),
        target_file_size_(target_file_size),
        numbers_(std::move(numbers)) {}
  ~OutputWriter();

  Status Add(const RecordView& rec);
  Status Finish();
  // Deletes every file this writer produced.
  void Abandon();

  const std::vector<SSTableMeta>& outputs() const { return outputs_; }
  uint64_t bytes_written() const;

 private:
  Status FinishCurrent();

  std::string db_path_;
  TableOptions table_options_;
  uint64_t target_file_size_;
  FileNumberSource numbers_;
  std::unique_ptr<TableBuilder> builder_;
  std::vector<SSTableMeta> outputs_;
};

// Drains `input` into `out`, calling `on_progress` (if set) between output
// files and every few thousand records.
Status WriteStream(RecordIterator* input, OutputWriter* out,
                   const std::function<void()>& on_progress = {});

struct MergeSource {
  std::shared_ptr<const Table> table;
  KeyInterval filter;
};

// Merges `sources` (see MergeRun) into target-sized tables.
Status CompactSources(const std::vector<MergeSource>& sources, const KeyInterval& filter,
                      bool drop_tombstones, OutputWriter* out,
                      const std::function<void()>& on_progress = {});

// Host-side resources a compaction needs.
struct CompactionEnv {
  std::string db_path;
  TableOptions table_options;
  uint64_t target_file_size = 2ull << 20;
  std::function<uint64_t()> new_file_number;
  // Open handle for a live input file.
  std::function<Status(const SSTableMeta&, std::shared_ptr<const Table>*)> open_table;
  std::function<void()> on_progress;
};

// Baseline path: trivial move when possible, otherwise a full host-side
// merge of all inputs into L_{k+1}. Fills `edit` (including the level
// cursor) and reports the bytes written. On failure no outputs remain.
Status RunBaselineCompaction(const CompactionTask& task, bool drop_tombstones,
                             const CompactionEnv& env, VersionEdit* edit,
                             uint64_t* bytes_written);

// Writes a sealed memtable to one or more L0 tables (split at the target
// size) and records them in `edit`. An empty memtable yields no file and
// leaves `edit` empty.
Status FlushMemTable(const MemTable& mem, const CompactionEnv& env, VersionEdit* edit,
                     uint64_t* bytes_written);

}  // namespace cokv
