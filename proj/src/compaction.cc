#include "cokv/compaction.h"

#include <algorithm>
#include <cmath>

#include "cokv/merge.h"

namespace cokv {

uint64_t LevelOptions::LevelBudget(int level) const {
  double budget = static_cast<double>(l1_budget);
  for (int i = 1; i < level; i++) budget *= growth_factor;
  return static_cast<uint64_t>(budget);
}

KeyRange CompactionTask::InputRange() const {
  std::vector<SSTableMeta> all = inputs_k;
  all.insert(all.end(), inputs_k1.begin(), inputs_k1.end());
  return UnionRange(all);
}

uint64_t CompactionTask::InputBytes() const {
  uint64_t total = 0;
  for (const auto& f : inputs_k) total += f.file_size;
  for (const auto& f : inputs_k1) total += f.file_size;
  return total;
}

std::optional<int> ShouldTrigger(const Version& version, const LevelOptions& opts) {
  if (static_cast<int>(version.files(0).size()) >= opts.l0_compaction_trigger) return 0;
  for (int level = 1; level + 1 < version.num_levels(); level++) {
    if (version.LevelBytes(level) > opts.LevelBudget(level)) return level;
  }
  return std::nullopt;
}

CompactionTask PickCompaction(const Version& version, int level, std::string_view cursor) {
  CompactionTask task;
  task.level_k = level;
  task.target_level = level + 1;
  const auto& files = version.files(level);
  if (files.empty()) return task;
  if (level == 0) {
    // Oldest file plus everything transitively overlapping it.
    std::vector<bool> taken(files.size(), false);
    taken[0] = true;
    KeyRange range = files[0].range;
    bool grew = true;
    while (grew) {
      grew = false;
      for (size_t i = 0; i < files.size(); i++) {
        if (!taken[i] && KeyRangesOverlap(files[i].range, range)) {
          taken[i] = true;
          range.min_key = std::min(range.min_key, files[i].range.min_key);
          range.max_key = std::max(range.max_key, files[i].range.max_key);
          grew = true;
        }
      }
    }
    for (size_t i = 0; i < files.size(); i++) {
      if (taken[i]) task.inputs_k.push_back(files[i]);
    }
  } else {
    auto it = std::find_if(files.begin(), files.end(), [&](const SSTableMeta& f) {
      return std::string_view(f.range.min_key) > cursor;
    });
    task.inputs_k.push_back(it == files.end() ? files.front() : *it);
  }
  if (task.target_level < version.num_levels()) {
    task.inputs_k1 = version.Overlapping(task.target_level, UnionRange(task.inputs_k));
  }
  return task;
}

bool CanDropTombstones(const Version& version, const CompactionTask& task) {
  KeyRange range = task.InputRange();
  for (int level = task.target_level + 1; level < version.num_levels(); level++) {
    for (const auto& f : version.files(level)) {
      if (KeyRangesOverlap(f.range, range)) return false;
    }
  }
  return true;
}

OutputWriter::~OutputWriter() {
  if (builder_) builder_->Abandon();
}

Status OutputWriter::Add(const RecordView& rec) {
  if (builder_ && builder_->FileSize() >= target_file_size_ &&
      rec.user_key != builder_->last_user_key()) {
    Status s = FinishCurrent();
    if (!s.ok()) return s;
  }
  if (!builder_) {
    std::optional<uint64_t> number = numbers_();
    if (!number) return Status::Aborted("file number supply exhausted");
    Status s = TableBuilder::Create(SSTableFileName(db_path_, *number), *number, table_options_,
                                    &builder_);
    if (!s.ok()) return s;
  }
  return builder_->Add(rec);
}

Status OutputWriter::FinishCurrent() {
  SSTableMeta meta;
  Status s = builder_->Finish(&meta);
  builder_.reset();
  if (s.ok()) outputs_.push_back(std::move(meta));
  return s;
}

Status OutputWriter::Finish() {
  if (!builder_) return Status::OK();
  return FinishCurrent();
}

void OutputWriter::Abandon() {
  if (builder_) {
    builder_->Abandon();
    builder_.reset();
  }
  for (const auto& f : outputs_) RemoveFile(SSTableFileName(db_path_, f.file_number));
  outputs_.clear();
}

uint64_t OutputWriter::bytes_written() const {
  uint64_t total = 0;
  for (const auto& f : outputs_) total += f.file_size;
  return total;
}

Status WriteStream(RecordIterator* input, OutputWriter* out,
                   const std::function<void()>& on_progress) {
  size_t files_before = out->outputs().size();
  uint64_t n = 0;
  for (; input->Valid(); input->Next()) {
    Status s = out->Add(input->record());
    if (!s.ok()) return s;
    if (on_progress && ((++n & 0xfff) == 0 || out->outputs().size() != files_before)) {
      files_before = out->outputs().size();
      on_progress();
    }
  }
  if (!input->status().ok()) return input->status();
  return out->Finish();
}

Status CompactSources(const std::vector<MergeSource>& sources, const KeyInterval& filter,
                      bool drop_tombstones, OutputWriter* out,
                      const std::function<void()>& on_progress) {
  std::vector<std::unique_ptr<RecordIterator>> inputs;
  inputs.reserve(sources.size());
  for (const auto& src : sources) inputs.push_back(NewTableIterator(src.table, src.filter));
  auto merged = MergeRun(std::move(inputs), filter, drop_tombstones);
  return WriteStream(merged.get(), out, on_progress);
}

Status RunBaselineCompaction(const CompactionTask& task, bool drop_tombstones,
                             const CompactionEnv& env, VersionEdit* edit,
                             uint64_t* bytes_written) {
  *bytes_written = 0;
  if (task.level_k >= 1) edit->cursors.emplace_back(task.level_k, task.inputs_k.front().range.max_key);
  if (task.IsTrivialMove()) {
    edit->DeleteFile(task.level_k, task.inputs_k.front().file_number);
    edit->AddFile(task.target_level, task.inputs_k.front());
    return Status::OK();
  }
  std::vector<MergeSource> sources;
  for (const auto* group : {&task.inputs_k, &task.inputs_k1}) {
    for (const auto& f : *group) {
      std::shared_ptr<const Table> table;
      Status s = env.open_table(f, &table);
      if (!s.ok()) return s;
      sources.push_back({std::move(table), KeyInterval::All()});
    }
  }
  OutputWriter out(env.db_path, env.table_options, env.target_file_size,
                   [&]() -> std::optional<uint64_t> { return env.new_file_number(); });
  Status s = CompactSources(sources, KeyInterval::All(), drop_tombstones, &out, env.on_progress);
  if (!s.ok()) {
    out.Abandon();
    return s;
  }
  for (const auto& f : task.inputs_k) edit->DeleteFile(task.level_k, f.file_number);
  for (const auto& f : task.inputs_k1) edit->DeleteFile(task.target_level, f.file_number);
  for (const auto& f : out.outputs()) edit->AddFile(task.target_level, f);
  *bytes_written = out.bytes_written();
  return Status::OK();
}

Status FlushMemTable(const MemTable& mem, const CompactionEnv& env, VersionEdit* edit,
                     uint64_t* bytes_written) {
  *bytes_written = 0;
  if (mem.empty()) return Status::OK();
  OutputWriter out(env.db_path, env.table_options, env.target_file_size,
                   [&]() -> std::optional<uint64_t> { return env.new_file_number(); });
  auto it = mem.NewIterator();
  Status s = WriteStream(it.get(), &out);
  if (!s.ok()) {
    out.Abandon();
    return s;
  }
  for (const auto& f : out.outputs()) edit->AddFile(0, f);
  *bytes_written = out.bytes_written();
  return Status::OK();
}

}  // namespace cokv
