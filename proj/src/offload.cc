#include "cokv/offload.h"

#include <algorithm>

#include "cokv/logging.h"

namespace cokv {

bool OffloadEligible(const CompactionTask& task) {
  return task.level_k >= 1 && task.inputs_k.size() == 1 && task.inputs_k1.size() >= 2;
}

Status CsaSplit(const CompactionTask& task, uint64_t compaction_id, SplitTask* host,
                SplitTask* device) {
  if (!OffloadEligible(task)) return Status::InvalidArgument("task is not eligible for offload");
  for (size_t i = 1; i < task.inputs_k1.size(); i++) {
    if (task.inputs_k1[i - 1].range.min_key >= task.inputs_k1[i].range.min_key) {
      return Status::InvalidArgument("L_{k+1} inputs are not sorted by min key");
    }
  }
  const size_t m = task.inputs_k1.size();
  const size_t half = m / 2;
  const std::string& split_key = task.inputs_k1[half].range.min_key;

  SplitTask h;
  h.side = SplitSide::kHost;
  h.key_filter = KeyInterval::Below(split_key);
  h.inputs_k = task.inputs_k;
  h.inputs_k1.assign(task.inputs_k1.begin(), task.inputs_k1.begin() + half);
  h.target_level = task.target_level;
  h.compaction_id = compaction_id;

  SplitTask d;
  d.side = SplitSide::kDevice;
  d.key_filter = KeyInterval::AtOrAbove(split_key);
  d.inputs_k = task.inputs_k;
  d.inputs_k1.assign(task.inputs_k1.begin() + half, task.inputs_k1.end());
  d.target_level = task.target_level;
  d.compaction_id = compaction_id;

  *host = std::move(h);
  *device = std::move(d);
  return Status::OK();
}

Status IntegrateResults(const CompactionTask& task, const std::vector<SSTableMeta>& host_outputs,
                        const std::vector<SSTableMeta>& device_outputs, VersionEdit* edit) {
  std::vector<SSTableMeta> all = host_outputs;
  all.insert(all.end(), device_outputs.begin(), device_outputs.end());
  std::sort(all.begin(), all.end(), [](const SSTableMeta& a, const SSTableMeta& b) {
    return a.range.min_key < b.range.min_key;
  });
  for (size_t i = 1; i < all.size(); i++) {
    if (all[i - 1].range.max_key >= all[i].range.min_key) {
      return Status::Aborted("host/device outputs overlap: file " +
                             std::to_string(all[i - 1].file_number) + " and " +
                             std::to_string(all[i].file_number));
    }
  }
  VersionEdit e;
  e.cursors.emplace_back(task.level_k, task.inputs_k.front().range.max_key);
  for (const auto& f : task.inputs_k) e.DeleteFile(task.level_k, f.file_number);
  for (const auto& f : task.inputs_k1) e.DeleteFile(task.target_level, f.file_number);
  for (const auto& f : all) e.AddFile(task.target_level, f);
  *edit = std::move(e);
  return Status::OK();
}

const char* CompactionPathName(CompactionPath p) {
  switch (p) {
    case CompactionPath::kTrivialMove:
      return "trivial_move";
    case CompactionPath::kBaseline:
      return "baseline";
    case CompactionPath::kCollaborative:
      return "collaborative";
    case CompactionPath::kFallback:
      return "fallback";
  }
  return "?";
}

namespace {

void RemoveOutputs(const std::string& db_path, const std::vector<SSTableMeta>& files) {
  for (const auto& f : files) RemoveFile(SSTableFileName(db_path, f.file_number));
}

Status RunBaselineAndApply(const CompactionTask& task, bool drop_tombstones,
                           const CollaborativeContext& ctx, CompactionOutcome* outcome) {
  VersionEdit edit;
  uint64_t bytes = 0;
  Status s = RunBaselineCompaction(task, drop_tombstones, ctx.env, &edit, &bytes);
  if (!s.ok()) return s;
  std::vector<SSTableMeta> outputs;
  if (!task.IsTrivialMove()) {
    for (const auto& [level, meta] : edit.added_files) outputs.push_back(meta);
  }
  s = ctx.apply(std::move(edit));
  if (!s.ok()) {
    RemoveOutputs(ctx.env.db_path, outputs);
    return s;
  }
  outcome->host_bytes += bytes;
  outcome->host_outputs = outputs.size();
  return Status::OK();
}

// Checks that device-reported files exist with the stated sizes and lie
// inside the device's key filter.
Status ValidateDeviceOutputs(const std::string& db_path, const SplitTask& device,
                             const CompactRequest& req, const std::vector<SSTableMeta>& files) {
  for (const auto& f : files) {
    if (f.file_number < req.first_file_number ||
        f.file_number >= req.first_file_number + req.file_number_count) {
      return Status::Aborted("device used a file number outside its block");
    }
    if (!device.key_filter.Contains(f.range.min_key) ||
        !device.key_filter.Contains(f.range.max_key)) {
      return Status::Aborted("device output outside its key filter");
    }
    uint64_t size = 0;
    Status s = GetFileSize(SSTableFileName(db_path, f.file_number), &size);
    if (!s.ok()) return s;
    if (size != f.file_size) return Status::Aborted("device output size mismatch");
  }
  return Status::OK();
}

}  // namespace

Status RunCokvCompaction(const CompactionTask& task, bool drop_tombstones,
                         const CollaborativeContext& ctx, CompactionOutcome* outcome) {
  *outcome = CompactionOutcome();
  if (task.IsTrivialMove()) {
    outcome->path = CompactionPath::kTrivialMove;
    return RunBaselineAndApply(task, drop_tombstones, ctx, outcome);
  }
  if (!OffloadEligible(task) || ctx.session == nullptr || !ctx.session->healthy()) {
    outcome->path = CompactionPath::kBaseline;
    return RunBaselineAndApply(task, drop_tombstones, ctx, outcome);
  }

  SplitTask host, device;
  Status s = CsaSplit(task, ctx.compaction_id, &host, &device);
  if (!s.ok()) return s;

  CompactRequest req;
  req.task = device;
  req.file_number_count = task.InputBytes() / std::max<uint64_t>(ctx.env.target_file_size, 1) +
                          task.inputs_k1.size() + 2;
  req.first_file_number = ctx.reserve_file_numbers(req.file_number_count);
  req.db_path = ctx.env.db_path;
  req.target_file_size = ctx.env.target_file_size;
  req.block_size = static_cast<uint32_t>(ctx.env.table_options.block_size);
  req.drop_tombstones = drop_tombstones;
  std::future<DeviceReply> reply = ctx.session->RequestDeviceCompaction(req);

  // Host half runs while the device works on its half.
  std::vector<MergeSource> sources;
  for (const auto* group : {&host.inputs_k, &host.inputs_k1}) {
    for (const auto& f : *group) {
      std::shared_ptr<const Table> table;
      s = ctx.env.open_table(f, &table);
      if (!s.ok()) break;
      sources.push_back({std::move(table), host.key_filter});
    }
  }
  OutputWriter out(ctx.env.db_path, ctx.env.table_options, ctx.env.target_file_size,
                   [&]() -> std::optional<uint64_t> { return ctx.env.new_file_number(); });
  if (s.ok()) {
    s = CompactSources(sources, host.key_filter, drop_tombstones, &out, ctx.env.on_progress);
  }
  outcome->host_bytes += out.bytes_written();

  // Wait for the completion flag from the device.
  auto deadline = std::chrono::steady_clock::now() + ctx.device_timeout;
  bool ready = false;
  while (!ready) {
    auto now = std::chrono::steady_clock::now();
    if (now >= deadline) break;
    auto slice = std::min<std::chrono::steady_clock::duration>(deadline - now,
                                                                std::chrono::milliseconds(10));
    ready = reply.wait_for(slice) == std::future_status::ready;
    if (!ready && ctx.env.on_progress) ctx.env.on_progress();
  }
  DeviceReply dev;
  if (ready) {
    dev = reply.get();
  } else {
    ctx.session->Abandon(device.compaction_id);
    dev = reply.get();
    dev.status = Status::Timeout("device did not answer within the timeout");
  }

  Status fail;
  if (!s.ok()) {
    fail = s;
  } else if (!dev.status.ok()) {
    fail = dev.status;
  } else {
    fail = ValidateDeviceOutputs(ctx.env.db_path, device, req, dev.done.files);
  }
  VersionEdit edit;
  if (fail.ok()) fail = IntegrateResults(task, out.outputs(), dev.done.files, &edit);
  if (fail.ok()) fail = ctx.apply(std::move(edit));
  if (fail.ok()) {
    outcome->path = CompactionPath::kCollaborative;
    outcome->device_bytes = dev.done.bytes_written;
    outcome->device_elapsed_us = dev.done.device_elapsed_us;
    outcome->host_outputs = out.outputs().size();
    outcome->device_outputs = dev.done.files.size();
    return Status::OK();
  }

  Log(LogLevel::kWarn, "collaborative compaction %llu failed (%s); falling back to baseline",
      static_cast<unsigned long long>(device.compaction_id), fail.ToString().c_str());
  out.Abandon();
  if (dev.status.ok()) RemoveOutputs(ctx.env.db_path, dev.done.files);
  s = RunBaselineAndApply(task, drop_tombstones, ctx, outcome);
  outcome->path = CompactionPath::kFallback;
  outcome->fallback_reason = fail;
  return s;
}

}  // namespace cokv
