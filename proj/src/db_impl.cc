#include <algorithm>
#include <condition_variable>
#include <mutex>
#include <thread>

#include "cokv/db.h"
#include "cokv/env.h"
#include "cokv/logging.h"
#include "cokv/memtable.h"
#include "cokv/merge.h"
#include "cokv/semantic.h"
#include "cokv/version.h"
#include "cokv/wal.h"

namespace cokv {

const char* CompactionModeName(CompactionMode m) {
  return m == CompactionMode::kCokv ? "cokv" : "baseline";
}

bool ParseCompactionMode(std::string_view s, CompactionMode* out) {
  if (s == "baseline") {
    *out = CompactionMode::kBaseline;
  } else if (s == "cokv") {
    *out = CompactionMode::kCokv;
  } else {
    return false;
  }
  return true;
}

namespace {

std::string LogFileName(const std::string& db) { return db + "/LOG.wal"; }
std::string ImmLogFileName(const std::string& db) { return db + "/LOG.imm.wal"; }

// Parses "000123.sst".
bool ParseTableFileName(const std::string& name, uint64_t* number) {
  if (name.size() < 5 || name.compare(name.size() - 4, 4, ".sst") != 0) return false;
  uint64_t n = 0;
  for (size_t i = 0; i + 4 < name.size(); i++) {
    if (name[i] < '0' || name[i] > '9') return false;
    n = n * 10 + (name[i] - '0');
  }
  *number = n;
  return true;
}

uint64_t MicrosSince(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now() -
                                                               t0)
      .count();
}

class DBImpl final : public DB {
 public:
  DBImpl(const Options& options, std::string path)
      : opts_(options), path_(std::move(path)), versions_(path_, options.num_levels) {}
  ~DBImpl() override;

  Status Init();

  Status Put(std::string_view key, std::string_view value) override {
    return Write(RecordKind::kPut, key, value);
  }
  Status Delete(std::string_view key) override { return Write(RecordKind::kDelete, key, {}); }
  Status Get(std::string_view key, std::string* value) override;
  Status ScanAll(std::vector<std::pair<std::string, std::string>>* out) override;
  Status Flush() override;
  Status WaitForIdle() override;
  Status CompactAll() override;
  DbStats GetStats() const override;
  std::vector<CompactionRecord> CompactionLog() const override;
  std::vector<std::pair<size_t, uint64_t>> LevelSummary() const override;
  bool DeviceHealthy() const override { return session_ && session_->healthy(); }

 private:
  Status Write(RecordKind kind, std::string_view key, std::string_view value);
  Status MakeRoomForWrite(std::unique_lock<std::mutex>& l);
  Status SealMemTable();  // mu_ held
  bool NeedsCompaction() const;
  void BackgroundLoop();
  Status FlushImmutable();  // background context, mu_ not held
  Status RunTask(CompactionTask task);
  CompactionEnv MakeEnv();
  int L0Count() const { return static_cast<int>(versions_.current()->files(0).size()); }

  const Options opts_;
  const std::string path_;
  VersionSet versions_;

  mutable std::mutex mu_;
  std::condition_variable bg_cv_;
  std::condition_variable done_cv_;
  std::shared_ptr<MemTable> mem_;
  std::shared_ptr<MemTable> imm_;
  SequenceNumber imm_end_seq_ = 0;
  std::unique_ptr<LogWriter> log_;
  uint64_t retired_log_bytes_ = 0;
  bool bg_busy_ = false;
  bool manual_ = false;
  bool shutting_down_ = false;
  Status bg_error_;
  std::thread bg_;

  std::unique_ptr<DeviceSession> session_;
  uint64_t next_compaction_id_ = 1;

  mutable std::mutex stats_mu_;
  DbStats stats_;
  std::vector<CompactionRecord> compaction_log_;
};

Status DBImpl::Init() {
  Status s = CreateDirIfMissing(path_);
  if (s.ok()) s = versions_.Recover();
  // Compacts the manifest to one record and opens it for appends.
  if (s.ok()) s = versions_.WriteSnapshot();
  if (!s.ok()) return s;

  // Tables not referenced by the manifest are leftovers of interrupted
  // flushes or compactions, host or device side.
  std::vector<std::string> names;
  s = ListDir(path_, &names);
  if (!s.ok()) return s;
  auto current = versions_.current();
  for (const auto& name : names) {
    uint64_t number = 0;
    if (!ParseTableFileName(name, &number)) continue;
    versions_.MarkFileNumberUsed(number);
    if (!current->handle(number)) {
      Log(LogLevel::kInfo, "removing orphan table %s", name.c_str());
      RemoveFile(path_ + "/" + name);
    }
  }

  const SequenceNumber watermark = versions_.log_watermark();
  SequenceNumber next_seq = watermark;
  MemTable recovered;
  for (const std::string& log : {ImmLogFileName(path_), LogFileName(path_)}) {
    if (!FileExists(log)) continue;
    SequenceNumber end = 0;
    s = ReplayLog(
        log,
        [&](SequenceNumber seq, RecordKind kind, std::string_view key, std::string_view value) {
          if (seq >= watermark) recovered.Add(seq, kind, key, value);
        },
        &end);
    if (!s.ok()) return s;
    next_seq = std::max(next_seq, end);
  }
  VersionEdit edit;
  uint64_t bytes = 0;
  s = FlushMemTable(recovered, MakeEnv(), &edit, &bytes);
  if (!s.ok()) return s;
  edit.next_seq = next_seq;
  s = versions_.LogAndApply(std::move(edit));
  if (!s.ok()) return s;
  RemoveFile(ImmLogFileName(path_));
  RemoveFile(LogFileName(path_));
  s = LogWriter::Create(LogFileName(path_), next_seq, &log_);
  if (!s.ok()) return s;
  mem_ = std::make_shared<MemTable>();

  if (opts_.mode == CompactionMode::kCokv) {
    if (opts_.device_endpoint.empty()) {
      return Status::InvalidArgument("cokv mode needs a device endpoint");
    }
    s = DeviceSession::Connect(opts_.device_endpoint, &session_);
    if (!s.ok()) return s;
  }
  {
    std::lock_guard<std::mutex> l(stats_mu_);
    stats_ = DbStats();
  }
  bg_ = std::thread([this] { BackgroundLoop(); });
  return Status::OK();
}

DBImpl::~DBImpl() {
  {
    std::lock_guard<std::mutex> l(mu_);
    shutting_down_ = true;
  }
  bg_cv_.notify_all();
  if (bg_.joinable()) bg_.join();
  session_.reset();
}

CompactionEnv DBImpl::MakeEnv() {
  CompactionEnv env;
  env.db_path = path_;
  env.table_options.block_size = opts_.block_size;
  env.target_file_size = opts_.target_file_size;
  env.new_file_number = [this] { return versions_.NewFileNumber(); };
  env.open_table = [this](const SSTableMeta& meta, std::shared_ptr<const Table>* out) {
    auto h = versions_.current()->handle(meta.file_number);
    if (!h) return Status::NotFound("table " + std::to_string(meta.file_number) + " is not live");
    *out = h->table();
    return Status::OK();
  };
  return env;
}

Status DBImpl::Write(RecordKind kind, std::string_view key, std::string_view value) {
  if (key.empty()) return Status::InvalidArgument("empty key");
  if (key.size() > kMaxKeySize) return Status::InvalidArgument("key too long");
  std::unique_lock<std::mutex> l(mu_);
  Status s = MakeRoomForWrite(l);
  if (!s.ok()) return s;
  s = log_->Add(kind, key, value);
  if (s.ok() && opts_.sync_writes) s = log_->Sync();
  if (!s.ok()) {
    // The log tail is now suspect; refuse further writes.
    bg_error_ = s;
    return s;
  }
  mem_->Add(log_->next_seq() - 1, kind, key, value);
  std::lock_guard<std::mutex> sl(stats_mu_);
  stats_.user_bytes += key.size() + value.size();
  return Status::OK();
}

Status DBImpl::MakeRoomForWrite(std::unique_lock<std::mutex>& l) {
  bool allow_delay = true;
  while (true) {
    if (!bg_error_.ok()) return bg_error_;
    if (allow_delay && L0Count() >= opts_.l0_slowdown_trigger) {
      auto t0 = std::chrono::steady_clock::now();
      l.unlock();
      std::this_thread::sleep_for(std::chrono::milliseconds(1));
      l.lock();
      allow_delay = false;
      std::lock_guard<std::mutex> sl(stats_mu_);
      stats_.stall_micros += MicrosSince(t0);
      continue;
    }
    if (mem_->ApproximateSize() < opts_.memtable_capacity) return Status::OK();
    if (imm_ || L0Count() >= opts_.l0_stop_trigger) {
      auto t0 = std::chrono::steady_clock::now();
      done_cv_.wait(l);
      std::lock_guard<std::mutex> sl(stats_mu_);
      stats_.stall_micros += MicrosSince(t0);
      continue;
    }
    return SealMemTable();
  }
}

Status DBImpl::SealMemTable() {
  SequenceNumber next = log_->next_seq();
  retired_log_bytes_ += log_->bytes_written();
  log_.reset();
  Status s = RenameFile(LogFileName(path_), ImmLogFileName(path_));
  if (s.ok()) s = LogWriter::Create(LogFileName(path_), next, &log_);
  if (!s.ok()) {
    bg_error_ = s;
    return s;
  }
  imm_ = std::move(mem_);
  imm_end_seq_ = next;
  mem_ = std::make_shared<MemTable>();
  bg_cv_.notify_all();
  return Status::OK();
}

bool DBImpl::NeedsCompaction() const {
  return ShouldTrigger(*versions_.current(), opts_.levels).has_value();
}

void DBImpl::BackgroundLoop() {
  std::unique_lock<std::mutex> l(mu_);
  while (true) {
    bg_cv_.wait(l, [&] {
      return shutting_down_ || (bg_error_.ok() && !manual_ && (imm_ || NeedsCompaction()));
    });
    if (shutting_down_) break;
    bg_busy_ = true;
    Status s;
    if (imm_) {
      l.unlock();
      s = FlushImmutable();
      l.lock();
    } else {
      auto v = versions_.current();
      std::optional<int> level = ShouldTrigger(*v, opts_.levels);
      if (level) {
        CompactionTask task = PickCompaction(*v, *level, versions_.cursor(*level));
        l.unlock();
        s = RunTask(std::move(task));
        l.lock();
      }
    }
    if (!s.ok() && bg_error_.ok()) {
      Log(LogLevel::kError, "background work failed: %s", s.ToString().c_str());
      bg_error_ = s;
    }
    bg_busy_ = false;
    done_cv_.notify_all();
  }
}

Status DBImpl::FlushImmutable() {
  std::shared_ptr<MemTable> imm;
  SequenceNumber end_seq = 0;
  {
    std::lock_guard<std::mutex> l(mu_);
    imm = imm_;
    end_seq = imm_end_seq_;
  }
  if (!imm) return Status::OK();
  VersionEdit edit;
  uint64_t bytes = 0;
  Status s = FlushMemTable(*imm, MakeEnv(), &edit, &bytes);
  if (!s.ok()) return s;
  std::vector<uint64_t> outputs;
  for (const auto& [level, meta] : edit.added_files) outputs.push_back(meta.file_number);
  edit.next_seq = end_seq;
  s = versions_.LogAndApply(std::move(edit));
  if (!s.ok()) {
    for (uint64_t n : outputs) RemoveFile(SSTableFileName(path_, n));
    return s;
  }
  RemoveFile(ImmLogFileName(path_));
  {
    std::lock_guard<std::mutex> l(mu_);
    imm_.reset();
  }
  {
    std::lock_guard<std::mutex> l(stats_mu_);
    stats_.flush_bytes += bytes;
    stats_.flushes++;
  }
  done_cv_.notify_all();
  return Status::OK();
}

Status DBImpl::RunTask(CompactionTask task) {
  auto t0 = std::chrono::steady_clock::now();
  auto v = versions_.current();
  bool drop = CanDropTombstones(*v, task);

  CollaborativeContext ctx;
  ctx.env = MakeEnv();
  Status flush_status;
  // Keeps the write path moving while a long compaction runs.
  ctx.env.on_progress = [this, &flush_status] {
    bool pending;
    {
      std::lock_guard<std::mutex> l(mu_);
      pending = imm_ != nullptr;
    }
    if (pending && flush_status.ok()) flush_status = FlushImmutable();
  };
  if (opts_.mode == CompactionMode::kCokv && session_ && session_->healthy()) {
    ctx.session = session_.get();
  }
  ctx.device_timeout = opts_.device_timeout;
  ctx.reserve_file_numbers = [this](uint64_t n) { return versions_.ReserveFileNumbers(n); };
  ctx.apply = [this](VersionEdit e) { return versions_.LogAndApply(std::move(e)); };
  ctx.compaction_id = next_compaction_id_++;

  CompactionOutcome outcome;
  Status s = RunCokvCompaction(task, drop, ctx, &outcome);
  if (!flush_status.ok()) return flush_status;

  CompactionRecord rec;
  rec.id = ctx.compaction_id;
  rec.level_k = task.level_k;
  rec.target_level = task.target_level;
  rec.inputs_k = task.inputs_k.size();
  rec.inputs_k1 = task.inputs_k1.size();
  rec.input_bytes = task.InputBytes();
  rec.path = outcome.path;
  rec.host_bytes = outcome.host_bytes;
  rec.device_bytes = outcome.device_bytes;
  rec.elapsed_us = MicrosSince(t0);
  rec.device_elapsed_us = outcome.device_elapsed_us;
  {
    std::lock_guard<std::mutex> l(stats_mu_);
    stats_.host_compaction_bytes += outcome.host_bytes;
    stats_.device_bytes += outcome.device_bytes;
    if (outcome.path == CompactionPath::kTrivialMove) {
      stats_.trivial_moves++;
    } else {
      stats_.compactions++;
    }
    if (outcome.path == CompactionPath::kCollaborative) stats_.collaborative++;
    if (outcome.path == CompactionPath::kFallback) stats_.fallbacks++;
    compaction_log_.push_back(rec);
  }
  return s;
}

Status DBImpl::Get(std::string_view key, std::string* value) {
  std::shared_ptr<MemTable> imm;
  std::shared_ptr<const Version> v;
  InternalRecord rec;
  {
    std::lock_guard<std::mutex> l(mu_);
    if (mem_->Get(key, &rec)) {
      if (rec.kind == RecordKind::kDelete) return Status::NotFound();
      *value = std::move(rec.value);
      return Status::OK();
    }
    imm = imm_;
    v = versions_.current();
  }
  bool found = imm && imm->Get(key, &rec);
  if (!found) {
    // L0 newest first, then one candidate per deeper level.
    const auto& l0 = v->files(0);
    for (auto it = l0.rbegin(); it != l0.rend() && !found; ++it) {
      if (key < std::string_view(it->range.min_key) || key > std::string_view(it->range.max_key)) {
        continue;
      }
      Status s = v->handle(it->file_number)->table()->Get(key, &found, &rec);
      if (!s.ok()) return s;
    }
    for (int level = 1; level < v->num_levels() && !found; level++) {
      const auto& files = v->files(level);
      auto it = std::lower_bound(files.begin(), files.end(), key,
                                 [](const SSTableMeta& f, std::string_view k) {
                                   return std::string_view(f.range.max_key) < k;
                                 });
      if (it == files.end() || key < std::string_view(it->range.min_key)) continue;
      Status s = v->handle(it->file_number)->table()->Get(key, &found, &rec);
      if (!s.ok()) return s;
    }
  }
  if (!found || rec.kind == RecordKind::kDelete) return Status::NotFound();
  *value = std::move(rec.value);
  return Status::OK();
}

Status DBImpl::ScanAll(std::vector<std::pair<std::string, std::string>>* out) {
  out->clear();
  // The client thread is the only writer, so holding mu_ freezes mem_.
  std::lock_guard<std::mutex> l(mu_);
  auto v = versions_.current();
  std::vector<std::unique_ptr<RecordIterator>> inputs;
  inputs.push_back(mem_->NewIterator());
  if (imm_) inputs.push_back(imm_->NewIterator());
  for (int level = 0; level < v->num_levels(); level++) {
    for (const auto& f : v->files(level)) {
      inputs.push_back(NewTableIterator(v->handle(f.file_number)->table()));
    }
  }
  auto merged = MergeRun(std::move(inputs), KeyInterval::All(), true);
  for (; merged->Valid(); merged->Next()) {
    const RecordView& r = merged->record();
    out->emplace_back(std::string(r.user_key), std::string(r.value));
  }
  return merged->status();
}

Status DBImpl::Flush() {
  std::unique_lock<std::mutex> l(mu_);
  if (!mem_->empty()) {
    done_cv_.wait(l, [&] { return imm_ == nullptr || !bg_error_.ok(); });
    if (!bg_error_.ok()) return bg_error_;
    Status s = SealMemTable();
    if (!s.ok()) return s;
  }
  done_cv_.wait(l, [&] { return imm_ == nullptr || !bg_error_.ok(); });
  return bg_error_;
}

Status DBImpl::WaitForIdle() {
  std::unique_lock<std::mutex> l(mu_);
  done_cv_.wait(l, [&] {
    return !bg_error_.ok() || (!bg_busy_ && !imm_ && (manual_ || !NeedsCompaction()));
  });
  return bg_error_;
}

Status DBImpl::CompactAll() {
  Status s = Flush();
  if (!s.ok()) return s;
  {
    std::unique_lock<std::mutex> l(mu_);
    manual_ = true;
    done_cv_.wait(l, [&] { return !bg_busy_; });
  }
  for (int level = 0; level + 1 < opts_.num_levels && s.ok(); level++) {
    while (s.ok()) {
      auto v = versions_.current();
      if (v->files(level).empty()) break;
      CompactionTask task = PickCompaction(*v, level, versions_.cursor(level));
      task.allow_trivial_move = false;
      s = RunTask(std::move(task));
    }
  }
  {
    std::lock_guard<std::mutex> l(mu_);
    manual_ = false;
    if (!s.ok() && bg_error_.ok()) bg_error_ = s;
  }
  bg_cv_.notify_all();
  return s;
}

DbStats DBImpl::GetStats() const {
  DbStats st;
  {
    std::lock_guard<std::mutex> l(stats_mu_);
    st = stats_;
  }
  {
    std::lock_guard<std::mutex> l(mu_);
    st.wal_bytes = retired_log_bytes_ + (log_ ? log_->bytes_written() : 0);
  }
  st.manifest_bytes = versions_.manifest_bytes_written();
  if (session_) st.transfer_bytes = session_->transfer_bytes();
  return st;
}

std::vector<CompactionRecord> DBImpl::CompactionLog() const {
  std::lock_guard<std::mutex> l(stats_mu_);
  return compaction_log_;
}

std::vector<std::pair<size_t, uint64_t>> DBImpl::LevelSummary() const {
  auto v = versions_.current();
  std::vector<std::pair<size_t, uint64_t>> out;
  for (int level = 0; level < v->num_levels(); level++) {
    out.emplace_back(v->files(level).size(), v->LevelBytes(level));
  }
  return out;
}

}  // namespace

Status DB::Open(const Options& options, const std::string& path, std::unique_ptr<DB>* out) {
  if (options.num_levels < 2) return Status::InvalidArgument("need at least two levels");
  auto db = std::make_unique<DBImpl>(options, path);
  Status s = db->Init();
  if (!s.ok()) return s;
  *out = std::move(db);
  return Status::OK();
}

}  // namespace cokv
