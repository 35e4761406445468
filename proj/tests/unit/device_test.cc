#include <gtest/gtest.h>

#include <filesystem>
#include <map>
#include <thread>

#include "cokv/bench.h"
#include "cokv/db.h"
#include "cokv/device.h"
#include "cokv/iterator.h"
#include "cokv/merge.h"
#include "cokv/sstable.h"
#include "test_util.h"

namespace cokv {
namespace {

using test::PadKey;
using test::TempDir;

std::string K(int v) { return PadKey(v, 4); }

// Writes keys [lo, hi) with the given sequence number and value prefix.
SSTableMeta WriteRun(const std::string& dir, uint64_t number, int lo, int hi, SequenceNumber seq,
                     const std::string& prefix) {
  std::vector<InternalRecord> recs;
  for (int i = lo; i < hi; i++) {
    recs.emplace_back(K(i), seq, RecordKind::kPut, prefix + std::to_string(i));
  }
  SSTableMeta meta;
  Status s = SSTableWrite(recs, SSTableFileName(dir, number), number, TableOptions{}, &meta);
  EXPECT_TRUE(s.ok()) << s.ToString();
  return meta;
}

// L1 file over [0,100) newer than two L2 files [0,50) and [50,100).
struct Fixture {
  explicit Fixture(const std::string& dir) : dir(dir) {
    lk = WriteRun(dir, 1, 0, 100, 200, "new");
    a = WriteRun(dir, 2, 0, 50, 100, "old");
    b = WriteRun(dir, 3, 50, 100, 100, "old");
  }
  CompactRequest DeviceRequest(KeyInterval filter) const {
    CompactRequest r;
    r.task.side = SplitSide::kDevice;
    r.task.key_filter = std::move(filter);
    r.task.inputs_k = {lk};
    r.task.inputs_k1 = {b};
    r.task.target_level = 2;
    r.task.compaction_id = 5;
    r.first_file_number = 100;
    r.file_number_count = 10;
    r.db_path = dir;
    r.target_file_size = 2 << 20;
    r.block_size = 4096;
    return r;
  }
  std::string dir;
  SSTableMeta lk, a, b;
};

std::vector<InternalRecord> ReadAll(const std::string& dir, const std::vector<SSTableMeta>& files) {
  std::vector<InternalRecord> out;
  for (const auto& f : files) {
    std::vector<InternalRecord> part;
    EXPECT_TRUE(SSTableIterate(SSTableFileName(dir, f.file_number), {}, &part).ok());
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

TEST(DeviceCompaction, OutputsOnlyKeysInsideFilter) {
  TempDir dir;
  Fixture fx(dir.path());
  DeviceResult result;
  DeviceErrorCode code;
  Status s = RunDeviceCompaction(fx.DeviceRequest(KeyInterval::AtOrAbove(K(50))), 0, &result, &code);
  ASSERT_TRUE(s.ok()) << s.ToString();
  auto recs = ReadAll(dir.path(), result.new_files);
  ASSERT_EQ(recs.size(), 50u);
  for (size_t i = 0; i < recs.size(); i++) {
    EXPECT_EQ(recs[i].user_key, K(50 + static_cast<int>(i)));
    EXPECT_EQ(recs[i].value, "new" + std::to_string(50 + i));
  }
  for (const auto& f : result.new_files) {
    EXPECT_GE(f.file_number, 100u);
    EXPECT_LT(f.file_number, 110u);
  }
  EXPECT_EQ(result.input_bytes, fx.lk.file_size + fx.b.file_size);
  uint64_t sum = 0;
  for (const auto& f : result.new_files) sum += f.file_size;
  EXPECT_EQ(result.bytes_written, sum);
}

TEST(DeviceCompaction, MatchesHostMerge) {
  TempDir dir;
  Fixture fx(dir.path());
  KeyInterval filter = KeyInterval::AtOrAbove(K(50));
  DeviceResult result;
  DeviceErrorCode code;
  ASSERT_TRUE(RunDeviceCompaction(fx.DeviceRequest(filter), 0, &result, &code).ok());

  std::vector<std::unique_ptr<RecordIterator>> inputs;
  for (const auto* m : {&fx.lk, &fx.b}) {
    std::shared_ptr<const Table> t;
    ASSERT_TRUE(Table::Open(SSTableFileName(dir.path(), m->file_number), &t).ok());
    inputs.push_back(NewTableIterator(t));
  }
  auto merged = MergeRun(std::move(inputs), filter, false);
  std::vector<InternalRecord> expect;
  ASSERT_TRUE(CollectRecords(merged.get(), &expect).ok());
  auto got = ReadAll(dir.path(), result.new_files);
  ASSERT_EQ(got.size(), expect.size());
  for (size_t i = 0; i < got.size(); i++) {
    EXPECT_EQ(got[i].user_key, expect[i].user_key);
    EXPECT_EQ(got[i].seq, expect[i].seq);
    EXPECT_EQ(got[i].value, expect[i].value);
  }
}

TEST(DeviceCompaction, SlowdownDelaysButDoesNotChangeOutput) {
  TempDir d0, d1;
  Fixture f0(d0.path()), f1(d1.path());
  DeviceResult r0, r1;
  DeviceErrorCode code;
  ASSERT_TRUE(RunDeviceCompaction(f0.DeviceRequest(KeyInterval::AtOrAbove(K(50))), 0, &r0, &code).ok());
  const double slowdown = 2000;
  ASSERT_TRUE(RunDeviceCompaction(f1.DeviceRequest(KeyInterval::AtOrAbove(K(50))), slowdown, &r1, &code).ok());
  EXPECT_EQ(r0.new_files, r1.new_files);
  EXPECT_EQ(r0.bytes_written, r1.bytes_written);
  double delay_us = slowdown * static_cast<double>(r1.input_bytes) / kDeviceReferenceRate * 1e6;
  EXPECT_GE(static_cast<double>(r1.device_elapsed_us), delay_us);
  EXPECT_GT(r1.device_elapsed_us, r0.device_elapsed_us);
}

TEST(DeviceCompaction, MissingInputLeavesNothingBehind) {
  TempDir dir;
  Fixture fx(dir.path());
  CompactRequest req = fx.DeviceRequest(KeyInterval::AtOrAbove(K(50)));
  std::filesystem::remove(SSTableFileName(dir.path(), fx.b.file_number));
  DeviceResult result;
  DeviceErrorCode code = DeviceErrorCode::kIOError;
  Status s = RunDeviceCompaction(req, 0, &result, &code);
  EXPECT_FALSE(s.ok());
  EXPECT_EQ(code, DeviceErrorCode::kMissingInput);
  EXPECT_EQ(test::SstFiles(dir.path()).size(), 2u);
}

TEST(DeviceCompaction, FileNumberBlockIsEnforced) {
  TempDir dir;
  Fixture fx(dir.path());
  CompactRequest req = fx.DeviceRequest(KeyInterval::All());
  req.task.inputs_k1 = {fx.a, fx.b};
  req.target_file_size = 1;  // one output per key
  req.file_number_count = 3;
  DeviceResult result;
  DeviceErrorCode code = DeviceErrorCode::kIOError;
  EXPECT_FALSE(RunDeviceCompaction(req, 0, &result, &code).ok());
  EXPECT_EQ(code, DeviceErrorCode::kFileNumbersExhausted);
  EXPECT_EQ(test::SstFiles(dir.path()).size(), 3u);
}

// In-process device loop for protocol-level checks.
class LoopThread {
 public:
  explicit LoopThread(DeviceConfig config) : config_(std::move(config)) {
    thread_ = std::thread([this] { status_ = DeviceMainLoop(config_, &stats_); });
    for (int i = 0; i < 1000; i++) {
      std::unique_ptr<Channel> ch;
      if (Channel::Connect(config_.listen_endpoint, &ch).ok()) break;
      std::this_thread::sleep_for(std::chrono::milliseconds(2));
    }
  }
  ~LoopThread() {
    std::unique_ptr<Channel> ch;
    if (Channel::Connect(config_.listen_endpoint, &ch).ok()) ch->Send(SemanticMessage::Shutdown());
    thread_.join();
  }
  const DeviceConfig& config() const { return config_; }

 private:
  DeviceConfig config_;
  DeviceStats stats_;
  Status status_;
  std::thread thread_;
};

SemanticMessage Exchange(const std::string& endpoint, const std::vector<SemanticMessage>& sends) {
  std::unique_ptr<Channel> ch;
  EXPECT_TRUE(Channel::Connect(endpoint, &ch).ok());
  SemanticMessage reply;
  for (const auto& m : sends) {
    EXPECT_TRUE(ch->Send(m).ok());
    EXPECT_TRUE(ch->Receive(&reply).ok());
  }
  return reply;
}

TEST(DeviceLoop, HelloIsAnsweredWithVersion) {
  TempDir dir;
  LoopThread loop({dir.path(), 0, test::UniqueSocketPath()});
  SemanticMessage r = Exchange(loop.config().listen_endpoint, {SemanticMessage::Hello()});
  EXPECT_EQ(r.type, MessageType::kHello);
  EXPECT_EQ(r.compaction_id, kProtocolVersion);
  EXPECT_TRUE(std::holds_alternative<std::monostate>(r.payload));
}

TEST(DeviceLoop, WrongVersionIsRefused) {
  TempDir dir;
  LoopThread loop({dir.path(), 0, test::UniqueSocketPath()});
  SemanticMessage r = Exchange(loop.config().listen_endpoint, {{MessageType::kHello, 2, {}}});
  ASSERT_TRUE(std::holds_alternative<ErrorInfo>(r.payload));
  EXPECT_EQ(std::get<ErrorInfo>(r.payload).code, static_cast<uint32_t>(DeviceErrorCode::kVersionMismatch));
}

TEST(DeviceLoop, UnusableDbIsRefused) {
  TempDir dir;
  LoopThread loop({dir.file("does-not-exist"), 0, test::UniqueSocketPath()});
  SemanticMessage r = Exchange(loop.config().listen_endpoint, {SemanticMessage::Hello()});
  ASSERT_TRUE(std::holds_alternative<ErrorInfo>(r.payload));
  EXPECT_EQ(std::get<ErrorInfo>(r.payload).code, static_cast<uint32_t>(DeviceErrorCode::kUnreadableDb));
}

TEST(DeviceLoop, ForeignDbAndMissingInputAreErrors) {
  TempDir dir;
  Fixture fx(dir.path());
  LoopThread loop({dir.path(), 0, test::UniqueSocketPath()});
  CompactRequest req = fx.DeviceRequest(KeyInterval::AtOrAbove(K(50)));
  req.db_path = "/elsewhere";
  SemanticMessage r = Exchange(loop.config().listen_endpoint,
                               {SemanticMessage::Hello(), {MessageType::kCompactRequest, 5, req}});
  ASSERT_EQ(r.type, MessageType::kCompactError);
  EXPECT_EQ(std::get<ErrorInfo>(r.payload).code, static_cast<uint32_t>(DeviceErrorCode::kBadRequest));

  req.db_path = dir.path();
  req.task.inputs_k1[0].file_number = 999;
  r = Exchange(loop.config().listen_endpoint,
               {SemanticMessage::Hello(), {MessageType::kCompactRequest, 5, req}});
  ASSERT_EQ(r.type, MessageType::kCompactError);
  EXPECT_EQ(r.compaction_id, 5u);
  EXPECT_EQ(std::get<ErrorInfo>(r.payload).code, static_cast<uint32_t>(DeviceErrorCode::kMissingInput));
}

TEST(DeviceProcess, SpawnServeAndShutdown) {
  TempDir dir;
  Fixture fx(dir.path());
  std::unique_ptr<DeviceProcess> proc;
  DeviceConfig dc{dir.path(), 0, test::UniqueSocketPath()};
  ASSERT_TRUE(DeviceProcess::Spawn(test::DeviceBinary(), dc, &proc).ok());
  {
    std::unique_ptr<DeviceSession> session;
    ASSERT_TRUE(DeviceSession::Connect(dc.listen_endpoint, &session).ok());
    DeviceReply reply =
        session->RequestDeviceCompaction(fx.DeviceRequest(KeyInterval::AtOrAbove(K(50)))).get();
    ASSERT_TRUE(reply.status.ok()) << reply.status.ToString();
    EXPECT_EQ(ReadAll(dir.path(), reply.done.files).size(), 50u);
  }
  int code = -1;
  ASSERT_TRUE(proc->Shutdown(&code).ok());
  EXPECT_EQ(code, 0);
}

TEST(DeviceProcess, RefusesUnusableDbAtSpawn) {
  TempDir dir;
  std::unique_ptr<DeviceProcess> proc;
  DeviceConfig dc{dir.file("missing"), 0, test::UniqueSocketPath()};
  Status s = DeviceProcess::Spawn(test::DeviceBinary(), dc, &proc);
  EXPECT_FALSE(s.ok());
}

Options SmallOptions() {
  Options o;
  o.memtable_capacity = 64 << 10;
  o.target_file_size = 16 << 10;
  o.levels.l1_budget = 64 << 10;
  o.levels.l0_compaction_trigger = 2;
  o.num_levels = 5;
  return o;
}

// Runs the verification stream through a store; returns the scan digest.
VerifyResult VerifyStore(CompactionMode mode, double slowdown, std::optional<uint64_t> kill_at,
                         DbStats* stats) {
  TempDir dir;
  Options o = SmallOptions();
  o.mode = mode;
  std::unique_ptr<DeviceProcess> proc;
  if (mode == CompactionMode::kCokv) {
    DeviceConfig dc{dir.path(), slowdown, test::UniqueSocketPath()};
    Status s = DeviceProcess::Spawn(test::DeviceBinary(), dc, &proc);
    EXPECT_TRUE(s.ok()) << s.ToString();
    o.device_endpoint = dc.listen_endpoint;
  }
  std::unique_ptr<DB> db;
  Status s = DB::Open(o, dir.path(), &db);
  EXPECT_TRUE(s.ok()) << s.ToString();
  VerifySpec spec;
  spec.num_ops = 30000;
  spec.key_space = 8000;
  VerifyResult result;
  s = RunVerification(db.get(), spec, &result, [&](uint64_t i) {
    if (kill_at && i == *kill_at) proc->Kill();
  });
  EXPECT_TRUE(s.ok()) << s.ToString();
  *stats = db->GetStats();
  db.reset();
  if (proc && proc->running()) proc->Shutdown();
  return result;
}

TEST(CokvStore, SameContentsAsBaseline) {
  DbStats base_stats, cokv_stats;
  VerifyResult base = VerifyStore(CompactionMode::kBaseline, 0, std::nullopt, &base_stats);
  VerifyResult cokv = VerifyStore(CompactionMode::kCokv, 0, std::nullopt, &cokv_stats);
  ASSERT_TRUE(base.match) << base.detail;
  ASSERT_TRUE(cokv.match) << cokv.detail;
  EXPECT_EQ(base.digest, cokv.digest);
  EXPECT_GT(cokv_stats.collaborative, 0u);
  EXPECT_GT(cokv_stats.device_bytes, 0u);
  EXPECT_GT(cokv_stats.transfer_bytes, 0u);
  EXPECT_EQ(base_stats.device_bytes, 0u);
  EXPECT_EQ(base_stats.transfer_bytes, 0u);
}

TEST(CokvStore, DeviceDeathFallsBackToBaseline) {
  DbStats stats;
  VerifyResult r = VerifyStore(CompactionMode::kCokv, 5, 15000, &stats);
  ASSERT_TRUE(r.match) << r.first_divergent_key << " " << r.detail;
  DbStats base_stats;
  VerifyResult base = VerifyStore(CompactionMode::kBaseline, 0, std::nullopt, &base_stats);
  EXPECT_EQ(r.digest, base.digest);
  EXPECT_GT(stats.compactions, stats.collaborative);
}

}  // namespace
}  // namespace cokv
