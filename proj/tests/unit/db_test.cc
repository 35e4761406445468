#include <gtest/gtest.h>

#include <fstream>
#include <map>

#include "cokv/bench.h"
#include "cokv/db.h"
#include "cokv/env.h"
#include "cokv/sstable.h"
#include "test_util.h"

namespace cokv {
namespace {

using test::PadKey;
using test::TempDir;

// Small sizes so a few thousand writes exercise every level.
Options SmallOptions() {
  Options o;
  o.memtable_capacity = 64 << 10;
  o.target_file_size = 32 << 10;
  o.levels.l1_budget = 128 << 10;
  o.levels.l0_compaction_trigger = 2;
  o.num_levels = 5;
  return o;
}

std::unique_ptr<DB> OpenDb(const Options& o, const std::string& path) {
  std::unique_ptr<DB> db;
  Status s = DB::Open(o, path, &db);
  EXPECT_TRUE(s.ok()) << s.ToString();
  return db;
}

TEST(DB, ReadYourWriteAndNewestWins) {
  TempDir dir;
  auto db = OpenDb(Options(), dir.path());
  std::string v;
  EXPECT_TRUE(db->Get("a", &v).IsNotFound());
  ASSERT_TRUE(db->Put("a", "1").ok());
  ASSERT_TRUE(db->Get("a", &v).ok());
  EXPECT_EQ(v, "1");
  ASSERT_TRUE(db->Put("a", "2").ok());
  ASSERT_TRUE(db->Get("a", &v).ok());
  EXPECT_EQ(v, "2");
}

TEST(DB, DeleteShadowsAndPutRevives) {
  TempDir dir;
  auto db = OpenDb(Options(), dir.path());
  std::string v;
  ASSERT_TRUE(db->Delete("absent").ok());
  EXPECT_TRUE(db->Get("absent", &v).IsNotFound());
  ASSERT_TRUE(db->Put("k", "v").ok());
  ASSERT_TRUE(db->Delete("k").ok());
  EXPECT_TRUE(db->Get("k", &v).IsNotFound());
  ASSERT_TRUE(db->Put("k", "again").ok());
  ASSERT_TRUE(db->Get("k", &v).ok());
  EXPECT_EQ(v, "again");
  // len(key) + len(value) for puts, len(key) for deletes.
  EXPECT_EQ(db->GetStats().user_bytes, 6u + 2 + 1 + 6);
}

TEST(DB, RejectsEmptyKey) {
  TempDir dir;
  auto db = OpenDb(Options(), dir.path());
  EXPECT_TRUE(db->Put("", "x").IsInvalidArgument());
}

TEST(DB, FortyThousandDefaultSizedPutsFlush) {
  TempDir dir;
  auto db = OpenDb(Options(), dir.path());
  std::string value(100, 'v');
  for (int i = 0; i < 40000; i++) ASSERT_TRUE(db->Put(PadKey(i, 16), value).ok());
  ASSERT_TRUE(db->WaitForIdle().ok());
  EXPECT_GE(db->GetStats().flushes, 1u);
  EXPECT_GE(db->LevelSummary()[0].first + db->LevelSummary()[1].first, 1u);
}

TEST(DB, MatchesReferenceMapThroughFlushesAndCompactions) {
  TempDir dir;
  auto db = OpenDb(SmallOptions(), dir.path());
  std::map<std::string, std::string> ref;
  VerifySpec spec;
  spec.num_ops = 30000;
  spec.key_space = 3000;
  spec.seed = 3;
  ASSERT_TRUE(ApplyMixedOps(db.get(), spec, &ref).ok());
  ASSERT_TRUE(db->WaitForIdle().ok());
  DbStats st = db->GetStats();
  EXPECT_GT(st.flushes, 5u);
  EXPECT_GT(st.compactions, 2u);
  // Point reads agree with the reference for every key in the space.
  for (uint64_t k = 0; k < spec.key_space; k++) {
    std::string key = PadKey(k, 16), v;
    Status s = db->Get(key, &v);
    auto it = ref.find(key);
    if (it == ref.end()) {
      ASSERT_TRUE(s.IsNotFound()) << key;
    } else {
      ASSERT_TRUE(s.ok()) << key << " " << s.ToString();
      ASSERT_EQ(v, it->second) << key;
    }
  }
  std::vector<std::pair<std::string, std::string>> scan;
  ASSERT_TRUE(db->ScanAll(&scan).ok());
  EXPECT_TRUE(CompareWithReference(scan, ref).match);
}

TEST(DB, RecoversUnflushedWritesAfterReopen) {
  TempDir dir;
  std::map<std::string, std::string> ref;
  {
    auto db = OpenDb(SmallOptions(), dir.path());
    VerifySpec spec;
    spec.num_ops = 5000;
    spec.key_space = 800;
    ASSERT_TRUE(ApplyMixedOps(db.get(), spec, &ref).ok());
  }
  for (int round = 0; round < 2; round++) {
    auto db = OpenDb(SmallOptions(), dir.path());
    std::vector<std::pair<std::string, std::string>> scan;
    ASSERT_TRUE(db->ScanAll(&scan).ok());
    EXPECT_TRUE(CompareWithReference(scan, ref).match) << "round " << round;
    ASSERT_TRUE(db->Put("zz-after-reopen", std::to_string(round)).ok());
    ref["zz-after-reopen"] = std::to_string(round);
  }
}

TEST(DB, OrphanTablesRemovedAtOpen) {
  TempDir dir;
  {
    auto db = OpenDb(Options(), dir.path());
    ASSERT_TRUE(db->Put("a", "1").ok());
    ASSERT_TRUE(db->Flush().ok());
  }
  std::vector<InternalRecord> recs = {{"q", 1, RecordKind::kPut, "stray"}};
  SSTableMeta meta;
  ASSERT_TRUE(SSTableWrite(recs, SSTableFileName(dir.path(), 999), 999, {}, &meta).ok());
  auto db = OpenDb(Options(), dir.path());
  EXPECT_FALSE(FileExists(SSTableFileName(dir.path(), 999)));
  std::string v;
  EXPECT_TRUE(db->Get("q", &v).IsNotFound());
  ASSERT_TRUE(db->Get("a", &v).ok());
}

TEST(DB, FullCompactionRemovesTombstonesFromBottomLevel) {
  TempDir dir;
  Options o = SmallOptions();
  auto db = OpenDb(o, dir.path());
  for (int i = 0; i < 3000; i++) ASSERT_TRUE(db->Put(PadKey(i, 16), std::string(50, 'x')).ok());
  ASSERT_TRUE(db->WaitForIdle().ok());
  for (int i = 0; i < 3000; i += 3) ASSERT_TRUE(db->Delete(PadKey(i, 16)).ok());
  ASSERT_TRUE(db->CompactAll().ok());
  auto levels = db->LevelSummary();
  for (int l = 0; l + 1 < o.num_levels; l++) EXPECT_EQ(levels[l].first, 0u) << "level " << l;
  ASSERT_GT(levels[o.num_levels - 1].first, 0u);
  size_t records = 0;
  for (const auto& path : test::SstFiles(dir.path())) {
    std::vector<InternalRecord> recs;
    ASSERT_TRUE(SSTableIterate(path, {}, &recs).ok());
    for (const auto& r : recs) ASSERT_EQ(r.kind, RecordKind::kPut) << r.user_key;
    records += recs.size();
  }
  EXPECT_EQ(records, 2000u);
  std::string v;
  EXPECT_TRUE(db->Get(PadKey(0, 16), &v).IsNotFound());
  EXPECT_TRUE(db->Get(PadKey(1, 16), &v).ok());
}

TEST(DB, CorruptTableReportsCorruptionNotNotFound) {
  TempDir dir;
  {
    auto db = OpenDb(Options(), dir.path());
    for (int i = 0; i < 100; i++) ASSERT_TRUE(db->Put(PadKey(i), std::string(100, 'x')).ok());
    ASSERT_TRUE(db->Flush().ok());
  }
  auto files = test::SstFiles(dir.path());
  ASSERT_EQ(files.size(), 1u);
  {
    std::fstream f(files[0], std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(30);
    f.put('\x7f');
  }
  auto db = OpenDb(Options(), dir.path());
  std::string v;
  Status s = db->Get(PadKey(0), &v);
  EXPECT_TRUE(s.IsCorruption()) << s.ToString();
}

TEST(DB, WriteAmplificationLedgerMatchesFiles) {
  TempDir dir;
  auto db = OpenDb(SmallOptions(), dir.path());
  for (int i = 0; i < 4000; i++) ASSERT_TRUE(db->Put(PadKey(i * 7 % 4000, 16), std::string(64, 'y')).ok());
  ASSERT_TRUE(db->WaitForIdle().ok());
  DbStats st = db->GetStats();
  EXPECT_EQ(st.user_bytes, 4000u * 80);
  uint64_t wal = 0;
  ASSERT_TRUE(GetFileSize(dir.file("LOG.wal"), &wal).ok());
  EXPECT_LE(wal, st.wal_bytes);
  uint64_t live = 0;
  for (const auto& p : test::SstFiles(dir.path())) {
    uint64_t sz = 0;
    ASSERT_TRUE(GetFileSize(p, &sz).ok());
    live += sz;
  }
  // Every live table was written by a flush or a compaction.
  EXPECT_LE(live, st.flush_bytes + st.host_compaction_bytes);
  EXPECT_EQ(st.host_written(),
            st.wal_bytes + st.manifest_bytes + st.flush_bytes + st.host_compaction_bytes);
  EXPECT_EQ(st.device_bytes, 0u);
}

}  // namespace
}  // namespace cokv
