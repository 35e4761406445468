#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cokv/db.h"
#include "cokv/status.h"

namespace cokv {

enum class WorkloadKind { kFillSeq, kFillRandom, kYcsb };

const char* WorkloadKindName(WorkloadKind k);
bool ParseWorkloadKind(std::string_view s, WorkloadKind* out);

struct WorkloadSpec {
  WorkloadKind kind = WorkloadKind::kFillSeq;
  uint64_t num_ops = 100000;  // db_bench kinds; YCSB derives counts from the byte volumes
  size_t key_size = 16;
  size_t value_size = 100;
  double read_ratio = 0.0;
  double zipf_theta = 0.99;
  uint64_t load_bytes = 0;
  uint64_t run_bytes = 0;
  uint64_t seed = 1;

  Status Validate() const;
  // YCSB: keys inserted by the load phase and operations in the run phase.
  // Each operation accounts for value_size bytes of volume.
  uint64_t ycsb_load_count() const { return load_bytes / std::max<size_t>(value_size, 1); }
  uint64_t ycsb_run_count() const { return run_bytes / std::max<size_t>(value_size, 1); }
};

// P(rank i) proportional to 1/(i+1)^theta over [0, n), sampled by inverse
// transform on the exact CDF. Rank 0 is the hottest.
class ZipfSampler {
 public:
  ZipfSampler(uint64_t n, double theta);

  uint64_t Sample(std::mt19937_64& rng) const;
  // Analytic probability of `rank`.
  double Probability(uint64_t rank) const;
  uint64_t n() const { return static_cast<uint64_t>(cdf_.size()); }

 private:
  std::vector<double> cdf_;
  double norm_ = 1.0;
  double theta_;
};

struct Operation {
  enum Type { kPut, kGet } type = kPut;
  bool timed = true;  // false for the YCSB load phase
  std::string key;
  std::string_view value;  // valid until the next call to Next()
};

// Deterministic operation stream for a spec: same spec, same stream.
class OperationStream {
 public:
  explicit OperationStream(const WorkloadSpec& spec);

  bool Next(Operation* op);
  uint64_t total() const { return total_; }

 private:
  std::string MakeKey(uint64_t index) const;
  std::string_view MakeValue();

  WorkloadSpec spec_;
  std::mt19937_64 rng_;
  std::optional<ZipfSampler> zipf_;
  std::string value_pool_;
  uint64_t index_ = 0;
  uint64_t load_count_ = 0;
  uint64_t total_ = 0;
};

// Counts and latencies of a run. Latency keeps an exact mean and a bounded
// uniform reservoir for percentiles.
class LatencyRecorder {
 public:
  explicit LatencyRecorder(size_t capacity = 200000, uint64_t seed = 0x5eed);
  void Add(double micros);
  uint64_t count() const { return count_; }
  double mean() const { return count_ ? sum_ / static_cast<double>(count_) : 0.0; }
  double Percentile(double p) const;

 private:
  size_t capacity_;
  std::mt19937_64 rng_;
  std::vector<double> samples_;
  uint64_t count_ = 0;
  double sum_ = 0.0;
};

struct MetricsLedger {
  uint64_t user_bytes = 0;
  uint64_t host_written_bytes = 0;
  uint64_t device_written_bytes = 0;
  uint64_t transfer_bytes = 0;
  uint64_t op_count = 0;          // timed operations
  uint64_t timed_user_bytes = 0;  // user bytes issued by timed operations
  double elapsed_s = 0.0;         // timed phase only
  LatencyRecorder update_latency;
  LatencyRecorder read_latency;
  DbStats db_stats;
  std::vector<CompactionRecord> compactions;
};

// Issues every operation of `spec` against `db` from one client thread,
// then waits for background work before reading the byte counters.
Status RunWorkload(DB* db, const WorkloadSpec& spec, MetricsLedger* ledger);

struct ShapeStats {
  std::map<std::pair<size_t, size_t>, uint64_t> histogram;  // (|inputs_k|, |inputs_k1|) -> count
  uint64_t total = 0;              // merging compactions, any level
  uint64_t total_deep = 0;         // merging compactions with k >= 1
  uint64_t single_lk_deep = 0;     // k >= 1 and |inputs_k| = 1
  uint64_t single_lk_all = 0;      // |inputs_k| = 1, any level
  uint64_t k1_at_least_two = 0;    // |inputs_k1| >= 2, any level
  uint64_t k1_exactly_two = 0;

  double single_lk_fraction() const;      // over k >= 1
  double single_lk_fraction_all() const;
  double k1_at_least_two_fraction() const;
  double k1_exactly_two_fraction() const;
};

// Trivial moves are not merges and are left out.
ShapeStats CompactionShapeStats(const std::vector<CompactionRecord>& log);

struct Report {
  std::string mode;
  WorkloadSpec spec;
  std::optional<double> write_amplification;  // undefined without user bytes
  double throughput_mb_s = 0.0;
  double ops_per_sec = 0.0;
  double mean_update_latency_us = 0.0;
  double p95_update_latency_us = 0.0;
  double mean_read_latency_us = 0.0;
  double p95_read_latency_us = 0.0;
  uint64_t user_bytes = 0;
  uint64_t host_written_bytes = 0;
  uint64_t device_written_bytes = 0;
  uint64_t transfer_bytes = 0;
  uint64_t op_count = 0;
  double elapsed_s = 0.0;
  ShapeStats shape;
  DbStats db_stats;
};

Report ComputeReport(const MetricsLedger& ledger, const WorkloadSpec& spec,
                     const std::string& mode);

nlohmann::json ReportToJson(const Report& r);
std::string ReportToTable(const Report& r);
nlohmann::json ShapeStatsToJson(const ShapeStats& s);
std::string ShapeStatsToTable(const ShapeStats& s);

nlohmann::json CompactionLogToJson(const std::vector<CompactionRecord>& log);
Status CompactionLogFromJson(const nlohmann::json& j, std::vector<CompactionRecord>* log);

// Seeded mixed put/delete stream used to check a store against a plain
// ordered map.
struct VerifySpec {
  uint64_t seed = 7;
  uint64_t num_ops = 100000;
  uint64_t key_space = 50000;
  double delete_ratio = 0.2;
  size_t key_size = 16;
  size_t max_value_size = 120;
};

struct VerifyResult {
  bool match = false;
  uint64_t ops = 0;
  uint64_t live_keys = 0;
  uint64_t digest = 0;  // ScanDigest of the store
  std::string first_divergent_key;
  std::string detail;
};

// Applies the stream to `db` and to `reference`. `after_op(i)` runs after
// operation i.
Status ApplyMixedOps(DB* db, const VerifySpec& spec, std::map<std::string, std::string>* reference,
                     const std::function<void(uint64_t)>& after_op = {});

// Compares a full scan with the reference; reports the first key at which
// they differ.
VerifyResult CompareWithReference(const std::vector<std::pair<std::string, std::string>>& scan,
                                  const std::map<std::string, std::string>& reference);

// ApplyMixedOps, wait for background work, then a full-scan comparison.
Status RunVerification(DB* db, const VerifySpec& spec, VerifyResult* result,
                       const std::function<void(uint64_t)>& after_op = {});

// FNV-1a over the length-prefixed pairs of a scan.
uint64_t ScanDigest(const std::vector<std::pair<std::string, std::string>>& scan);

}  // namespace cokv
