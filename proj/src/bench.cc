#include "cokv/bench.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>

namespace cokv {

const char* WorkloadKindName(WorkloadKind k) {
  switch (k) {
    case WorkloadKind::kFillSeq:
      return "fillseq";
    case WorkloadKind::kFillRandom:
      return "fillrandom";
    case WorkloadKind::kYcsb:
      return "ycsb";
  }
  return "?";
}

bool ParseWorkloadKind(std::string_view s, WorkloadKind* out) {
  for (auto k : {WorkloadKind::kFillSeq, WorkloadKind::kFillRandom, WorkloadKind::kYcsb}) {
    if (s == WorkloadKindName(k)) {
      *out = k;
      return true;
    }
  }
  return false;
}

namespace {

size_t DecimalDigits(uint64_t v) {
  size_t d = 1;
  while (v >= 10) {
    v /= 10;
    d++;
  }
  return d;
}

}  // namespace

Status WorkloadSpec::Validate() const {
  if (key_size == 0 || key_size > 0xffff) return Status::InvalidArgument("key size out of range");
  if (!(read_ratio >= 0.0 && read_ratio <= 1.0)) {
    return Status::InvalidArgument("read ratio must lie in [0, 1]");
  }
  if (!std::isfinite(zipf_theta) || zipf_theta < 0) {
    return Status::InvalidArgument("zipf theta must be finite and non-negative");
  }
  uint64_t keyspace = num_ops;
  if (kind == WorkloadKind::kYcsb) {
    if (value_size == 0) return Status::InvalidArgument("ycsb needs a non-zero value size");
    if (ycsb_load_count() == 0) return Status::InvalidArgument("ycsb load phase is empty");
    keyspace = ycsb_load_count();
  }
  if (keyspace > 0 && DecimalDigits(keyspace - 1) > key_size) {
    return Status::InvalidArgument("key size too small for the key space");
  }
  return Status::OK();
}

ZipfSampler::ZipfSampler(uint64_t n, double theta) : theta_(theta) {
  if (n == 0) n = 1;
  cdf_.resize(n);
  double sum = 0.0;
  for (uint64_t i = 0; i < n; i++) {
    sum += 1.0 / std::pow(static_cast<double>(i + 1), theta);
    cdf_[i] = sum;
  }
  norm_ = sum;
  for (double& c : cdf_) c /= sum;
  cdf_.back() = 1.0;
}

uint64_t ZipfSampler::Sample(std::mt19937_64& rng) const {
  double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
  if (it == cdf_.end()) --it;
  return static_cast<uint64_t>(it - cdf_.begin());
}

double ZipfSampler::Probability(uint64_t rank) const {
  if (rank >= cdf_.size()) return 0.0;
  return 1.0 / std::pow(static_cast<double>(rank + 1), theta_) / norm_;
}

OperationStream::OperationStream(const WorkloadSpec& spec) : spec_(spec), rng_(spec.seed) {
  // Values are slices of one seeded pool, as db_bench does.
  size_t pool = std::max<size_t>(1 << 20, spec.value_size * 2);
  value_pool_.resize(pool);
  for (char& c : value_pool_) c = static_cast<char>(' ' + rng_() % 95);
  if (spec.kind == WorkloadKind::kYcsb) {
    load_count_ = spec.ycsb_load_count();
    total_ = load_count_ + spec.ycsb_run_count();
    zipf_.emplace(load_count_, spec.zipf_theta);
  } else {
    total_ = spec.num_ops;
  }
}

std::string OperationStream::MakeKey(uint64_t index) const {
  std::string digits = std::to_string(index);
  std::string key(spec_.key_size, '0');
  if (digits.size() >= key.size()) return digits.substr(digits.size() - key.size());
  key.replace(key.size() - digits.size(), digits.size(), digits);
  return key;
}

std::string_view OperationStream::MakeValue() {
  size_t off = rng_() % (value_pool_.size() - spec_.value_size + 1);
  return std::string_view(value_pool_).substr(off, spec_.value_size);
}

bool OperationStream::Next(Operation* op) {
  if (index_ >= total_) return false;
  const uint64_t i = index_++;
  switch (spec_.kind) {
    case WorkloadKind::kFillSeq:
      op->type = Operation::kPut;
      op->timed = true;
      op->key = MakeKey(i);
      op->value = MakeValue();
      break;
    case WorkloadKind::kFillRandom:
      op->type = Operation::kPut;
      op->timed = true;
      op->key = MakeKey(std::uniform_int_distribution<uint64_t>(0, spec_.num_ops - 1)(rng_));
      op->value = MakeValue();
      break;
    case WorkloadKind::kYcsb:
      if (i < load_count_) {
        op->type = Operation::kPut;
        op->timed = false;
        op->key = MakeKey(i);
        op->value = MakeValue();
      } else {
        op->timed = true;
        bool read = std::uniform_real_distribution<double>(0.0, 1.0)(rng_) < spec_.read_ratio;
        op->key = MakeKey(zipf_->Sample(rng_));
        if (read) {
          op->type = Operation::kGet;
          op->value = {};
        } else {
          op->type = Operation::kPut;
          op->value = MakeValue();
        }
      }
      break;
  }
  return true;
}

LatencyRecorder::LatencyRecorder(size_t capacity, uint64_t seed)
    : capacity_(capacity), rng_(seed) {
  samples_.reserve(std::min<size_t>(capacity, 1 << 16));
}

void LatencyRecorder::Add(double micros) {
  count_++;
  sum_ += micros;
  if (samples_.size() < capacity_) {
    samples_.push_back(micros);
    return;
  }
  uint64_t j = std::uniform_int_distribution<uint64_t>(0, count_ - 1)(rng_);
  if (j < capacity_) samples_[j] = micros;
}

double LatencyRecorder::Percentile(double p) const {
  if (samples_.empty()) return 0.0;
  std::vector<double> sorted = samples_;
  size_t idx = static_cast<size_t>(std::ceil(p / 100.0 * static_cast<double>(sorted.size())));
  idx = std::clamp<size_t>(idx, 1, sorted.size()) - 1;
  std::nth_element(sorted.begin(), sorted.begin() + idx, sorted.end());
  return sorted[idx];
}

Status RunWorkload(DB* db, const WorkloadSpec& spec, MetricsLedger* ledger) {
  Status s = spec.Validate();
  if (!s.ok()) return s;
  using Clock = std::chrono::steady_clock;
  const DbStats before = db->GetStats();
  OperationStream ops(spec);
  Operation op;
  std::string scratch;
  bool timing = false;
  Clock::time_point run_start;
  while (ops.Next(&op)) {
    if (op.timed && !timing) {
      // Let the load phase settle so the timed phase starts from a quiet store.
      if (spec.kind == WorkloadKind::kYcsb) {
        s = db->WaitForIdle();
        if (!s.ok()) return s;
      }
      timing = true;
      run_start = Clock::now();
    }
    auto t0 = Clock::now();
    if (op.type == Operation::kPut) {
      s = db->Put(op.key, op.value);
    } else {
      s = db->Get(op.key, &scratch);
      if (s.IsNotFound()) s = Status::OK();
    }
    if (!s.ok()) return s;
    if (!op.timed) continue;
    double micros = std::chrono::duration<double, std::micro>(Clock::now() - t0).count();
    ledger->op_count++;
    if (op.type == Operation::kPut) {
      ledger->update_latency.Add(micros);
      ledger->timed_user_bytes += op.key.size() + op.value.size();
    } else {
      ledger->read_latency.Add(micros);
    }
  }
  if (timing) ledger->elapsed_s = std::chrono::duration<double>(Clock::now() - run_start).count();
  s = db->WaitForIdle();
  if (!s.ok()) return s;

  const DbStats after = db->GetStats();
  ledger->user_bytes = after.user_bytes - before.user_bytes;
  ledger->host_written_bytes = after.host_written() - before.host_written();
  ledger->device_written_bytes = after.device_bytes - before.device_bytes;
  ledger->transfer_bytes = after.transfer_bytes - before.transfer_bytes;
  ledger->db_stats = after;
  ledger->compactions = db->CompactionLog();
  return Status::OK();
}

namespace {

double Fraction(uint64_t num, uint64_t den) {
  return den ? static_cast<double>(num) / static_cast<double>(den) : 0.0;
}

}  // namespace

double ShapeStats::single_lk_fraction() const { return Fraction(single_lk_deep, total_deep); }
double ShapeStats::single_lk_fraction_all() const { return Fraction(single_lk_all, total); }
double ShapeStats::k1_at_least_two_fraction() const { return Fraction(k1_at_least_two, total); }
double ShapeStats::k1_exactly_two_fraction() const { return Fraction(k1_exactly_two, total); }

ShapeStats CompactionShapeStats(const std::vector<CompactionRecord>& log) {
  ShapeStats st;
  for (const auto& c : log) {
    if (c.path == CompactionPath::kTrivialMove) continue;
    st.histogram[{c.inputs_k, c.inputs_k1}]++;
    st.total++;
    if (c.inputs_k == 1) st.single_lk_all++;
    if (c.inputs_k1 >= 2) st.k1_at_least_two++;
    if (c.inputs_k1 == 2) st.k1_exactly_two++;
    if (c.level_k >= 1) {
      st.total_deep++;
      if (c.inputs_k == 1) st.single_lk_deep++;
    }
  }
  return st;
}

Report ComputeReport(const MetricsLedger& ledger, const WorkloadSpec& spec,
                     const std::string& mode) {
  Report r;
  r.mode = mode;
  r.spec = spec;
  if (ledger.user_bytes > 0) {
    r.write_amplification =
        static_cast<double>(ledger.host_written_bytes) / static_cast<double>(ledger.user_bytes);
  }
  if (ledger.elapsed_s > 0) {
    r.throughput_mb_s = static_cast<double>(ledger.timed_user_bytes) / 1048576.0 / ledger.elapsed_s;
    r.ops_per_sec = static_cast<double>(ledger.op_count) / ledger.elapsed_s;
  }
  r.mean_update_latency_us = ledger.update_latency.mean();
  r.p95_update_latency_us = ledger.update_latency.Percentile(95);
  r.mean_read_latency_us = ledger.read_latency.mean();
  r.p95_read_latency_us = ledger.read_latency.Percentile(95);
  r.user_bytes = ledger.user_bytes;
  r.host_written_bytes = ledger.host_written_bytes;
  r.device_written_bytes = ledger.device_written_bytes;
  r.transfer_bytes = ledger.transfer_bytes;
  r.op_count = ledger.op_count;
  r.elapsed_s = ledger.elapsed_s;
  r.shape = CompactionShapeStats(ledger.compactions);
  r.db_stats = ledger.db_stats;
  return r;
}

nlohmann::json ShapeStatsToJson(const ShapeStats& s) {
  nlohmann::json hist = nlohmann::json::array();
  for (const auto& [shape, count] : s.histogram) {
    hist.push_back({{"inputs_k", shape.first}, {"inputs_k1", shape.second}, {"count", count}});
  }
  return {{"histogram", hist},
          {"merging_compactions", s.total},
          {"merging_compactions_k_ge_1", s.total_deep},
          {"single_lk_fraction", s.single_lk_fraction()},
          {"single_lk_fraction_all_levels", s.single_lk_fraction_all()},
          {"inputs_k1_ge_2_fraction", s.k1_at_least_two_fraction()},
          {"inputs_k1_eq_2_fraction", s.k1_exactly_two_fraction()}};
}

nlohmann::json ReportToJson(const Report& r) {
  nlohmann::json j;
  j["mode"] = r.mode;
  j["workload"] = {{"kind", WorkloadKindName(r.spec.kind)},
                   {"num_ops", r.spec.num_ops},
                   {"key_size", r.spec.key_size},
                   {"value_size", r.spec.value_size},
                   {"read_ratio", r.spec.read_ratio},
                   {"zipf_theta", r.spec.zipf_theta},
                   {"load_bytes", r.spec.load_bytes},
                   {"run_bytes", r.spec.run_bytes},
                   {"seed", r.spec.seed}};
  j["write_amplification"] =
      r.write_amplification ? nlohmann::json(*r.write_amplification) : nlohmann::json(nullptr);
  j["throughput_mb_s"] = r.throughput_mb_s;
  j["ops_per_sec"] = r.ops_per_sec;
  j["mean_update_latency_us"] = r.mean_update_latency_us;
  j["p95_update_latency_us"] = r.p95_update_latency_us;
  j["mean_read_latency_us"] = r.mean_read_latency_us;
  j["p95_read_latency_us"] = r.p95_read_latency_us;
  j["device_written_bytes"] = r.device_written_bytes;
  j["transfer_bytes"] = r.transfer_bytes;
  j["compaction_histogram"] = ShapeStatsToJson(r.shape)["histogram"];
  j["compaction_shape"] = ShapeStatsToJson(r.shape);
  j["user_bytes"] = r.user_bytes;
  j["host_written_bytes"] = r.host_written_bytes;
  j["op_count"] = r.op_count;
  j["elapsed_s"] = r.elapsed_s;
  const DbStats& d = r.db_stats;
  j["host_written_breakdown"] = {{"wal_bytes", d.wal_bytes},
                                 {"manifest_bytes", d.manifest_bytes},
                                 {"flush_bytes", d.flush_bytes},
                                 {"compaction_bytes", d.host_compaction_bytes}};
  j["compactions"] = {{"merging", d.compactions},
                      {"trivial_moves", d.trivial_moves},
                      {"collaborative", d.collaborative},
                      {"fallbacks", d.fallbacks}};
  j["flushes"] = d.flushes;
  j["stall_micros"] = d.stall_micros;
  return j;
}

std::string ShapeStatsToTable(const ShapeStats& s) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof(line), "%10s %10s %10s %8s\n", "|L_k|", "|L_k+1|", "count", "share");
  out += line;
  for (const auto& [shape, count] : s.histogram) {
    std::snprintf(line, sizeof(line), "%10zu %10zu %10llu %7.2f%%\n", shape.first, shape.second,
                  static_cast<unsigned long long>(count), 100.0 * Fraction(count, s.total));
    out += line;
  }
  std::snprintf(line, sizeof(line),
                "merging compactions: %llu (k>=1: %llu)\n"
                "single L_k input (k>=1): %.4f   (all levels: %.4f)\n"
                "|L_k+1 inputs| >= 2: %.4f   (== 2: %.4f)\n",
                static_cast<unsigned long long>(s.total),
                static_cast<unsigned long long>(s.total_deep), s.single_lk_fraction(),
                s.single_lk_fraction_all(), s.k1_at_least_two_fraction(),
                s.k1_exactly_two_fraction());
  out += line;
  return out;
}

std::string ReportToTable(const Report& r) {
  std::string out;
  char line[256];
  auto row = [&](const char* name, const std::string& value) {
    std::snprintf(line, sizeof(line), "%-24s %s\n", name, value.c_str());
    out += line;
  };
  auto num = [](double v, int prec = 3) {
    char b[64];
    std::snprintf(b, sizeof(b), "%.*f", prec, v);
    return std::string(b);
  };
  row("mode", r.mode);
  row("workload", WorkloadKindName(r.spec.kind));
  row("write_amplification", r.write_amplification ? num(*r.write_amplification) : "undefined");
  row("throughput_mb_s", num(r.throughput_mb_s));
  row("ops_per_sec", num(r.ops_per_sec, 1));
  row("mean_update_latency_us", num(r.mean_update_latency_us));
  row("p95_update_latency_us", num(r.p95_update_latency_us));
  if (r.spec.read_ratio > 0) {
    row("mean_read_latency_us", num(r.mean_read_latency_us));
    row("p95_read_latency_us", num(r.p95_read_latency_us));
  }
  row("user_bytes", std::to_string(r.user_bytes));
  row("host_written_bytes", std::to_string(r.host_written_bytes));
  row("device_written_bytes", std::to_string(r.device_written_bytes));
  row("transfer_bytes", std::to_string(r.transfer_bytes));
  row("elapsed_s", num(r.elapsed_s));
  row("compactions", std::to_string(r.db_stats.compactions) + " merging, " +
                         std::to_string(r.db_stats.trivial_moves) + " trivial, " +
                         std::to_string(r.db_stats.collaborative) + " collaborative, " +
                         std::to_string(r.db_stats.fallbacks) + " fallback");
  return out;
}

nlohmann::json CompactionLogToJson(const std::vector<CompactionRecord>& log) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& c : log) {
    arr.push_back({{"id", c.id},
                   {"level_k", c.level_k},
                   {"target_level", c.target_level},
                   {"inputs_k", c.inputs_k},
                   {"inputs_k1", c.inputs_k1},
                   {"input_bytes", c.input_bytes},
                   {"path", CompactionPathName(c.path)},
                   {"host_bytes", c.host_bytes},
                   {"device_bytes", c.device_bytes},
                   {"elapsed_us", c.elapsed_us},
                   {"device_elapsed_us", c.device_elapsed_us}});
  }
  return arr;
}

Status CompactionLogFromJson(const nlohmann::json& j, std::vector<CompactionRecord>* log) {
  if (!j.is_array()) return Status::InvalidArgument("compaction log must be a JSON array");
  log->clear();
  try {
    for (const auto& e : j) {
      CompactionRecord c;
      c.id = e.at("id").get<uint64_t>();
      c.level_k = e.at("level_k").get<int>();
      c.target_level = e.at("target_level").get<int>();
      c.inputs_k = e.at("inputs_k").get<size_t>();
      c.inputs_k1 = e.at("inputs_k1").get<size_t>();
      c.input_bytes = e.value("input_bytes", uint64_t{0});
      std::string path = e.at("path").get<std::string>();
      bool known = false;
      for (auto p : {CompactionPath::kTrivialMove, CompactionPath::kBaseline,
                     CompactionPath::kCollaborative, CompactionPath::kFallback}) {
        if (path == CompactionPathName(p)) {
          c.path = p;
          known = true;
        }
      }
      if (!known) return Status::InvalidArgument("unknown compaction path " + path);
      c.host_bytes = e.value("host_bytes", uint64_t{0});
      c.device_bytes = e.value("device_bytes", uint64_t{0});
      c.elapsed_us = e.value("elapsed_us", uint64_t{0});
      c.device_elapsed_us = e.value("device_elapsed_us", uint64_t{0});
      log->push_back(c);
    }
  } catch (const nlohmann::json::exception& ex) {
    return Status::InvalidArgument(std::string("bad compaction log: ") + ex.what());
  }
  return Status::OK();
}

uint64_t ScanDigest(const std::vector<std::pair<std::string, std::string>>& scan) {
  uint64_t h = 1469598103934665603ull;
  auto mix = [&](std::string_view s) {
    uint32_t n = static_cast<uint32_t>(s.size());
    for (int i = 0; i < 4; i++) {
      h ^= (n >> (8 * i)) & 0xff;
      h *= 1099511628211ull;
    }
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ull;
    }
  };
  for (const auto& [k, v] : scan) {
    mix(k);
    mix(v);
  }
  return h;
}

Status ApplyMixedOps(DB* db, const VerifySpec& spec, std::map<std::string, std::string>* reference,
                     const std::function<void(uint64_t)>& after_op) {
  if (spec.key_space == 0 || spec.key_size == 0) return Status::InvalidArgument("empty key space");
  std::mt19937_64 rng(spec.seed);
  std::uniform_int_distribution<uint64_t> pick_key(0, spec.key_space - 1);
  std::uniform_int_distribution<size_t> pick_len(0, spec.max_value_size);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  char buf[32];
  std::string value;
  for (uint64_t i = 0; i < spec.num_ops; i++) {
    std::snprintf(buf, sizeof(buf), "%0*llu", static_cast<int>(std::min<size_t>(spec.key_size, 24)),
                  static_cast<unsigned long long>(pick_key(rng)));
    std::string key(buf);
    Status s;
    if (coin(rng) < spec.delete_ratio) {
      s = db->Delete(key);
      reference->erase(key);
    } else {
      value.resize(pick_len(rng));
      for (char& c : value) c = static_cast<char>(rng() & 0xff);
      s = db->Put(key, value);
      (*reference)[key] = value;
    }
    if (!s.ok()) return s;
    if (after_op) after_op(i);
  }
  return Status::OK();
}

VerifyResult CompareWithReference(const std::vector<std::pair<std::string, std::string>>& scan,
                                  const std::map<std::string, std::string>& reference) {
  VerifyResult r;
  r.live_keys = scan.size();
  r.digest = ScanDigest(scan);
  auto a = scan.begin();
  auto b = reference.begin();
  while (a != scan.end() && b != reference.end()) {
    if (a->first != b->first) {
      r.first_divergent_key = std::min(a->first, b->first);
      r.detail = a->first < b->first ? "key present in store only" : "key missing from store";
      return r;
    }
    if (a->second != b->second) {
      r.first_divergent_key = a->first;
      r.detail = "value differs";
      return r;
    }
    ++a;
    ++b;
  }
  if (a != scan.end()) {
    r.first_divergent_key = a->first;
    r.detail = "key present in store only";
  } else if (b != reference.end()) {
    r.first_divergent_key = b->first;
    r.detail = "key missing from store";
  } else {
    r.match = true;
  }
  return r;
}

Status RunVerification(DB* db, const VerifySpec& spec, VerifyResult* result,
                       const std::function<void(uint64_t)>& after_op) {
  std::map<std::string, std::string> reference;
  Status s = ApplyMixedOps(db, spec, &reference, after_op);
  if (s.ok()) s = db->WaitForIdle();
  std::vector<std::pair<std::string, std::string>> scan;
  if (s.ok()) s = db->ScanAll(&scan);
  if (!s.ok()) return s;
  *result = CompareWithReference(scan, reference);
  result->ops = spec.num_ops;
  return Status::OK();
}

}  // namespace cokv
