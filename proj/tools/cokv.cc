// cokv: run workloads against the store in baseline or collaborative mode,
// host the simulated device, verify a seeded run, or summarize compactions.
#include <unistd.h>

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "cokv/bench.h"
#include "cokv/db.h"
#include "cokv/device.h"

namespace fs = std::filesystem;
using cokv::Status;

namespace {

struct RunConfig {
  std::string mode = "baseline";
  std::string db;
  bool keep_db = false;
  std::string device_endpoint;
  bool auto_spawn_device = false;
  double device_slowdown = 0.0;
  uint64_t l1_budget = 10ull << 20;
  double growth_factor = 10.0;
  uint64_t device_timeout_ms = 60000;
  std::string report;
};

// Usage errors exit with 2, runtime failures with 1.
struct UsageError {
  std::string what;
};

void AddStoreFlags(CLI::App* cmd, RunConfig* rc) {
  cmd->add_option("--mode", rc->mode, "baseline or cokv")
      ->check(CLI::IsMember({"baseline", "cokv"}));
  cmd->add_option("--db", rc->db, "database directory (default: fresh temporary directory)");
  cmd->add_flag("--keep-db", rc->keep_db, "keep a temporary database directory");
  cmd->add_option("--device-endpoint", rc->device_endpoint, "unix socket of a running device");
  cmd->add_flag("--auto-spawn-device", rc->auto_spawn_device,
                "start a device process for this run and stop it afterwards");
  cmd->add_option("--device-slowdown", rc->device_slowdown,
                  "slowdown factor for an auto-spawned device")
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--l1-budget", rc->l1_budget, "L1 byte budget");
  cmd->add_option("--growth-factor", rc->growth_factor, "per-level budget multiplier")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--device-timeout-ms", rc->device_timeout_ms, "device reply timeout");
}

// Owns the store, an optional device child and a temporary directory, and
// tears them down in that order.
class Session {
 public:
  ~Session() {
    db.reset();
    if (device) {
      int code = 0;
      device->Shutdown(&code);
    }
    if (temp_dir_ && !keep_) {
      std::error_code ec;
      fs::remove_all(*temp_dir_, ec);
    }
  }

  Status Open(const RunConfig& rc) {
    cokv::Options opts;
    if (!cokv::ParseCompactionMode(rc.mode, &opts.mode)) throw UsageError{"bad --mode " + rc.mode};
    if (opts.mode == cokv::CompactionMode::kCokv && rc.device_endpoint.empty() &&
        !rc.auto_spawn_device) {
      throw UsageError{"--mode cokv needs --device-endpoint or --auto-spawn-device"};
    }
    keep_ = rc.keep_db;
    std::string path = rc.db;
    if (path.empty()) {
      std::string tmpl = (fs::temp_directory_path() / "cokv-XXXXXX").string();
      if (::mkdtemp(tmpl.data()) == nullptr) return Status::IOError("mkdtemp failed");
      path = tmpl;
      temp_dir_ = path;
    }
    std::error_code ec;
    fs::create_directories(path, ec);
    path = fs::absolute(path).lexically_normal().string();
    db_path = path;

    opts.levels.l1_budget = rc.l1_budget;
    opts.levels.growth_factor = rc.growth_factor;
    opts.device_timeout = std::chrono::milliseconds(rc.device_timeout_ms);
    if (opts.mode == cokv::CompactionMode::kCokv) {
      opts.device_endpoint = rc.device_endpoint;
      if (rc.auto_spawn_device) {
        static std::atomic<int> counter{0};
        cokv::DeviceConfig dc;
        dc.db_path = path;
        dc.slowdown_factor = rc.device_slowdown;
        dc.listen_endpoint = rc.device_endpoint.empty()
                                 ? (fs::temp_directory_path() /
                                    ("cokv-dev-" + std::to_string(::getpid()) + "-" +
                                     std::to_string(counter++) + ".sock"))
                                       .string()
                                 : rc.device_endpoint;
        Status s = cokv::DeviceProcess::Spawn(cokv::SiblingExecutable("cokv-device"), dc, &device);
        if (!s.ok()) return s;
        opts.device_endpoint = dc.listen_endpoint;
      }
    }
    return cokv::DB::Open(opts, path, &db);
  }

  std::string db_path;
  std::unique_ptr<cokv::DB> db;
  std::unique_ptr<cokv::DeviceProcess> device;

 private:
  std::optional<std::string> temp_dir_;
  bool keep_ = false;
};

int Fail(const std::string& what, const Status& s) {
  std::fprintf(stderr, "cokv: %s: %s\n", what.c_str(), s.ToString().c_str());
  return 1;
}

int RunBench(const RunConfig& rc, const cokv::WorkloadSpec& spec) {
  Status s = spec.Validate();
  if (!s.ok()) throw UsageError{s.ToString()};
  Session session;
  s = session.Open(rc);
  if (!s.ok()) return Fail("open", s);
  cokv::MetricsLedger ledger;
  s = cokv::RunWorkload(session.db.get(), spec, &ledger);
  if (!s.ok()) return Fail("workload", s);
  cokv::Report report = cokv::ComputeReport(ledger, spec, rc.mode);
  std::cout << cokv::ReportToTable(report);
  if (!rc.report.empty()) {
    nlohmann::json j = cokv::ReportToJson(report);
    j["compaction_log"] = cokv::CompactionLogToJson(ledger.compactions);
    std::ofstream f(rc.report);
    f << j.dump(2) << "\n";
    if (!f) return Fail("write report", Status::IOError(rc.report));
  }
  return 0;
}

int RunVerify(const RunConfig& rc, const cokv::VerifySpec& spec) {
  Session session;
  Status s = session.Open(rc);
  if (!s.ok()) return Fail("open", s);
  cokv::VerifyResult result;
  s = cokv::RunVerification(session.db.get(), spec, &result);
  if (!s.ok()) return Fail("verify", s);
  if (!result.match) {
    std::printf("verify FAILED: first divergent key \"%s\" (%s)\n",
                result.first_divergent_key.c_str(), result.detail.c_str());
    return 1;
  }
  cokv::DbStats st = session.db->GetStats();
  std::printf("verify ok: mode=%s seed=%llu ops=%llu live_keys=%llu digest=%016llx "
              "compactions=%llu collaborative=%llu fallbacks=%llu\n",
              rc.mode.c_str(), static_cast<unsigned long long>(spec.seed),
              static_cast<unsigned long long>(result.ops),
              static_cast<unsigned long long>(result.live_keys),
              static_cast<unsigned long long>(result.digest),
              static_cast<unsigned long long>(st.compactions),
              static_cast<unsigned long long>(st.collaborative),
              static_cast<unsigned long long>(st.fallbacks));
  return 0;
}

int RunStats(const std::string& log_path, bool json_out) {
  std::ifstream f(log_path);
  if (!f) return Fail("open log", Status::IOError(log_path));
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    return Fail("parse log", Status::InvalidArgument(e.what()));
  }
  // Accepts a bench report (with an embedded log) or a bare log array.
  if (j.is_object()) {
    if (!j.contains("compaction_log")) {
      return Fail("parse log", Status::InvalidArgument("report has no compaction_log"));
    }
    j = j["compaction_log"];
  }
  std::vector<cokv::CompactionRecord> log;
  Status s = cokv::CompactionLogFromJson(j, &log);
  if (!s.ok()) return Fail("parse log", s);
  cokv::ShapeStats st = cokv::CompactionShapeStats(log);
  if (json_out) {
    std::cout << cokv::ShapeStatsToJson(st).dump(2) << "\n";
  } else {
    std::cout << cokv::ShapeStatsToTable(st);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cokv: leveled LSM store with collaborative host/device compaction"};
  app.require_subcommand(1);

  RunConfig rc;
  cokv::WorkloadSpec spec;
  std::string workload = "fillseq";
  std::optional<size_t> value_size;
  auto* bench = app.add_subcommand("bench", "run a workload and report metrics");
  AddStoreFlags(bench, &rc);
  bench->add_option("--workload", workload, "fillseq, fillrandom or ycsb")
      ->check(CLI::IsMember({"fillseq", "fillrandom", "ycsb"}));
  bench->add_option("--num", spec.num_ops, "operations (fillseq/fillrandom)");
  bench->add_option("--key-size", spec.key_size, "key bytes");
  bench->add_option("--value-size", value_size, "value bytes (default 100, ycsb 1024)");
  bench->add_option("--read-ratio", spec.read_ratio, "ycsb read fraction")
      ->check(CLI::Range(0.0, 1.0));
  bench->add_option("--zipf-theta", spec.zipf_theta, "ycsb zipf skew");
  bench->add_option("--load-bytes", spec.load_bytes, "ycsb load volume");
  bench->add_option("--run-bytes", spec.run_bytes, "ycsb run volume");
  bench->add_option("--seed", spec.seed, "workload seed");
  bench->add_option("--report", rc.report, "write the JSON report here");

  RunConfig vrc;
  cokv::VerifySpec vspec;
  auto* verify = app.add_subcommand("verify", "replay a seeded stream and compare with a map");
  AddStoreFlags(verify, &vrc);
  verify->add_option("--seed", vspec.seed, "stream seed");
  verify->add_option("--num", vspec.num_ops, "operations");
  verify->add_option("--key-space", vspec.key_space, "distinct keys");
  verify->add_option("--delete-ratio", vspec.delete_ratio, "delete fraction")
      ->check(CLI::Range(0.0, 1.0));

  cokv::DeviceConfig dc;
  auto* device = app.add_subcommand("device", "serve as the compaction device");
  device->add_option("--db", dc.db_path, "database directory")->required();
  device->add_option("--listen", dc.listen_endpoint, "unix socket path")->required();
  device->add_option("--slowdown", dc.slowdown_factor, "delay multiplier")
      ->check(CLI::NonNegativeNumber);

  std::string log_path;
  bool stats_json = false;
  auto* stats = app.add_subcommand("stats", "compaction shape histogram of a run");
  stats->add_option("--log", log_path, "bench report or compaction log (JSON)")->required();
  stats->add_flag("--json", stats_json, "print JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*bench) {
      if (!cokv::ParseWorkloadKind(workload, &spec.kind)) throw UsageError{"bad --workload"};
      spec.value_size = value_size.value_or(spec.kind == cokv::WorkloadKind::kYcsb ? 1024 : 100);
      if (spec.kind == cokv::WorkloadKind::kYcsb && spec.load_bytes == 0) {
        spec.load_bytes = 64ull << 20;
      }
      if (spec.kind == cokv::WorkloadKind::kYcsb && spec.run_bytes == 0) {
        spec.run_bytes = 2 * spec.load_bytes;
      }
      if (spec.kind == cokv::WorkloadKind::kYcsb && !bench->count("--read-ratio")) {
        spec.read_ratio = 0.0;
      }
      return RunBench(rc, spec);
    }
    if (*verify) return RunVerify(vrc, vspec);
    if (*device) {
      Status s = cokv::DeviceMainLoop(dc);
      return s.ok() ? 0 : Fail("device", s);
    }
    if (*stats) return RunStats(log_path, stats_json);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "cokv: %s\n\n%s", e.what.c_str(), app.help().c_str());
    return 2;
  }
  return 2;
}
