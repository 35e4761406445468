// Standalone near-data device: serves offloaded compaction halves for one
// database directory until told to shut down.
#include <cstdio>

#include <CLI11.hpp>

#include "cokv/device.h"

int main(int argc, char** argv) {
  CLI::App app{"cokv-device: simulated near-data compaction device"};
  cokv::DeviceConfig config;
  app.add_option("--db", config.db_path, "database directory shared with the host")->required();
  app.add_option("--listen", config.listen_endpoint, "unix socket path (optionally unix:<path>)")
      ->required();
  app.add_option("--slowdown", config.slowdown_factor,
                 "delay multiplier against a 100 MB/s reference rate (0 = none)")
      ->check(CLI::NonNegativeNumber);
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  cokv::Status s = cokv::DeviceMainLoop(config);
  if (!s.ok()) {
    std::fprintf(stderr, "cokv-device: %s\n", s.ToString().c_str());
    return 1;
  }
  return 0;
}
