#include "cokv/logging.h"

#include <unistd.h>

#include <atomic>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>

namespace cokv {

namespace {

std::atomic<int>& Threshold() {
  static std::atomic<int> level = [] {
    const char* env = std::getenv("COKV_LOG_LEVEL");
    return env ? std::atoi(env) : static_cast<int>(LogLevel::kWarn);
  }();
  return level;
}

}  // namespace

void SetLogLevel(LogLevel level) { Threshold().store(static_cast<int>(level)); }

bool LogEnabled(LogLevel level) { return static_cast<int>(level) <= Threshold().load(); }

void Log(LogLevel level, const char* fmt, ...) {
  if (!LogEnabled(level)) return;
  static const char* kNames[] = {"E", "W", "I", "D"};
  char buf[1024];
  va_list ap;
  va_start(ap, fmt);
  std::vsnprintf(buf, sizeof(buf), fmt, ap);
  va_end(ap);
  std::fprintf(stderr, "[%s %d] %s\n", kNames[static_cast<int>(level)], static_cast<int>(::getpid()),
               buf);
}

}  // namespace cokv
