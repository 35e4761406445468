#pragma once

namespace cokv {

enum class LogLevel { kError = 0, kWarn = 1, kInfo = 2, kDebug = 3 };

// Messages above the threshold are dropped. The default is kWarn, or the
// value of COKV_LOG_LEVEL (0-3) when set.
void SetLogLevel(LogLevel level);
bool LogEnabled(LogLevel level);

void Log(LogLevel level, const char* fmt, ...) __attribute__((format(printf, 2, 3)));

}  // namespace cokv
