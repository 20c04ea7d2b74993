#pragma once

#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string>
#include <string_view>

namespace coverage_marl {

enum class LogLevel { Error = 0, Info = 1, Debug = 2 };

/// Verbosity from COVERAGE_MARL_LOG (error, info, debug); defaults to error.
inline LogLevel log_level() {
  static const LogLevel level = [] {
    const char* v = std::getenv("COVERAGE_MARL_LOG");
    if (v == nullptr) return LogLevel::Error;
    const std::string_view s(v);
    if (s == "debug") return LogLevel::Debug;
    if (s == "info") return LogLevel::Info;
    return LogLevel::Error;
  }();
  return level;
}

inline void log_message(LogLevel level, std::string_view msg) {
  if (level > log_level()) return;
  static std::mutex mu;
  static constexpr const char* kNames[] = {"error", "info", "debug"};
  std::lock_guard<std::mutex> lock(mu);
  std::cerr << "[coverage_marl " << kNames[static_cast<int>(level)] << "] " << msg << '\n';
}

}  // namespace coverage_marl
