#pragma once

#include <cstdlib>
#include <iostream>
#include <string>
#include <string_view>

namespace atlasground {

enum class LogLevel { kDebug = 0, kInfo = 1, kWarn = 2, kError = 3, kOff = 4 };

namespace detail {
inline LogLevel& log_level_ref() {
  static LogLevel level = [] {
    const char* env = std::getenv("ATLASGROUND_LOG");
    if (!env) return LogLevel::kInfo;
    const std::string_view v(env);
    if (v == "debug") return LogLevel::kDebug;
    if (v == "info") return LogLevel::kInfo;
    if (v == "warn") return LogLevel::kWarn;
    if (v == "error") return LogLevel::kError;
    if (v == "off") return LogLevel::kOff;
    return LogLevel::kInfo;
  }();
  return level;
}
}  // namespace detail

inline void set_log_level(LogLevel level) { detail::log_level_ref() = level; }
inline bool log_enabled(LogLevel level) {
  return static_cast<int>(level) >= static_cast<int>(detail::log_level_ref());
}

inline void log_debug(const std::string& msg) {
  if (log_enabled(LogLevel::kDebug)) std::cerr << "[debug] " << msg << "\n";
}
inline void log_info(const std::string& msg) {
  if (log_enabled(LogLevel::kInfo)) std::cerr << "[info] " << msg << "\n";
}
inline void log_warn(const std::string& msg) {
  if (log_enabled(LogLevel::kWarn)) std::cerr << "[warn] " << msg << "\n";
}
inline void log_error(const std::string& msg) {
  if (log_enabled(LogLevel::kError)) std::cerr << "[error] " << msg << "\n";
}

}  // namespace atlasground
