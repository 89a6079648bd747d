#pragma once

#include <atomic>
#include <iostream>
#include <mutex>
#include <string>

namespace dlmc {

enum class LogLevel { debug = 0, info = 1, warning = 2, error = 3, silent = 4 };

namespace detail {
inline std::atomic<int>& log_threshold() {
  static std::atomic<int> level{static_cast<int>(LogLevel::warning)};
  return level;
}
inline std::mutex& log_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace detail

inline void set_log_level(LogLevel level) { detail::log_threshold() = static_cast<int>(level); }

inline void log(LogLevel level, const std::string& message) {
  if (static_cast<int>(level) < detail::log_threshold()) return;
  static constexpr const char* names[] = {"debug", "info", "warning", "error"};
  std::lock_guard<std::mutex> lock(detail::log_mutex());
  std::clog << "[dlmc " << names[static_cast<int>(level)] << "] " << message << '\n';
}

}  // namespace dlmc
