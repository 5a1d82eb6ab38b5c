#include "kasimp/log.hpp"

#include <iostream>
#include <mutex>

namespace kas {

namespace {

std::mutex g_mutex;
bool g_verbose = false;

LogSink& sink() {
  static LogSink s = [](LogLevel level, const std::string& message) {
    std::cerr << (level == LogLevel::kWarning ? "warning: " : "") << message << '\n';
  };
  return s;
}

}  // namespace

void set_log_sink(LogSink s) {
  std::lock_guard<std::mutex> lock(g_mutex);
  sink() = std::move(s);
}

void set_log_verbose(bool verbose) {
  std::lock_guard<std::mutex> lock(g_mutex);
  g_verbose = verbose;
}

void log_message(LogLevel level, const std::string& message) {
  std::lock_guard<std::mutex> lock(g_mutex);
  if (level == LogLevel::kInfo && !g_verbose) return;
  if (sink()) sink()(level, message);
}

}  // namespace kas
