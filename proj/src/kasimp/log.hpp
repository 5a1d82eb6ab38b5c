#pragma once

#include <functional>
#include <string>

namespace kas {

enum class LogLevel { kInfo, kWarning };

using LogSink = std::function<void(LogLevel, const std::string&)>;

// Replaces the process-wide sink (stderr by default). Passing an empty
// function silences logging.
void set_log_sink(LogSink sink);
void log_message(LogLevel level, const std::string& message);
// Info messages reach the sink only when verbose (off by default).
void set_log_verbose(bool verbose);

inline void log_info(const std::string& message) { log_message(LogLevel::kInfo, message); }
inline void log_warning(const std::string& message) { log_message(LogLevel::kWarning, message); }

}  // namespace kas
