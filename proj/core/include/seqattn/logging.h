#pragma once

#include <string>

namespace seqattn {

enum class LogLevel { Error = 0, Warn = 1, Info = 2, Debug = 3 };

// Verbosity comes from the SEQATTN_LOG environment variable
// (error|warn|info|debug), read once. Default is warn.
LogLevel log_level();

void log_message(LogLevel level, const std::string& message);

inline void log_warn(const std::string& m) { log_message(LogLevel::Warn, m); }
inline void log_info(const std::string& m) { log_message(LogLevel::Info, m); }
inline void log_debug(const std::string& m) { log_message(LogLevel::Debug, m); }

}  // namespace seqattn
