#pragma once

#include <functional>
#include <string>

#include "causalcollab/json_io.hpp"

namespace causalcollab {

enum class LogLevel { debug = 0, info = 1, warn = 2, error = 3, off = 4 };

LogLevel log_level_from_string(const std::string& s);
std::string to_string(LogLevel level);

void set_log_level(LogLevel level);
LogLevel log_level();

/// Replaces the stderr writer; pass an empty function to restore it.
/// Each record is one JSON object: {"level", "event", ...fields}.
void set_log_sink(std::function<void(const Json&)> sink);

void log_event(LogLevel level, const std::string& event, Json fields = Json::object());

inline void log_info(const std::string& event, Json fields = Json::object()) {
  log_event(LogLevel::info, event, std::move(fields));
}
inline void log_warn(const std::string& event, Json fields = Json::object()) {
  log_event(LogLevel::warn, event, std::move(fields));
}

}  // namespace causalcollab
