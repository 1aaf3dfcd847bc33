#include "causalcollab/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace causalcollab {

namespace {

std::atomic<int> g_level{static_cast<int>(LogLevel::info)};
std::mutex g_mutex;
std::function<void(const Json&)> g_sink;

}  // namespace

LogLevel log_level_from_string(const std::string& s) {
  if (s == "debug") return LogLevel::debug;
  if (s == "info") return LogLevel::info;
  if (s == "warn") return LogLevel::warn;
  if (s == "error") return LogLevel::error;
  if (s == "off") return LogLevel::off;
  throw std::invalid_argument("unknown log level '" + s + "'");
}

std::string to_string(LogLevel level) {
  switch (level) {
    case LogLevel::debug: return "debug";
    case LogLevel::info: return "info";
    case LogLevel::warn: return "warn";
    case LogLevel::error: return "error";
    case LogLevel::off: return "off";
  }
  return "off";
}

void set_log_level(LogLevel level) { g_level = static_cast<int>(level); }
LogLevel log_level() { return static_cast<LogLevel>(g_level.load()); }

void set_log_sink(std::function<void(const Json&)> sink) {
  std::lock_guard lock(g_mutex);
  g_sink = std::move(sink);
}

void log_event(LogLevel level, const std::string& event, Json fields) {
  if (static_cast<int>(level) < g_level.load() || level == LogLevel::off) return;
  Json rec = Json::object();
  rec["level"] = to_string(level);
  rec["event"] = event;
  for (auto& [k, v] : fields.items()) rec[k] = v;
  std::lock_guard lock(g_mutex);
  if (g_sink) {
    g_sink(rec);
    return;
  }
  std::string line;
  try {
    line = dump_json(rec);
  } catch (const std::exception&) {
    line = rec.dump();
  }
  std::cerr << line << '\n';
}

}  // namespace causalcollab
