#include "emtune/log.hpp"

#include <iostream>
#include <mutex>

namespace emtune {
namespace {

std::mutex g_sink_mutex;

void stderr_sink(LogLevel level, std::string_view message) {
  std::cerr << (level == LogLevel::warning ? "warning: " : "") << message << '\n';
}

LogSink& current_sink() {
  static LogSink sink = stderr_sink;
  return sink;
}

void emit(LogLevel level, std::string_view message) {
  std::lock_guard lock(g_sink_mutex);
  if (current_sink()) current_sink()(level, message);
}

}  // namespace

LogSink set_log_sink(LogSink sink) {
  std::lock_guard lock(g_sink_mutex);
  auto previous = std::move(current_sink());
  current_sink() = std::move(sink);
  return previous;
}

void log_info(std::string_view message) { emit(LogLevel::info, message); }
void log_warning(std::string_view message) { emit(LogLevel::warning, message); }

}  // namespace emtune
