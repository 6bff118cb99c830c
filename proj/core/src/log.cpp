#include "contcal/log.hpp"

#include <iostream>
#include <mutex>

namespace contcal {

namespace {

std::mutex g_log_mutex;
LogSink g_sink;

}  // namespace

LogSink set_warning_sink(LogSink sink) {
  std::lock_guard lock(g_log_mutex);
  std::swap(g_sink, sink);
  return sink;
}

void warn(std::string_view message) {
  std::lock_guard lock(g_log_mutex);
  if (g_sink) {
    g_sink(message);
  } else {
    std::cerr << "[warn] " << message << '\n';
  }
}

}  // namespace contcal
