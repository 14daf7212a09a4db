#include "sckd/log.hpp"

#include <atomic>
#include <cstdio>
#include <stdexcept>
#include <string>

namespace sckd::log {

namespace {
std::atomic<int> g_level{static_cast<int>(Level::Info)};
}

void set_level(Level l) { g_level.store(static_cast<int>(l)); }
Level level() { return static_cast<Level>(g_level.load()); }

Level parse_level(std::string_view s) {
  if (s == "debug") return Level::Debug;
  if (s == "info") return Level::Info;
  if (s == "warn") return Level::Warn;
  if (s == "error") return Level::Error;
  if (s == "off") return Level::Off;
  throw std::invalid_argument("unknown log level: " + std::string(s));
}

void write(Level l, std::string_view stage, std::string_view text) {
  if (static_cast<int>(l) < g_level.load()) return;
  static constexpr const char* names[] = {"debug", "info", "warn", "error"};
  const std::string line = "[" + std::string(names[static_cast<int>(l)]) + "] " + std::string(stage) + ": " +
                           std::string(text) + "\n";
  std::fputs(line.c_str(), stderr);
}

}  // namespace sckd::log
