#pragma once

#include <string_view>

namespace sckd::log {

enum class Level { Debug = 0, Info = 1, Warn = 2, Error = 3, Off = 4 };

void set_level(Level level);
Level level();
Level parse_level(std::string_view s);

/// Structured single-line message to stderr: "[level] stage: text".
void write(Level level, std::string_view stage, std::string_view text);

inline void info(std::string_view stage, std::string_view text) { write(Level::Info, stage, text); }
inline void warn(std::string_view stage, std::string_view text) { write(Level::Warn, stage, text); }
inline void error(std::string_view stage, std::string_view text) { write(Level::Error, stage, text); }

}  // namespace sckd::log
