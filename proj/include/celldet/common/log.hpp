#pragma once

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <utility>

namespace celldet::log {

enum class Level { kQuiet = 0, kWarn = 1, kInfo = 2, kDebug = 3 };

// Verbosity comes from the CELLDET_LOG environment variable:
// quiet | warn | info (default) | debug.
inline Level level() {
  static const Level lvl = [] {
    const char* env = std::getenv("CELLDET_LOG");
    if (!env) return Level::kInfo;
    if (std::strcmp(env, "quiet") == 0) return Level::kQuiet;
    if (std::strcmp(env, "warn") == 0) return Level::kWarn;
    if (std::strcmp(env, "debug") == 0) return Level::kDebug;
    return Level::kInfo;
  }();
  return lvl;
}

template <typename... Args>
void warn(const char* fmt, Args&&... args) {
  if (level() >= Level::kWarn) {
    std::fprintf(stderr, "[warn] ");
    std::fprintf(stderr, fmt, std::forward<Args>(args)...);
    std::fprintf(stderr, "\n");
  }
}

template <typename... Args>
void info(const char* fmt, Args&&... args) {
  if (level() >= Level::kInfo) {
    std::fprintf(stderr, fmt, std::forward<Args>(args)...);
    std::fprintf(stderr, "\n");
  }
}

template <typename... Args>
void debug(const char* fmt, Args&&... args) {
  if (level() >= Level::kDebug) {
    std::fprintf(stderr, "[debug] ");
    std::fprintf(stderr, fmt, std::forward<Args>(args)...);
    std::fprintf(stderr, "\n");
  }
}

}  // namespace celldet::log
