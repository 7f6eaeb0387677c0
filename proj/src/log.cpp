#include "mrt/log.hpp"

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <mutex>

namespace mrt {

namespace {

LogLevel initial_level() {
    const char* env = std::getenv("MRT_LOG_LEVEL");
    if (env == nullptr)
        return LogLevel::warn;
    if (std::strcmp(env, "debug") == 0)
        return LogLevel::debug;
    if (std::strcmp(env, "info") == 0)
        return LogLevel::info;
    if (std::strcmp(env, "warn") == 0)
        return LogLevel::warn;
    if (std::strcmp(env, "error") == 0)
        return LogLevel::error;
    if (std::strcmp(env, "off") == 0)
        return LogLevel::off;
    return LogLevel::warn;
}

LogLevel g_level = initial_level();
std::mutex g_mutex;

const char* level_tag(LogLevel level) {
    switch (level) {
    case LogLevel::debug: return "debug";
    case LogLevel::info: return "info";
    case LogLevel::warn: return "warn";
    case LogLevel::error: return "error";
    default: return "?";
    }
}

} // namespace

LogLevel log_level() { return g_level; }

void set_log_level(LogLevel level) { g_level = level; }

void log_message(LogLevel level, const std::string& msg) {
    if (level < g_level || g_level == LogLevel::off)
        return;
    std::lock_guard<std::mutex> lock(g_mutex);
    std::fprintf(stderr, "[%s] %s\n", level_tag(level), msg.c_str());
}

} // namespace mrt
