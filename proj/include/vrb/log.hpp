#pragma once

#include <cstdlib>
#include <memory>
#include <string>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

namespace vrb {

/// Level from VRB_LOG_LEVEL (error|warn|info|debug), default warn.
inline spdlog::level::level_enum log_level_from_env() {
    const char* env = std::getenv("VRB_LOG_LEVEL");
    const std::string v = env ? env : "";
    if (v == "error") return spdlog::level::err;
    if (v == "info") return spdlog::level::info;
    if (v == "debug") return spdlog::level::debug;
    return spdlog::level::warn;
}

/// Shared stderr logger. Log output never goes to stdout, which carries tables and CSV.
inline spdlog::logger& logger() {
    static std::shared_ptr<spdlog::logger> lg = [] {
        auto l = spdlog::stderr_color_mt("vrb");
        l->set_level(log_level_from_env());
        l->set_pattern("[%l] %v");
        return l;
    }();
    return *lg;
}

}  // namespace vrb
