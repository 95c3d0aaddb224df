#include "gpal/log.hpp"

#include <cstdlib>
#include <memory>
#include <string_view>

#include <spdlog/sinks/stdout_sinks.h>

namespace gpal {
namespace {

spdlog::level::level_enum level_from_env() {
  const char* v = std::getenv("GPAL_LOG");
  if (v == nullptr) return spdlog::level::warn;
  const std::string_view s(v);
  if (s == "error") return spdlog::level::err;
  if (s == "info") return spdlog::level::info;
  if (s == "debug") return spdlog::level::debug;
  return spdlog::level::warn;
}

}  // namespace

spdlog::logger& log() {
  static const auto logger = [] {
    auto l = std::make_shared<spdlog::logger>("gpal", std::make_shared<spdlog::sinks::stderr_sink_mt>());
    l->set_level(level_from_env());
    l->set_pattern("[%l] %v");
    return l;
  }();
  return *logger;
}

}  // namespace gpal
