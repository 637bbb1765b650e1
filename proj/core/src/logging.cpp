// SPDX-License-Identifier: Apache-2.0
#include "protomm/logging.hpp"

#include <atomic>
#include <memory>
#include <mutex>
#include <vector>

#include <spdlog/sinks/base_sink.h>
#include <spdlog/sinks/basic_file_sink.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "protomm/common.hpp"

namespace protomm {

namespace {

std::atomic<std::size_t> g_errors{0};

class ErrorCounter : public spdlog::sinks::base_sink<std::mutex> {
 protected:
  void sink_it_(const spdlog::details::log_msg& msg) override {
    if (msg.level >= spdlog::level::err && msg.level != spdlog::level::off) ++g_errors;
  }
  void flush_() override {}
};

}  // namespace

void set_log_level(std::string_view level) {
  const auto parsed = spdlog::level::from_str(std::string(level));
  if (parsed == spdlog::level::off && level != "off") {
    throw ConfigError("log_level", "unknown level '" + std::string(level) + "'");
  }
  spdlog::set_level(parsed);
}

void configure_logging(const std::filesystem::path& file) {
  std::vector<spdlog::sink_ptr> sinks{std::make_shared<spdlog::sinks::stderr_color_sink_mt>(),
                                      std::make_shared<ErrorCounter>()};
  if (!file.empty()) {
    if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
    sinks.push_back(std::make_shared<spdlog::sinks::basic_file_sink_mt>(file.string()));
  }
  const auto level = spdlog::default_logger()->level();
  auto logger = std::make_shared<spdlog::logger>("protomm", sinks.begin(), sinks.end());
  logger->set_level(level);
  logger->flush_on(spdlog::level::info);
  spdlog::set_default_logger(logger);
  g_errors = 0;
}

std::size_t logged_error_count() { return g_errors; }

void log_info(const std::string& message) { spdlog::info("{}", message); }
void log_warn(const std::string& message) { spdlog::warn("{}", message); }
void log_error(const std::string& message) { spdlog::error("{}", message); }

}  // namespace protomm
