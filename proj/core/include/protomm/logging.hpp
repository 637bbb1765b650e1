// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>

namespace protomm {

/// "trace", "debug", "info", "warn", "error" or "off". Throws on any other name.
void set_log_level(std::string_view level);

/// Routes library and application log records to stderr and, when `file` is
/// non-empty, additionally to that file (appended).
void configure_logging(const std::filesystem::path& file = {});

/// Error records emitted since configure_logging was last called.
std::size_t logged_error_count();

void log_info(const std::string& message);
void log_warn(const std::string& message);
void log_error(const std::string& message);

}  // namespace protomm
