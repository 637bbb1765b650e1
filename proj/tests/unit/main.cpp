// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include "protomm/logging.hpp"

int main(int argc, char** argv) {
  protomm::set_log_level("error");
  doctest::Context ctx(argc, argv);
  return ctx.run();
}
