// SPDX-License-Identifier: Apache-2.0
// Runs the nine acceptance criteria and prints one line per criterion.
#include <cstdlib>
#include <iostream>

#include "protomm/acceptance.hpp"
#include "protomm/logging.hpp"

int main(int argc, char** argv) {
  protomm::set_log_level("warn");
  protomm::AcceptanceOptions opts;
  if (const char* root = std::getenv("PROTOMM_DATA_ROOT")) opts.data_root = root;
  for (int i = 1; i < argc; ++i) opts.only.emplace_back(argv[i]);
  opts.progress = [](const std::string& line) { std::cerr << "  " << line << '\n'; };
  opts.on_result = [](const protomm::CriterionResult& r) { std::cout << protomm::format_result(r) << std::endl; };

  int failed = 0;
  for (const auto& r : protomm::run_acceptance(opts)) failed += r.verdict == protomm::Verdict::fail;
  std::cout << (failed ? std::to_string(failed) + " criteria failed" : std::string("all criteria passed or skipped"))
            << '\n';
  return failed ? 1 : 0;
}
