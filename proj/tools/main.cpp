// Copyright 2026 The molfm Authors.
// SPDX-License-Identifier: Apache-2.0

#include <cstdlib>
#include <iostream>

#include "molfm/cli/commands.hpp"

int main(int argc, char** argv) {
  const char* seed = std::getenv("MOLFM_SEED");
  return molfm::cli::RunCli(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr,
                            seed ? std::optional<std::string>(seed) : std::nullopt);
}
