// Copyright 2026 The molfm Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "molfm/cli/run_config.hpp"

namespace molfm::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 1,
  kExitData = 2,
  kExitNumeric = 3,
};

struct CommandEnv {
  std::ostream& out;
  std::ostream& err;
  std::size_t jobs = 1;
  bool verbose = false;  // per-epoch progress on err
};

// `rel` under output_dir unless absolute.
std::filesystem::path OutputPath(const RunConfig& cfg, const std::string& rel);

// Each command prints a one-line summary on env.out and writes its files
// under output_dir. Failures are thrown; RunCli maps them to exit codes.
// validate returns kExitData when any record is invalid.
int CmdValidate(const RunConfig& cfg, const std::string& checkpoint, CommandEnv& env);
void CmdSplit(const RunConfig& cfg, CommandEnv& env);
void CmdPretrain(const RunConfig& cfg, CommandEnv& env);
void CmdFinetune(const RunConfig& cfg, CommandEnv& env);
void CmdAblate(const RunConfig& cfg, CommandEnv& env);
// Returns kExitNumeric when the suite's max rel-err reaches 1e-4. `sample`
// caps the coordinates checked per tensor; 0 checks all of them.
int CmdGradcheck(const RunConfig& cfg, std::size_t sample, CommandEnv& env);
void CmdAnalyze(const RunConfig& cfg, CommandEnv& env);
// Writes the geometric synthetic dataset to `path` (under output_dir).
void CmdSynth(const RunConfig& cfg, const std::string& path, CommandEnv& env);

// Full command line (args[0] is the program name). `env_seed` stands in for
// MOLFM_SEED.
int RunCli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
           const std::optional<std::string>& env_seed);

}  // namespace molfm::cli
