// Copyright 2026 The molfm Authors.
// SPDX-License-Identifier: Apache-2.0

#include <fstream>
#include <ostream>

#include <CLI11.hpp>

#include "molfm/cli/commands.hpp"
#include "molfm/pipeline/train.hpp"

namespace molfm::cli {

namespace {

nlohmann::json ReadConfigFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError({"config file not found: " + path});
  nlohmann::json j = nlohmann::json::parse(in, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) throw ConfigError({"config file is not valid JSON: " + path});
  return j;
}

}  // namespace

int RunCli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
           const std::optional<std::string>& env_seed) {
  CLI::App app{"molfm: multimodal molecular property prediction from SELFIES, graphs and conformer ensembles"};
  app.footer("Config keys (set in --config JSON or with --set key=value) and defaults:\n" +
             ConfigKeyTable() +
             "\nMOLFM_SEED sets `seed` when neither the config nor --set does.\n"
             "Exit codes: 0 success, 1 config error, 2 data error, 3 numeric failure.");
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::vector<std::string> sets;
  std::string output_dir;
  std::size_t jobs = 1;
  bool verbose = false;
  app.add_option("-c,--config", config_path, "Run config (JSON)");
  app.add_option("--set", sets, "Override one config key, key=value (repeatable)")->allow_extra_args(false);
  app.add_option("-o,--output-dir", output_dir, "Directory for all outputs (config key output_dir)");
  app.add_option("-j,--jobs", jobs, "Worker threads for ablate")->check(CLI::PositiveNumber);
  app.add_flag("-v,--verbose", verbose, "Per-epoch progress on stderr");

  std::string validate_path;
  std::string validate_ckpt;
  CLI::App* validate = app.add_subcommand("validate", "Check a JSONL dataset and print counts");
  validate->add_option("path", validate_path, "Dataset (default: data.path)");
  validate->add_option("--checkpoint", validate_ckpt, "Measure the UNK rate under this checkpoint's vocabulary");
  CLI::App* split = app.add_subcommand("split", "Write the scaffold split (data.split) for data.path");
  CLI::App* pretrain = app.add_subcommand("pretrain", "Contrastive + masked-atom pre-training");
  CLI::App* finetune = app.add_subcommand("finetune", "Supervised fine-tuning on the split");
  CLI::App* ablate = app.add_subcommand("ablate", "Fine-tune every ablation.variants x seeds");
  CLI::App* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every layer and the tiny model");
  std::size_t gradcheck_sample = 0;
  gradcheck->add_option("--sample", gradcheck_sample, "Coordinates per tensor, evenly strided (0 = all)");
  std::string analyze_ckpt;
  CLI::App* analyze = app.add_subcommand("analyze", "Attention/Boltzmann, calibration and centroid statistics");
  analyze->add_option("--checkpoint", analyze_ckpt, "Model checkpoint (default: analysis.checkpoint)");
  std::string synth_path = "synthetic.jsonl";
  CLI::App* synth = app.add_subcommand("synth", "Write the geometric synthetic dataset");
  synth->add_option("path", synth_path, "Output file, relative to the output directory");

  std::vector<char*> argv;
  std::vector<std::string> storage = args;
  for (std::string& a : storage) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  CommandEnv env{out, err, jobs, verbose};
  try {
    const nlohmann::json file = config_path.empty() ? nlohmann::json() : ReadConfigFile(config_path);
    if (!output_dir.empty()) sets.push_back("output_dir=" + output_dir);
    if (!validate_path.empty()) sets.push_back("data.path=" + validate_path);
    if (!analyze_ckpt.empty()) sets.push_back("analysis.checkpoint=" + analyze_ckpt);
    const RunConfig cfg = LoadRunConfig(config_path.empty() ? nullptr : &file, sets, env_seed);

    if (validate->parsed()) return CmdValidate(cfg, validate_ckpt, env);
    if (gradcheck->parsed()) return CmdGradcheck(cfg, gradcheck_sample, env);
    if (split->parsed()) CmdSplit(cfg, env);
    if (pretrain->parsed()) CmdPretrain(cfg, env);
    if (finetune->parsed()) CmdFinetune(cfg, env);
    if (ablate->parsed()) CmdAblate(cfg, env);
    if (analyze->parsed()) CmdAnalyze(cfg, env);
    if (synth->parsed()) CmdSynth(cfg, synth_path, env);
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const pipeline::NumericError& e) {
    err << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
}

}  // namespace molfm::cli
