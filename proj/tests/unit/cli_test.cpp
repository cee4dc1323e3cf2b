// Copyright 2026 The molfm Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "molfm/cli/commands.hpp"
#include "molfm/cli/run_config.hpp"

namespace molfm::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

const std::string kFixture = std::string(MOLFM_TEST_DATA_DIR) + "/fixture.jsonl";

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun Cli(std::vector<std::string> args, std::optional<std::string> env_seed = std::nullopt) {
  args.insert(args.begin(), "molfm");
  std::ostringstream out, err;
  const int code = RunCli(args, out, err, env_seed);
  return {code, out.str(), err.str()};
}

fs::path TempDir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("molfm_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string ReadFile(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> ReadLines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> lines;
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  return lines;
}

void WriteLines(const fs::path& p, const std::vector<std::string>& lines) {
  std::ofstream out(p);
  for (const std::string& l : lines) out << l << "\n";
}

std::vector<std::string> TinyModel() {
  return {"--set", "model.d1=16", "--set", "model.d2=16", "--set", "model.d3=16",
          "--set", "model.fusion_dim=16", "--set", "model.transformer_ff=32",
          "--set", "model.transformer_layers=1", "--set", "model.gin_layers=1",
          "--set", "model.schnet_interactions=1", "--set", "model.transformer_heads=2",
          "--set", "model.fusion_heads=2", "--set", "model.head_hidden=8", "--set", "model.n_rbf=8"};
}

std::vector<std::string> Concat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

TEST(CliValidate, FixtureContract) {
  const CliRun r = Cli({"validate", kFixture});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.substr(0, r.out.find('\n')), "3 molecules, K=5, 0 errors");
  EXPECT_NE(r.out.find("tasks 2"), std::string::npos);
  EXPECT_NE(r.out.find("UNK rate 0%"), std::string::npos);
}

TEST(CliValidate, CorruptedLineGivesLineNumber) {
  const fs::path dir = TempDir("corrupt");
  std::vector<std::string> lines = ReadLines(kFixture);
  ASSERT_EQ(lines.size(), 3u);
  lines[1] = lines[1].substr(0, lines[1].size() / 2);
  WriteLines(dir / "bad.jsonl", lines);
  const CliRun r = Cli({"validate", (dir / "bad.jsonl").string()});
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("line 2"), std::string::npos) << r.err;
  EXPECT_EQ(r.out.substr(0, r.out.find('\n')), "2 molecules, K=5, 1 errors");
}

TEST(CliValidate, EmptyFileWarnsAndSucceeds) {
  const fs::path dir = TempDir("empty");
  WriteLines(dir / "empty.jsonl", {});
  const CliRun r = Cli({"validate", (dir / "empty.jsonl").string()});
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out, "0 molecules, 0 errors\n");
  EXPECT_NE(r.err.find("warning: 0 molecules"), std::string::npos);
}

TEST(CliValidate, MissingFileIsDataError) {
  const CliRun r = Cli({"validate", "/nonexistent/data.jsonl"});
  EXPECT_EQ(r.code, kExitData);
  EXPECT_NE(r.err.find("cannot open"), std::string::npos);
}

TEST(RunConfigTest, DefaultsMatchPublishedHyperparameters) {
  const json j = RunConfigToJson(RunConfig{});
  EXPECT_EQ(j["train"]["pretrain"]["epochs"], 30);
  EXPECT_EQ(j["train"]["pretrain"]["batch_size"], 64);
  EXPECT_DOUBLE_EQ(j["train"]["pretrain"]["lr"].get<double>(), 1e-4);
  EXPECT_DOUBLE_EQ(j["train"]["pretrain"]["weight_decay"].get<double>(), 1e-5);
  EXPECT_DOUBLE_EQ(j["train"]["pretrain"]["temperature"].get<double>(), 0.07);
  EXPECT_EQ(j["train"]["pretrain"]["warmup_steps"], 1000);
  EXPECT_EQ(j["train"]["finetune"]["epochs"], 100);
  EXPECT_EQ(j["train"]["finetune"]["patience"], 15);
  EXPECT_EQ(j["train"]["finetune"]["batch_size"], 16);
  EXPECT_DOUBLE_EQ(j["train"]["finetune"]["lr"].get<double>(), 5e-5);
  EXPECT_DOUBLE_EQ(j["train"]["finetune"]["weight_decay"].get<double>(), 1e-4);
  EXPECT_DOUBLE_EQ(j["model"]["encoder_dropout"].get<double>(), 0.1);
  EXPECT_DOUBLE_EQ(j["model"]["head_dropout"].get<double>(), 0.2);
  EXPECT_EQ(j["train"]["finetune"]["mc_passes"], 20);
  EXPECT_EQ(j["model"]["d1"], 256);
  EXPECT_EQ(j["model"]["d2"], 256);
  EXPECT_EQ(j["model"]["d3"], 128);
  EXPECT_EQ(j["model"]["transformer_layers"], 4);
  EXPECT_EQ(j["model"]["gin_layers"], 4);
  EXPECT_EQ(j["model"]["schnet_interactions"], 3);
  EXPECT_EQ(j["data"]["conformers"], 5);
  EXPECT_EQ(j["model"]["transformer_heads"], 8);
  EXPECT_EQ(j["seeds"].size(), 3u);
}

TEST(RunConfigTest, RoundTripsThroughJson) {
  RunConfig cfg = LoadRunConfig(nullptr, {"train.finetune.lr=0.001", "seeds=4,5", "model.task=regression",
                                          "ablation.variants=[\"full\",\"no_film\"]", "data.path=x.jsonl"});
  const json j = RunConfigToJson(cfg);
  const RunConfig again = LoadRunConfig(&j, {});
  EXPECT_EQ(json::parse(RunConfigToJson(again).dump()), j);
  EXPECT_DOUBLE_EQ(again.finetune.lr, 1e-3);
  EXPECT_EQ(again.seeds, (std::vector<std::uint64_t>{4, 5}));
  EXPECT_EQ(again.model.task, fusion::TaskKind::kRegression);
  EXPECT_EQ(again.ablation_variants.size(), 2u);
  EXPECT_EQ(again.data.path, "x.jsonl");
}

TEST(RunConfigTest, EncoderDropoutSetsAllEncoders) {
  const RunConfig cfg = LoadRunConfig(nullptr, {"model.encoder_dropout=0.3"});
  EXPECT_DOUBLE_EQ(cfg.model.enc1d.dropout, 0.3);
  EXPECT_DOUBLE_EQ(cfg.model.enc2d.dropout, 0.3);
  EXPECT_DOUBLE_EQ(cfg.model.enc3d.dropout, 0.3);
}

TEST(RunConfigTest, ListsEveryProblemAtOnce) {
  const json file = json::parse(R"({
    "model": {"d1": -1, "bogus": 1, "head_dropout": 1.5},
    "train": {"finetune": {"lr": "fast", "variant": "only_4d"}},
    "ablation": 3
  })");
  try {
    LoadRunConfig(&file, {"nope=1", "seeds=[]", "missing-equals"});
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    for (const char* needle : {"model.d1", "\"model.bogus\"", "model.head_dropout", "train.finetune.lr",
                               "train.finetune.variant", "ablation:", "\"nope\"", "seeds",
                               "missing-equals"}) {
      EXPECT_NE(msg.find(needle), std::string::npos) << needle << "\n" << msg;
    }
    EXPECT_EQ(e.problems().size(), 9u) << msg;
  }
}

TEST(RunConfigTest, HeadsMustDivideWidth) {
  EXPECT_THROW(LoadRunConfig(nullptr, {"model.transformer_heads=3"}), ConfigError);
  EXPECT_THROW(LoadRunConfig(nullptr, {"model.fusion_heads=7"}), ConfigError);
}

TEST(RunConfigTest, SeedFallsBackToEnvironment) {
  EXPECT_EQ(LoadRunConfig(nullptr, {}, std::nullopt).seed, 0u);
  EXPECT_EQ(LoadRunConfig(nullptr, {}, "17").seed, 17u);
  EXPECT_EQ(LoadRunConfig(nullptr, {"seed=3"}, "17").seed, 3u);
  const json file = json::parse(R"({"seed": 5})");
  EXPECT_EQ(LoadRunConfig(&file, {}, "17").seed, 5u);
  EXPECT_THROW(LoadRunConfig(nullptr, {}, "x1"), ConfigError);
  EXPECT_THROW(LoadRunConfig(nullptr, {}, "-4"), ConfigError);
}

TEST(CliTest, ConfigErrorsExitOne) {
  const CliRun r = Cli({"gradcheck", "--set", "model.d1=0", "--set", "train.pretrain.lr=-1"});
  EXPECT_EQ(r.code, kExitConfig);
  EXPECT_NE(r.err.find("model.d1"), std::string::npos);
  EXPECT_NE(r.err.find("train.pretrain.lr"), std::string::npos);
  EXPECT_EQ(Cli({"frobnicate"}).code, kExitConfig);
  EXPECT_EQ(Cli({"pretrain", "--config", "/nonexistent.json"}).code, kExitConfig);
}

TEST(CliTest, HelpListsEveryKeyWithDefault) {
  const CliRun r = Cli({"--help"});
  EXPECT_EQ(r.code, 0);
  const json defaults = RunConfigToJson(RunConfig{});
  for (const std::string& key : ConfigKeys()) {
    json v = defaults;
    std::stringstream ss(key);
    for (std::string part; std::getline(ss, part, '.');) v = v[part];
    const auto pos = r.out.find("  " + key + " ");
    ASSERT_NE(pos, std::string::npos) << key;
    const std::string line = r.out.substr(pos, r.out.find('\n', pos) - pos);
    EXPECT_NE(line.find(v.dump()), std::string::npos) << line;
  }
}

TEST(CliTest, FinetuneWithoutSplitFile) {
  const fs::path dir = TempDir("nosplit");
  const CliRun r = Cli({"finetune", "-o", dir.string(), "--set", "data.path=" + kFixture});
  EXPECT_EQ(r.code, kExitData);
  EXPECT_NE(r.err.find("split.json not found"), std::string::npos) << r.err;
}

TEST(CliTest, GradcheckPassesOnTinyModel) {
  const fs::path dir = TempDir("gradcheck");
  const CliRun r = Cli({"gradcheck", "--sample", "32", "-o", dir.string()});
  EXPECT_EQ(r.code, 0) << r.out << r.err;
  const auto pos = r.out.find("max rel-err ");
  ASSERT_NE(pos, std::string::npos);
  EXPECT_LT(std::stod(r.out.substr(pos + 12)), 1e-4);
  const json report = json::parse(ReadFile(dir / "gradcheck.json"));
  EXPECT_GT(report["checks"].size(), 10u);
}

TEST(CliTest, PretrainNanExitsThree) {
  const fs::path dir = TempDir("nan");
  ASSERT_EQ(Cli({"synth", "-o", dir.string()}).code, 0);
  const CliRun r = Cli(Concat({"pretrain", "-o", dir.string(), "--set", "data.path=" + (dir / "synthetic.jsonl").string(),
                            "--set", "train.pretrain.epochs=3", "--set", "train.pretrain.batch_size=8",
                            "--set", "train.pretrain.warmup_steps=0", "--set", "train.pretrain.lr=1e30"},
                           TinyModel()));
  EXPECT_EQ(r.code, kExitNumeric) << r.out << r.err;
}

class CliPipeline : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = TempDir("pipeline");
    data_ = (dir_ / "synthetic.jsonl").string();
    ASSERT_EQ(Cli({"synth", "-o", dir_.string()}).code, 0);
    const CliRun v = Cli({"validate", data_});
    ASSERT_EQ(v.code, 0) << v.err;
    ASSERT_EQ(v.out.substr(0, v.out.find('\n')), "32 molecules, K=3, 0 errors");
  }

  std::vector<std::string> Args(const std::string& cmd, const fs::path& out) const {
    return Concat({cmd, "-o", out.string(), "--set", "data.path=" + data_, "--set",
                   "train.finetune.epochs=2", "--set", "train.pretrain.epochs=1", "--set",
                   "train.pretrain.batch_size=8", "--set", "train.pretrain.warmup_steps=1"},
                  TinyModel());
  }

  fs::path dir_;
  std::string data_;
};

TEST_F(CliPipeline, SplitPretrainFinetuneAnalyze) {
  const CliRun s = Cli(Args("split", dir_));
  ASSERT_EQ(s.code, 0) << s.err;
  EXPECT_NE(s.out.find("0 of 1 test scaffolds in train"), std::string::npos) << s.out;
  ASSERT_TRUE(fs::exists(dir_ / "split.json"));

  const CliRun p = Cli(Args("pretrain", dir_));
  ASSERT_EQ(p.code, 0) << p.err;
  EXPECT_EQ(ReadLines(dir_ / "pretrain_log.csv").size(), 2u);

  const CliRun f = Cli(Concat(Args("finetune", dir_), {"--set", "train.finetune.init=pretrain.ckpt"}));
  ASSERT_EQ(f.code, 0) << f.err;
  EXPECT_EQ(f.out.rfind("finetune: full, best val roc_auc", 0), 0u) << f.out;
  const json metrics = json::parse(ReadFile(dir_ / "finetune_metrics.json"));
  EXPECT_EQ(metrics["metric"], "roc_auc");

  const CliRun a = Cli(Args("analyze", dir_));
  ASSERT_EQ(a.code, 0) << a.err;
  const json analysis = json::parse(ReadFile(dir_ / "analysis.json"));
  EXPECT_TRUE(analysis.contains("attention"));
  EXPECT_TRUE(analysis.contains("calibration"));
}

TEST_F(CliPipeline, AblateTwoVariantsIsDeterministic) {
  ASSERT_EQ(Cli(Args("split", dir_)).code, 0);
  const fs::path a = dir_ / "a";
  const fs::path b = dir_ / "b";
  fs::create_directories(a);
  fs::create_directories(b);
  fs::copy_file(dir_ / "split.json", a / "split.json");
  fs::copy_file(dir_ / "split.json", b / "split.json");
  const std::vector<std::string> extra = {"--set", "ablation.variants=full,k1_conformer", "--set", "seeds=0,1"};
  const CliRun ra = Cli(Concat(Concat(Args("ablate", a), extra), {"-j", "1"}));
  const CliRun rb = Cli(Concat(Concat(Args("ablate", b), extra), {"-j", "3"}));
  ASSERT_EQ(ra.code, 0) << ra.err;
  ASSERT_EQ(rb.code, 0) << rb.err;
  const std::vector<std::string> table = ReadLines(a / "ablation.csv");
  ASSERT_EQ(table.size(), 3u);
  EXPECT_EQ(table[1].rfind("full,", 0), 0u);
  EXPECT_EQ(table[2].rfind("k1_conformer,", 0), 0u);
  EXPECT_EQ(ReadLines(a / "metrics.csv").size(), 1u + 2 * 2 * 2);
  EXPECT_EQ(ReadFile(a / "summary.json"), ReadFile(b / "summary.json"));
}

}  // namespace
}  // namespace molfm::cli
