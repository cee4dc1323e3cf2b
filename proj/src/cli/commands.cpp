// Copyright 2026 The molfm Authors.
// SPDX-License-Identifier: Apache-2.0

#include "molfm/cli/commands.hpp"

#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

#include "molfm/molrecord/dataset.hpp"
#include "molfm/pipeline/ablation.hpp"
#include "molfm/pipeline/analysis.hpp"
#include "molfm/pipeline/checkpoint.hpp"
#include "molfm/pipeline/dataset.hpp"
#include "molfm/pipeline/gradcheck.hpp"
#include "molfm/pipeline/split.hpp"
#include "molfm/pipeline/synthetic.hpp"
#include "molfm/pipeline/train.hpp"

namespace molfm::cli {

namespace fs = std::filesystem;
using molrecord::MoleculeRecord;
using nlohmann::ordered_json;
using pipeline::FormatDouble;

namespace {

std::string Short(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string Short(const std::optional<double>& v) { return v ? Short(*v) : "n/a"; }

fs::path PrepareOutputDir(const RunConfig& cfg) {
  const fs::path dir(cfg.output_dir);
  fs::create_directories(dir);
  return dir;
}

void WriteText(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << text;
    if (!f) throw std::runtime_error("cannot write " + path.string());
  }
  fs::rename(tmp, path);
}

std::string KDistribution(const std::map<std::size_t, std::size_t>& counts) {
  if (counts.size() == 1) return "K=" + std::to_string(counts.begin()->first);
  std::string s = "K=";
  bool first = true;
  for (const auto& [k, n] : counts) {
    s += (first ? "" : ",") + std::to_string(k) + ":" + std::to_string(n);
    first = false;
  }
  return s;
}

void WarnConformerCount(const std::vector<MoleculeRecord>& records, std::size_t expected,
                        std::ostream& err) {
  std::size_t off = 0;
  for (const MoleculeRecord& r : records) off += r.num_conformers() != expected;
  if (off > 0) {
    err << "warning: " << off << " of " << records.size() << " molecules have K != " << expected
        << "\n";
  }
}

std::vector<MoleculeRecord> LoadRecords(const RunConfig& cfg, CommandEnv& env) {
  if (cfg.data.path.empty()) throw ConfigError({"data.path: required"});
  std::vector<MoleculeRecord> records = molrecord::ParseDatasetFile(cfg.data.path);
  if (records.empty()) throw molrecord::DataError(0, "", "no molecules in " + cfg.data.path);
  WarnConformerCount(records, cfg.data.conformers, env.err);
  return records;
}

std::optional<pipeline::Checkpoint> LoadInit(const RunConfig& cfg) {
  if (cfg.finetune_init.empty()) return std::nullopt;
  return pipeline::LoadCheckpoint(OutputPath(cfg, cfg.finetune_init));
}

void WarnUnk(const pipeline::PreparedDataset& data, std::ostream& err) {
  const double unk = data.UnkRate();
  if (unk > 0.0) err << "warning: UNK rate " << Short(100.0 * unk) << "% under the checkpoint vocabulary\n";
}

// Dataset and model config for supervised commands.
struct Supervised {
  std::unique_ptr<pipeline::PreparedDataset> data;
  pipeline::Split split;
  std::optional<pipeline::Checkpoint> init;
  fusion::ModelConfig model;
};

Supervised PrepareSupervised(const RunConfig& cfg, CommandEnv& env) {
  Supervised s;
  std::vector<MoleculeRecord> records = LoadRecords(cfg, env);
  s.split = pipeline::ReadSplitFile(OutputPath(cfg, cfg.data.split), records);
  s.init = LoadInit(cfg);
  molrecord::Vocabulary vocab =
      s.init ? pipeline::VocabFromCheckpoint(*s.init) : pipeline::VocabFor(records, s.split.train);
  s.data = std::make_unique<pipeline::PreparedDataset>(std::move(records), std::move(vocab),
                                                       cfg.model.enc1d.max_len);
  if (s.init) WarnUnk(*s.data, env.err);
  s.model = pipeline::ConfigForDataset(cfg.model, *s.data);
  return s;
}

}  // namespace

fs::path OutputPath(const RunConfig& cfg, const std::string& rel) {
  const fs::path p(rel);
  return p.is_absolute() ? p : fs::path(cfg.output_dir) / p;
}

int CmdValidate(const RunConfig& cfg, const std::string& checkpoint, CommandEnv& env) {
  if (cfg.data.path.empty()) throw ConfigError({"validate: no dataset path given"});
  std::ifstream in(cfg.data.path);
  if (!in) throw molrecord::DataError(0, "", "cannot open " + cfg.data.path);
  molrecord::ValidationReport report = molrecord::ValidateDataset(in);
  for (const molrecord::DataError& e : report.errors) env.err << "error: " << e.what() << "\n";
  const std::size_t n = report.records.size();
  if (n == 0 && report.errors.empty()) env.err << "warning: 0 molecules in " << cfg.data.path << "\n";

  env.out << n << " molecules, ";
  if (!report.conformer_counts.empty()) env.out << KDistribution(report.conformer_counts) << ", ";
  env.out << report.errors.size() << " errors\n";
  if (n > 0) {
    WarnConformerCount(report.records, cfg.data.conformers, env.err);
    molrecord::Vocabulary vocab;
    std::size_t max_len = cfg.model.enc1d.max_len;
    if (!checkpoint.empty()) {
      const pipeline::Checkpoint ckpt = pipeline::LoadCheckpoint(checkpoint);
      vocab = pipeline::VocabFromCheckpoint(ckpt);
      max_len = pipeline::ModelConfigFromCheckpoint(ckpt).enc1d.max_len;
    } else {
      vocab = pipeline::VocabFor(report.records);
    }
    std::size_t vocab_size = vocab.size();
    const pipeline::PreparedDataset data(std::move(report.records), std::move(vocab), max_len);
    env.out << "tasks " << report.num_tasks << ", context " << report.context_dim << ", vocabulary "
            << vocab_size << ", UNK rate " << Short(100.0 * data.UnkRate()) << "%\n";
  }
  return report.errors.empty() ? kExitOk : kExitData;
}

void CmdSplit(const RunConfig& cfg, CommandEnv& env) {
  const std::vector<MoleculeRecord> records = LoadRecords(cfg, env);
  const pipeline::Split split = pipeline::ScaffoldSplit(records);
  for (const std::string& w : split.warnings) env.err << "warning: " << w << "\n";
  PrepareOutputDir(cfg);
  const fs::path path = OutputPath(cfg, cfg.data.split);
  pipeline::WriteSplitFile(path, records, split);
  const pipeline::OverlapStats overlap = pipeline::ScaffoldOverlapStats(records, split);
  env.out << "split: " << split.train.size() << " train / " << split.val.size() << " val / "
          << split.test.size() << " test, " << overlap.overlapping_train << " of "
          << overlap.unique_test_scaffolds << " test scaffolds in train -> " << path.string() << "\n";
}

void CmdPretrain(const RunConfig& cfg, CommandEnv& env) {
  std::vector<MoleculeRecord> records = LoadRecords(cfg, env);
  molrecord::Vocabulary vocab = pipeline::VocabFor(records);
  const pipeline::PreparedDataset data(std::move(records), std::move(vocab), cfg.model.enc1d.max_len);
  const fusion::ModelConfig mc = pipeline::ConfigForDataset(cfg.model, data);
  const fs::path dir = PrepareOutputDir(cfg);

  pipeline::PretrainResult r = pipeline::RunPretrain(
      data, mc, cfg.pretrain, cfg.seed, [&](const pipeline::PretrainEpoch& e) {
        if (env.verbose) {
          env.err << "pretrain epoch " << e.epoch << ": loss " << Short(e.total) << " (contrastive "
                  << Short(e.contrastive) << ", masked atom " << Short(e.masked_atom) << "), lr "
                  << Short(e.lr) << "\n";
        }
      });
  std::string csv = "epoch,contrastive,masked_atom,total,lr\n";
  for (const pipeline::PretrainEpoch& e : r.log) {
    csv += std::to_string(e.epoch) + "," + FormatDouble(e.contrastive) + "," +
           FormatDouble(e.masked_atom) + "," + FormatDouble(e.total) + "," + FormatDouble(e.lr) + "\n";
  }
  WriteText(dir / "pretrain_log.csv", csv);
  const fs::path ckpt = dir / "pretrain.ckpt";
  pipeline::SaveCheckpoint(ckpt, r.checkpoint);
  const pipeline::PretrainEpoch& last = r.log.back();
  env.out << "pretrain: " << r.log.size() << " epochs on " << data.size() << " molecules, final loss "
          << Short(last.total) << " (contrastive " << Short(last.contrastive) << ", masked atom "
          << Short(last.masked_atom) << ") -> " << ckpt.string() << "\n";
}

void CmdFinetune(const RunConfig& cfg, CommandEnv& env) {
  Supervised s = PrepareSupervised(cfg, env);
  const fs::path dir = PrepareOutputDir(cfg);
  pipeline::FinetuneResult r = pipeline::RunFinetune(
      *s.data, s.split, s.model, cfg.finetune, cfg.finetune_variant, cfg.seed,
      s.init ? &*s.init : nullptr, [&](const pipeline::FinetuneEpoch& e) {
        if (env.verbose) {
          env.err << "finetune epoch " << e.epoch << ": train loss " << Short(e.train_loss) << ", val "
                  << Short(e.val_metric) << (e.improved ? " *" : "") << "\n";
        }
        return false;
      });
  for (const std::string& w : r.warnings) env.err << "warning: " << w << "\n";

  std::string csv = "epoch,train_loss,val_" + r.metric + ",lr,improved\n";
  for (const pipeline::FinetuneEpoch& e : r.history) {
    csv += std::to_string(e.epoch) + "," + FormatDouble(e.train_loss) + "," +
           FormatDouble(e.val_metric) + "," + FormatDouble(e.lr) + "," + (e.improved ? "1" : "0") + "\n";
  }
  WriteText(dir / "finetune_log.csv", csv);
  ordered_json m;
  m["variant"] = fusion::VariantName(cfg.finetune_variant);
  m["seed"] = cfg.seed;
  m["metric"] = r.metric;
  m["best_epoch"] = r.best_epoch;
  m["epochs_run"] = r.history.size();
  m["early_stopped"] = r.early_stopped;
  m["val"] = r.best_val;
  m["test"] = r.test_metric ? ordered_json(*r.test_metric) : ordered_json(nullptr);
  m["warnings"] = r.warnings;
  WriteText(dir / "finetune_metrics.json", m.dump(2) + "\n");
  const fs::path ckpt = dir / "finetune.ckpt";
  pipeline::SaveCheckpoint(ckpt, r.checkpoint);
  env.out << "finetune: " << fusion::VariantName(cfg.finetune_variant) << ", best val " << r.metric
          << " " << Short(r.best_val) << " at epoch " << r.best_epoch << ", test " << Short(r.test_metric)
          << " -> " << ckpt.string() << "\n";
}

void CmdAblate(const RunConfig& cfg, CommandEnv& env) {
  Supervised s = PrepareSupervised(cfg, env);
  const fs::path dir = PrepareOutputDir(cfg);
  const pipeline::AblationResult r =
      pipeline::RunAblation(*s.data, s.split, s.model, cfg.finetune, cfg.ablation_variants, cfg.seeds,
                            s.init ? &*s.init : nullptr, env.jobs);
  std::size_t failed = 0;
  for (const pipeline::VariantSummary& v : r.variants) {
    for (const pipeline::SeedRun& run : v.runs) {
      if (!run.error.empty()) {
        ++failed;
        env.err << "warning: " << fusion::VariantName(v.variant) << " seed " << run.seed << ": "
                << run.error << "\n";
      }
    }
  }
  pipeline::WriteAblationOutputs(dir, r);
  const pipeline::VariantSummary& head = r.variants.front();
  env.out << "ablate: " << r.variants.size() << " variants x " << cfg.seeds.size() << " seeds ("
          << r.metric << "), " << fusion::VariantName(head.variant) << " " << Short(head.mean) << " +/- "
          << Short(head.std) << ", " << failed << " failed runs -> " << (dir / "ablation.csv").string()
          << "\n";
}

int CmdGradcheck(const RunConfig& cfg, std::size_t sample, CommandEnv& env) {
  pipeline::GradCheckOptions opts;
  opts.seed = cfg.seed;
  opts.max_per_tensor = sample;
  const pipeline::GradCheckReport r = pipeline::RunGradCheckSuite(opts);
  ordered_json j;
  j["max_rel_error"] = r.max_rel_error;
  j["worst"] = r.worst;
  j["coordinates"] = r.coordinates;
  j["checks"] = ordered_json::array();
  for (const pipeline::GradCheckEntry& e : r.entries) {
    j["checks"].push_back({{"name", e.name},
                           {"eps", e.eps},
                           {"max_rel_error", e.result.max_rel_error},
                           {"coordinates", e.result.coordinates},
                           {"skipped", e.result.skipped},
                           {"worst", e.result.worst}});
    if (env.verbose) {
      env.err << e.name << ": " << Short(e.result.max_rel_error) << " over " << e.result.coordinates
              << "\n";
    }
  }
  const fs::path dir = PrepareOutputDir(cfg);
  WriteText(dir / "gradcheck.json", j.dump(2) + "\n");
  const bool ok = r.max_rel_error < 1e-4;
  char rel[32];
  std::snprintf(rel, sizeof rel, "%.3e", r.max_rel_error);
  env.out << "gradcheck: max rel-err " << rel << " over " << r.coordinates << " coordinates in "
          << r.entries.size() << " checks (worst " << r.worst << ") " << (ok ? "ok" : "FAILED") << "\n";
  return ok ? kExitOk : kExitNumeric;
}

void CmdAnalyze(const RunConfig& cfg, CommandEnv& env) {
  const pipeline::Checkpoint ckpt = pipeline::LoadCheckpoint(OutputPath(cfg, cfg.analysis.checkpoint));
  const pipeline::ModelInstance inst = pipeline::ModelFromCheckpoint(ckpt);
  std::vector<MoleculeRecord> records = LoadRecords(cfg, env);

  std::vector<std::size_t> indices(records.size());
  for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = i;
  std::vector<std::size_t> reference = indices;
  const fs::path split_path = OutputPath(cfg, cfg.data.split);
  if (fs::exists(split_path)) {
    pipeline::Split split = pipeline::ReadSplitFile(split_path, records);
    indices = split.test;
    reference = split.train;
  } else {
    env.err << "warning: " << split_path.string() << " not found; analysing all molecules\n";
  }
  const pipeline::PreparedDataset data(std::move(records), pipeline::VocabFromCheckpoint(ckpt),
                                       inst.model->config().enc1d.max_len);
  WarnUnk(data, env.err);
  pipeline::AnalysisOptions opts;
  opts.mc_passes = cfg.finetune.mc_passes;
  opts.sigma_threshold = cfg.analysis.sigma_threshold;
  opts.seed = cfg.seed;
  const ordered_json j = pipeline::Analyze(*inst.model, data, indices, reference, opts);
  const fs::path dir = PrepareOutputDir(cfg);
  WriteText(dir / "analysis.json", j.dump(2) + "\n");

  auto field = [&](const char* section, const char* key) -> std::string {
    const auto& s = j[section];
    if (s.contains(key) && s[key].is_number()) return Short(s[key].get<double>());
    return "n/a";
  };
  env.out << "analyze: " << indices.size() << " molecules, attention/prior pearson "
          << field("attention", "pearson") << ", calibration ratio " << field("calibration", "ratio")
          << ", centroid distance " << field("centroid_distance", "mean") << " -> "
          << (dir / "analysis.json").string() << "\n";
}

void CmdSynth(const RunConfig& cfg, const std::string& path, CommandEnv& env) {
  pipeline::SyntheticConfig sc;
  sc.seed = cfg.seed;
  const std::vector<MoleculeRecord> records = pipeline::SyntheticGeometricDataset(sc);
  PrepareOutputDir(cfg);
  const fs::path out = OutputPath(cfg, path);
  molrecord::WriteDatasetFile(out, records);
  env.out << "synth: " << records.size() << " molecules -> " << out.string() << "\n";
}

}  // namespace molfm::cli
