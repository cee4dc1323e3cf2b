// Copyright 2026 The molfm Authors.
// SPDX-License-Identifier: Apache-2.0

#include "molfm/pipeline/ablation.hpp"

#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <thread>

namespace molfm::pipeline {

double Mean(const std::vector<double>& v) {
  if (v.empty()) throw std::invalid_argument("mean of an empty list");
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double PopulationStd(const std::vector<double>& v) {
  const double m = Mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

std::string FormatDouble(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

AblationResult RunAblation(const PreparedDataset& data, const Split& split,
                           const fusion::ModelConfig& model_cfg, const FinetuneConfig& cfg,
                           const std::vector<fusion::Variant>& variants,
                           const std::vector<std::uint64_t>& seeds, const Checkpoint* init,
                           std::size_t jobs) {
  if (variants.empty()) throw std::invalid_argument("ablation: no variants");
  if (seeds.empty()) throw std::invalid_argument("ablation: no seeds");
  AblationResult result;
  result.metric = model_cfg.task == fusion::TaskKind::kBinary ? "roc_auc" : "rmse";
  result.variants.resize(variants.size());
  for (std::size_t v = 0; v < variants.size(); ++v) {
    result.variants[v].variant = variants[v];
    result.variants[v].runs.resize(seeds.size());
  }

  const std::size_t total = variants.size() * seeds.size();
  std::atomic<std::size_t> next{0};
  const auto worker = [&]() {
    for (std::size_t task = next++; task < total; task = next++) {
      const std::size_t v = task / seeds.size(), s = task % seeds.size();
      SeedRun& run = result.variants[v].runs[s];
      run.seed = seeds[s];
      try {
        const FinetuneResult r = RunFinetune(data, split, model_cfg, cfg, variants[v], seeds[s], init);
        run.val_metric = r.best_val;
        run.test_metric = r.test_metric;
        run.best_epoch = r.best_epoch;
        run.epochs_run = r.history.size();
      } catch (const std::exception& e) {
        run.error = e.what();
      }
    }
  };
  const std::size_t threads = std::max<std::size_t>(1, std::min(jobs, total));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  std::optional<double> full_mean;
  for (auto& vs : result.variants) {
    std::vector<double> test;
    for (const auto& run : vs.runs) {
      if (!run.error.empty() && vs.error.empty()) vs.error = run.error;
      if (run.test_metric) test.push_back(*run.test_metric);
    }
    if (!test.empty()) {
      vs.mean = Mean(test);
      vs.std = PopulationStd(test);
    }
    if (vs.variant == fusion::Variant::kFull && vs.mean && !full_mean) full_mean = vs.mean;
  }
  for (auto& vs : result.variants) {
    if (full_mean && vs.mean) vs.delta = *vs.mean - *full_mean;
  }
  return result;
}

namespace {

std::string Opt(const std::optional<double>& v) { return v ? FormatDouble(*v) : ""; }

nlohmann::ordered_json OptJson(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

}  // namespace

std::string MetricsCsv(const AblationResult& r) {
  std::string out = "variant,seed,split,metric,value\n";
  for (const auto& vs : r.variants) {
    const std::string name(fusion::VariantName(vs.variant));
    for (const auto& run : vs.runs) {
      if (run.val_metric) {
        out += name + "," + std::to_string(run.seed) + ",val," + r.metric + "," + FormatDouble(*run.val_metric) + "\n";
      }
      if (run.test_metric) {
        out += name + "," + std::to_string(run.seed) + ",test," + r.metric + "," + FormatDouble(*run.test_metric) + "\n";
      }
    }
  }
  return out;
}

std::string AblationCsv(const AblationResult& r) {
  std::string out = "variant,mean,std,delta\n";
  for (const auto& vs : r.variants) {
    out += std::string(fusion::VariantName(vs.variant)) + "," + Opt(vs.mean) + "," + Opt(vs.std) + "," +
           Opt(vs.delta) + "\n";
  }
  return out;
}

nlohmann::ordered_json SummaryJson(const AblationResult& r) {
  nlohmann::ordered_json j;
  j["metric"] = r.metric;
  j["variants"] = nlohmann::ordered_json::array();
  for (const auto& vs : r.variants) {
    nlohmann::ordered_json v;
    v["variant"] = fusion::VariantName(vs.variant);
    v["mean"] = OptJson(vs.mean);
    v["std"] = OptJson(vs.std);
    v["delta"] = OptJson(vs.delta);
    v["seeds"] = nlohmann::ordered_json::array();
    for (const auto& run : vs.runs) {
      nlohmann::ordered_json s;
      s["seed"] = run.seed;
      s["val"] = OptJson(run.val_metric);
      s["test"] = OptJson(run.test_metric);
      s["best_epoch"] = run.best_epoch;
      s["epochs_run"] = run.epochs_run;
      if (!run.error.empty()) s["error"] = run.error;
      v["seeds"].push_back(s);
    }
    j["variants"].push_back(v);
  }
  return j;
}

void WriteAblationOutputs(const std::filesystem::path& dir, const AblationResult& r) {
  std::filesystem::create_directories(dir);
  const auto write = [&](const char* name, const std::string& text) {
    std::ofstream out(dir / name, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
    out << text;
  };
  write("metrics.csv", MetricsCsv(r));
  write("ablation.csv", AblationCsv(r));
  write("summary.json", SummaryJson(r).dump(2) + "\n");
}

}  // namespace molfm::pipeline
