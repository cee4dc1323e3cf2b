// Copyright 2026 The molfm Authors.
// SPDX-License-Identifier: Apache-2.0

#include "molfm/pipeline/analysis.hpp"

#include <cmath>

#include "molfm/molrecord/features.hpp"
#include "molfm/pipeline/ablation.hpp"

namespace molfm::pipeline {

ConformerWeights CollectConformerWeights(const fusion::MolFM<float>& model, const PreparedDataset& data,
                                         const std::vector<std::size_t>& indices) {
  if (!model.options().use_3d) throw std::invalid_argument("analysis: model has no 3D branch");
  ConformerWeights w;
  for (const auto& b : MakeBatches(indices, 64)) {
    nn::Tape<float> tape;
    const auto out = model.Forward(tape, data.Batch(b), nn::ForwardMode{});
    const auto& alpha = out.alpha.value();
    for (std::size_t m = 0; m < b.size(); ++m) {
      const auto& sel = out.conformer_selection[m];
      const auto& energies = data.inputs()[b[m]].energies;
      std::vector<double> e, a;
      for (std::size_t k = 0; k < sel.size(); ++k) {
        e.push_back(energies[sel[k]]);
        a.push_back(alpha[out.conformer_offsets[m] + k]);
      }
      w.alpha.push_back(std::move(a));
      w.prior.push_back(molrecord::BoltzmannWeights(e, model.config().temperature));
    }
  }
  return w;
}

namespace {

nlohmann::ordered_json Opt(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

}  // namespace

nlohmann::ordered_json Analyze(const fusion::MolFM<float>& model, const PreparedDataset& data,
                               const std::vector<std::size_t>& indices,
                               const std::vector<std::size_t>& reference, const AnalysisOptions& opts) {
  nlohmann::ordered_json j;
  j["molecules"] = indices.size();
  try {
    const ConformerWeights w = CollectConformerWeights(model, data, indices);
    const AttentionCorrelation c = AttentionBoltzmannCorrelation(w.alpha, w.prior);
    j["attention"] = {{"pearson", c.pearson},
                      {"argmax_agreement", c.argmax_agreement},
                      {"pairs", c.pairs},
                      {"molecules", c.molecules}};
  } catch (const std::invalid_argument& e) {
    j["attention"] = {{"error", e.what()}};
  }

  if (model.config().task == fusion::TaskKind::kBinary && !indices.empty()) {
    std::vector<double> preds, stds, labels;
    const auto batches = MakeBatches(indices, 64);
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      const auto& b = batches[bi];
      const auto mc = fusion::McDropoutPredict(model, data.Batch(b), opts.mc_passes, opts.seed + bi);
      for (std::size_t m = 0; m < b.size(); ++m) {
        const auto& label = data.records()[b[m]].labels.at(0);
        if (!label) continue;
        preds.push_back(mc.mean(m, 0));
        stds.push_back(mc.std(m, 0));
        labels.push_back(*label);
      }
    }
    const CalibrationReport r = UncertaintyCalibration(preds, stds, labels, opts.sigma_threshold);
    j["calibration"] = {{"threshold", opts.sigma_threshold},
                        {"passes", opts.mc_passes},
                        {"high_count", r.high_count},
                        {"low_count", r.low_count},
                        {"high_error_rate", Opt(r.high_error_rate)},
                        {"low_error_rate", Opt(r.low_error_rate)},
                        {"ratio", Opt(r.ratio)}};
  } else {
    j["calibration"] = {{"error", "calibration needs a binary task"}};
  }

  std::vector<molrecord::Fingerprint> ref;
  for (std::size_t i : reference) {
    if (data.records()[i].fingerprint) ref.push_back(*data.records()[i].fingerprint);
  }
  std::vector<double> dist;
  if (!ref.empty()) {
    const auto centroid = MajorityCentroid(ref);
    for (std::size_t i : indices) {
      if (data.records()[i].fingerprint) dist.push_back(DistanceToCentroid(*data.records()[i].fingerprint, centroid));
    }
  }
  if (dist.empty()) {
    j["centroid_distance"] = {{"error", "no fingerprints"}};
  } else {
    j["centroid_distance"] = {{"mean", Mean(dist)}, {"std", PopulationStd(dist)}, {"count", dist.size()}};
  }
  return j;
}

}  // namespace molfm::pipeline
