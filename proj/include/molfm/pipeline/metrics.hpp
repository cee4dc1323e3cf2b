// Copyright 2026 The molfm Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "molfm/molrecord/record.hpp"
#include "molfm/nn/tensor.hpp"

namespace molfm::pipeline {

// Mann-Whitney U / (n_pos n_neg) with ties counted 1/2, via average ranks.
// Labels are read as positive when >= 0.5. Absent unless both classes occur.
// Throws on a length mismatch.
std::optional<double> RocAuc(std::span<const double> scores, std::span<const double> labels);

// Unweighted mean of per-task AUC over tasks with both classes among the
// present labels (mask != 0). Throws when no task is computable.
double MultitaskMeanAuc(const nn::Tensor<double>& scores, const nn::Tensor<double>& labels,
                        const nn::Tensor<double>& mask);

// Throws on empty input or a length mismatch.
double Rmse(std::span<const double> preds, std::span<const double> labels);

// RMSE over present entries of all tasks.
double MaskedRmse(const nn::Tensor<double>& preds, const nn::Tensor<double>& labels,
                  const nn::Tensor<double>& mask);

struct CalibrationReport {
  std::size_t high_count = 0;
  std::size_t low_count = 0;
  std::size_t high_errors = 0;
  std::size_t low_errors = 0;
  std::optional<double> high_error_rate;
  std::optional<double> low_error_rate;
  std::optional<double> ratio;
};

// Error means (pred >= 0.5) != label; "high" means std > threshold.
CalibrationReport UncertaintyCalibration(std::span<const double> preds,
                                         std::span<const double> stds,
                                         std::span<const double> labels,
                                         double threshold = 0.15);

struct AttentionCorrelation {
  double pearson = 0.0;
  double argmax_agreement = 0.0;  // fraction of molecules whose max alpha is the max p
  std::size_t pairs = 0;
  std::size_t molecules = 0;
};

// alpha[m] and prior[m] are the conformer weights of molecule m. Molecules
// with one conformer are skipped. Throws if none has two or more, or if either
// series has zero variance.
AttentionCorrelation AttentionBoltzmannCorrelation(const std::vector<std::vector<double>>& alpha,
                                                   const std::vector<std::vector<double>>& prior);

double Pearson(std::span<const double> x, std::span<const double> y);

// |a & b| / |a | b|, 1 for two empty sets.
double Tanimoto(const molrecord::Fingerprint& a, const molrecord::Fingerprint& b);
// Same over 0/1 vectors; throws on a length mismatch.
double Tanimoto(const std::vector<bool>& a, const std::vector<bool>& b);

// Bit set where more than half of the fingerprints have it set.
molrecord::Fingerprint MajorityCentroid(const std::vector<molrecord::Fingerprint>& fps);
double DistanceToCentroid(const molrecord::Fingerprint& fp, const molrecord::Fingerprint& centroid);

}  // namespace molfm::pipeline
