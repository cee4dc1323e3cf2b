// Copyright 2026 The molfm Authors.
// SPDX-License-Identifier: Apache-2.0

#include "molfm/pipeline/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace molfm::pipeline {

std::optional<double> RocAuc(std::span<const double> scores, std::span<const double> labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("roc_auc: length mismatch");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Ranks are doubled so that tied averages stay integral.
  double pos_rank2 = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg2 = static_cast<double>(i + 1 + j);  // 2 * mean of ranks i+1..j
    for (std::size_t t = i; t < j; ++t) {
      if (labels[order[t]] >= 0.5) {
        pos_rank2 += avg2;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;
  const double p = static_cast<double>(n_pos);
  const double u2 = pos_rank2 - p * (p + 1.0);
  return u2 / (2.0 * p * static_cast<double>(n_neg));
}

double MultitaskMeanAuc(const nn::Tensor<double>& scores, const nn::Tensor<double>& labels,
                        const nn::Tensor<double>& mask) {
  if (!scores.SameShape(labels) || !scores.SameShape(mask)) {
    throw std::invalid_argument("multitask_mean_auc: shape mismatch");
  }
  double sum = 0.0;
  std::size_t tasks = 0;
  for (std::size_t k = 0; k < scores.cols(); ++k) {
    std::vector<double> s, y;
    for (std::size_t i = 0; i < scores.rows(); ++i) {
      if (mask(i, k) == 0.0) continue;
      s.push_back(scores(i, k));
      y.push_back(labels(i, k));
    }
    if (const auto auc = RocAuc(s, y)) {
      sum += *auc;
      ++tasks;
    }
  }
  if (tasks == 0) throw std::invalid_argument("multitask_mean_auc: no task has both classes");
  return sum / static_cast<double>(tasks);
}

double Rmse(std::span<const double> preds, std::span<const double> labels) {
  if (preds.size() != labels.size()) throw std::invalid_argument("rmse: length mismatch");
  if (preds.empty()) throw std::invalid_argument("rmse: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) s += (preds[i] - labels[i]) * (preds[i] - labels[i]);
  return std::sqrt(s / static_cast<double>(preds.size()));
}

double MaskedRmse(const nn::Tensor<double>& preds, const nn::Tensor<double>& labels,
                  const nn::Tensor<double>& mask) {
  if (!preds.SameShape(labels) || !preds.SameShape(mask)) {
    throw std::invalid_argument("rmse: shape mismatch");
  }
  std::vector<double> p, y;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (mask[i] == 0.0) continue;
    p.push_back(preds[i]);
    y.push_back(labels[i]);
  }
  return Rmse(p, y);
}

CalibrationReport UncertaintyCalibration(std::span<const double> preds,
                                         std::span<const double> stds,
                                         std::span<const double> labels, double threshold) {
  if (preds.size() != stds.size() || preds.size() != labels.size()) {
    throw std::invalid_argument("uncertainty_calibration: length mismatch");
  }
  CalibrationReport r;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const bool error = (preds[i] >= 0.5) != (labels[i] >= 0.5);
    if (stds[i] > threshold) {
      ++r.high_count;
      r.high_errors += error;
    } else {
      ++r.low_count;
      r.low_errors += error;
    }
  }
  if (r.high_count > 0) r.high_error_rate = static_cast<double>(r.high_errors) / static_cast<double>(r.high_count);
  if (r.low_count > 0) r.low_error_rate = static_cast<double>(r.low_errors) / static_cast<double>(r.low_count);
  if (r.high_error_rate && r.low_error_rate && *r.low_error_rate > 0.0) {
    r.ratio = *r.high_error_rate / *r.low_error_rate;
  }
  return r;
}

double Pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("pearson: need two equal-length series");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw std::invalid_argument("pearson: zero variance");
  return sxy / std::sqrt(sxx * syy);
}

AttentionCorrelation AttentionBoltzmannCorrelation(const std::vector<std::vector<double>>& alpha,
                                                   const std::vector<std::vector<double>>& prior) {
  if (alpha.size() != prior.size()) throw std::invalid_argument("attention correlation: molecule count mismatch");
  std::vector<double> a, p;
  AttentionCorrelation r;
  std::size_t agree = 0;
  for (std::size_t m = 0; m < alpha.size(); ++m) {
    if (alpha[m].size() != prior[m].size()) {
      throw std::invalid_argument("attention correlation: conformer count mismatch");
    }
    if (alpha[m].size() < 2) continue;
    a.insert(a.end(), alpha[m].begin(), alpha[m].end());
    p.insert(p.end(), prior[m].begin(), prior[m].end());
    const auto am = std::max_element(alpha[m].begin(), alpha[m].end()) - alpha[m].begin();
    const auto pm = std::max_element(prior[m].begin(), prior[m].end()) - prior[m].begin();
    agree += am == pm;
    ++r.molecules;
  }
  if (r.molecules == 0) throw std::invalid_argument("attention correlation: need K >= 2");
  r.pairs = a.size();
  r.pearson = Pearson(a, p);
  r.argmax_agreement = static_cast<double>(agree) / static_cast<double>(r.molecules);
  return r;
}

double Tanimoto(const molrecord::Fingerprint& a, const molrecord::Fingerprint& b) {
  const std::size_t uni = (a | b).count();
  if (uni == 0) return 1.0;
  return static_cast<double>((a & b).count()) / static_cast<double>(uni);
}

double Tanimoto(const std::vector<bool>& a, const std::vector<bool>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("tanimoto: bitset length mismatch");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    inter += a[i] && b[i];
    uni += a[i] || b[i];
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

molrecord::Fingerprint MajorityCentroid(const std::vector<molrecord::Fingerprint>& fps) {
  molrecord::Fingerprint c;
  for (std::size_t bit = 0; bit < molrecord::kFingerprintBits; ++bit) {
    std::size_t count = 0;
    for (const auto& fp : fps) count += fp[bit];
    c[bit] = 2 * count > fps.size();
  }
  return c;
}

double DistanceToCentroid(const molrecord::Fingerprint& fp, const molrecord::Fingerprint& centroid) {
  return 1.0 - Tanimoto(fp, centroid);
}

}  // namespace molfm::pipeline
