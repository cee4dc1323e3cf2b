// Copyright 2026 The molfm Authors.
// SPDX-License-Identifier: Apache-2.0

#include "molfm/pipeline/train.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "molfm/nn/optim.hpp"
#include "molfm/pipeline/metrics.hpp"

namespace molfm::pipeline {

namespace {

const std::vector<std::string> kEncoderPrefixes = {"enc1d.", "enc2d.", "enc3d.", "ens.query"};

nlohmann::ordered_json VocabJson(const molrecord::Vocabulary& v) {
  return nlohmann::ordered_json(v.tokens());
}

std::string Fixed(double v) {
  std::ostringstream s;
  s.precision(6);
  s << v;
  return s.str();
}

ModelInstance NewInstance(const fusion::ModelConfig& mc, fusion::Variant variant, nn::Rng& rng) {
  ModelInstance inst;
  inst.variant = variant;
  inst.store = std::make_unique<nn::ParameterStore<float>>();
  inst.model = std::make_unique<fusion::MolFM<float>>(*inst.store, mc, fusion::OptionsFor(variant), rng);
  return inst;
}

bool AnyTaskComputable(const objectives::SupervisedTargets& t) {
  for (std::size_t k = 0; k < t.values.cols(); ++k) {
    bool pos = false, neg = false;
    for (std::size_t i = 0; i < t.values.rows(); ++i) {
      if (t.mask(i, k) == 0.0) continue;
      (t.values(i, k) >= 0.5 ? pos : neg) = true;
    }
    if (pos && neg) return true;
  }
  return false;
}

// Mean supervised loss in eval mode, molecule-weighted over batches with labels.
double EvalLoss(const fusion::MolFM<float>& model, const PreparedDataset& data,
                const std::vector<std::size_t>& indices) {
  double sum = 0.0, weight = 0.0;
  for (const auto& b : MakeBatches(indices, 64)) {
    const auto targets = data.Targets(b);
    double present = 0.0;
    for (double m : targets.mask.storage()) present += m;
    if (present == 0.0) continue;
    nn::Tape<float> tape;
    const auto out = model.Forward(tape, data.Batch(b), nn::ForwardMode{});
    const auto loss = objectives::SupervisedLoss(out.logits, targets, model.config().task);
    sum += static_cast<double>(loss.value()[0]) * present;
    weight += present;
  }
  if (weight == 0.0) throw std::invalid_argument("finetune: validation part has no labels");
  return sum / weight;
}

}  // namespace

fusion::ModelConfig ConfigForDataset(fusion::ModelConfig cfg, const PreparedDataset& data) {
  cfg.enc1d.vocab_size = data.vocab().size();
  cfg.num_tasks = std::max<std::size_t>(1, data.num_tasks());
  cfg.context_dim = data.context_dim();
  return cfg;
}

molrecord::Vocabulary VocabFromCheckpoint(const Checkpoint& ckpt) {
  if (!ckpt.meta.contains("vocab")) throw CheckpointError("checkpoint: metadata has no vocab");
  return molrecord::Vocabulary::FromTokens(ckpt.meta["vocab"].get<std::vector<std::string>>());
}

fusion::ModelConfig ModelConfigFromCheckpoint(const Checkpoint& ckpt) {
  if (!ckpt.meta.contains("model")) throw CheckpointError("checkpoint: metadata has no model config");
  return ModelConfigFromJson(ckpt.meta["model"]);
}

ModelInstance ModelFromCheckpoint(const Checkpoint& ckpt) {
  const fusion::ModelConfig mc = ModelConfigFromCheckpoint(ckpt);
  const fusion::Variant variant = fusion::ParseVariant(ckpt.meta.value("variant", "full"));
  nn::Rng rng(0);
  ModelInstance inst = NewInstance(mc, variant, rng);
  if (ckpt.meta.value("phase", "") == "pretrain") {
    inst.heads = std::make_unique<objectives::PretrainHeads<float>>(
        *inst.store, mc, ckpt.meta.at("proj_dim").get<std::size_t>(), rng);
  }
  ApplyTensors(ckpt, *inst.store);
  return inst;
}

PretrainResult RunPretrain(const PreparedDataset& data, const fusion::ModelConfig& model_cfg,
                           const PretrainConfig& cfg, std::uint64_t seed,
                           const PretrainLogFn& on_epoch) {
  CheckPretrainConfig(cfg);
  if (data.size() < 2) throw std::invalid_argument("pretrain: need at least 2 molecules");
  const fusion::ModelConfig mc = ConfigForDataset(model_cfg, data);
  nn::Rng init_rng = nn::DeriveRng(seed, 0);
  nn::Rng order_rng = nn::DeriveRng(seed, 1);
  nn::Rng noise_rng = nn::DeriveRng(seed, 2);
  ModelInstance inst = NewInstance(mc, fusion::Variant::kFull, init_rng);
  inst.heads = std::make_unique<objectives::PretrainHeads<float>>(*inst.store, mc, cfg.proj_dim, init_rng);

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  // Contrastive batches need two molecules, so a trailing singleton is merged.
  const std::size_t per_epoch = MakeBatches(order, cfg.batch_size, 2).size();
  const nn::LRSchedule sched = nn::WarmupCosine{cfg.lr, cfg.warmup_steps, per_epoch * cfg.epochs};
  nn::AdamW<float> opt(*inst.store, nn::AdamWConfig{0.9, 0.999, 1e-8, cfg.weight_decay});

  PretrainResult result;
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    nn::Shuffle(order, order_rng);
    PretrainEpoch log;
    log.epoch = epoch;
    double weight = 0.0;
    for (const auto& b : MakeBatches(order, cfg.batch_size, 2)) {
      fusion::ModelBatch batch = data.Batch(b);
      const objectives::AtomMask mask = objectives::MaskAtoms(batch.mols, cfg.masking, noise_rng);
      batch.masked = mask.masked;
      inst.store->ZeroGrad();
      nn::Tape<float> tape;
      const auto out = inst.model->Forward(tape, batch, nn::ForwardMode{true, true, &noise_rng});
      const auto losses = (*inst.heads)(tape, out, mask, cfg.contrastive, cfg.weights);
      const double ctr = losses.contrastive.value()[0];
      const double map = losses.masked_atom.value()[0];
      const double total = losses.total.value()[0];
      if (!std::isfinite(total)) {
        throw NumericError("pretrain: non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                           std::to_string(step + 1) + " (contrastive " + Fixed(ctr) +
                           ", masked_atom " + Fixed(map) + ")");
      }
      tape.Backward(losses.total);
      log.lr = nn::LearningRateAt(sched, static_cast<double>(++step));
      opt.Step(log.lr);
      const double w = static_cast<double>(b.size());
      log.contrastive += w * ctr;
      log.masked_atom += w * map;
      log.total += w * total;
      weight += w;
    }
    log.contrastive /= weight;
    log.masked_atom /= weight;
    log.total /= weight;
    result.log.push_back(log);
    if (on_epoch) on_epoch(log);
  }

  auto& meta = result.checkpoint.meta;
  meta["phase"] = "pretrain";
  meta["variant"] = "full";
  meta["model"] = ModelConfigToJson(mc);
  meta["proj_dim"] = cfg.proj_dim;
  meta["vocab"] = VocabJson(data.vocab());
  meta["epoch"] = cfg.epochs;
  meta["best_val"] = nullptr;
  meta["rng"] = RngState(noise_rng);
  result.checkpoint.tensors = CaptureTensors(*inst.store);
  return result;
}

nn::Tensor<double> PredictIndices(const fusion::MolFM<float>& model, const PreparedDataset& data,
                                  const std::vector<std::size_t>& indices, std::size_t batch_size) {
  nn::Tensor<double> out = nn::Tensor<double>::Matrix(indices.size(), model.config().num_tasks);
  std::size_t row = 0;
  for (const auto& b : MakeBatches(indices, batch_size)) {
    const nn::Tensor<double> p = fusion::Predict(model, data.Batch(b));
    std::copy(p.storage().begin(), p.storage().end(), out.storage().begin() + static_cast<std::ptrdiff_t>(row * out.cols()));
    row += b.size();
  }
  return out;
}

std::optional<double> EvaluateMetric(const fusion::MolFM<float>& model, const PreparedDataset& data,
                                     const std::vector<std::size_t>& indices) {
  if (indices.empty()) return std::nullopt;
  const nn::Tensor<double> preds = PredictIndices(model, data, indices);
  const auto targets = data.Targets(indices);
  if (model.config().task == fusion::TaskKind::kBinary) {
    if (!AnyTaskComputable(targets)) return std::nullopt;
    return MultitaskMeanAuc(preds, targets.values, targets.mask);
  }
  double present = 0.0;
  for (double m : targets.mask.storage()) present += m;
  if (present == 0.0) return std::nullopt;
  return MaskedRmse(preds, targets.values, targets.mask);
}

FinetuneResult RunFinetune(const PreparedDataset& data, const Split& split,
                           const fusion::ModelConfig& model_cfg, const FinetuneConfig& cfg,
                           fusion::Variant variant, std::uint64_t seed, const Checkpoint* init,
                           const FinetuneEpochFn& on_epoch) {
  CheckFinetuneConfig(cfg);
  if (split.train.empty() || split.val.empty() || split.test.empty()) {
    throw std::invalid_argument("finetune: empty split part (train " + std::to_string(split.train.size()) +
                                ", val " + std::to_string(split.val.size()) + ", test " +
                                std::to_string(split.test.size()) + ")");
  }
  if (data.num_tasks() == 0) throw std::invalid_argument("finetune: records carry no labels");
  const fusion::ModelConfig mc = ConfigForDataset(model_cfg, data);
  nn::Rng init_rng = nn::DeriveRng(seed, 0);
  nn::Rng order_rng = nn::DeriveRng(seed, 1);
  nn::Rng noise_rng = nn::DeriveRng(seed, 2);
  ModelInstance inst = NewInstance(mc, variant, init_rng);

  FinetuneResult result;
  if (init != nullptr && variant != fusion::Variant::kNoPretrain) {
    if (!(VocabFromCheckpoint(*init) == data.vocab())) {
      throw std::invalid_argument("finetune: dataset vocabulary differs from the checkpoint's");
    }
    ApplyTensors(*init, *inst.store, LoadFilter{kEncoderPrefixes});
  } else if (init != nullptr) {
    result.warnings.push_back("no_pretrain: initial checkpoint ignored");
  }

  const bool binary = mc.task == fusion::TaskKind::kBinary;
  result.metric = binary ? "roc_auc" : "rmse";
  result.higher_is_better = binary;
  if (binary && !AnyTaskComputable(data.Targets(split.val))) {
    result.metric = "val_loss";
    result.higher_is_better = false;
    result.warnings.push_back("validation part has no task with both classes; selecting on validation loss");
  }
  const auto val_metric = [&]() {
    if (result.metric == "val_loss") return EvalLoss(*inst.model, data, split.val);
    const auto m = EvaluateMetric(*inst.model, data, split.val);
    if (!m) throw std::invalid_argument("finetune: validation part has no labels");
    return *m;
  };

  nn::AdamW<float> opt(*inst.store, nn::AdamWConfig{0.9, 0.999, 1e-8, cfg.weight_decay});
  const nn::LRSchedule sched = nn::CosineWarmRestarts{cfg.lr, cfg.restart_t0, cfg.restart_t_mult, 0.0};
  std::vector<std::size_t> order = split.train;
  std::vector<nn::Tensor<float>> best_weights;
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    nn::Shuffle(order, order_rng);
    const auto batches = MakeBatches(order, cfg.batch_size);
    FinetuneEpoch rec;
    rec.epoch = epoch;
    double weight = 0.0;
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      const auto& b = batches[bi];
      const auto targets = data.Targets(b);
      double present = 0.0;
      for (double m : targets.mask.storage()) present += m;
      if (present == 0.0) continue;
      rec.lr = nn::LearningRateAt(sched, static_cast<double>(epoch - 1) +
                                             static_cast<double>(bi) / static_cast<double>(batches.size()));
      inst.store->ZeroGrad();
      nn::Tape<float> tape;
      const auto out = inst.model->Forward(tape, data.Batch(b), nn::ForwardMode{true, true, &noise_rng});
      const auto loss = objectives::SupervisedLoss(out.logits, targets, mc.task);
      const double v = loss.value()[0];
      if (!std::isfinite(v)) {
        throw NumericError("finetune: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(bi + 1));
      }
      tape.Backward(loss);
      opt.Step(rec.lr);
      rec.train_loss += v * present;
      weight += present;
    }
    if (weight > 0.0) rec.train_loss /= weight;
    rec.val_metric = val_metric();
    rec.improved = result.best_epoch == 0 ||
                   (result.higher_is_better ? rec.val_metric > result.best_val : rec.val_metric < result.best_val);
    if (rec.improved) {
      result.best_val = rec.val_metric;
      result.best_epoch = epoch;
      best_weights = inst.store->Snapshot();
      since_best = 0;
    } else {
      ++since_best;
    }
    if (cfg.track_train_metric) rec.train_metric = EvaluateMetric(*inst.model, data, split.train);
    result.history.push_back(rec);
    if (on_epoch && on_epoch(rec)) break;
    if (since_best >= cfg.patience) {
      result.early_stopped = epoch < cfg.epochs;
      break;
    }
  }

  inst.store->Restore(best_weights);
  result.test_metric = EvaluateMetric(*inst.model, data, split.test);

  auto& meta = result.checkpoint.meta;
  meta["phase"] = "finetune";
  meta["variant"] = fusion::VariantName(variant);
  meta["model"] = ModelConfigToJson(mc);
  meta["vocab"] = VocabJson(data.vocab());
  meta["epoch"] = result.best_epoch;
  meta["best_val"] = result.best_val;
  meta["rng"] = RngState(noise_rng);
  result.checkpoint.tensors = CaptureTensors(*inst.store);
  return result;
}

}  // namespace molfm::pipeline
