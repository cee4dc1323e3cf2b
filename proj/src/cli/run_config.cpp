// Copyright 2026 The molfm Authors.
// SPDX-License-Identifier: Apache-2.0

#include "molfm/cli/run_config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <functional>
#include <limits>
#include <set>
#include <sstream>
#include <type_traits>

namespace molfm::cli {

using nlohmann::json;

namespace {

std::string Join(const std::vector<std::string>& parts, const char* sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

enum class Kind { kScalar, kString, kList };

struct Key {
  std::string name;
  Kind kind;
  std::function<json(const RunConfig&)> get;
  // Returns a problem description, or an empty string on success.
  std::function<std::string(RunConfig&, const json&)> set;
};

struct Range {
  double lo;
  double hi;
  bool lo_open;
  bool hi_open;

  bool Contains(double x) const {
    return (lo_open ? x > lo : x >= lo) && (hi_open ? x < hi : x <= hi);
  }
  std::string Describe() const {
    if (std::isinf(hi)) return std::string("must be ") + (lo_open ? "> " : ">= ") + json(lo).dump();
    return "must be in " + std::string(lo_open ? "(" : "[") + json(lo).dump() + ", " +
           json(hi).dump() + (hi_open ? ")" : "]");
  }
};

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr Range kPositive{0.0, kInf, true, false};
constexpr Range kNonNegative{0.0, kInf, false, false};
constexpr Range kDropout{0.0, 1.0, false, true};
constexpr Range kFraction{0.0, 1.0, true, false};

template <typename F>
Key SizeKey(std::string name, F field, std::uint64_t min = 1) {
  return {std::move(name), Kind::kScalar,
          [field](const RunConfig& c) { return json(field(const_cast<RunConfig&>(c))); },
          [field, min](RunConfig& c, const json& v) -> std::string {
            if (!v.is_number_unsigned()) return "expected a non-negative integer, got " + v.dump();
            const auto x = v.get<std::uint64_t>();
            if (x < min) return "must be >= " + std::to_string(min) + ", got " + v.dump();
            field(c) = static_cast<std::remove_reference_t<decltype(field(c))>>(x);
            return {};
          }};
}

template <typename F>
Key DoubleKey(std::string name, F field, Range range) {
  return {std::move(name), Kind::kScalar,
          [field](const RunConfig& c) { return json(field(const_cast<RunConfig&>(c))); },
          [field, range](RunConfig& c, const json& v) -> std::string {
            if (!v.is_number()) return "expected a number, got " + v.dump();
            const double x = v.get<double>();
            if (!range.Contains(x)) return range.Describe() + ", got " + v.dump();
            field(c) = x;
            return {};
          }};
}

template <typename F>
Key StringKey(std::string name, F field, bool allow_empty) {
  return {std::move(name), Kind::kString,
          [field](const RunConfig& c) { return json(field(const_cast<RunConfig&>(c))); },
          [field, allow_empty](RunConfig& c, const json& v) -> std::string {
            if (!v.is_string()) return "expected a string, got " + v.dump();
            if (!allow_empty && v.get<std::string>().empty()) return "must not be empty";
            field(c) = v.get<std::string>();
            return {};
          }};
}

// `parse` maps a string to a value or throws std::invalid_argument.
template <typename F, typename Parse, typename Name>
Key EnumKey(std::string name, F field, Parse parse, Name to_name) {
  return {std::move(name), Kind::kString,
          [field, to_name](const RunConfig& c) {
            return json(std::string(to_name(field(const_cast<RunConfig&>(c)))));
          },
          [field, parse](RunConfig& c, const json& v) -> std::string {
            if (!v.is_string()) return "expected a string, got " + v.dump();
            try {
              field(c) = parse(v.get<std::string>());
            } catch (const std::invalid_argument& e) {
              return e.what();
            }
            return {};
          }};
}

std::vector<Key> BuildKeys() {
  std::vector<Key> k;
  k.push_back(StringKey("data.path", [](RunConfig& c) -> auto& { return c.data.path; }, true));
  k.push_back(StringKey("data.split", [](RunConfig& c) -> auto& { return c.data.split; }, false));
  k.push_back(SizeKey("data.conformers", [](RunConfig& c) -> auto& { return c.data.conformers; }));

  k.push_back(SizeKey("model.d1", [](RunConfig& c) -> auto& { return c.model.enc1d.d_model; }));
  k.push_back(SizeKey("model.transformer_layers", [](RunConfig& c) -> auto& { return c.model.enc1d.layers; }));
  k.push_back(SizeKey("model.transformer_heads", [](RunConfig& c) -> auto& { return c.model.enc1d.heads; }));
  k.push_back(SizeKey("model.transformer_ff", [](RunConfig& c) -> auto& { return c.model.enc1d.d_ff; }));
  k.push_back(SizeKey("model.max_len", [](RunConfig& c) -> auto& { return c.model.enc1d.max_len; }));
  k.push_back(SizeKey("model.d2", [](RunConfig& c) -> auto& { return c.model.enc2d.d_model; }));
  k.push_back(SizeKey("model.gin_layers", [](RunConfig& c) -> auto& { return c.model.enc2d.layers; }));
  k.push_back(SizeKey("model.d3", [](RunConfig& c) -> auto& { return c.model.enc3d.d_model; }));
  k.push_back(SizeKey("model.schnet_interactions", [](RunConfig& c) -> auto& { return c.model.enc3d.interactions; }));
  k.push_back(DoubleKey("model.cutoff", [](RunConfig& c) -> auto& { return c.model.enc3d.cutoff; }, kPositive));
  k.push_back(SizeKey("model.n_rbf", [](RunConfig& c) -> auto& { return c.model.enc3d.n_rbf; }, 2));
  {
    Key drop = DoubleKey("model.encoder_dropout", [](RunConfig& c) -> auto& { return c.model.enc1d.dropout; }, kDropout);
    auto inner = drop.set;
    drop.set = [inner](RunConfig& c, const json& v) {
      std::string err = inner(c, v);
      if (err.empty()) c.model.enc2d.dropout = c.model.enc3d.dropout = c.model.enc1d.dropout;
      return err;
    };
    k.push_back(std::move(drop));
  }
  k.push_back(SizeKey("model.fusion_dim", [](RunConfig& c) -> auto& { return c.model.fusion_dim; }));
  k.push_back(SizeKey("model.fusion_heads", [](RunConfig& c) -> auto& { return c.model.fusion_heads; }));
  k.push_back(SizeKey("model.head_hidden", [](RunConfig& c) -> auto& { return c.model.head_hidden; }));
  k.push_back(DoubleKey("model.head_dropout", [](RunConfig& c) -> auto& { return c.model.head_dropout; }, kDropout));
  k.push_back(EnumKey("model.task", [](RunConfig& c) -> auto& { return c.model.task; },
                      [](const std::string& s) { return pipeline::ParseTaskKind(s); }, pipeline::TaskKindName));
  k.push_back(DoubleKey("model.temperature", [](RunConfig& c) -> auto& { return c.model.temperature; }, kPositive));
  k.push_back(SizeKey("model.conformer_seed", [](RunConfig& c) -> auto& { return c.model.conformer_seed; }, 0));

  k.push_back(SizeKey("train.pretrain.epochs", [](RunConfig& c) -> auto& { return c.pretrain.epochs; }));
  k.push_back(SizeKey("train.pretrain.batch_size", [](RunConfig& c) -> auto& { return c.pretrain.batch_size; }, 2));
  k.push_back(DoubleKey("train.pretrain.lr", [](RunConfig& c) -> auto& { return c.pretrain.lr; }, kPositive));
  k.push_back(DoubleKey("train.pretrain.weight_decay", [](RunConfig& c) -> auto& { return c.pretrain.weight_decay; }, kNonNegative));
  k.push_back(DoubleKey("train.pretrain.temperature", [](RunConfig& c) -> auto& { return c.pretrain.contrastive.temperature; }, kPositive));
  k.push_back(SizeKey("train.pretrain.warmup_steps", [](RunConfig& c) -> auto& { return c.pretrain.warmup_steps; }, 0));
  k.push_back(SizeKey("train.pretrain.proj_dim", [](RunConfig& c) -> auto& { return c.pretrain.proj_dim; }));
  k.push_back(DoubleKey("train.pretrain.mask_fraction", [](RunConfig& c) -> auto& { return c.pretrain.masking.mask_fraction; }, kFraction));
  k.push_back(DoubleKey("train.pretrain.lambda_map", [](RunConfig& c) -> auto& { return c.pretrain.weights.lambda_map; }, kNonNegative));
  k.push_back(EnumKey("train.pretrain.contrastive_aggregation",
                      [](RunConfig& c) -> auto& { return c.pretrain.contrastive.aggregation; },
                      [](const std::string& s) { return objectives::ParsePairAggregation(s); },
                      objectives::PairAggregationName));

  k.push_back(SizeKey("train.finetune.epochs", [](RunConfig& c) -> auto& { return c.finetune.epochs; }));
  k.push_back(SizeKey("train.finetune.patience", [](RunConfig& c) -> auto& { return c.finetune.patience; }));
  k.push_back(SizeKey("train.finetune.batch_size", [](RunConfig& c) -> auto& { return c.finetune.batch_size; }));
  k.push_back(DoubleKey("train.finetune.lr", [](RunConfig& c) -> auto& { return c.finetune.lr; }, kPositive));
  k.push_back(DoubleKey("train.finetune.weight_decay", [](RunConfig& c) -> auto& { return c.finetune.weight_decay; }, kNonNegative));
  k.push_back(SizeKey("train.finetune.mc_passes", [](RunConfig& c) -> auto& { return c.finetune.mc_passes; }, 2));
  k.push_back(DoubleKey("train.finetune.restart_t0", [](RunConfig& c) -> auto& { return c.finetune.restart_t0; }, kPositive));
  k.push_back(DoubleKey("train.finetune.restart_t_mult", [](RunConfig& c) -> auto& { return c.finetune.restart_t_mult; },
                        Range{1.0, kInf, false, false}));
  k.push_back(EnumKey("train.finetune.variant", [](RunConfig& c) -> auto& { return c.finetune_variant; },
                      [](const std::string& s) { return fusion::ParseVariant(s); }, fusion::VariantName));
  k.push_back(StringKey("train.finetune.init", [](RunConfig& c) -> auto& { return c.finetune_init; }, true));

  k.push_back({"ablation.variants", Kind::kList,
               [](const RunConfig& c) {
                 json a = json::array();
                 for (fusion::Variant v : c.ablation_variants) a.push_back(std::string(fusion::VariantName(v)));
                 return a;
               },
               [](RunConfig& c, const json& v) -> std::string {
                 if (!v.is_array() || v.empty()) return "expected a non-empty list of variant names";
                 std::vector<fusion::Variant> out;
                 std::vector<std::string> bad;
                 for (const json& e : v) {
                   if (!e.is_string()) {
                     bad.push_back(e.dump());
                     continue;
                   }
                   try {
                     const fusion::Variant x = fusion::ParseVariant(e.get<std::string>());
                     if (std::find(out.begin(), out.end(), x) != out.end()) {
                       return "variant " + e.get<std::string>() + " listed twice";
                     }
                     out.push_back(x);
                   } catch (const std::invalid_argument&) {
                     bad.push_back(e.dump());
                   }
                 }
                 if (!bad.empty()) return "unknown variants " + Join(bad, ", ");
                 c.ablation_variants = std::move(out);
                 return {};
               }});

  k.push_back(StringKey("analysis.checkpoint", [](RunConfig& c) -> auto& { return c.analysis.checkpoint; }, false));
  k.push_back(DoubleKey("analysis.sigma_threshold", [](RunConfig& c) -> auto& { return c.analysis.sigma_threshold; }, kNonNegative));

  k.push_back(StringKey("output_dir", [](RunConfig& c) -> auto& { return c.output_dir; }, false));
  k.push_back(SizeKey("seed", [](RunConfig& c) -> auto& { return c.seed; }, 0));
  k.push_back({"seeds", Kind::kList, [](const RunConfig& c) { return json(c.seeds); },
               [](RunConfig& c, const json& v) -> std::string {
                 if (!v.is_array() || v.empty()) return "expected a non-empty list of seeds";
                 std::vector<std::uint64_t> out;
                 for (const json& e : v) {
                   if (!e.is_number_unsigned()) return "expected non-negative integers, got " + e.dump();
                   out.push_back(e.get<std::uint64_t>());
                 }
                 c.seeds = std::move(out);
                 return {};
               }});
  return k;
}

const std::vector<Key>& Keys() {
  static const std::vector<Key> keys = BuildKeys();
  return keys;
}

const Key* FindKey(const std::string& name) {
  for (const Key& k : Keys()) {
    if (k.name == name) return &k;
  }
  return nullptr;
}

bool IsSection(const std::string& prefix) {
  for (const Key& k : Keys()) {
    if (k.name.size() > prefix.size() && k.name.compare(0, prefix.size(), prefix) == 0 &&
        k.name[prefix.size()] == '.') {
      return true;
    }
  }
  return false;
}

struct Loader {
  RunConfig cfg;
  std::vector<std::string> problems;
  std::set<std::string> seen;

  void Apply(const Key& key, const json& v, const std::string& source) {
    const std::string err = key.set(cfg, v);
    if (!err.empty()) problems.push_back(source + key.name + ": " + err);
    seen.insert(key.name);
  }

  void Walk(const json& obj, const std::string& prefix) {
    for (const auto& [name, v] : obj.items()) {
      const std::string full = prefix.empty() ? name : prefix + "." + name;
      if (const Key* key = FindKey(full)) {
        Apply(*key, v, "");
      } else if (IsSection(full)) {
        if (v.is_object()) {
          Walk(v, full);
        } else {
          problems.push_back(full + ": expected an object (section), got " + v.dump());
        }
      } else {
        problems.push_back("unknown key \"" + full + "\"");
      }
    }
  }

  void Override(const std::string& text) {
    const auto eq = text.find('=');
    if (eq == std::string::npos || eq == 0) {
      problems.push_back("--set expects key=value, got \"" + text + "\"");
      return;
    }
    const std::string name = text.substr(0, eq);
    const std::string raw = text.substr(eq + 1);
    const Key* key = FindKey(name);
    if (key == nullptr) {
      problems.push_back("--set: unknown key \"" + name + "\"");
      return;
    }
    auto parse = [](const std::string& s) {
      json v = json::parse(s, nullptr, /*allow_exceptions=*/false);
      return v.is_discarded() ? json(s) : v;
    };
    json v;
    if (key->kind == Kind::kString) {
      v = raw;
    } else {
      v = parse(raw);
      if (key->kind == Kind::kList && v.is_string()) {
        v = json::array();
        std::stringstream ss(raw);
        for (std::string piece; std::getline(ss, piece, ',');) v.push_back(parse(piece));
      }
    }
    Apply(*key, v, "--set ");
  }

  void CrossChecks() {
    auto divides = [&](const char* heads, std::size_t h, const char* dim, std::size_t d) {
      if (h != 0 && d % h != 0) {
        problems.push_back(std::string(heads) + " (" + std::to_string(h) + ") must divide " + dim +
                           " (" + std::to_string(d) + ")");
      }
    };
    divides("model.transformer_heads", cfg.model.enc1d.heads, "model.d1", cfg.model.enc1d.d_model);
    divides("model.fusion_heads", cfg.model.fusion_heads, "model.fusion_dim", cfg.model.fusion_dim);
  }
};

}  // namespace

ConfigError::ConfigError(std::vector<std::string> problems)
    : std::runtime_error("invalid configuration:\n  " + Join(problems, "\n  ")),
      problems_(std::move(problems)) {}

std::vector<std::string> ConfigKeys() {
  std::vector<std::string> names;
  for (const Key& k : Keys()) names.push_back(k.name);
  return names;
}

nlohmann::ordered_json RunConfigToJson(const RunConfig& cfg) {
  nlohmann::ordered_json out = nlohmann::ordered_json::object();
  for (const Key& k : Keys()) {
    nlohmann::ordered_json* node = &out;
    std::stringstream ss(k.name);
    std::vector<std::string> parts;
    for (std::string p; std::getline(ss, p, '.');) parts.push_back(p);
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) node = &(*node)[parts[i]];
    (*node)[parts.back()] = k.get(cfg);
  }
  return out;
}

RunConfig LoadRunConfig(const json* file, const std::vector<std::string>& overrides,
                        const std::optional<std::string>& env_seed) {
  Loader l;
  if (file != nullptr) {
    if (file->is_object()) {
      l.Walk(*file, "");
    } else {
      l.problems.push_back("config must be a JSON object");
    }
  }
  for (const std::string& o : overrides) l.Override(o);
  if (!l.seen.count("seed") && env_seed) {
    std::uint64_t s = 0;
    const char* b = env_seed->data();
    const char* e = b + env_seed->size();
    const auto [ptr, ec] = std::from_chars(b, e, s);
    if (env_seed->empty() || ec != std::errc() || ptr != e) {
      l.problems.push_back("MOLFM_SEED: expected a non-negative integer, got \"" + *env_seed + "\"");
    } else {
      l.cfg.seed = s;
    }
  }
  l.CrossChecks();
  if (!l.problems.empty()) throw ConfigError(std::move(l.problems));
  return l.cfg;
}

std::string ConfigKeyTable() {
  const RunConfig defaults;
  std::size_t width = 0;
  for (const Key& k : Keys()) width = std::max(width, k.name.size());
  std::string out;
  for (const Key& k : Keys()) {
    out += "  " + k.name + std::string(width - k.name.size() + 2, ' ') + k.get(defaults).dump() + "\n";
  }
  return out;
}

}  // namespace molfm::cli
