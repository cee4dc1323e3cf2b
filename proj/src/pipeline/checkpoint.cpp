// Copyright 2026 The molfm Authors.
// SPDX-License-Identifier: Apache-2.0

#include "molfm/pipeline/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

namespace molfm::pipeline {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'M', 'F', 'L', 'T'};

template <typename U>
void Put(std::string& out, U v) {
  char buf[sizeof(U)];
  std::memcpy(buf, &v, sizeof(U));
  out.append(buf, sizeof(U));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename U>
  U Get(const char* what) {
    Need(sizeof(U), what);
    U v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return v;
  }

  std::string Bytes(std::size_t n, const char* what) {
    Need(n, what);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == bytes_.size(); }

  [[noreturn]] void Fail(const std::string& msg, std::size_t at) const {
    throw CheckpointError("checkpoint: " + msg + " at offset " + std::to_string(at));
  }

 private:
  void Need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) Fail(std::string("truncated ") + what, pos_);
  }

  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

const NamedTensor* Checkpoint::Find(std::string_view name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

std::string SerializeCheckpoint(const Checkpoint& ckpt) {
  std::string out(kMagic, 4);
  Put<std::uint32_t>(out, kCheckpointVersion);
  const std::string meta = ckpt.meta.dump();
  Put<std::uint64_t>(out, meta.size());
  out += meta;
  Put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors) {
    Put<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out += t.name;
    Put<std::uint32_t>(out, static_cast<std::uint32_t>(t.value.rank()));
    for (std::size_t d : t.value.shape()) Put<std::uint64_t>(out, d);
    out.append(reinterpret_cast<const char*>(t.value.data()), t.value.size() * sizeof(float));
  }
  return out;
}

Checkpoint DeserializeCheckpoint(const std::string& bytes) {
  Reader r(bytes);
  if (r.Bytes(4, "magic") != std::string(kMagic, 4)) r.Fail("bad magic", 0);
  const std::size_t version_at = r.pos();
  const auto version = r.Get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    r.Fail("unsupported version " + std::to_string(version), version_at);
  }
  Checkpoint ckpt;
  const auto meta_len = r.Get<std::uint64_t>("metadata length");
  const std::size_t meta_at = r.pos();
  const std::string meta = r.Bytes(meta_len, "metadata");
  try {
    ckpt.meta = nlohmann::ordered_json::parse(meta);
  } catch (const nlohmann::json::parse_error& e) {
    r.Fail(std::string("malformed metadata (") + e.what() + ")", meta_at);
  }
  const auto count = r.Get<std::uint32_t>("tensor count");
  std::set<std::string> seen;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t at = r.pos();
    NamedTensor t;
    t.name = r.Bytes(r.Get<std::uint32_t>("name length"), "tensor name");
    if (!seen.insert(t.name).second) r.Fail("duplicate tensor \"" + t.name + "\"", at);
    const auto rank = r.Get<std::uint32_t>("rank");
    if (rank > 8) r.Fail("implausible rank " + std::to_string(rank), at);
    nn::Shape shape(rank);
    for (auto& d : shape) d = r.Get<std::uint64_t>("dims");
    const std::size_t n = nn::NumElements(shape);
    const std::string payload = r.Bytes(n * sizeof(float), "tensor payload");
    std::vector<float> data(n);
    std::memcpy(data.data(), payload.data(), payload.size());
    t.value = nn::Tensor<float>(std::move(shape), std::move(data));
    ckpt.tensors.push_back(std::move(t));
  }
  if (!r.done()) r.Fail("trailing bytes", r.pos());
  return ckpt;
}

void SaveCheckpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const std::string bytes = SerializeCheckpoint(ckpt);
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint LoadCheckpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("checkpoint not found: " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return DeserializeCheckpoint(bytes);
  } catch (const CheckpointError& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
}

template <typename T>
std::vector<NamedTensor> CaptureTensors(const nn::ParameterStore<T>& store) {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < store.size(); ++i) {
    out.push_back({store[i].name, store[i].value.template Cast<float>()});
  }
  return out;
}

template <typename T>
void ApplyTensors(const Checkpoint& ckpt, nn::ParameterStore<T>& store, const LoadFilter& filter) {
  const auto selected = [&](const std::string& name) {
    if (filter.prefixes.empty()) return true;
    for (const auto& p : filter.prefixes) {
      if (name.rfind(p, 0) == 0) return true;
    }
    return false;
  };
  std::vector<std::string> missing, extra, shape;
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& p = store[i];
    if (!selected(p.name)) continue;
    const NamedTensor* t = ckpt.Find(p.name);
    if (t == nullptr) {
      missing.push_back(p.name);
    } else if (t->value.shape() != p.value.shape()) {
      shape.push_back(p.name + " " + nn::ShapeString(t->value.shape()) + " vs " +
                      nn::ShapeString(p.value.shape()));
    }
  }
  if (filter.prefixes.empty()) {
    for (const auto& t : ckpt.tensors) {
      if (store.Find(t.name) == nullptr) extra.push_back(t.name);
    }
  }
  if (!missing.empty() || !extra.empty() || !shape.empty()) {
    std::string msg = "checkpoint does not match the model";
    const auto list = [&](const char* label, const std::vector<std::string>& names) {
      if (names.empty()) return;
      msg += std::string("; ") + label + ":";
      for (const auto& n : names) msg += " " + n;
    };
    list("missing", missing);
    list("extra", extra);
    list("shape mismatch", shape);
    throw CheckpointError(msg);
  }
  for (std::size_t i = 0; i < store.size(); ++i) {
    auto& p = store[i];
    if (!selected(p.name)) continue;
    p.value = ckpt.Find(p.name)->value.template Cast<T>();
  }
}

std::string RngState(const nn::Rng& rng) {
  std::ostringstream s;
  s << rng;
  return s.str();
}

nn::Rng RngFromState(const std::string& state) {
  std::istringstream s(state);
  nn::Rng rng;
  s >> rng;
  if (!s) throw CheckpointError("checkpoint: malformed rng state");
  return rng;
}

template std::vector<NamedTensor> CaptureTensors(const nn::ParameterStore<float>&);
template std::vector<NamedTensor> CaptureTensors(const nn::ParameterStore<double>&);
template void ApplyTensors(const Checkpoint&, nn::ParameterStore<float>&, const LoadFilter&);
template void ApplyTensors(const Checkpoint&, nn::ParameterStore<double>&, const LoadFilter&);

}  // namespace molfm::pipeline
