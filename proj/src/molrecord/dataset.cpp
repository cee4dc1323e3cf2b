// Copyright 2026 The molfm Authors.
// SPDX-License-Identifier: Apache-2.0

#include "molfm/molrecord/dataset.hpp"

#include <sodium.h>

#include <cmath>
#include <fstream>
#include <functional>
#include <istream>
#include <ostream>
#include <set>

#include <json.hpp>

namespace molfm::molrecord {

namespace {

using nlohmann::json;

std::string Path(const std::string& base, std::size_t i) {
  return base + "[" + std::to_string(i) + "]";
}

const json& Require(const json& obj, const char* key, const std::string& where) {
  const auto it = obj.find(key);
  if (it == obj.end()) {
    throw DataError(0, where.empty() ? key : where + "." + key, "missing required field");
  }
  return *it;
}

std::string Sub(const std::string& where, const char* key) {
  return where.empty() ? std::string(key) : where + "." + key;
}

const json& RequireArray(const json& obj, const char* key, const std::string& where) {
  const json& j = Require(obj, key, where);
  if (!j.is_array()) throw DataError(0, Sub(where, key), "expected an array");
  return j;
}

double AsDouble(const json& j, const std::string& field) {
  if (!j.is_number()) throw DataError(0, field, "expected a number");
  return j.get<double>();
}

long long AsInt(const json& j, const std::string& field) {
  if (j.is_number_integer()) return j.get<long long>();
  if (j.is_number_float()) {
    const double v = j.get<double>();
    if (std::floor(v) == v && std::abs(v) < 1e15) return static_cast<long long>(v);
  }
  throw DataError(0, field, "expected an integer");
}

std::size_t AsIndex(const json& j, const std::string& field) {
  const long long v = AsInt(j, field);
  if (v < 0) throw DataError(0, field, "negative index");
  return static_cast<std::size_t>(v);
}

std::string AsString(const json& j, const std::string& field) {
  if (!j.is_string()) throw DataError(0, field, "expected a string");
  return j.get<std::string>();
}

BondOrder ParseBondOrder(const json& j, const std::string& field) {
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    if (s == "aromatic" || s == "AROMATIC") return BondOrder::kAromatic;
    if (s == "1") return BondOrder::kSingle;
    if (s == "2") return BondOrder::kDouble;
    if (s == "3") return BondOrder::kTriple;
  } else if (j.is_number()) {
    const double v = j.get<double>();
    if (v == 1.0) return BondOrder::kSingle;
    if (v == 2.0) return BondOrder::kDouble;
    if (v == 3.0) return BondOrder::kTriple;
    if (v == 1.5) return BondOrder::kAromatic;
  }
  throw DataError(0, field, "bond order must be 1, 2, 3 or \"aromatic\"");
}

MoleculeRecord FromJson(const json& obj) {
  if (!obj.is_object()) throw DataError(0, "", "expected a JSON object");
  MoleculeRecord r;
  r.id = AsString(Require(obj, "id", ""), "id");
  r.selfies = AsString(Require(obj, "selfies", ""), "selfies");

  const json& atoms = RequireArray(obj, "atoms", "");
  for (std::size_t a = 0; a < atoms.size(); ++a) {
    const std::string where = Path("atoms", a);
    const json& ja = atoms[a];
    if (!ja.is_object()) throw DataError(0, where, "expected an object");
    AtomSpec atom;
    atom.element = AsString(Require(ja, "element", where), Sub(where, "element"));
    atom.degree = static_cast<int>(AsInt(Require(ja, "degree", where), Sub(where, "degree")));
    atom.formal_charge = static_cast<int>(
        AsInt(Require(ja, "formal_charge", where), Sub(where, "formal_charge")));
    atom.num_h = static_cast<int>(AsInt(Require(ja, "num_h", where), Sub(where, "num_h")));
    atom.hybridization = ParseHybridization(
        AsString(Require(ja, "hybridization", where), Sub(where, "hybridization")));
    r.atoms.push_back(std::move(atom));
  }

  const json& bonds = RequireArray(obj, "bonds", "");
  for (std::size_t b = 0; b < bonds.size(); ++b) {
    const std::string where = Path("bonds", b);
    const json& jb = bonds[b];
    if (!jb.is_array() || jb.size() != 3) throw DataError(0, where, "expected [i, j, order]");
    r.bonds.push_back({AsIndex(jb[0], where), AsIndex(jb[1], where),
                       ParseBondOrder(jb[2], where)});
  }

  const json& confs = RequireArray(obj, "conformers", "");
  for (std::size_t k = 0; k < confs.size(); ++k) {
    const std::string where = Path("conformers", k);
    const json& jc = confs[k];
    if (!jc.is_object()) throw DataError(0, where, "expected an object");
    Conformer c;
    const json& coords = RequireArray(jc, "coords", where);
    for (std::size_t a = 0; a < coords.size(); ++a) {
      const json& xyz = coords[a];
      const std::string cw = Path(where + ".coords", a);
      if (!xyz.is_array() || xyz.size() != 3) throw DataError(0, cw, "expected [x, y, z]");
      c.coords.push_back({AsDouble(xyz[0], cw), AsDouble(xyz[1], cw), AsDouble(xyz[2], cw)});
    }
    c.energy = AsDouble(Require(jc, "energy", where), Sub(where, "energy"));
    r.conformers.push_back(std::move(c));
  }

  const json& labels = RequireArray(obj, "labels", "");
  for (std::size_t t = 0; t < labels.size(); ++t) {
    if (labels[t].is_null()) {
      r.labels.emplace_back(std::nullopt);
    } else {
      r.labels.emplace_back(AsDouble(labels[t], Path("labels", t)));
    }
  }
  const json& context = RequireArray(obj, "context", "");
  for (std::size_t t = 0; t < context.size(); ++t) {
    r.context.push_back(AsDouble(context[t], Path("context", t)));
  }
  r.scaffold_key = AsString(Require(obj, "scaffold", ""), "scaffold");
  if (const auto it = obj.find("fingerprint_b64"); it != obj.end() && !it->is_null()) {
    try {
      r.fingerprint = DecodeFingerprint(AsString(*it, "fingerprint_b64"));
    } catch (const std::invalid_argument& e) {
      throw DataError(0, "fingerprint_b64", e.what());
    }
  }
  ValidateRecord(r);
  return r;
}

bool Blank(const std::string& line) {
  return line.find_first_not_of(" \t\r\n") == std::string::npos;
}

// Shared by ParseDataset and ValidateDataset; `on_error` either throws or
// records.
void Scan(std::istream& in, ValidationReport& report,
          const std::function<void(DataError)>& on_error) {
  std::set<std::string> ids;
  bool have_shape = false;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (Blank(line)) continue;
    ++report.lines;
    MoleculeRecord r;
    try {
      r = ParseRecordLine(line, line_no);
    } catch (const DataError& e) {
      on_error(e);
      continue;
    }
    if (!have_shape) {
      report.num_tasks = r.labels.size();
      report.context_dim = r.context.size();
      have_shape = true;
    }
    if (r.labels.size() != report.num_tasks) {
      on_error(DataError(line_no, "labels",
                         "expected " + std::to_string(report.num_tasks) + " tasks, got " +
                             std::to_string(r.labels.size())));
      continue;
    }
    if (r.context.size() != report.context_dim) {
      on_error(DataError(line_no, "context",
                         "expected length " + std::to_string(report.context_dim) + ", got " +
                             std::to_string(r.context.size())));
      continue;
    }
    if (!ids.insert(r.id).second) {
      on_error(DataError(line_no, "id", "duplicate id \"" + r.id + "\""));
      continue;
    }
    ++report.conformer_counts[r.num_conformers()];
    report.records.push_back(std::move(r));
  }
}

}  // namespace

MoleculeRecord ParseRecordLine(const std::string& line, std::size_t line_no) {
  json obj;
  try {
    obj = json::parse(line);
  } catch (const json::parse_error& e) {
    throw DataError(line_no, "", std::string("malformed JSON: ") + e.what());
  }
  try {
    return FromJson(obj);
  } catch (const DataError& e) {
    throw e.AtLine(line_no);
  }
}

std::vector<MoleculeRecord> ParseDataset(std::istream& in) {
  ValidationReport report;
  Scan(in, report, [](DataError e) { throw e; });
  return std::move(report.records);
}

std::vector<MoleculeRecord> ParseDatasetFile(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(0, "", "cannot open " + path.string());
  return ParseDataset(in);
}

ValidationReport ValidateDataset(std::istream& in) {
  ValidationReport report;
  Scan(in, report, [&report](DataError e) { report.errors.push_back(std::move(e)); });
  return report;
}

std::string RecordToJsonLine(const MoleculeRecord& r) {
  nlohmann::ordered_json obj;
  obj["id"] = r.id;
  obj["selfies"] = r.selfies;
  obj["atoms"] = nlohmann::ordered_json::array();
  for (const AtomSpec& a : r.atoms) {
    obj["atoms"].push_back({{"element", a.element},
                            {"degree", a.degree},
                            {"formal_charge", a.formal_charge},
                            {"num_h", a.num_h},
                            {"hybridization", std::string(HybridizationName(a.hybridization))}});
  }
  obj["bonds"] = nlohmann::ordered_json::array();
  for (const Bond& b : r.bonds) {
    nlohmann::ordered_json order;
    if (b.order == BondOrder::kAromatic) {
      order = "aromatic";
    } else {
      order = static_cast<int>(b.order);
    }
    obj["bonds"].push_back({b.i, b.j, order});
  }
  obj["conformers"] = nlohmann::ordered_json::array();
  for (const Conformer& c : r.conformers) {
    nlohmann::ordered_json coords = nlohmann::ordered_json::array();
    for (const Coord& xyz : c.coords) coords.push_back({xyz[0], xyz[1], xyz[2]});
    obj["conformers"].push_back({{"coords", coords}, {"energy", c.energy}});
  }
  obj["labels"] = nlohmann::ordered_json::array();
  for (const auto& l : r.labels) {
    if (l) {
      obj["labels"].push_back(*l);
    } else {
      obj["labels"].push_back(nullptr);
    }
  }
  obj["context"] = r.context;
  obj["scaffold"] = r.scaffold_key;
  if (r.fingerprint) obj["fingerprint_b64"] = EncodeFingerprint(*r.fingerprint);
  return obj.dump();
}

void WriteDataset(std::ostream& out, const std::vector<MoleculeRecord>& records) {
  for (const MoleculeRecord& r : records) out << RecordToJsonLine(r) << '\n';
}

void WriteDatasetFile(const std::filesystem::path& path,
                      const std::vector<MoleculeRecord>& records) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  WriteDataset(out, records);
}

Fingerprint DecodeFingerprint(const std::string& b64) {
  constexpr std::size_t kBytes = kFingerprintBits / 8;
  unsigned char bytes[kBytes + 1];
  std::size_t len = 0;
  if (sodium_base642bin(bytes, sizeof(bytes), b64.data(), b64.size(), nullptr, &len, nullptr,
                        sodium_base64_VARIANT_ORIGINAL) != 0) {
    throw std::invalid_argument("invalid base64");
  }
  if (len != kBytes) {
    throw std::invalid_argument("expected " + std::to_string(kBytes) + " bytes, got " +
                                std::to_string(len));
  }
  Fingerprint fp;
  for (std::size_t i = 0; i < kFingerprintBits; ++i) {
    fp[i] = (bytes[i / 8] >> (7 - i % 8)) & 1u;
  }
  return fp;
}

std::string EncodeFingerprint(const Fingerprint& fp) {
  constexpr std::size_t kBytes = kFingerprintBits / 8;
  unsigned char bytes[kBytes] = {};
  for (std::size_t i = 0; i < kFingerprintBits; ++i) {
    if (fp[i]) bytes[i / 8] |= static_cast<unsigned char>(0x80u >> (i % 8));
  }
  std::string out(sodium_base64_ENCODED_LEN(kBytes, sodium_base64_VARIANT_ORIGINAL), '\0');
  sodium_bin2base64(out.data(), out.size(), bytes, kBytes, sodium_base64_VARIANT_ORIGINAL);
  out.resize(out.find('\0'));
  return out;
}

}  // namespace molfm::molrecord
