// Copyright 2026 The molfm Authors.
// SPDX-License-Identifier: Apache-2.0

#include "molfm/molrecord/record.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>
#include <utility>

#include "molfm/molrecord/vocab.hpp"

namespace molfm::molrecord {

namespace {

constexpr std::pair<std::string_view, Hybridization> kHybridNames[] = {
    {"S", Hybridization::kS},       {"SP", Hybridization::kSP},
    {"SP2", Hybridization::kSP2},   {"SP3", Hybridization::kSP3},
    {"SP3D", Hybridization::kSP3D}, {"OTHER", Hybridization::kOther},
};

std::string Upper(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

std::string Indexed(const char* name, std::size_t i) {
  return std::string(name) + "[" + std::to_string(i) + "]";
}

}  // namespace

Hybridization ParseHybridization(std::string_view s) {
  const std::string up = Upper(s);
  for (const auto& [name, h] : kHybridNames) {
    if (up == name) return h;
  }
  return Hybridization::kOther;
}

std::string_view HybridizationName(Hybridization h) {
  for (const auto& [name, value] : kHybridNames) {
    if (value == h) return name;
  }
  return "OTHER";
}

DataError::DataError(std::size_t line, std::string field, const std::string& what)
    : std::runtime_error((line > 0 ? "line " + std::to_string(line) + ": " : std::string()) +
                         (field.empty() ? std::string() : field + ": ") + what),
      line_(line),
      field_(std::move(field)),
      detail_(what) {}

void ValidateRecord(const MoleculeRecord& r) {
  if (r.id.empty()) throw DataError(0, "id", "must be non-empty");
  try {
    SplitSelfies(r.selfies);
  } catch (const std::invalid_argument& e) {
    throw DataError(0, "selfies", e.what());
  }
  if (r.atoms.empty()) throw DataError(0, "atoms", "molecule has no atoms");
  for (std::size_t a = 0; a < r.atoms.size(); ++a) {
    const AtomSpec& atom = r.atoms[a];
    if (atom.element.empty()) throw DataError(0, Indexed("atoms", a) + ".element", "empty symbol");
    if (atom.degree < 0) throw DataError(0, Indexed("atoms", a) + ".degree", "must be >= 0");
    if (atom.num_h < 0) throw DataError(0, Indexed("atoms", a) + ".num_h", "must be >= 0");
    if (atom.formal_charge < -2 || atom.formal_charge > 2) {
      throw DataError(0, Indexed("atoms", a) + ".formal_charge",
                      "must lie in [-2, 2], got " + std::to_string(atom.formal_charge));
    }
  }
  const std::size_t n = r.atoms.size();
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (std::size_t b = 0; b < r.bonds.size(); ++b) {
    const Bond& bond = r.bonds[b];
    if (bond.i >= n || bond.j >= n) {
      throw DataError(0, Indexed("bonds", b),
                      "atom index out of range (" + std::to_string(bond.i) + ", " +
                          std::to_string(bond.j) + ") for " + std::to_string(n) + " atoms");
    }
    if (bond.i == bond.j) throw DataError(0, Indexed("bonds", b), "self-bond");
    if (!seen.emplace(std::min(bond.i, bond.j), std::max(bond.i, bond.j)).second) {
      throw DataError(0, Indexed("bonds", b), "duplicate bond");
    }
  }
  if (r.conformers.empty()) throw DataError(0, "conformers", "need at least one conformer");
  for (std::size_t k = 0; k < r.conformers.size(); ++k) {
    const Conformer& c = r.conformers[k];
    if (c.coords.size() != n) {
      throw DataError(0, Indexed("conformers", k) + ".coords",
                      "expected " + std::to_string(n) + " coordinate triples, got " +
                          std::to_string(c.coords.size()));
    }
    for (const Coord& xyz : c.coords) {
      if (!std::isfinite(xyz[0]) || !std::isfinite(xyz[1]) || !std::isfinite(xyz[2])) {
        throw DataError(0, Indexed("conformers", k) + ".coords", "non-finite coordinate");
      }
    }
    if (!std::isfinite(c.energy)) {
      throw DataError(0, Indexed("conformers", k) + ".energy", "non-finite energy");
    }
  }
  for (std::size_t t = 0; t < r.labels.size(); ++t) {
    if (r.labels[t] && !std::isfinite(*r.labels[t])) {
      throw DataError(0, Indexed("labels", t), "non-finite label");
    }
  }
  for (std::size_t t = 0; t < r.context.size(); ++t) {
    if (!std::isfinite(r.context[t])) throw DataError(0, Indexed("context", t), "non-finite value");
  }
}

}  // namespace molfm::molrecord
