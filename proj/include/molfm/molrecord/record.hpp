// Copyright 2026 The molfm Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <bitset>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace molfm::molrecord {

inline constexpr std::size_t kFingerprintBits = 2048;
using Fingerprint = std::bitset<kFingerprintBits>;

enum class Hybridization { kS, kSP, kSP2, kSP3, kSP3D, kOther };

// "S", "SP", ... (case-insensitive); anything else maps to kOther.
Hybridization ParseHybridization(std::string_view s);
std::string_view HybridizationName(Hybridization h);

struct AtomSpec {
  std::string element;
  int degree = 0;
  int formal_charge = 0;
  int num_h = 0;
  Hybridization hybridization = Hybridization::kOther;
};

enum class BondOrder { kSingle = 1, kDouble = 2, kTriple = 3, kAromatic = 4 };

struct Bond {
  std::size_t i = 0;
  std::size_t j = 0;
  BondOrder order = BondOrder::kSingle;
};

using Coord = std::array<double, 3>;

struct Conformer {
  std::vector<Coord> coords;  // Angstrom
  double energy = 0.0;        // kcal/mol
};

struct MoleculeRecord {
  std::string id;
  std::string selfies;
  std::vector<AtomSpec> atoms;
  std::vector<Bond> bonds;
  std::vector<Conformer> conformers;
  std::vector<std::optional<double>> labels;  // nullopt = missing
  std::vector<double> context;
  std::string scaffold_key;
  std::optional<Fingerprint> fingerprint;

  std::size_t num_atoms() const { return atoms.size(); }
  std::size_t num_conformers() const { return conformers.size(); }
};

// Invalid input data. `line` is 1-based (0 when not tied to a file line) and
// `field` is a JSON-path-like locator such as "conformers[2].coords".
class DataError : public std::runtime_error {
 public:
  DataError(std::size_t line, std::string field, const std::string& what);

  std::size_t line() const { return line_; }
  const std::string& field() const { return field_; }
  const std::string& detail() const { return detail_; }
  DataError AtLine(std::size_t line) const { return DataError(line, field_, detail_); }

 private:
  std::size_t line_;
  std::string field_;
  std::string detail_;
};

// Per-record invariants: bond endpoints, self/duplicate bonds, conformer
// sizes, finite coordinates and energies, atom field ranges, SELFIES syntax.
// Throws DataError with line 0.
void ValidateRecord(const MoleculeRecord& record);

}  // namespace molfm::molrecord
