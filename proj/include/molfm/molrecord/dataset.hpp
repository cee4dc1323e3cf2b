// Copyright 2026 The molfm Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "molfm/molrecord/record.hpp"

// JSON Lines dataset I/O. One object per line:
//   {"id", "selfies",
//    "atoms": [{"element","degree","formal_charge","num_h","hybridization"}],
//    "bonds": [[i, j, order]],          order: 1 | 2 | 3 | "aromatic" | 1.5
//    "conformers": [{"coords": [[x,y,z]], "energy"}],
//    "labels": [number | null], "context": [number], "scaffold",
//    "fingerprint_b64"?}               base64 of 256 bytes, MSB-first bits
// Blank lines are skipped; unknown keys are ignored.
namespace molfm::molrecord {

MoleculeRecord ParseRecordLine(const std::string& line, std::size_t line_no);

// Stops at the first invalid line. Besides per-record invariants, all
// records must agree on label and context length and have unique ids.
std::vector<MoleculeRecord> ParseDataset(std::istream& in);
std::vector<MoleculeRecord> ParseDatasetFile(const std::filesystem::path& path);

std::string RecordToJsonLine(const MoleculeRecord& record);
void WriteDataset(std::ostream& out, const std::vector<MoleculeRecord>& records);
void WriteDatasetFile(const std::filesystem::path& path,
                      const std::vector<MoleculeRecord>& records);

struct ValidationReport {
  std::size_t lines = 0;  // non-blank lines seen
  std::vector<MoleculeRecord> records;  // the valid ones
  std::vector<DataError> errors;
  std::size_t num_tasks = 0;
  std::size_t context_dim = 0;
  std::map<std::size_t, std::size_t> conformer_counts;  // K -> molecules
};

// Like ParseDataset but keeps going and collects every error.
ValidationReport ValidateDataset(std::istream& in);

// Fingerprint <-> base64 of the 256-byte packing.
Fingerprint DecodeFingerprint(const std::string& b64);
std::string EncodeFingerprint(const Fingerprint& fp);

}  // namespace molfm::molrecord
