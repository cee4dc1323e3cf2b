// Copyright 2026 The molfm Authors.
// SPDX-License-Identifier: Apache-2.0

#include "molfm/encoders/inputs.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace molfm::encoders {

std::uint64_t StableKey(std::string_view id) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : id) h = (h ^ c) * 1099511628211ull;
  return h;
}

MoleculeInputs Featurize(const molrecord::MoleculeRecord& record,
                         const molrecord::Vocabulary& vocab, std::size_t max_len) {
  MoleculeInputs in;
  in.tokens = molrecord::TokenizeSelfies(record.selfies, vocab, max_len);
  for (const molrecord::AtomSpec& a : record.atoms) {
    in.atoms.push_back(molrecord::ComputeAtomFeatures(a));
    in.element_class.push_back(molrecord::ElementClass(a.element));
  }
  for (const molrecord::Bond& b : record.bonds) in.bonds.push_back({b.i, b.j});
  for (const molrecord::Conformer& c : record.conformers) {
    in.conformers.push_back(c.coords);
    in.energies.push_back(c.energy);
  }
  in.key = StableKey(record.id);
  return in;
}

GraphBatch BuildGraphBatch(const std::vector<const MoleculeInputs*>& mols,
                           const std::vector<std::vector<std::size_t>>& masked) {
  if (!masked.empty() && masked.size() != mols.size()) {
    throw std::invalid_argument("BuildGraphBatch: mask list size mismatch");
  }
  GraphBatch g;
  std::size_t total = 0;
  for (const MoleculeInputs* m : mols) {
    if (m->num_atoms() == 0) throw std::invalid_argument("encode_2d: empty graph");
    total += m->num_atoms();
  }
  g.features = nn::Tensor<double>::Matrix(total, kGraphInputDim);
  g.offsets.push_back(0);
  std::size_t base = 0;
  for (std::size_t gi = 0; gi < mols.size(); ++gi) {
    const MoleculeInputs& m = *mols[gi];
    for (std::size_t a = 0; a < m.num_atoms(); ++a) {
      for (std::size_t f = 0; f < molrecord::kAtomFeatureDim; ++f) {
        g.features(base + a, f) = m.atoms[a][f];
      }
      g.node_graph.push_back(gi);
    }
    if (!masked.empty()) {
      for (std::size_t a : masked[gi]) {
        if (a >= m.num_atoms()) throw std::out_of_range("BuildGraphBatch: masked node index");
        for (std::size_t f = 0; f < kGraphInputDim; ++f) g.features(base + a, f) = 0.0;
        g.features(base + a, molrecord::kAtomFeatureDim) = 1.0;
      }
    }
    for (const auto& [i, j] : m.bonds) {
      g.src.push_back(base + i);
      g.dst.push_back(base + j);
      g.src.push_back(base + j);
      g.dst.push_back(base + i);
    }
    base += m.num_atoms();
    g.offsets.push_back(base);
  }
  return g;
}

double CosineCutoff(double d, double cutoff) {
  if (d > cutoff) return 0.0;
  return 0.5 * (std::cos(std::numbers::pi * d / cutoff) + 1.0);
}

std::vector<double> RbfExpand(double d, const RbfConfig& cfg) {
  if (!(cfg.cutoff > 0.0) || cfg.n_rbf == 0) {
    throw std::invalid_argument("rbf: cutoff must be positive and n_rbf >= 1");
  }
  std::vector<double> out(cfg.n_rbf, 0.0);
  const double envelope = CosineCutoff(d, cfg.cutoff);
  if (envelope == 0.0) return out;
  const double spacing = cfg.n_rbf > 1 ? cfg.cutoff / static_cast<double>(cfg.n_rbf - 1)
                                       : cfg.cutoff;
  for (std::size_t j = 0; j < cfg.n_rbf; ++j) {
    const double z = (d - spacing * static_cast<double>(j)) / spacing;
    out[j] = envelope * std::exp(-0.5 * z * z);
  }
  return out;
}

ConformerBatch BuildConformerBatch(const std::vector<const MoleculeInputs*>& mols,
                                   const std::vector<std::vector<std::size_t>>& selection,
                                   const RbfConfig& cfg) {
  if (selection.size() != mols.size()) {
    throw std::invalid_argument("BuildConformerBatch: selection size mismatch");
  }
  ConformerBatch b;
  std::size_t atoms = 0;
  for (std::size_t m = 0; m < mols.size(); ++m) {
    if (mols[m]->num_atoms() == 0) throw std::invalid_argument("encode_3d: empty conformer");
    atoms += mols[m]->num_atoms() * selection[m].size();
  }
  b.features = nn::Tensor<double>::Matrix(atoms, molrecord::kAtomFeatureDim);
  std::vector<double> rbf;
  std::size_t base = 0;
  for (std::size_t m = 0; m < mols.size(); ++m) {
    const MoleculeInputs& mol = *mols[m];
    const std::size_t n = mol.num_atoms();
    for (std::size_t k : selection[m]) {
      if (k >= mol.num_conformers()) {
        throw std::out_of_range("BuildConformerBatch: conformer " + std::to_string(k));
      }
      const auto& xyz = mol.conformers[k];
      for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t f = 0; f < molrecord::kAtomFeatureDim; ++f) {
          b.features(base + a, f) = mol.atoms[a][f];
        }
        b.atom_conformer.push_back(b.num_conformers);
      }
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          if (i == j) continue;
          const double dx = xyz[i][0] - xyz[j][0];
          const double dy = xyz[i][1] - xyz[j][1];
          const double dz = xyz[i][2] - xyz[j][2];
          const double d = std::sqrt(dx * dx + dy * dy + dz * dz);
          if (d >= cfg.cutoff) continue;
          b.pair_i.push_back(base + i);
          b.pair_j.push_back(base + j);
          const std::vector<double> e = RbfExpand(d, cfg);
          rbf.insert(rbf.end(), e.begin(), e.end());
        }
      }
      base += n;
      ++b.num_conformers;
    }
  }
  b.rbf = nn::Tensor<double>({b.pair_i.size(), cfg.n_rbf}, std::move(rbf));
  return b;
}

}  // namespace molfm::encoders
