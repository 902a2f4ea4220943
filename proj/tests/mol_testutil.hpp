#pragma once

#include <vector>

#include "chemlm/chem/molecule.hpp"

namespace mol_testutil {

// Rebuilds the molecule with atom i moved to index perm[i]; used to check
// that derived quantities ignore atom order.
inline chemlm::chem::Molecule permuted(const chemlm::chem::Molecule& m,
                                       const std::vector<int>& perm) {
  using chemlm::chem::Bond;
  chemlm::chem::Molecule out;
  out.atoms.resize(m.atoms.size());
  out.adj.assign(m.atoms.size(), {});
  for (size_t i = 0; i < m.atoms.size(); ++i)
    out.atoms[static_cast<size_t>(perm[i])] = m.atoms[i];
  for (const auto& b : m.bonds) {
    Bond nb = b;
    nb.a = perm[static_cast<size_t>(b.a)];
    nb.b = perm[static_cast<size_t>(b.b)];
    int bi = static_cast<int>(out.bonds.size());
    out.bonds.push_back(nb);
    out.adj[static_cast<size_t>(nb.a)].push_back(bi);
    out.adj[static_cast<size_t>(nb.b)].push_back(bi);
  }
  for (const auto& ring : m.rings) {
    std::vector<int> r;
    for (int a : ring) r.push_back(perm[static_cast<size_t>(a)]);
    out.rings.push_back(std::move(r));
  }
  return out;
}

}  // namespace mol_testutil
