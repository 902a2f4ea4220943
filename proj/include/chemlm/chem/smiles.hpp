#pragma once

#include <cstddef>
#include <string>

#include "chemlm/chem/molecule.hpp"

namespace chemlm::chem {

struct SmilesError : Error {
  size_t offset;
  SmilesError(const std::string& kind, size_t off)
      : Error(kind + " at offset " + std::to_string(off)), offset(off) {}
};
struct UnbalancedParenthesis : SmilesError {
  explicit UnbalancedParenthesis(size_t off) : SmilesError("UnbalancedParenthesis", off) {}
};
struct UnclosedRingBond : SmilesError {
  explicit UnclosedRingBond(size_t off) : SmilesError("UnclosedRingBond", off) {}
};
struct UnknownElement : SmilesError {
  explicit UnknownElement(size_t off) : SmilesError("UnknownElement", off) {}
};
struct ValenceViolation : SmilesError {
  explicit ValenceViolation(size_t off) : SmilesError("ValenceViolation", off) {}
};

// Parses the OpenSMILES subset documented in the README: organic-subset and
// bracket atoms, branches, ring closures (digits and %nn), bond symbols
// -=#:, aromatic lowercase, charges/isotopes/H counts, directional and
// chiral marks preserved as annotations. Implicit hydrogens are filled from
// the default valence table.
Molecule parse_smiles(const std::string& s);

bool is_valid_smiles(const std::string& s);

// Deterministic atom-order-independent encoding; parse(canonical(m)) is
// graph-isomorphic to m.
std::string canonical_smiles(const Molecule& m);

inline std::string canonicalize(const std::string& smiles) {
  return canonical_smiles(parse_smiles(smiles));
}

}  // namespace chemlm::chem
