#pragma once

#include <memory>
#include <string>
#include <vector>

#include "chemlm/chem/molecule.hpp"

namespace chemlm::chem {

struct SmartsParseError : Error {
  explicit SmartsParseError(const std::string& what) : Error(what) {}
};

// Atomic primitive subset: element symbols (case gives aromaticity), #n,
// a/A, Dn, Hn, Xn, vn, R/R0/Rn, +/- charge, * wildcard, combined with
// ! & , ; at the usual precedences. Bonds: - = # : ~ and the default
// single-or-aromatic. No recursive SMARTS.
class SmartsPattern {
 public:
  struct AtomExpr;
  using AtomExprPtr = std::shared_ptr<AtomExpr>;

  enum class BondExpr : uint8_t { Default, Single, Double, Triple, Aromatic, Any };

  struct PatternBond {
    int a = 0;
    int b = 0;
    BondExpr expr = BondExpr::Default;
  };

  static SmartsPattern parse(const std::string& s);

  int num_atoms() const { return static_cast<int>(atom_exprs_.size()); }
  const std::vector<PatternBond>& bonds() const { return bonds_; }

  bool atom_matches(int pattern_atom, const Molecule& m, int mol_atom) const;
  static bool bond_matches(BondExpr e, const Bond& b, const Molecule& m);

 private:
  std::vector<AtomExprPtr> atom_exprs_;
  std::vector<PatternBond> bonds_;
  std::vector<std::vector<std::pair<int, int>>> adj_;  // atom -> (bond idx, other)
  friend std::vector<std::vector<int>> match_smarts(const SmartsPattern&, const Molecule&);
};

// All embeddings of the pattern into the molecule (injective on atoms),
// sorted lexicographically by the mapped index tuple.
std::vector<std::vector<int>> match_smarts(const SmartsPattern& p, const Molecule& m);

inline std::vector<std::vector<int>> match_smarts(const std::string& pattern,
                                                  const Molecule& m) {
  return match_smarts(SmartsPattern::parse(pattern), m);
}

// True when the pattern embeds at least once with its first atom mapped to
// the given molecule atom.
bool smarts_matches_atom(const SmartsPattern& p, const Molecule& m, int atom);

}  // namespace chemlm::chem
