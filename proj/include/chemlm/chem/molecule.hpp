#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "chemlm/util/errors.hpp"

namespace chemlm::chem {

enum class BondOrder : uint8_t { Single = 1, Double = 2, Triple = 3, Aromatic = 4 };

struct Atom {
  std::string element;        // element symbol, e.g. "C", "Cl"
  int atomic_number = 0;
  int charge = 0;
  int hcount = 0;             // total attached hydrogens
  bool h_specified = false;   // true when a bracket atom pinned the H count
  bool aromatic = false;
  bool in_ring = false;
  int isotope = 0;            // preserved, unused by property code
  std::string chirality;      // "@" / "@@", preserved, unused
  bool from_bracket = false;
};

struct Bond {
  int a = 0;
  int b = 0;
  BondOrder order = BondOrder::Single;
  bool in_ring = false;
  char stereo = 0;            // '/' or '\\', preserved, unused
};

// Attributed molecular graph. Immutable after construction by the parser.
struct Molecule {
  std::vector<Atom> atoms;
  std::vector<Bond> bonds;
  std::vector<std::vector<int>> rings;  // SSSR atom cycles
  std::vector<std::vector<int>> adj;    // atom index -> incident bond indices

  int num_atoms() const { return static_cast<int>(atoms.size()); }
  int num_bonds() const { return static_cast<int>(bonds.size()); }

  int degree(int atom) const { return static_cast<int>(adj[static_cast<size_t>(atom)].size()); }
  int other_end(int bond, int atom) const {
    return bonds[static_cast<size_t>(bond)].a == atom ? bonds[static_cast<size_t>(bond)].b
                                                      : bonds[static_cast<size_t>(bond)].a;
  }
  const Bond* bond_between(int a, int b) const;
  // connectivity = heavy-atom degree + attached H
  int connections(int atom) const { return degree(atom) + atoms[static_cast<size_t>(atom)].hcount; }
  // bond-order sum counting aromatic bonds as 1.5, plus hydrogens
  double valence(int atom) const;
  bool in_ring_of_size(int atom, int size) const;
  std::vector<std::vector<int>> fragments() const;  // connected components (atom index lists)
};

int atomic_number_of(const std::string& symbol);     // 0 when unknown
double atomic_weight_of(int atomic_number);

}  // namespace chemlm::chem
