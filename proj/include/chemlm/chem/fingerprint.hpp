#pragma once

#include <cstdint>
#include <vector>

#include "chemlm/chem/molecule.hpp"

namespace chemlm::chem {

struct LengthMismatch : Error {
  LengthMismatch() : Error("fingerprint length mismatch") {}
};

struct Fingerprint {
  std::vector<uint8_t> bits;  // one byte per bit, 0 or 1
  int radius = 2;

  int popcount() const {
    int n = 0;
    for (uint8_t b : bits) n += b;
    return n;
  }
};

// Circular environment fingerprint: every atom's neighborhood invariant at
// each radius 0..r hashes to one bit.
Fingerprint morgan_fingerprint(const Molecule& m, int radius = 2, int nbits = 2048);

// |a AND b| / |a OR b|; 1.0 when both vectors are empty.
double tanimoto(const Fingerprint& a, const Fingerprint& b);

}  // namespace chemlm::chem
