#include "chemlm/chem/fingerprint.hpp"

#include <algorithm>

#include "chemlm/util/errors.hpp"

namespace chemlm::chem {

namespace {

uint64_t mix(uint64_t h, uint64_t v) {
  // FNV-1a over the 8 bytes of v
  for (int i = 0; i < 8; ++i) {
    h ^= (v >> (8 * i)) & 0xff;
    h *= 0x100000001b3ULL;
  }
  return h;
}

uint64_t atom_seed(const Molecule& m, int i) {
  const Atom& a = m.atoms[static_cast<size_t>(i)];
  uint64_t h = 0xcbf29ce484222325ULL;
  h = mix(h, static_cast<uint64_t>(a.atomic_number));
  h = mix(h, static_cast<uint64_t>(static_cast<int64_t>(a.charge) + 16));
  h = mix(h, static_cast<uint64_t>(m.degree(i)));
  h = mix(h, static_cast<uint64_t>(a.hcount));
  h = mix(h, a.aromatic ? 1u : 0u);
  h = mix(h, a.in_ring ? 1u : 0u);
  return h;
}

}  // namespace

Fingerprint morgan_fingerprint(const Molecule& m, int radius, int nbits) {
  if (radius < 0 || nbits < 64 || (nbits & (nbits - 1)) != 0)
    throw ConfigInvalid("morgan_fingerprint: radius >= 0 and nbits a power of two >= 64");
  Fingerprint fp;
  fp.radius = radius;
  fp.bits.assign(static_cast<size_t>(nbits), 0);

  std::vector<uint64_t> inv(m.atoms.size());
  for (int i = 0; i < m.num_atoms(); ++i) inv[static_cast<size_t>(i)] = atom_seed(m, i);

  for (int r = 0; r <= radius; ++r) {
    for (uint64_t h : inv) fp.bits[h & static_cast<uint64_t>(nbits - 1)] = 1;
    if (r == radius) break;
    std::vector<uint64_t> next(inv.size());
    for (int i = 0; i < m.num_atoms(); ++i) {
      std::vector<std::pair<uint64_t, uint64_t>> nb;
      for (int bi : m.adj[static_cast<size_t>(i)]) {
        int v = m.other_end(bi, i);
        nb.push_back({static_cast<uint64_t>(m.bonds[static_cast<size_t>(bi)].order),
                      inv[static_cast<size_t>(v)]});
      }
      std::sort(nb.begin(), nb.end());
      uint64_t h = mix(0xcbf29ce484222325ULL, static_cast<uint64_t>(r + 1));
      h = mix(h, inv[static_cast<size_t>(i)]);
      for (auto& [o, nh] : nb) {
        h = mix(h, o);
        h = mix(h, nh);
      }
      next[static_cast<size_t>(i)] = h;
    }
    inv = std::move(next);
  }
  return fp;
}

double tanimoto(const Fingerprint& a, const Fingerprint& b) {
  if (a.bits.size() != b.bits.size()) throw LengthMismatch();
  int inter = 0, uni = 0;
  for (size_t i = 0; i < a.bits.size(); ++i) {
    inter += (a.bits[i] & b.bits[i]);
    uni += (a.bits[i] | b.bits[i]);
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace chemlm::chem
