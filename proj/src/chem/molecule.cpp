#include "chemlm/chem/molecule.hpp"

#include <algorithm>
#include <map>

namespace chemlm::chem {

namespace {

struct ElementInfo {
  int z;
  double weight;
};

const std::map<std::string, ElementInfo>& element_table() {
  static const std::map<std::string, ElementInfo> table = {
      {"H", {1, 1.008}},    {"He", {2, 4.003}},   {"Li", {3, 6.94}},
      {"Be", {4, 9.012}},   {"B", {5, 10.811}},   {"C", {6, 12.011}},
      {"N", {7, 14.007}},   {"O", {8, 15.999}},   {"F", {9, 18.998}},
      {"Ne", {10, 20.180}}, {"Na", {11, 22.990}}, {"Mg", {12, 24.305}},
      {"Al", {13, 26.982}}, {"Si", {14, 28.086}}, {"P", {15, 30.974}},
      {"S", {16, 32.067}},  {"Cl", {17, 35.453}}, {"Ar", {18, 39.948}},
      {"K", {19, 39.098}},  {"Ca", {20, 40.078}}, {"Fe", {26, 55.845}},
      {"Cu", {29, 63.546}}, {"Zn", {30, 65.38}},  {"As", {33, 74.922}},
      {"Se", {34, 78.971}}, {"Br", {35, 79.904}}, {"Sn", {50, 118.710}},
      {"I", {53, 126.904}},
  };
  return table;
}

}  // namespace

int atomic_number_of(const std::string& symbol) {
  auto it = element_table().find(symbol);
  return it == element_table().end() ? 0 : it->second.z;
}

double atomic_weight_of(int atomic_number) {
  for (const auto& [sym, info] : element_table())
    if (info.z == atomic_number) return info.weight;
  return 0.0;
}

const Bond* Molecule::bond_between(int a, int b) const {
  for (int bi : adj[static_cast<size_t>(a)]) {
    const Bond& bd = bonds[static_cast<size_t>(bi)];
    if ((bd.a == a && bd.b == b) || (bd.a == b && bd.b == a)) return &bd;
  }
  return nullptr;
}

double Molecule::valence(int atom) const {
  double v = atoms[static_cast<size_t>(atom)].hcount;
  for (int bi : adj[static_cast<size_t>(atom)]) {
    switch (bonds[static_cast<size_t>(bi)].order) {
      case BondOrder::Single: v += 1.0; break;
      case BondOrder::Double: v += 2.0; break;
      case BondOrder::Triple: v += 3.0; break;
      case BondOrder::Aromatic: v += 1.5; break;
    }
  }
  return v;
}

bool Molecule::in_ring_of_size(int atom, int size) const {
  for (const auto& ring : rings)
    if (static_cast<int>(ring.size()) == size &&
        std::find(ring.begin(), ring.end(), atom) != ring.end())
      return true;
  return false;
}

std::vector<std::vector<int>> Molecule::fragments() const {
  std::vector<std::vector<int>> out;
  std::vector<char> seen(atoms.size(), 0);
  for (int start = 0; start < num_atoms(); ++start) {
    if (seen[static_cast<size_t>(start)]) continue;
    std::vector<int> comp, stack = {start};
    seen[static_cast<size_t>(start)] = 1;
    while (!stack.empty()) {
      int u = stack.back();
      stack.pop_back();
      comp.push_back(u);
      for (int bi : adj[static_cast<size_t>(u)]) {
        int v = other_end(bi, u);
        if (!seen[static_cast<size_t>(v)]) {
          seen[static_cast<size_t>(v)] = 1;
          stack.push_back(v);
        }
      }
    }
    std::sort(comp.begin(), comp.end());
    out.push_back(std::move(comp));
  }
  return out;
}

}  // namespace chemlm::chem
