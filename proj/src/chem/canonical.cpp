#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "chemlm/chem/smiles.hpp"

namespace chemlm::chem {

namespace {

// Iterative neighborhood refinement. Returns one rank per atom; ranks are
// unique after artificial tie-breaking, so the output string cannot depend
// on input atom order.
std::vector<int> canonical_ranks(const Molecule& m) {
  size_t n = m.atoms.size();
  std::vector<std::vector<long long>> inv(n);
  for (size_t i = 0; i < n; ++i) {
    const Atom& a = m.atoms[i];
    inv[i] = {a.atomic_number,
              a.charge,
              m.degree(static_cast<int>(i)),
              a.hcount,
              a.in_ring ? 1 : 0,
              a.aromatic ? 1 : 0};
  }

  auto ranks_from = [&](const std::vector<std::vector<long long>>& keys) {
    std::vector<std::vector<long long>> sorted = keys;
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    std::vector<int> r(keys.size());
    for (size_t i = 0; i < keys.size(); ++i)
      r[i] = static_cast<int>(std::lower_bound(sorted.begin(), sorted.end(), keys[i]) -
                              sorted.begin());
    return r;
  };

  std::vector<int> ranks = ranks_from(inv);

  auto refine = [&](std::vector<int> r) {
    while (true) {
      std::vector<std::vector<long long>> keys(n);
      for (size_t i = 0; i < n; ++i) {
        keys[i] = {r[i]};
        std::vector<std::pair<int, int>> nb;
        for (int bi : m.adj[i]) {
          int v = m.other_end(bi, static_cast<int>(i));
          nb.push_back({static_cast<int>(m.bonds[static_cast<size_t>(bi)].order),
                        r[static_cast<size_t>(v)]});
        }
        std::sort(nb.begin(), nb.end());
        for (auto& [o, rv] : nb) {
          keys[i].push_back(o);
          keys[i].push_back(rv);
        }
      }
      std::vector<int> next = ranks_from(keys);
      if (next == r) return r;
      r = std::move(next);
    }
  };

  ranks = refine(ranks);

  // break remaining symmetry: pick the lowest-indexed member of the lowest
  // tied class, give it its own rank, and re-refine
  while (true) {
    int distinct = *std::max_element(ranks.begin(), ranks.end()) + 1;
    if (distinct == static_cast<int>(n)) break;
    int tied_rank = -1;
    for (int r = 0; r < distinct && tied_rank < 0; ++r) {
      int count = 0;
      for (size_t i = 0; i < n; ++i)
        if (ranks[i] == r) ++count;
      if (count > 1) tied_rank = r;
    }
    size_t chosen = n;
    for (size_t i = 0; i < n; ++i)
      if (ranks[i] == tied_rank && chosen == n) chosen = i;
    for (size_t i = 0; i < n; ++i) ranks[i] *= 2;
    ranks[chosen] -= 1;
    ranks = refine(ranks);
  }
  return ranks;
}

bool organic_subset_symbol(const std::string& sym) {
  static const std::set<std::string> organic = {"B", "C", "N", "O", "P", "S",
                                               "F", "Cl", "Br", "I"};
  return organic.count(sym) > 0;
}

// Hydrogen count a reader would infer for this atom written without
// brackets, given the molecule's bonds. Mirrors the parser's fill rule.
int implied_hcount(const Molecule& m, int atom) {
  static const std::map<std::string, std::vector<int>> valences = {
      {"B", {3}},  {"C", {4}},        {"N", {3, 5}}, {"O", {2}},
      {"P", {3, 5}}, {"S", {2, 4, 6}}, {"F", {1}},   {"Cl", {1}},
      {"Br", {1}}, {"I", {1}},
  };
  const Atom& a = m.atoms[static_cast<size_t>(atom)];
  int order_sum = 0;
  for (int bi : m.adj[static_cast<size_t>(atom)]) {
    BondOrder o = m.bonds[static_cast<size_t>(bi)].order;
    order_sum += (o == BondOrder::Aromatic) ? 1 : static_cast<int>(o);
  }
  if (a.aromatic) {
    if (a.element == "C" || a.element == "B")
      return std::max(0, (a.element == "C" ? 4 : 3) - (order_sum + 1));
    return 0;
  }
  auto it = valences.find(a.element);
  if (it == valences.end()) return 0;
  for (int v : it->second)
    if (order_sum <= v) return v - order_sum;
  return -1;  // forces a bracket
}

std::string atom_token(const Molecule& m, int atom) {
  const Atom& a = m.atoms[static_cast<size_t>(atom)];
  std::string sym = a.element;
  if (a.aromatic) {
    for (auto& c : sym) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  bool bracket = a.charge != 0 || a.isotope != 0 || !organic_subset_symbol(a.element) ||
                 (a.aromatic && a.element.size() > 1) ||
                 implied_hcount(m, atom) != a.hcount;
  if (!bracket) return sym;
  std::string out = "[";
  if (a.isotope != 0) out += std::to_string(a.isotope);
  out += sym;
  if (a.hcount == 1) out += "H";
  else if (a.hcount > 1) out += "H" + std::to_string(a.hcount);
  if (a.charge == 1) out += "+";
  else if (a.charge == -1) out += "-";
  else if (a.charge > 1) out += "+" + std::to_string(a.charge);
  else if (a.charge < -1) out += "-" + std::to_string(-a.charge);
  out += "]";
  return out;
}

std::string bond_token(const Molecule& m, const Bond& b) {
  switch (b.order) {
    case BondOrder::Double: return "=";
    case BondOrder::Triple: return "#";
    case BondOrder::Aromatic: return "";
    case BondOrder::Single:
      // an untyped bond between two aromatic atoms would read back as
      // aromatic, so spell the single bond out
      if (m.atoms[static_cast<size_t>(b.a)].aromatic &&
          m.atoms[static_cast<size_t>(b.b)].aromatic)
        return "-";
      return "";
  }
  return "";
}

struct Writer {
  const Molecule& m;
  const std::vector<int>& ranks;
  std::vector<int> preorder;         // atom -> visit index, -1 unvisited
  std::vector<char> bond_in_tree;
  // back edge bookkeeping: per atom, list of (bond index, other endpoint)
  std::vector<std::vector<std::pair<int, int>>> opens, closes;
  std::map<int, int> bond_digit;
  std::set<int> free_digits;
  int next_digit = 1;
  int visit_counter = 0;

  Writer(const Molecule& mol, const std::vector<int>& r)
      : m(mol), ranks(r), preorder(mol.atoms.size(), -1),
        bond_in_tree(mol.bonds.size(), 0), opens(mol.atoms.size()),
        closes(mol.atoms.size()) {}

  std::vector<int> ordered_neighbors(int u) const {
    std::vector<int> bis = m.adj[static_cast<size_t>(u)];
    std::sort(bis.begin(), bis.end(), [&](int x, int y) {
      return ranks[static_cast<size_t>(m.other_end(x, u))] <
             ranks[static_cast<size_t>(m.other_end(y, u))];
    });
    return bis;
  }

  int take_digit() {
    if (!free_digits.empty()) {
      int d = *free_digits.begin();
      free_digits.erase(free_digits.begin());
      return d;
    }
    return next_digit++;
  }

  std::string digit_str(int d) const {
    return d < 10 ? std::to_string(d) : "%" + std::to_string(d);
  }

  void write(int u, std::string& out) {
    out += atom_token(m, u);
    // ring openings first, ordered by when the far end gets visited
    auto& op = opens[static_cast<size_t>(u)];
    std::sort(op.begin(), op.end(), [&](const auto& x, const auto& y) {
      return preorder[static_cast<size_t>(x.second)] < preorder[static_cast<size_t>(y.second)];
    });
    for (auto& [bi, other] : op) {
      int d = take_digit();
      bond_digit[bi] = d;
      out += bond_token(m, m.bonds[static_cast<size_t>(bi)]);
      out += digit_str(d);
    }
    auto& cl = closes[static_cast<size_t>(u)];
    std::sort(cl.begin(), cl.end(), [&](const auto& x, const auto& y) {
      return bond_digit.at(x.first) < bond_digit.at(y.first);
    });
    for (auto& [bi, other] : cl) {
      int d = bond_digit.at(bi);
      out += digit_str(d);
      free_digits.insert(d);
    }
    std::vector<std::pair<int, int>> children;  // (bond, child)
    for (int bi : ordered_neighbors(u)) {
      int v = m.other_end(bi, u);
      if (bond_in_tree[static_cast<size_t>(bi)] && tree_parent[static_cast<size_t>(v)] == u)
        children.push_back({bi, v});
    }
    for (size_t i = 0; i < children.size(); ++i) {
      bool last = (i + 1 == children.size());
      std::string bond = bond_token(m, m.bonds[static_cast<size_t>(children[i].first)]);
      if (!last) out += "(";
      out += bond;
      write(children[i].second, out);
      if (!last) out += ")";
    }
  }

  std::vector<int> tree_parent;

  std::string run(int root) {
    tree_parent.assign(m.atoms.size(), -1);
    survey_with_parent(root, -1);
    std::string out;
    write(root, out);
    return out;
  }

  void survey_with_parent(int u, int parent) {
    preorder[static_cast<size_t>(u)] = visit_counter++;
    tree_parent[static_cast<size_t>(u)] = parent;
    for (int bi : ordered_neighbors(u)) {
      int v = m.other_end(bi, u);
      if (preorder[static_cast<size_t>(v)] == -1) {
        bond_in_tree[static_cast<size_t>(bi)] = 1;
        survey_with_parent(v, u);
      } else if (!bond_in_tree[static_cast<size_t>(bi)]) {
        bool recorded = bond_digit_claimed.count(bi) > 0;
        if (!recorded) {
          bond_digit_claimed.insert(bi);
          opens[static_cast<size_t>(v)].push_back({bi, u});
          closes[static_cast<size_t>(u)].push_back({bi, v});
        }
      }
    }
  }

  std::set<int> bond_digit_claimed;
};

}  // namespace

std::string canonical_smiles(const Molecule& m) {
  if (m.atoms.empty()) return "";
  std::vector<int> ranks = canonical_ranks(m);
  std::vector<std::string> parts;
  for (const auto& frag : m.fragments()) {
    int root = frag[0];
    for (int a : frag)
      if (ranks[static_cast<size_t>(a)] < ranks[static_cast<size_t>(root)]) root = a;
    Writer w(m, ranks);
    parts.push_back(w.run(root));
  }
  std::sort(parts.begin(), parts.end());
  std::string out;
  for (size_t i = 0; i < parts.size(); ++i) {
    if (i) out += ".";
    out += parts[i];
  }
  return out;
}

}  // namespace chemlm::chem
