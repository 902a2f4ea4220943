#include "chemlm/chem/smiles.hpp"

#include <algorithm>
#include <cctype>
#include <deque>
#include <map>
#include <set>

namespace chemlm::chem {

namespace {

// Default valence alternatives per element, before charge adjustment.
const std::map<std::string, std::vector<int>>& valence_table() {
  static const std::map<std::string, std::vector<int>> table = {
      {"B", {3}},  {"C", {4}},        {"N", {3, 5}}, {"O", {2}},
      {"P", {3, 5}}, {"S", {2, 4, 6}}, {"F", {1}},   {"Cl", {1}},
      {"Br", {1}}, {"I", {1}},
  };
  return table;
}

std::vector<int> allowed_valences(const Atom& a) {
  auto it = valence_table().find(a.element);
  if (it == valence_table().end()) return {};
  std::vector<int> out;
  for (int v : it->second) {
    // Charge removes a bonding electron on C/B, adds a bonding slot on
    // N/O/P/S style elements ([NH4+] has valence 4, [CH3+] has valence 3).
    int adj = (a.element == "C" || a.element == "B") ? v - std::abs(a.charge) : v + a.charge;
    if (adj >= 0) out.push_back(adj);
  }
  std::sort(out.begin(), out.end());
  return out;
}

bool is_organic_subset(const std::string& sym) {
  static const std::set<std::string> organic = {"B", "C", "N", "O", "P", "S",
                                               "F", "Cl", "Br", "I"};
  return organic.count(sym) > 0;
}

bool aromatic_allowed(const std::string& sym) {
  static const std::set<std::string> ok = {"B", "C", "N", "O", "P", "S", "Se", "As"};
  return ok.count(sym) > 0;
}

enum class RawBond { None, Single, Double, Triple, Aromatic, Up, Down };

BondOrder raw_to_order(RawBond rb, bool both_aromatic) {
  switch (rb) {
    case RawBond::Double: return BondOrder::Double;
    case RawBond::Triple: return BondOrder::Triple;
    case RawBond::Aromatic: return BondOrder::Aromatic;
    case RawBond::None:
      return both_aromatic ? BondOrder::Aromatic : BondOrder::Single;
    default: return BondOrder::Single;
  }
}

struct Parser {
  const std::string& s;
  size_t pos = 0;
  Molecule mol;
  std::vector<size_t> atom_offsets;

  explicit Parser(const std::string& str) : s(str) {}

  bool eof() const { return pos >= s.size(); }
  char peek() const { return s[pos]; }

  int add_atom(Atom a, size_t off) {
    mol.atoms.push_back(std::move(a));
    mol.adj.emplace_back();
    atom_offsets.push_back(off);
    return static_cast<int>(mol.atoms.size()) - 1;
  }

  void add_bond(int a, int b, RawBond rb, size_t off) {
    if (mol.bond_between(a, b) != nullptr || a == b)
      throw SmilesError("DuplicateBond", off);
    Bond bd;
    bd.a = a;
    bd.b = b;
    bool both_arom = mol.atoms[static_cast<size_t>(a)].aromatic &&
                     mol.atoms[static_cast<size_t>(b)].aromatic;
    bd.order = raw_to_order(rb, both_arom);
    if (rb == RawBond::Up) bd.stereo = '/';
    if (rb == RawBond::Down) bd.stereo = '\\';
    int bi = static_cast<int>(mol.bonds.size());
    mol.bonds.push_back(bd);
    mol.adj[static_cast<size_t>(a)].push_back(bi);
    mol.adj[static_cast<size_t>(b)].push_back(bi);
  }

  // Reads an element symbol at pos for organic-subset atoms. Returns "" when
  // the current character starts no atom.
  std::string read_plain_symbol(bool& aromatic) {
    char c = peek();
    aromatic = false;
    if (c == 'C' && pos + 1 < s.size() && s[pos + 1] == 'l') { pos += 2; return "Cl"; }
    if (c == 'B' && pos + 1 < s.size() && s[pos + 1] == 'r') { pos += 2; return "Br"; }
    if (std::string("BCNOPSFI").find(c) != std::string::npos) {
      ++pos;
      return std::string(1, c);
    }
    if (std::string("bcnops").find(c) != std::string::npos) {
      ++pos;
      aromatic = true;
      return std::string(1, static_cast<char>(std::toupper(c)));
    }
    return "";
  }

  int read_number(int fallback) {
    if (eof() || !std::isdigit(static_cast<unsigned char>(peek()))) return fallback;
    int v = 0;
    while (!eof() && std::isdigit(static_cast<unsigned char>(peek()))) {
      v = v * 10 + (peek() - '0');
      ++pos;
    }
    return v;
  }

  Atom read_bracket_atom(size_t open_off) {
    Atom a;
    a.from_bracket = true;
    a.isotope = read_number(0);
    size_t sym_off = pos;
    if (eof()) throw SmilesError("UnclosedBracket", open_off);
    char c = peek();
    std::string sym;
    if (std::islower(static_cast<unsigned char>(c))) {
      // aromatic symbol: one or two lowercase letters (c, n, o, s, p, se, as)
      sym = std::string(1, static_cast<char>(std::toupper(c)));
      ++pos;
      if (!eof() && (sym == "S" || sym == "A") && (peek() == 'e' || peek() == 's')) {
        std::string two = sym + peek();
        if (two == "Se" || two == "As") { sym = two; ++pos; }
      }
      a.aromatic = true;
      if (!aromatic_allowed(sym)) throw UnknownElement(sym_off);
    } else if (std::isupper(static_cast<unsigned char>(c))) {
      sym = std::string(1, c);
      ++pos;
      if (!eof() && std::islower(static_cast<unsigned char>(peek()))) {
        std::string two = sym + peek();
        if (atomic_number_of(two) != 0) { sym = two; ++pos; }
      }
    } else {
      throw SmilesError("BadBracketAtom", pos);
    }
    a.element = sym;
    a.atomic_number = atomic_number_of(sym);
    if (a.atomic_number == 0) throw UnknownElement(sym_off);
    // chirality
    if (!eof() && peek() == '@') {
      ++pos;
      if (!eof() && peek() == '@') { a.chirality = "@@"; ++pos; }
      else a.chirality = "@";
    }
    // explicit hydrogen count
    if (!eof() && peek() == 'H') {
      ++pos;
      a.hcount = read_number(1);
    }
    a.h_specified = true;  // bracket atoms never gain implicit hydrogens
    // charge
    if (!eof() && (peek() == '+' || peek() == '-')) {
      char sign = peek();
      ++pos;
      int mag = 1;
      if (!eof() && std::isdigit(static_cast<unsigned char>(peek()))) {
        mag = read_number(1);
      } else {
        while (!eof() && peek() == sign) { ++mag; ++pos; }
      }
      a.charge = (sign == '+') ? mag : -mag;
    }
    // atom-map label, parsed and dropped
    if (!eof() && peek() == ':') {
      ++pos;
      read_number(0);
    }
    if (eof() || peek() != ']') throw SmilesError("UnclosedBracket", open_off);
    ++pos;
    return a;
  }

  Molecule parse() {
    int prev = -1;
    RawBond pending = RawBond::None;
    size_t pending_off = 0;
    std::vector<std::pair<int, size_t>> branch_stack;  // (prev atom, '(' offset)
    struct OpenRing {
      int atom;
      RawBond bond;
      size_t offset;
    };
    std::map<int, OpenRing> open_rings;

    while (!eof()) {
      char c = peek();
      size_t off = pos;
      if (c == '(') {
        if (prev < 0) throw UnbalancedParenthesis(off);
        branch_stack.push_back({prev, off});
        ++pos;
      } else if (c == ')') {
        if (branch_stack.empty()) throw UnbalancedParenthesis(off);
        prev = branch_stack.back().first;
        branch_stack.pop_back();
        ++pos;
      } else if (c == '-') {
        pending = RawBond::Single; pending_off = off; ++pos;
      } else if (c == '=') {
        pending = RawBond::Double; pending_off = off; ++pos;
      } else if (c == '#') {
        pending = RawBond::Triple; pending_off = off; ++pos;
      } else if (c == ':') {
        pending = RawBond::Aromatic; pending_off = off; ++pos;
      } else if (c == '/') {
        pending = RawBond::Up; pending_off = off; ++pos;
      } else if (c == '\\') {
        pending = RawBond::Down; pending_off = off; ++pos;
      } else if (c == '.') {
        if (pending != RawBond::None) throw SmilesError("BondBeforeDot", pending_off);
        prev = -1;
        ++pos;
      } else if (std::isdigit(static_cast<unsigned char>(c)) || c == '%') {
        int label;
        if (c == '%') {
          ++pos;
          if (pos + 1 >= s.size() ||
              !std::isdigit(static_cast<unsigned char>(s[pos])) ||
              !std::isdigit(static_cast<unsigned char>(s[pos + 1])))
            throw SmilesError("BadRingLabel", off);
          label = (s[pos] - '0') * 10 + (s[pos + 1] - '0');
          pos += 2;
        } else {
          label = c - '0';
          ++pos;
        }
        if (prev < 0) throw SmilesError("RingBondWithoutAtom", off);
        auto it = open_rings.find(label);
        if (it == open_rings.end()) {
          open_rings[label] = {prev, pending, off};
        } else {
          RawBond rb = pending;
          if (rb == RawBond::None) rb = it->second.bond;
          else if (it->second.bond != RawBond::None && it->second.bond != rb)
            throw SmilesError("RingBondMismatch", off);
          add_bond(it->second.atom, prev, rb, off);
          open_rings.erase(it);
        }
        pending = RawBond::None;
      } else if (c == '[') {
        ++pos;
        Atom a = read_bracket_atom(off);
        int idx = add_atom(std::move(a), off);
        if (prev >= 0) add_bond(prev, idx, pending, off);
        pending = RawBond::None;
        prev = idx;
      } else {
        bool aromatic = false;
        std::string sym = read_plain_symbol(aromatic);
        if (sym.empty()) throw SmilesError("UnexpectedCharacter", off);
        Atom a;
        a.element = sym;
        a.atomic_number = atomic_number_of(sym);
        a.aromatic = aromatic;
        int idx = add_atom(std::move(a), off);
        if (prev >= 0) add_bond(prev, idx, pending, off);
        pending = RawBond::None;
        prev = idx;
      }
    }
    if (!branch_stack.empty()) throw UnbalancedParenthesis(branch_stack.back().second);
    if (!open_rings.empty()) throw UnclosedRingBond(open_rings.begin()->second.offset);
    if (pending != RawBond::None) throw SmilesError("DanglingBond", pending_off);
    if (mol.atoms.empty()) throw SmilesError("EmptySmiles", 0);
    return std::move(mol);
  }
};

// Smallest set of smallest rings: for every bond take the shortest cycle
// through it (BFS avoiding the bond itself), deduplicate by atom set, then
// greedily keep size-sorted rings that cover a not-yet-covered bond until
// the cyclomatic number is reached.
void perceive_rings(Molecule& m) {
  int components = static_cast<int>(m.fragments().size());
  int cyclomatic = m.num_bonds() - m.num_atoms() + components;
  m.rings.clear();
  if (cyclomatic <= 0) return;

  struct Candidate {
    std::vector<int> path;       // ordered cycle
    std::set<int> atom_set;
    std::set<int> bond_set;
  };
  std::vector<Candidate> candidates;
  std::set<std::set<int>> seen_sets;

  for (int skip = 0; skip < m.num_bonds(); ++skip) {
    int src = m.bonds[static_cast<size_t>(skip)].a;
    int dst = m.bonds[static_cast<size_t>(skip)].b;
    std::vector<int> parent(m.atoms.size(), -2);
    std::deque<int> q = {src};
    parent[static_cast<size_t>(src)] = -1;
    while (!q.empty() && parent[static_cast<size_t>(dst)] == -2) {
      int u = q.front();
      q.pop_front();
      for (int bi : m.adj[static_cast<size_t>(u)]) {
        if (bi == skip) continue;
        int v = m.other_end(bi, u);
        if (parent[static_cast<size_t>(v)] == -2) {
          parent[static_cast<size_t>(v)] = u;
          q.push_back(v);
        }
      }
    }
    if (parent[static_cast<size_t>(dst)] == -2) continue;  // bridge bond
    Candidate cand;
    for (int v = dst; v != -1; v = parent[static_cast<size_t>(v)]) cand.path.push_back(v);
    for (int v : cand.path) cand.atom_set.insert(v);
    if (seen_sets.count(cand.atom_set)) continue;
    seen_sets.insert(cand.atom_set);
    for (size_t i = 0; i < cand.path.size(); ++i) {
      int a = cand.path[i];
      int b = cand.path[(i + 1) % cand.path.size()];
      for (int bi : m.adj[static_cast<size_t>(a)])
        if (m.other_end(bi, a) == b) cand.bond_set.insert(bi);
    }
    candidates.push_back(std::move(cand));
  }

  std::sort(candidates.begin(), candidates.end(), [](const Candidate& x, const Candidate& y) {
    if (x.path.size() != y.path.size()) return x.path.size() < y.path.size();
    return x.atom_set < y.atom_set;
  });

  std::set<int> covered;
  for (const auto& cand : candidates) {
    if (static_cast<int>(m.rings.size()) >= cyclomatic) break;
    bool fresh = false;
    for (int bi : cand.bond_set)
      if (!covered.count(bi)) { fresh = true; break; }
    if (!fresh) continue;
    covered.insert(cand.bond_set.begin(), cand.bond_set.end());
    m.rings.push_back(cand.path);
  }

  for (const auto& ring : m.rings)
    for (int a : ring) m.atoms[static_cast<size_t>(a)].in_ring = true;
  for (auto& b : m.bonds) {
    for (const auto& ring : m.rings) {
      std::set<int> rs(ring.begin(), ring.end());
      if (rs.count(b.a) && rs.count(b.b)) {
        // both ends in one ring is not enough for fused systems; confirm the
        // bond lies on the cycle perimeter
        for (size_t i = 0; i < ring.size(); ++i) {
          int x = ring[i];
          int y = ring[(i + 1) % ring.size()];
          if ((b.a == x && b.b == y) || (b.a == y && b.b == x)) b.in_ring = true;
        }
      }
    }
  }
}

// Marks six-membered carbocycles written in alternating single/double Kekule
// form as aromatic so both spellings of benzene land on one graph.
void aromatize_kekule(Molecule& m) {
  for (const auto& ring : m.rings) {
    if (ring.size() != 6) continue;
    bool all_c = true;
    for (int a : ring) {
      const Atom& at = m.atoms[static_cast<size_t>(a)];
      if (at.element != "C" || at.charge != 0) { all_c = false; break; }
    }
    if (!all_c) continue;
    std::vector<BondOrder> orders;
    std::vector<int> bond_ids;
    bool ok = true;
    for (size_t i = 0; i < ring.size() && ok; ++i) {
      const Bond* b = m.bond_between(ring[i], ring[(i + 1) % ring.size()]);
      if (!b) { ok = false; break; }
      orders.push_back(b->order);
      bond_ids.push_back(static_cast<int>(b - m.bonds.data()));
    }
    if (!ok) continue;
    bool alternating = true;
    int doubles = 0;
    for (size_t i = 0; i < 6; ++i) {
      if (orders[i] == BondOrder::Double) ++doubles;
      else if (orders[i] != BondOrder::Single) { alternating = false; break; }
      if (orders[i] == orders[(i + 1) % 6]) { alternating = false; break; }
    }
    if (!alternating || doubles != 3) continue;
    // exocyclic double bonds would break the pattern (quinones stay Kekule)
    bool exo_double = false;
    for (int a : ring)
      for (int bi : m.adj[static_cast<size_t>(a)]) {
        const Bond& b = m.bonds[static_cast<size_t>(bi)];
        bool in_this = std::find(bond_ids.begin(), bond_ids.end(), bi) != bond_ids.end();
        if (!in_this && b.order != BondOrder::Single) exo_double = true;
      }
    if (exo_double) continue;
    for (int a : ring) m.atoms[static_cast<size_t>(a)].aromatic = true;
    for (int bi : bond_ids) m.bonds[static_cast<size_t>(bi)].order = BondOrder::Aromatic;
  }
}

void fill_hydrogens_and_validate(Molecule& m, const std::vector<size_t>& offsets) {
  for (size_t i = 0; i < m.atoms.size(); ++i) {
    Atom& a = m.atoms[i];
    size_t off = offsets[i];
    if (a.aromatic && !a.in_ring) throw SmilesError("AromaticAtomOutsideRing", off);

    int arom_bonds = 0;
    int order_sum = 0;  // aromatic counted as 1 here
    for (int bi : m.adj[i]) {
      BondOrder o = m.bonds[static_cast<size_t>(bi)].order;
      if (o == BondOrder::Aromatic) { ++arom_bonds; ++order_sum; }
      else order_sum += static_cast<int>(o);
    }

    if (a.aromatic) {
      // pi electron accounting: carbon and boron contribute a bonding
      // electron to the ring system, heteroatoms contribute a lone pair or
      // are pinned by an explicit bracket H count
      if (!a.h_specified && (a.element == "C" || a.element == "B")) {
        int def = (a.element == "C") ? 4 : 3;
        a.hcount = std::max(0, def - std::abs(a.charge) - (order_sum + 1));
      }
      if (arom_bonds < 2) throw SmilesError("AromaticAtomOutsideRing", off);
      continue;
    }

    auto allowed = allowed_valences(a);
    if (a.h_specified) {
      if (!allowed.empty()) {
        int total = order_sum + a.hcount;
        if (total > allowed.back()) throw ValenceViolation(off);
      }
      continue;
    }
    if (allowed.empty()) continue;  // exotic element without a table entry
    bool filled = false;
    for (int v : allowed)
      if (order_sum <= v) {
        a.hcount = v - order_sum;
        filled = true;
        break;
      }
    if (!filled) throw ValenceViolation(off);
  }
}

}  // namespace

Molecule parse_smiles(const std::string& s) {
  Parser p(s);
  Molecule m = p.parse();
  perceive_rings(m);
  // a default bond between two aromatic atoms is only aromatic inside a
  // ring; the biphenyl linker bond is single
  for (auto& b : m.bonds)
    if (b.order == BondOrder::Aromatic && !b.in_ring) b.order = BondOrder::Single;
  aromatize_kekule(m);
  fill_hydrogens_and_validate(m, p.atom_offsets);
  return m;
}

bool is_valid_smiles(const std::string& s) {
  try {
    parse_smiles(s);
    return true;
  } catch (const SmilesError&) {
    return false;
  }
}

}  // namespace chemlm::chem
