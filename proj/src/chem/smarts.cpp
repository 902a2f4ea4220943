#include "chemlm/chem/smarts.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>

namespace chemlm::chem {

struct SmartsPattern::AtomExpr {
  enum class Kind { And, Or, Not, Prim } kind = Kind::Prim;
  enum class PrimType {
    Wildcard,   // *
    Element,    // symbol, optionally aromaticity-constrained
    AtomicNum,  // #n
    Aromatic,   // a
    Aliphatic,  // A
    Degree,     // Dn, heavy-atom degree
    TotalH,     // Hn
    Connections,// Xn, degree + H
    Valence,    // vn, bond order sum + H
    Ring,       // R (value<0: any ring), R0, Rn (n>0: in ring, count ignored)
    Charge,     // +n / -n
  } prim = PrimType::Wildcard;
  int value = 0;
  int aromatic = -1;  // element constraint: -1 any, 0 aliphatic, 1 aromatic
  std::vector<AtomExprPtr> kids;
};

namespace {

using AtomExpr = SmartsPattern::AtomExpr;
using AtomExprPtr = SmartsPattern::AtomExprPtr;
using Kind = AtomExpr::Kind;
using PrimType = AtomExpr::PrimType;

AtomExprPtr make_prim(PrimType t, int value = 0, int aromatic = -1) {
  auto e = std::make_shared<AtomExpr>();
  e->kind = Kind::Prim;
  e->prim = t;
  e->value = value;
  e->aromatic = aromatic;
  return e;
}

AtomExprPtr make_node(Kind k, std::vector<AtomExprPtr> kids) {
  auto e = std::make_shared<AtomExpr>();
  e->kind = k;
  e->kids = std::move(kids);
  return e;
}

struct ExprParser {
  const std::string& s;
  size_t pos;
  size_t end;

  bool eof() const { return pos >= end; }
  char peek() const { return s[pos]; }

  int read_int(int fallback) {
    if (eof() || !std::isdigit(static_cast<unsigned char>(peek()))) return fallback;
    int v = 0;
    while (!eof() && std::isdigit(static_cast<unsigned char>(peek()))) {
      v = v * 10 + (peek() - '0');
      ++pos;
    }
    return v;
  }

  AtomExprPtr primitive() {
    if (eof()) throw SmartsParseError("smarts: expected primitive");
    char c = peek();
    if (c == '*') { ++pos; return make_prim(PrimType::Wildcard); }
    if (c == '#') { ++pos; return make_prim(PrimType::AtomicNum, read_int(-1)); }
    if (c == 'a') { ++pos; return make_prim(PrimType::Aromatic); }
    if (c == 'A') { ++pos; return make_prim(PrimType::Aliphatic); }
    if (c == 'D') { ++pos; return make_prim(PrimType::Degree, read_int(1)); }
    if (c == 'H') { ++pos; return make_prim(PrimType::TotalH, read_int(1)); }
    if (c == 'X') { ++pos; return make_prim(PrimType::Connections, read_int(1)); }
    if (c == 'v') { ++pos; return make_prim(PrimType::Valence, read_int(1)); }
    if (c == 'R') { ++pos; return make_prim(PrimType::Ring, read_int(-1)); }
    if (c == '+') { ++pos; return make_prim(PrimType::Charge, read_int(1)); }
    if (c == '-') { ++pos; return make_prim(PrimType::Charge, -read_int(1)); }
    if (std::isupper(static_cast<unsigned char>(c))) {
      std::string sym(1, c);
      ++pos;
      if (!eof() && std::islower(static_cast<unsigned char>(peek())) &&
          atomic_number_of(sym + peek()) != 0 && peek() != 'c' && peek() != 'n' &&
          peek() != 'o' && peek() != 's') {
        // two-letter symbols whose tail is not itself an aromatic primitive
        sym += peek();
        ++pos;
      } else if (!eof() && (sym == "C" && peek() == 'l')) {
        sym += 'l';
        ++pos;
      } else if (!eof() && (sym == "B" && peek() == 'r')) {
        sym += 'r';
        ++pos;
      }
      int z = atomic_number_of(sym);
      if (z == 0) throw SmartsParseError("smarts: unknown element " + sym);
      return make_prim(PrimType::Element, z, 0);
    }
    if (std::islower(static_cast<unsigned char>(c))) {
      std::string sym(1, static_cast<char>(std::toupper(c)));
      ++pos;
      if (!eof() && ((sym == "S" && peek() == 'e') || (sym == "A" && peek() == 's'))) {
        sym += peek();
        ++pos;
      }
      int z = atomic_number_of(sym);
      if (z == 0) throw SmartsParseError("smarts: unknown aromatic element");
      return make_prim(PrimType::Element, z, 1);
    }
    throw SmartsParseError(std::string("smarts: bad primitive char ") + c);
  }

  AtomExprPtr unary() {
    if (!eof() && peek() == '!') {
      ++pos;
      return make_node(Kind::Not, {unary()});
    }
    return primitive();
  }

  AtomExprPtr and_high() {
    std::vector<AtomExprPtr> kids = {unary()};
    while (!eof() && peek() != ',' && peek() != ';') {
      if (peek() == '&') ++pos;
      kids.push_back(unary());
    }
    return kids.size() == 1 ? kids[0] : make_node(Kind::And, std::move(kids));
  }

  AtomExprPtr or_expr() {
    std::vector<AtomExprPtr> kids = {and_high()};
    while (!eof() && peek() == ',') {
      ++pos;
      kids.push_back(and_high());
    }
    return kids.size() == 1 ? kids[0] : make_node(Kind::Or, std::move(kids));
  }

  AtomExprPtr full() {
    std::vector<AtomExprPtr> kids = {or_expr()};
    while (!eof() && peek() == ';') {
      ++pos;
      kids.push_back(or_expr());
    }
    return kids.size() == 1 ? kids[0] : make_node(Kind::And, std::move(kids));
  }
};

bool eval(const AtomExpr& e, const Molecule& m, int atom) {
  const Atom& a = m.atoms[static_cast<size_t>(atom)];
  switch (e.kind) {
    case Kind::Not:
      return !eval(*e.kids[0], m, atom);
    case Kind::And:
      for (const auto& k : e.kids)
        if (!eval(*k, m, atom)) return false;
      return true;
    case Kind::Or:
      for (const auto& k : e.kids)
        if (eval(*k, m, atom)) return true;
      return false;
    case Kind::Prim:
      break;
  }
  switch (e.prim) {
    case PrimType::Wildcard: return true;
    case PrimType::Element:
      if (a.atomic_number != e.value) return false;
      if (e.aromatic == 1 && !a.aromatic) return false;
      if (e.aromatic == 0 && a.aromatic) return false;
      return true;
    case PrimType::AtomicNum: return a.atomic_number == e.value;
    case PrimType::Aromatic: return a.aromatic;
    case PrimType::Aliphatic: return !a.aromatic;
    case PrimType::Degree: return m.degree(atom) == e.value;
    case PrimType::TotalH: return a.hcount == e.value;
    case PrimType::Connections: return m.connections(atom) == e.value;
    case PrimType::Valence:
      return static_cast<int>(std::lround(m.valence(atom))) == e.value;
    case PrimType::Ring:
      if (e.value == 0) return !a.in_ring;
      return a.in_ring;
    case PrimType::Charge: return a.charge == e.value;
  }
  return false;
}

}  // namespace

bool SmartsPattern::atom_matches(int pattern_atom, const Molecule& m, int mol_atom) const {
  return eval(*atom_exprs_[static_cast<size_t>(pattern_atom)], m, mol_atom);
}

bool SmartsPattern::bond_matches(BondExpr e, const Bond& b, const Molecule& m) {
  switch (e) {
    case BondExpr::Any: return true;
    case BondExpr::Single: return b.order == BondOrder::Single;
    case BondExpr::Double: return b.order == BondOrder::Double;
    case BondExpr::Triple: return b.order == BondOrder::Triple;
    case BondExpr::Aromatic: return b.order == BondOrder::Aromatic;
    case BondExpr::Default:
      return b.order == BondOrder::Single || b.order == BondOrder::Aromatic;
  }
  return false;
}

SmartsPattern SmartsPattern::parse(const std::string& s) {
  SmartsPattern p;
  size_t pos = 0;
  int prev = -1;
  BondExpr pending = BondExpr::Default;
  bool pending_set = false;
  std::vector<int> branch_stack;
  std::map<int, std::pair<int, BondExpr>> open_rings;

  auto add_atom = [&](AtomExprPtr expr) {
    p.atom_exprs_.push_back(std::move(expr));
    p.adj_.emplace_back();
    return static_cast<int>(p.atom_exprs_.size()) - 1;
  };
  auto add_bond = [&](int a, int b, BondExpr e) {
    int bi = static_cast<int>(p.bonds_.size());
    p.bonds_.push_back({a, b, e});
    p.adj_[static_cast<size_t>(a)].push_back({bi, b});
    p.adj_[static_cast<size_t>(b)].push_back({bi, a});
  };

  while (pos < s.size()) {
    char c = s[pos];
    if (c == '(') {
      if (prev < 0) throw SmartsParseError("smarts: branch before first atom");
      branch_stack.push_back(prev);
      ++pos;
    } else if (c == ')') {
      if (branch_stack.empty()) throw SmartsParseError("smarts: unbalanced )");
      prev = branch_stack.back();
      branch_stack.pop_back();
      ++pos;
    } else if (c == '-') {
      pending = BondExpr::Single; pending_set = true; ++pos;
    } else if (c == '=') {
      pending = BondExpr::Double; pending_set = true; ++pos;
    } else if (c == '#' && pos + 1 < s.size() &&
               !std::isdigit(static_cast<unsigned char>(s[pos + 1]))) {
      pending = BondExpr::Triple; pending_set = true; ++pos;
    } else if (c == ':') {
      pending = BondExpr::Aromatic; pending_set = true; ++pos;
    } else if (c == '~') {
      pending = BondExpr::Any; pending_set = true; ++pos;
    } else if (std::isdigit(static_cast<unsigned char>(c))) {
      if (prev < 0) throw SmartsParseError("smarts: ring digit before atom");
      int label = c - '0';
      ++pos;
      auto it = open_rings.find(label);
      if (it == open_rings.end()) {
        open_rings[label] = {prev, pending_set ? pending : BondExpr::Default};
      } else {
        BondExpr e = pending_set ? pending : it->second.second;
        add_bond(it->second.first, prev, e);
        open_rings.erase(it);
      }
      pending = BondExpr::Default;
      pending_set = false;
    } else if (c == '[') {
      size_t close = s.find(']', pos);
      if (close == std::string::npos) throw SmartsParseError("smarts: unclosed [");
      ExprParser ep{s, pos + 1, close};
      AtomExprPtr expr = ep.full();
      if (ep.pos != close) throw SmartsParseError("smarts: trailing bracket content");
      pos = close + 1;
      int idx = add_atom(std::move(expr));
      if (prev >= 0) add_bond(prev, idx, pending);
      pending = BondExpr::Default;
      pending_set = false;
      prev = idx;
    } else {
      // bare atom: single primitive parsed with the bracket machinery
      size_t len = 1;
      if ((c == 'C' && pos + 1 < s.size() && s[pos + 1] == 'l') ||
          (c == 'B' && pos + 1 < s.size() && s[pos + 1] == 'r'))
        len = 2;
      ExprParser ep{s, pos, pos + len};
      AtomExprPtr expr;
      if (c == '*') {
        expr = make_prim(PrimType::Wildcard);
        ep.pos = pos + 1;
      } else if (c == 'a' || c == 'A') {
        expr = make_prim(c == 'a' ? PrimType::Aromatic : PrimType::Aliphatic);
        ep.pos = pos + 1;
      } else {
        expr = ep.primitive();
        if (expr->prim != PrimType::Element)
          throw SmartsParseError("smarts: unexpected bare primitive");
      }
      pos = ep.pos;
      int idx = add_atom(std::move(expr));
      if (prev >= 0) add_bond(prev, idx, pending);
      pending = BondExpr::Default;
      pending_set = false;
      prev = idx;
    }
  }
  if (!branch_stack.empty()) throw SmartsParseError("smarts: unbalanced (");
  if (!open_rings.empty()) throw SmartsParseError("smarts: unclosed ring bond");
  if (p.atom_exprs_.empty()) throw SmartsParseError("smarts: empty pattern");
  return p;
}

namespace {

void backtrack(const SmartsPattern& p,
               const std::vector<std::vector<std::pair<int, int>>>& padj,
               const Molecule& m, std::vector<int>& mapping, std::vector<char>& used,
               size_t depth, std::vector<std::vector<int>>& out, int forced_first) {
  if (depth == mapping.size()) {
    out.push_back(mapping);
    return;
  }
  int pa = static_cast<int>(depth);
  for (int ma = 0; ma < m.num_atoms(); ++ma) {
    if (used[static_cast<size_t>(ma)]) continue;
    if (depth == 0 && forced_first >= 0 && ma != forced_first) continue;
    if (!p.atom_matches(pa, m, ma)) continue;
    bool ok = true;
    for (const auto& [bi, other] : padj[static_cast<size_t>(pa)]) {
      if (other >= pa) continue;  // only check edges to already-mapped atoms
      const Bond* mb = m.bond_between(mapping[static_cast<size_t>(other)], ma);
      if (!mb || !SmartsPattern::bond_matches(p.bonds()[static_cast<size_t>(bi)].expr, *mb, m)) {
        ok = false;
        break;
      }
    }
    if (!ok) continue;
    mapping[static_cast<size_t>(pa)] = ma;
    used[static_cast<size_t>(ma)] = 1;
    backtrack(p, padj, m, mapping, used, depth + 1, out, forced_first);
    used[static_cast<size_t>(ma)] = 0;
  }
}

// pattern adjacency rebuilt locally since the matcher is a free function
std::vector<std::vector<std::pair<int, int>>> pattern_adj(const SmartsPattern& p) {
  std::vector<std::vector<std::pair<int, int>>> adj(static_cast<size_t>(p.num_atoms()));
  for (size_t bi = 0; bi < p.bonds().size(); ++bi) {
    const auto& b = p.bonds()[bi];
    adj[static_cast<size_t>(b.a)].push_back({static_cast<int>(bi), b.b});
    adj[static_cast<size_t>(b.b)].push_back({static_cast<int>(bi), b.a});
  }
  return adj;
}

}  // namespace

std::vector<std::vector<int>> match_smarts(const SmartsPattern& p, const Molecule& m) {
  std::vector<std::vector<int>> out;
  std::vector<int> mapping(static_cast<size_t>(p.num_atoms()), -1);
  std::vector<char> used(m.atoms.size(), 0);
  backtrack(p, pattern_adj(p), m, mapping, used, 0, out, -1);
  std::sort(out.begin(), out.end());
  return out;
}

bool smarts_matches_atom(const SmartsPattern& p, const Molecule& m, int atom) {
  std::vector<int> mapping(static_cast<size_t>(p.num_atoms()), -1);
  std::vector<char> used(m.atoms.size(), 0);
  std::vector<std::vector<int>> out;
  backtrack(p, pattern_adj(p), m, mapping, used, 0, out, atom);
  return !out.empty();
}

}  // namespace chemlm::chem
