#include "chemlm/props/properties.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>

namespace chemlm::props {

using chem::Atom;
using chem::Bond;
using chem::BondOrder;
using chem::Molecule;
using chem::SmartsPattern;

namespace {

std::vector<std::vector<std::string>> read_tsv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MissingUpstreamArtifact("parameter table not found: " + path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, '\t')) fields.push_back(field);
    if (!fields.empty()) rows.push_back(std::move(fields));
  }
  return rows;
}

int parse_count(const std::string& s) { return s == "*" ? -1 : std::stoi(s); }

}  // namespace

PropsTables PropsTables::load(const std::string& dir) {
  PropsTables t;
  for (const auto& row : read_tsv(dir + "/crippen.tsv")) {
    if (row.size() != 3) throw ConfigInvalid("crippen.tsv: expected 3 columns");
    t.crippen_labels.push_back(row[0]);
    t.crippen.push_back({SmartsPattern::parse(row[1]), std::stod(row[2])});
  }
  for (const auto& row : read_tsv(dir + "/crippen_h.tsv"))
    t.crippen_h.push_back({row[0], std::stod(row[1])});
  for (const auto& row : read_tsv(dir + "/tpsa.tsv")) {
    if (row.size() != 11) throw ConfigInvalid("tpsa.tsv: expected 11 columns");
    TpsaRow r;
    r.element = row[0];
    r.aromatic = std::stoi(row[1]);
    r.charge = std::stoi(row[2]);
    r.hcount = std::stoi(row[3]);
    r.n_single = std::stoi(row[4]);
    r.n_double = std::stoi(row[5]);
    r.n_triple = std::stoi(row[6]);
    r.n_aromatic = std::stoi(row[7]);
    r.in_3ring = parse_count(row[8]);
    r.contribution = std::stod(row[9]);
    r.sp_only = (row[10] == "sp");
    t.tpsa.push_back(r);
  }
  for (const auto& row : read_tsv(dir + "/qed.tsv")) {
    if (row.size() != 9) throw ConfigInvalid("qed.tsv: expected 9 columns");
    t.qed_ads.push_back({row[0], std::stod(row[1]), std::stod(row[2]), std::stod(row[3]),
                         std::stod(row[4]), std::stod(row[5]), std::stod(row[6]),
                         std::stod(row[7]), std::stod(row[8])});
  }
  for (const auto& row : read_tsv(dir + "/alerts.tsv"))
    t.alerts.push_back(SmartsPattern::parse(row[1]));
  for (const auto& row : read_tsv(dir + "/acceptors.tsv")) {
    if (row[0] == "include")
      t.acceptor_include.push_back(SmartsPattern::parse(row[1]));
    else
      t.acceptor_exclude.push_back(SmartsPattern::parse(row[1]));
  }
  return t;
}

const PropsTables& PropsTables::instance(const std::string& dir) {
  static std::map<std::string, PropsTables> cache;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(dir);
  if (it == cache.end()) it = cache.emplace(dir, load(dir)).first;
  return it->second;
}

double molecular_weight(const Molecule& m) {
  double mw = 0.0;
  double h = chem::atomic_weight_of(1);
  for (const auto& a : m.atoms) {
    mw += chem::atomic_weight_of(a.atomic_number);
    mw += h * a.hcount;
  }
  return mw;
}

double crippen_logp(const Molecule& m, const PropsTables& tables) {
  double logp = 0.0;
  for (int i = 0; i < m.num_atoms(); ++i) {
    bool typed = false;
    for (const auto& [pattern, contribution] : tables.crippen) {
      if (smarts_matches_atom(pattern, m, i)) {
        logp += contribution;
        typed = true;
        break;
      }
    }
    if (!typed) throw UnparameterizedAtom(m.atoms[static_cast<size_t>(i)].element, i);
    // per-hydrogen term keyed by the parent element
    if (m.atoms[static_cast<size_t>(i)].hcount > 0) {
      double hterm = 0.0;
      for (const auto& [elem, c] : tables.crippen_h)
        if (elem == m.atoms[static_cast<size_t>(i)].element || elem == "*") {
          hterm = c;
          break;
        }
      logp += hterm * m.atoms[static_cast<size_t>(i)].hcount;
    }
  }
  return logp;
}

double ertl_tpsa(const Molecule& m, const PropsTables& tables, bool include_sp) {
  double tpsa = 0.0;
  for (int i = 0; i < m.num_atoms(); ++i) {
    const Atom& a = m.atoms[static_cast<size_t>(i)];
    int ns = 0, nd = 0, nt = 0, na = 0;
    for (int bi : m.adj[static_cast<size_t>(i)]) {
      switch (m.bonds[static_cast<size_t>(bi)].order) {
        case BondOrder::Single: ++ns; break;
        case BondOrder::Double: ++nd; break;
        case BondOrder::Triple: ++nt; break;
        case BondOrder::Aromatic: ++na; break;
      }
    }
    int ring3 = m.in_ring_of_size(i, 3) ? 1 : 0;
    for (const auto& r : tables.tpsa) {
      if (r.sp_only && !include_sp) continue;
      if (r.element != a.element) continue;
      if (r.aromatic != (a.aromatic ? 1 : 0)) continue;
      if (r.charge != a.charge) continue;
      if (r.hcount != a.hcount) continue;
      if (r.n_single != ns || r.n_double != nd || r.n_triple != nt || r.n_aromatic != na)
        continue;
      if (r.in_3ring >= 0 && r.in_3ring != ring3) continue;
      tpsa += r.contribution;
      break;
    }
  }
  return tpsa;
}

int count_hbd(const Molecule& m) {
  int n = 0;
  for (const auto& a : m.atoms)
    if ((a.element == "N" || a.element == "O") && a.hcount >= 1) ++n;
  return n;
}

int count_hba(const Molecule& m, const PropsTables& tables) {
  int n = 0;
  for (int i = 0; i < m.num_atoms(); ++i) {
    bool included = false;
    for (const auto& p : tables.acceptor_include)
      if (smarts_matches_atom(p, m, i)) {
        included = true;
        break;
      }
    if (!included) continue;
    bool excluded = false;
    for (const auto& p : tables.acceptor_exclude)
      if (smarts_matches_atom(p, m, i)) {
        excluded = true;
        break;
      }
    if (!excluded) ++n;
  }
  return n;
}

int count_rotatable_bonds(const Molecule& m, bool exclude_amide) {
  auto is_amide_cn = [&](int c, int n) {
    if (m.atoms[static_cast<size_t>(c)].element != "C" ||
        m.atoms[static_cast<size_t>(n)].element != "N")
      return false;
    for (int bi : m.adj[static_cast<size_t>(c)]) {
      const Bond& b = m.bonds[static_cast<size_t>(bi)];
      if (b.order == BondOrder::Double &&
          m.atoms[static_cast<size_t>(m.other_end(bi, c))].element == "O")
        return true;
    }
    return false;
  };
  int n = 0;
  for (const auto& b : m.bonds) {
    if (b.order != BondOrder::Single || b.in_ring) continue;
    if (m.degree(b.a) < 2 || m.degree(b.b) < 2) continue;
    if (exclude_amide && (is_amide_cn(b.a, b.b) || is_amide_cn(b.b, b.a))) continue;
    ++n;
  }
  return n;
}

int count_aromatic_rings(const Molecule& m) {
  int n = 0;
  for (const auto& ring : m.rings) {
    bool all_aromatic = true;
    for (int a : ring)
      if (!m.atoms[static_cast<size_t>(a)].aromatic) all_aromatic = false;
    if (all_aromatic) ++n;
  }
  return n;
}

int count_alerts(const Molecule& m, const PropsTables& tables) {
  int n = 0;
  for (const auto& p : tables.alerts)
    if (!match_smarts(p, m).empty()) ++n;
  return n;
}

namespace {

// asymmetric double sigmoidal desirability, scaled to (0, 1]
double ads(const PropsTables::AdsRow& r, double x) {
  double rise = 1.0 / (1.0 + std::exp(-(x - r.c + r.d / 2.0) / r.e));
  double fall = 1.0 - 1.0 / (1.0 + std::exp(-(x - r.c - r.d / 2.0) / r.f));
  return (r.a + r.b * rise * fall) / r.dmax;
}

}  // namespace

PropertyVector compute_properties(const Molecule& m, const PropsTables& tables,
                                  const PropsOptions& opts) {
  PropertyVector p;
  p.mw = molecular_weight(m);
  p.logp = crippen_logp(m, tables);
  p.tpsa = ertl_tpsa(m, tables, opts.tpsa_include_sp);
  p.hbd = count_hbd(m);
  p.hba = count_hba(m, tables);
  p.rb = count_rotatable_bonds(m, opts.rb_exclude_amide);

  std::map<std::string, double> desc = {
      {"MW", p.mw},
      {"ALOGP", p.logp},
      {"HBA", static_cast<double>(p.hba)},
      {"HBD", static_cast<double>(p.hbd)},
      {"PSA", p.tpsa},
      {"ROTB", static_cast<double>(p.rb)},
      {"AROM", static_cast<double>(count_aromatic_rings(m))},
      {"ALERTS", static_cast<double>(count_alerts(m, tables))},
  };
  double wsum = 0.0, acc = 0.0;
  for (const auto& r : tables.qed_ads) {
    auto it = desc.find(r.descriptor);
    if (it == desc.end()) throw ConfigInvalid("qed.tsv: unknown descriptor " + r.descriptor);
    double d = std::min(std::max(ads(r, it->second), 1e-6), 1.0);
    acc += r.weight * std::log(d);
    wsum += r.weight;
  }
  p.qed = std::exp(acc / wsum);
  return p;
}

std::string format_property(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  std::string s(buf);
  if (s == "-0.00") s = "0.00";
  while (!s.empty() && s.back() == '0') s.pop_back();
  if (!s.empty() && s.back() == '.') s.pop_back();
  return s;
}

}  // namespace chemlm::props
