#pragma once

#include <string>
#include <vector>

#include "chemlm/chem/molecule.hpp"
#include "chemlm/chem/smarts.hpp"

namespace chemlm::props {

struct UnparameterizedAtom : Error {
  int atom;
  UnparameterizedAtom(const std::string& element, int atom_idx)
      : Error("no LogP parameter for atom " + std::to_string(atom_idx) + " (" + element + ")"),
        atom(atom_idx) {}
};

struct PropertyVector {
  double mw = 0.0;    // g/mol
  double logp = 0.0;
  double tpsa = 0.0;  // Angstrom^2
  int hbd = 0;
  int hba = 0;
  int rb = 0;
  double qed = 0.0;
};

struct PropsOptions {
  bool tpsa_include_sp = false;  // count sulfur/phosphorus TPSA terms
  bool rb_exclude_amide = true;
};

// Parameter tables loaded once from a directory of TSV files.
class PropsTables {
 public:
  static const PropsTables& instance(const std::string& dir = "data/params");
  static PropsTables load(const std::string& dir);

  struct TpsaRow {
    std::string element;
    int aromatic, charge, hcount, n_single, n_double, n_triple, n_aromatic;
    int in_3ring;  // 0/1, -1 any
    double contribution;
    bool sp_only;
  };
  struct AdsRow {
    std::string descriptor;
    double a, b, c, d, e, f, dmax, weight;
  };

  std::vector<std::pair<chem::SmartsPattern, double>> crippen;
  std::vector<std::string> crippen_labels;
  std::vector<std::pair<std::string, double>> crippen_h;  // element -> per-H term
  std::vector<TpsaRow> tpsa;
  std::vector<AdsRow> qed_ads;
  std::vector<chem::SmartsPattern> alerts;
  std::vector<chem::SmartsPattern> acceptor_include;
  std::vector<chem::SmartsPattern> acceptor_exclude;
};

PropertyVector compute_properties(const chem::Molecule& m, const PropsTables& tables,
                                  const PropsOptions& opts = {});

inline PropertyVector compute_properties(const chem::Molecule& m) {
  return compute_properties(m, PropsTables::instance());
}

// Individual descriptors, exposed for tests and the QED internals.
double molecular_weight(const chem::Molecule& m);
double crippen_logp(const chem::Molecule& m, const PropsTables& tables);
double ertl_tpsa(const chem::Molecule& m, const PropsTables& tables, bool include_sp);
int count_hbd(const chem::Molecule& m);
int count_hba(const chem::Molecule& m, const PropsTables& tables);
int count_rotatable_bonds(const chem::Molecule& m, bool exclude_amide);
int count_aromatic_rings(const chem::Molecule& m);
int count_alerts(const chem::Molecule& m, const PropsTables& tables);

// "25.50" -> "25.5", "181.00" -> "181": two decimals, trailing zeros
// stripped, as the answer templates expect.
std::string format_property(double v);

}  // namespace chemlm::props
