#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "chemlm/chem/smiles.hpp"
#include "chemlm/props/properties.hpp"
#include "chemlm/util/rng.hpp"
#include "doctest.h"
#include "json.hpp"
#include "mol_testutil.hpp"

using namespace chemlm;
using namespace chemlm::chem;
using namespace chemlm::props;
using mol_testutil::permuted;

namespace {

struct OracleRecord {
  std::string smiles;
  double mw, logp, tpsa, qed;
  int hbd, hba, rb;
};

const std::vector<OracleRecord>& oracle_fixture() {
  static std::vector<OracleRecord> records = [] {
    std::vector<OracleRecord> out;
    std::ifstream in("data/fixtures/props_oracle.jsonl");
    REQUIRE(in.good());
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      auto j = nlohmann::json::parse(line);
      out.push_back({j["smiles"], j["mw"], j["logp"], j["tpsa"], j["qed"],
                     j["hbd"], j["hba"], j["rb"]});
    }
    REQUIRE(out.size() == 50);
    return out;
  }();
  return records;
}

}  // namespace

TEST_CASE("spec examples") {
  PropertyVector benzene = compute_properties(parse_smiles("c1ccccc1"));
  CHECK(benzene.tpsa == 0.0);
  PropertyVector etoh = compute_properties(parse_smiles("CCO"));
  CHECK(etoh.hbd == 1);
  CHECK(etoh.rb == 0);
  CHECK(etoh.mw == doctest::Approx(46.07).epsilon(0.0003));
}

TEST_CASE("all properties agree with the frozen oracle fixture") {
  for (const auto& rec : oracle_fixture()) {
    INFO("smiles: " << rec.smiles);
    PropertyVector p = compute_properties(parse_smiles(rec.smiles));
    CHECK(std::abs(p.mw - rec.mw) <= 0.01);
    CHECK(std::abs(p.logp - rec.logp) <= 0.01);
    CHECK(std::abs(p.tpsa - rec.tpsa) <= 0.01);
    CHECK(p.hbd == rec.hbd);
    CHECK(p.hba == rec.hba);
    CHECK(p.rb == rec.rb);
    CHECK(std::abs(p.qed - rec.qed) <= 0.01);
    CHECK(p.qed >= 0.0);
    CHECK(p.qed <= 1.0);
    CHECK(p.tpsa >= 0.0);
    CHECK(p.mw > 0.0);
  }
}

TEST_CASE("molecular weight is additive over single-bond joins") {
  // gluing two fragments via one new C-C/C-O bond costs exactly one H each
  const std::vector<std::pair<std::string, std::string>> joins = {
      {"CC", "CC"},       {"CC", "CCO"},     {"CCO", "CC"},     {"CCC", "CCC"},
      {"CC(C)C", "CC"},   {"CCN", "CC"},     {"CC", "CCCl"},    {"CCO", "CCO"},
      {"CCS", "CC"},      {"CC", "CCBr"},    {"CCCC", "CC"},    {"CC", "CCCCC"},
      {"CCN", "CCO"},     {"CCC", "CCO"},    {"OCC", "CC"},     {"CC(C)C", "CCO"},
      {"CCCC", "CCO"},    {"CCS", "CCO"},    {"CCN", "CCC"},    {"CCCCC", "CCC"},
  };
  double h2 = 2.0 * 1.008;
  for (const auto& [a, b] : joins) {
    INFO(a << " + " << b);
    double joined = molecular_weight(parse_smiles(a + b));
    double parts = molecular_weight(parse_smiles(a)) + molecular_weight(parse_smiles(b));
    CHECK(joined == doctest::Approx(parts - h2).epsilon(1e-9));
  }
}

TEST_CASE("property values ignore atom order") {
  Rng rng(99);
  for (const auto& rec : oracle_fixture()) {
    Molecule m = parse_smiles(rec.smiles);
    PropertyVector base = compute_properties(m);
    for (int t = 0; t < 3; ++t) {
      std::vector<int> perm(static_cast<size_t>(m.num_atoms()));
      std::iota(perm.begin(), perm.end(), 0);
      for (size_t i = perm.size(); i > 1; --i)
        std::swap(perm[i - 1], perm[rng.next_below(i)]);
      PropertyVector p = compute_properties(permuted(m, perm));
      INFO("smiles: " << rec.smiles);
      CHECK(p.mw == doctest::Approx(base.mw).epsilon(1e-12));
      CHECK(p.logp == doctest::Approx(base.logp).epsilon(1e-12));
      CHECK(p.tpsa == doctest::Approx(base.tpsa).epsilon(1e-12));
      CHECK(p.hbd == base.hbd);
      CHECK(p.hba == base.hba);
      CHECK(p.rb == base.rb);
      CHECK(p.qed == doctest::Approx(base.qed).epsilon(1e-12));
    }
  }
}

TEST_CASE("atoms outside the parameter table raise instead of defaulting") {
  Molecule m = parse_smiles("[SiH4]");
  CHECK_THROWS_AS(compute_properties(m), UnparameterizedAtom);
}

TEST_CASE("property formatting: two decimals with trailing zeros stripped") {
  CHECK(format_property(25.5) == "25.5");
  CHECK(format_property(181.3) == "181.3");
  CHECK(format_property(181.0) == "181");
  CHECK(format_property(46.069) == "46.07");
  CHECK(format_property(0.5012) == "0.5");
  CHECK(format_property(-1.204) == "-1.2");
  CHECK(format_property(0.0) == "0");
  CHECK(format_property(-0.0001) == "0");
}
