#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "chemlm/chem/smiles.hpp"
#include "chemlm/eval/metrics.hpp"
#include "chemlm/task/task_data.hpp"
#include "chemlm/util/rng.hpp"
#include "doctest.h"
#include "eval_oracles.hpp"
#include "json.hpp"

using namespace chemlm;
using namespace chemlm::eval;

namespace {

using Tokens = std::vector<std::string>;

Tokens random_tokens(Rng& rng, size_t max_len, int alphabet) {
  Tokens out(rng.next_below(max_len) + 1);
  for (auto& t : out) t = std::string(1, static_cast<char>('a' + rng.next_below(alphabet)));
  return out;
}

}  // namespace

TEST_CASE("tokenize lowercases and isolates punctuation") {
  CHECK(tokenize("The MW is 46.07, right?") ==
        Tokens{"the", "mw", "is", "46", ".", "07", ",", "right", "?"});
  CHECK(tokenize("   ").empty());
}

TEST_CASE("bleu matches the worked examples") {
  Tokens abc{"a", "b", "c"};
  CHECK(bleu_n(abc, {abc}, 2) == doctest::Approx(1.0));
  CHECK(bleu_n(abc, {{"a", "b", "d"}}, 2) ==
        doctest::Approx(std::sqrt(2.0 / 3.0 * 1.0 / 2.0)).epsilon(1e-9));
  // half-length candidate takes the e^{1-2} brevity penalty
  CHECK(bleu_n({"a", "b"}, {{"a", "b", "a", "b"}}, 1) ==
        doctest::Approx(std::exp(-1.0)).epsilon(1e-9));
  CHECK(bleu_n({"x"}, {abc}, 1) == doctest::Approx(0.0));
  CHECK_THROWS_AS(bleu_n({}, {abc}, 1), EmptyCandidate);
  CHECK_THROWS_AS(bleu_n(abc, {}, 1), EmptyReference);
}

TEST_CASE("bleu agrees with a naive counting oracle") {
  Rng rng(11);
  for (int trial = 0; trial < 300; ++trial) {
    Tokens cand = random_tokens(rng, 8, 3);
    std::vector<Tokens> refs;
    size_t n_refs = rng.next_below(2) + 1;
    for (size_t k = 0; k < n_refs; ++k) refs.push_back(random_tokens(rng, 8, 3));
    int n = 1 + static_cast<int>(rng.next_below(3));
    CHECK(bleu_n(cand, refs, n) == doctest::Approx(eval_oracles::bleu(cand, refs, n)).epsilon(1e-12));
  }
}

TEST_CASE("rouge matches the worked examples") {
  Tokens abc{"a", "b", "c"};
  CHECK(rouge_n(abc, abc, 1) == doctest::Approx(1.0));
  CHECK(rouge_l(abc, abc) == doctest::Approx(1.0));
  CHECK(rouge_n(abc, {"a", "b", "d"}, 1) == doctest::Approx(2.0 / 3.0));
  CHECK(rouge_l(abc, {"a", "c", "b"}) == doctest::Approx(2.0 / 3.0).epsilon(1e-9));
  // recall and F-measure coincide when P = R
  CHECK(rouge_n(abc, {"a", "b", "d"}, 1, true) == doctest::Approx(2.0 / 3.0).epsilon(1e-9));
  CHECK_THROWS_AS(rouge_n(abc, {}, 1), EmptyReference);
  CHECK_THROWS_AS(rouge_l(abc, {}), EmptyReference);
}

TEST_CASE("lcs agrees with exhaustive subsequence search") {
  Rng rng(12);
  for (int trial = 0; trial < 300; ++trial) {
    Tokens a = random_tokens(rng, 10, 3);
    Tokens b = random_tokens(rng, 10, 3);
    CHECK(lcs_length(a, b) == eval_oracles::lcs(a, b));
  }
}

TEST_CASE("meteor matches the closed forms") {
  CHECK(meteor({"word"}, {"word"}) == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(meteor({"a", "b", "c"}, {"a", "b", "c"}) ==
        doctest::Approx(1.0 - 0.5 / 27.0).epsilon(1e-9));
  CHECK(meteor({"x", "y"}, {"a", "b"}) == doctest::Approx(0.0));
  CHECK(meteor({}, {"a"}) == doctest::Approx(0.0));
}

TEST_CASE("meteor agrees with exhaustive alignment search") {
  Rng rng(13);
  for (int trial = 0; trial < 200; ++trial) {
    Tokens cand = random_tokens(rng, 6, 3);
    Tokens ref = random_tokens(rng, 6, 3);
    CHECK(meteor(cand, ref) == doctest::Approx(eval_oracles::meteor(cand, ref)).epsilon(1e-12));
  }
  // the long-input path stays in range and is exact on disjoint-vocab text
  Tokens long_cand, long_ref;
  for (int i = 0; i < 30; ++i) {
    long_cand.push_back("w" + std::to_string(i));
    long_ref.push_back("w" + std::to_string(i));
  }
  CHECK(meteor(long_cand, long_ref) == doctest::Approx(1.0 - 0.5 / (30.0 * 30.0 * 30.0)));
}

TEST_CASE("regression metrics handle the degenerate cases") {
  RegressionMetrics same = regression_metrics({1, 2, 3}, {1, 2, 3});
  CHECK(same.mse == doctest::Approx(0.0));
  CHECK(same.mae == doctest::Approx(0.0));
  REQUIRE(same.pearson.has_value());
  CHECK(*same.pearson == doctest::Approx(1.0));

  RegressionMetrics anti = regression_metrics({1, 2, 3}, {-1, -2, -3});
  REQUIRE(anti.pearson.has_value());
  CHECK(*anti.pearson == doctest::Approx(-1.0));

  RegressionMetrics flat = regression_metrics({1, 2, 3}, {2, 2, 2});
  CHECK(flat.mse == doctest::Approx(2.0 / 3.0));
  CHECK(flat.mae == doctest::Approx(2.0 / 3.0));
  CHECK(!flat.pearson.has_value());

  CHECK(!regression_metrics({1}, {5}).pearson.has_value());
  CHECK_THROWS_AS(regression_metrics({1, 2}, {1}), LengthMismatch);
}

TEST_CASE("molecule set metrics cover the documented cases") {
  std::vector<std::string> outs{"CCO", "CCN"};
  MolSetMetrics perfect = molecule_set_metrics(outs, outs, {});
  CHECK(perfect.accuracy == doctest::Approx(1.0));
  CHECK(perfect.avg_tanimoto == doctest::Approx(1.0));
  CHECK(perfect.novelty == doctest::Approx(1.0));  // empty train set
  CHECK(perfect.valid_rate == doctest::Approx(1.0));

  MolSetMetrics dup = molecule_set_metrics({"CCO", "OCC"}, {}, {"CCO"});
  CHECK(dup.diversity == doctest::Approx(0.0));  // one unique molecule
  CHECK(dup.novelty == doctest::Approx(0.0));

  std::vector<std::string> half{"CCO", "", "xx", "C(", "CC", "C1CC", "CO", "bad", "CCC", "OC"};
  MolSetMetrics h = molecule_set_metrics(half, {}, {});
  CHECK(h.valid_rate == doctest::Approx(0.5));
  CHECK(h.n_valid == 5);

  std::vector<std::string> sources{"C", "CC"};
  MolSetMetrics grow = molecule_set_metrics({"CCCCCC", "CCCCCCCC"}, {}, {}, &sources);
  REQUIRE(grow.increased_logp.has_value());
  CHECK(*grow.increased_logp > 0.0);
  CHECK(!perfect.increased_logp.has_value());

  CHECK_THROWS_AS(molecule_set_metrics(outs, {"CCO"}, {}), LengthMismatch);
}

TEST_CASE("molecule set metrics agree with set arithmetic on small pools") {
  std::vector<std::string> pool{"C",  "CC",  "CCC",  "CCCC", "CCCCC",
                                "CO", "CCO", "CCCO", "CN",   "CCN"};
  Rng rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::string> gen, refs, train;
    size_t n = rng.next_below(18) + 2;
    for (size_t i = 0; i < n; ++i) {
      gen.push_back(rng.next_double() < 0.2 ? "???" : pool[rng.next_below(pool.size())]);
      refs.push_back(pool[rng.next_below(pool.size())]);
    }
    size_t n_train = rng.next_below(6);
    for (size_t i = 0; i < n_train; ++i) train.push_back(pool[rng.next_below(pool.size())]);

    MolSetMetrics m = molecule_set_metrics(gen, refs, train);

    auto canon = [](const std::string& s) {
      return chem::canonical_smiles(chem::parse_smiles(s));
    };
    int valid = 0, exact = 0;
    std::set<std::string> unique, train_set;
    for (const auto& s : train) train_set.insert(canon(s));
    for (size_t i = 0; i < n; ++i) {
      if (gen[i] == "???") continue;
      ++valid;
      unique.insert(canon(gen[i]));
      if (canon(gen[i]) == canon(refs[i])) ++exact;
    }
    int novel = 0;
    for (const auto& s : unique)
      if (!train_set.count(s)) ++novel;

    CHECK(m.valid_rate == doctest::Approx(double(valid) / n));
    CHECK(m.accuracy == doctest::Approx(double(exact) / n));
    if (!unique.empty()) CHECK(m.novelty == doctest::Approx(double(novel) / unique.size()));
    CHECK(m.diversity >= 0.0);
    CHECK(m.diversity <= 1.0);
    CHECK(m.avg_tanimoto >= 0.0);
    CHECK(m.avg_tanimoto <= 1.0);
  }
}

TEST_CASE("answer parsing round-trips the templates") {
  props::PropertyVector p = parse_property_answer(
      "The MW is 305.42, LogP is 5.42, TPSA is 25.5, HBD is 0, HBA is 2, RB is 3 "
      "and QED is 0.63");
  CHECK(p.mw == doctest::Approx(305.42));
  CHECK(p.logp == doctest::Approx(5.42));
  CHECK(p.tpsa == doctest::Approx(25.5));
  CHECK(p.hbd == 0);
  CHECK(p.hba == 2);
  CHECK(p.rb == 3);
  CHECK(p.qed == doctest::Approx(0.63));

  // whatever the dataset builder emits must parse back to the same numbers
  props::PropertyVector q = props::compute_properties(chem::parse_smiles("CC(=O)Oc1ccccc1"));
  props::PropertyVector r = parse_property_answer(task::property_answer(q));
  CHECK(r.mw == doctest::Approx(q.mw).epsilon(0.01));
  CHECK(r.logp == doctest::Approx(q.logp).epsilon(0.01));
  CHECK(r.tpsa == doctest::Approx(q.tpsa).epsilon(0.01));
  CHECK(r.hbd == q.hbd);
  CHECK(r.hba == q.hba);
  CHECK(r.rb == q.rb);
  CHECK(r.qed == doctest::Approx(q.qed).epsilon(0.01));

  CHECK(parse_smiles_answer("The SMILES of the molecule in the image is CCO.") == "CCO");
  CHECK_THROWS_AS(parse_property_answer("no idea"), MalformedAnswer);
  CHECK_THROWS_AS(parse_smiles_answer("no idea"), MalformedAnswer);
}

TEST_CASE("text metrics stay in range on fuzzed inputs") {
  Rng rng(31);
  for (int trial = 0; trial < 1000; ++trial) {
    Tokens cand = random_tokens(rng, 12, 4);
    Tokens ref = random_tokens(rng, 12, 4);
    double b = bleu_n(cand, {ref}, 1 + static_cast<int>(rng.next_below(4)));
    double rn = rouge_n(cand, ref, 1 + static_cast<int>(rng.next_below(3)));
    double rl = rouge_l(cand, ref);
    double mt = meteor(cand, ref);
    for (double v : {b, rn, rl, mt}) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0 + 1e-12);
    }
  }
}

TEST_CASE("bootstrap errors are seeded and sane") {
  std::vector<double> vals;
  Rng rng(41);
  for (int i = 0; i < 200; ++i) vals.push_back(rng.next_double());
  double a = bootstrap_std_error(vals, 1000, 7);
  double b = bootstrap_std_error(vals, 1000, 7);
  double c = bootstrap_std_error(vals, 1000, 8);
  CHECK(a == b);
  CHECK(a != c);
  // close to sigma/sqrt(n) ~ 0.289/14.1 ~ 0.020
  CHECK(a > 0.01);
  CHECK(a < 0.04);
  CHECK(bootstrap_std_error({1.0, 1.0, 1.0}, 1000, 1) == doctest::Approx(0.0));
  CHECK(bootstrap_std_error({1.0}, 1000, 1) == 0.0);
}

TEST_CASE("reports serialize to json lines and a table") {
  MetricReport rep;
  rep.push_back(metric_entry("bleu_2", {0.5, 0.7, 0.9}, 3));
  rep.push_back(metric_entry("accuracy", {1.0, 0.0}, 3));
  std::string jsonl = report_to_jsonl(rep);
  std::istringstream lines(jsonl);
  std::string line;
  int n_lines = 0;
  while (std::getline(lines, line)) {
    auto j = nlohmann::json::parse(line);
    CHECK(j.contains("name"));
    CHECK(j.contains("value"));
    CHECK(j.contains("n"));
    CHECK(j.contains("std_error"));
    ++n_lines;
  }
  CHECK(n_lines == 2);
  CHECK(rep[0].value == doctest::Approx(0.7));
  CHECK(rep[1].n == 2);
  std::string table = report_to_table(rep);
  CHECK(table.find("bleu_2") != std::string::npos);
  CHECK(table.find("accuracy") != std::string::npos);
}
