#pragma once

#include <optional>
#include <string>
#include <vector>

#include "chemlm/props/properties.hpp"
#include "chemlm/util/errors.hpp"
#include "chemlm/util/rng.hpp"

namespace chemlm::eval {

struct EmptyCandidate : Error {
  EmptyCandidate() : Error("metric: empty candidate") {}
};
struct EmptyReference : Error {
  EmptyReference() : Error("metric: empty reference") {}
};
struct LengthMismatch : Error {
  LengthMismatch() : Error("metric: paired lists differ in length") {}
};
struct MalformedAnswer : Error {
  explicit MalformedAnswer(const std::string& what) : Error("malformed answer: " + what) {}
};

// Lowercases and splits on whitespace; every punctuation character becomes
// its own token so "46.07," yields {"46", ".", "07", ","}.
std::vector<std::string> tokenize(const std::string& text);

// ---- text metrics ----------------------------------------------------------

// Uniform-weight BLEU with clipped n-gram counts and brevity penalty.
// Returns 0 when any order has zero precision.
double bleu_n(const std::vector<std::string>& candidate,
              const std::vector<std::vector<std::string>>& references, int n);

// Recall form by default: matched n-grams over reference n-grams. The
// f_measure flag switches to (1+b^2)PR/(R+b^2 P) with beta below.
double rouge_n(const std::vector<std::string>& candidate,
               const std::vector<std::string>& reference, int n,
               bool f_measure = false, double beta = 1.2);

double rouge_l(const std::vector<std::string>& candidate,
               const std::vector<std::string>& reference, double beta = 1.2);

int lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b);

// Exact-unigram alignment: maximal match count, then minimal chunk count.
// score = F_mean * (1 - 0.5*(chunks/matches)^3), F_mean = 10PR/(R+9P).
double meteor(const std::vector<std::string>& candidate,
              const std::vector<std::string>& reference);

// ---- regression ------------------------------------------------------------

struct RegressionMetrics {
  double mse = 0.0;
  double mae = 0.0;
  std::optional<double> pearson;  // absent when N < 2 or either sigma is 0
};

RegressionMetrics regression_metrics(const std::vector<double>& y,
                                     const std::vector<double>& y_hat);

// ---- molecule sets ---------------------------------------------------------

struct MolSetMetrics {
  double accuracy = 0.0;      // canonical equality against the paired reference
  double avg_tanimoto = 0.0;  // valid outputs vs their references
  double diversity = 0.0;     // 1 - mean pairwise similarity, valid unique outputs
  double novelty = 0.0;       // fraction of unique valid outputs absent from train
  double valid_rate = 0.0;
  std::optional<double> increased_logp;  // only when pair sources are given
  int n = 0;
  int n_valid = 0;
};

// `generated` holds extracted SMILES; an empty string marks an answer that
// failed the template and counts against valid_rate. `references` may be
// empty (no paired ground truth); otherwise it must match in length, as must
// `pair_sources` when present.
MolSetMetrics molecule_set_metrics(
    const std::vector<std::string>& generated,
    const std::vector<std::string>& references,
    const std::vector<std::string>& train_set,
    const std::vector<std::string>* pair_sources = nullptr);

// ---- answer parsing --------------------------------------------------------

props::PropertyVector parse_property_answer(const std::string& text);
std::string parse_smiles_answer(const std::string& text);

// ---- reporting -------------------------------------------------------------

struct MetricValue {
  std::string name;
  double value = 0.0;
  int n = 0;
  double std_error = 0.0;
};

using MetricReport = std::vector<MetricValue>;

// Standard error of the mean from seeded resampling of per-record values.
double bootstrap_std_error(const std::vector<double>& per_record, int resamples,
                           uint64_t seed);

MetricValue metric_entry(const std::string& name,
                         const std::vector<double>& per_record, uint64_t seed);

std::string report_to_jsonl(const MetricReport& report);
std::string report_to_table(const MetricReport& report);

}  // namespace chemlm::eval
