#include "chemlm/eval/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <regex>
#include <set>
#include <unordered_map>

#include "chemlm/chem/fingerprint.hpp"
#include "chemlm/chem/smiles.hpp"
#include "json.hpp"

namespace chemlm::eval {

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else {
      if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
      if (!std::isspace(c)) out.push_back(std::string(1, static_cast<char>(c)));
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

namespace {

// n-gram multiset keyed by joined tokens; \x1F cannot appear in tokens
std::map<std::string, int> ngram_counts(const std::vector<std::string>& toks, int n) {
  std::map<std::string, int> counts;
  if (n <= 0 || toks.size() < static_cast<size_t>(n)) return counts;
  for (size_t i = 0; i + n <= toks.size(); ++i) {
    std::string key = toks[i];
    for (int k = 1; k < n; ++k) key += '\x1F' + toks[i + k];
    ++counts[key];
  }
  return counts;
}

}  // namespace

double bleu_n(const std::vector<std::string>& candidate,
              const std::vector<std::vector<std::string>>& references, int n) {
  if (candidate.empty()) throw EmptyCandidate();
  if (references.empty()) throw EmptyReference();
  if (n < 1) throw Error("bleu_n: n must be >= 1");

  double log_sum = 0.0;
  for (int order = 1; order <= n; ++order) {
    auto cand = ngram_counts(candidate, order);
    size_t total = candidate.size() >= static_cast<size_t>(order)
                       ? candidate.size() - order + 1
                       : 0;
    if (total == 0) return 0.0;
    // clip each candidate n-gram by its best count over the references
    std::map<std::string, int> best;
    for (const auto& ref : references) {
      auto rc = ngram_counts(ref, order);
      for (const auto& [gram, cnt] : rc) best[gram] = std::max(best[gram], cnt);
    }
    long matched = 0;
    for (const auto& [gram, cnt] : cand) {
      auto it = best.find(gram);
      if (it != best.end()) matched += std::min(cnt, it->second);
    }
    if (matched == 0) return 0.0;
    log_sum += std::log(static_cast<double>(matched) / static_cast<double>(total));
  }

  // brevity penalty against the reference length closest to the candidate,
  // ties resolved toward the shorter reference
  size_t c = candidate.size();
  size_t r = references[0].size();
  for (const auto& ref : references) {
    size_t len = ref.size();
    size_t d_new = len > c ? len - c : c - len;
    size_t d_old = r > c ? r - c : c - r;
    if (d_new < d_old || (d_new == d_old && len < r)) r = len;
  }
  double bp = c >= r ? 1.0 : std::exp(1.0 - static_cast<double>(r) / static_cast<double>(c));
  return bp * std::exp(log_sum / n);
}

double rouge_n(const std::vector<std::string>& candidate,
               const std::vector<std::string>& reference, int n,
               bool f_measure, double beta) {
  if (reference.empty()) throw EmptyReference();
  if (n < 1) throw Error("rouge_n: n must be >= 1");
  auto ref = ngram_counts(reference, n);
  auto cand = ngram_counts(candidate, n);
  long ref_total = 0, cand_total = 0, matched = 0;
  for (const auto& [gram, cnt] : ref) ref_total += cnt;
  for (const auto& [gram, cnt] : cand) cand_total += cnt;
  for (const auto& [gram, cnt] : cand) {
    auto it = ref.find(gram);
    if (it != ref.end()) matched += std::min(cnt, it->second);
  }
  if (ref_total == 0) return 0.0;
  double recall = static_cast<double>(matched) / static_cast<double>(ref_total);
  if (!f_measure) return recall;
  if (cand_total == 0 || matched == 0) return 0.0;
  double precision = static_cast<double>(matched) / static_cast<double>(cand_total);
  double b2 = beta * beta;
  return (1.0 + b2) * precision * recall / (recall + b2 * precision);
}

int lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<int> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (size_t i = 1; i <= a.size(); ++i) {
    for (size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l(const std::vector<std::string>& candidate,
               const std::vector<std::string>& reference, double beta) {
  if (reference.empty()) throw EmptyReference();
  if (candidate.empty()) return 0.0;
  int lcs = lcs_length(candidate, reference);
  if (lcs == 0) return 0.0;
  double p = static_cast<double>(lcs) / static_cast<double>(candidate.size());
  double r = static_cast<double>(lcs) / static_cast<double>(reference.size());
  double b2 = beta * beta;
  return (1.0 + b2) * p * r / (r + b2 * p);
}

namespace {

struct Alignment {
  int matches = 0;
  int chunks = 0;
};

// Exact search: maximize matched unigrams, then minimize chunks. State walks
// the candidate left to right; `mask` marks consumed reference positions and
// `last` is the reference slot matched at the previous candidate position
// (m when the previous position was unmatched).
Alignment align_exact(const std::vector<std::string>& cand,
                      const std::vector<std::string>& ref) {
  int n = static_cast<int>(cand.size());
  int m = static_cast<int>(ref.size());
  // value encoded as matches * 4096 - chunks so one int maximization
  // handles the lexicographic objective (chunks <= matches <= 12)
  std::unordered_map<int64_t, int> memo;
  std::function<int(int, int, int)> go = [&](int i, int mask, int last) -> int {
    if (i == n) return 0;
    int64_t key = (static_cast<int64_t>(i) << 20) | (static_cast<int64_t>(mask) << 4) | last;
    auto it = memo.find(key);
    if (it != memo.end()) return it->second;
    int best = go(i + 1, mask, m);  // leave cand[i] unmatched
    for (int j = 0; j < m; ++j) {
      if ((mask >> j) & 1) continue;
      if (ref[j] != cand[i]) continue;
      int new_chunk = (last == j - 1) ? 0 : 1;
      best = std::max(best, 4096 - new_chunk + go(i + 1, mask | (1 << j), j));
    }
    memo[key] = best;
    return best;
  };
  int v = go(0, 0, m);
  Alignment a;
  a.matches = (v + 2048) / 4096;  // chunk costs never exceed matches
  a.chunks = a.matches * 4096 - v;
  return a;
}

// Greedy fallback for long inputs: repeatedly take the longest common
// contiguous block of still-unmatched tokens; each block is one chunk.
Alignment align_greedy(const std::vector<std::string>& cand,
                       const std::vector<std::string>& ref) {
  size_t n = cand.size(), m = ref.size();
  std::vector<char> cused(n, 0), rused(m, 0);
  Alignment a;
  while (true) {
    size_t best_len = 0, best_i = 0, best_j = 0;
    for (size_t i = 0; i < n; ++i) {
      for (size_t j = 0; j < m; ++j) {
        size_t len = 0;
        while (i + len < n && j + len < m && !cused[i + len] && !rused[j + len] &&
               cand[i + len] == ref[j + len])
          ++len;
        if (len > best_len) best_len = len, best_i = i, best_j = j;
      }
    }
    if (best_len == 0) break;
    for (size_t k = 0; k < best_len; ++k) cused[best_i + k] = rused[best_j + k] = 1;
    a.matches += static_cast<int>(best_len);
    a.chunks += 1;
  }
  return a;
}

}  // namespace

double meteor(const std::vector<std::string>& candidate,
              const std::vector<std::string>& reference) {
  if (candidate.empty() || reference.empty()) return 0.0;
  Alignment a = (candidate.size() <= 12 && reference.size() <= 12)
                    ? align_exact(candidate, reference)
                    : align_greedy(candidate, reference);
  if (a.matches == 0) return 0.0;
  double p = static_cast<double>(a.matches) / static_cast<double>(candidate.size());
  double r = static_cast<double>(a.matches) / static_cast<double>(reference.size());
  double f_mean = 10.0 * p * r / (r + 9.0 * p);
  double ratio = static_cast<double>(a.chunks) / static_cast<double>(a.matches);
  double penalty = 0.5 * ratio * ratio * ratio;
  return f_mean * (1.0 - penalty);
}

RegressionMetrics regression_metrics(const std::vector<double>& y,
                                     const std::vector<double>& y_hat) {
  if (y.size() != y_hat.size()) throw LengthMismatch();
  if (y.empty()) throw Error("regression_metrics: empty input");
  size_t n = y.size();
  RegressionMetrics m;
  double mu_y = 0.0, mu_h = 0.0;
  for (size_t i = 0; i < n; ++i) {
    double d = y[i] - y_hat[i];
    m.mse += d * d;
    m.mae += std::abs(d);
    mu_y += y[i];
    mu_h += y_hat[i];
  }
  m.mse /= static_cast<double>(n);
  m.mae /= static_cast<double>(n);
  mu_y /= static_cast<double>(n);
  mu_h /= static_cast<double>(n);
  if (n >= 2) {
    double cov = 0.0, var_y = 0.0, var_h = 0.0;
    for (size_t i = 0; i < n; ++i) {
      cov += (y[i] - mu_y) * (y_hat[i] - mu_h);
      var_y += (y[i] - mu_y) * (y[i] - mu_y);
      var_h += (y_hat[i] - mu_h) * (y_hat[i] - mu_h);
    }
    if (var_y > 0.0 && var_h > 0.0) m.pearson = cov / std::sqrt(var_y * var_h);
  }
  return m;
}

namespace {

std::optional<std::string> try_canonical(const std::string& smiles) {
  if (smiles.empty()) return std::nullopt;
  try {
    return chem::canonical_smiles(chem::parse_smiles(smiles));
  } catch (const Error&) {
    return std::nullopt;
  }
}

}  // namespace

MolSetMetrics molecule_set_metrics(const std::vector<std::string>& generated,
                                   const std::vector<std::string>& references,
                                   const std::vector<std::string>& train_set,
                                   const std::vector<std::string>* pair_sources) {
  if (!references.empty() && references.size() != generated.size()) throw LengthMismatch();
  if (pair_sources && pair_sources->size() != generated.size()) throw LengthMismatch();

  MolSetMetrics out;
  out.n = static_cast<int>(generated.size());
  if (generated.empty()) return out;

  std::vector<std::optional<std::string>> canon(generated.size());
  for (size_t i = 0; i < generated.size(); ++i) canon[i] = try_canonical(generated[i]);
  for (const auto& c : canon)
    if (c) ++out.n_valid;
  out.valid_rate = static_cast<double>(out.n_valid) / static_cast<double>(out.n);

  if (!references.empty()) {
    int exact = 0;
    double sim_sum = 0.0;
    int sim_n = 0;
    for (size_t i = 0; i < generated.size(); ++i) {
      auto ref_canon = try_canonical(references[i]);
      if (canon[i] && ref_canon && *canon[i] == *ref_canon) ++exact;
      if (canon[i] && ref_canon) {
        auto fa = chem::morgan_fingerprint(chem::parse_smiles(*canon[i]));
        auto fb = chem::morgan_fingerprint(chem::parse_smiles(*ref_canon));
        sim_sum += chem::tanimoto(fa, fb);
        ++sim_n;
      }
    }
    out.accuracy = static_cast<double>(exact) / static_cast<double>(out.n);
    out.avg_tanimoto = sim_n ? sim_sum / sim_n : 0.0;
  }

  std::vector<std::string> unique_valid;
  {
    std::set<std::string> seen;
    for (const auto& c : canon)
      if (c && seen.insert(*c).second) unique_valid.push_back(*c);
  }
  if (unique_valid.size() >= 2) {
    double sim_sum = 0.0;
    int pairs = 0;
    std::vector<chem::Fingerprint> fps;
    for (const auto& s : unique_valid)
      fps.push_back(chem::morgan_fingerprint(chem::parse_smiles(s)));
    for (size_t i = 0; i < fps.size(); ++i)
      for (size_t j = i + 1; j < fps.size(); ++j) {
        sim_sum += chem::tanimoto(fps[i], fps[j]);
        ++pairs;
      }
    out.diversity = 1.0 - sim_sum / pairs;
  }

  if (!unique_valid.empty()) {
    std::set<std::string> train_canon;
    for (const auto& s : train_set) {
      auto c = try_canonical(s);
      if (c) train_canon.insert(*c);
    }
    int novel = 0;
    for (const auto& s : unique_valid)
      if (!train_canon.count(s)) ++novel;
    out.novelty = static_cast<double>(novel) / static_cast<double>(unique_valid.size());
  }

  if (pair_sources) {
    double delta_sum = 0.0;
    int delta_n = 0;
    for (size_t i = 0; i < generated.size(); ++i) {
      auto src = try_canonical((*pair_sources)[i]);
      if (!canon[i] || !src) continue;
      try {
        double lo = props::compute_properties(chem::parse_smiles(*src)).logp;
        double lg = props::compute_properties(chem::parse_smiles(*canon[i])).logp;
        delta_sum += lg - lo;
        ++delta_n;
      } catch (const Error&) {
        // unparameterized molecules stay out of the average
      }
    }
    if (delta_n) out.increased_logp = delta_sum / delta_n;
  }
  return out;
}

namespace {

double match_number(const std::string& text, const std::string& label) {
  std::regex re("\\b" + label + "\\b\\s+is\\s+(-?\\d+(?:\\.\\d+)?)",
                std::regex::icase);
  std::smatch m;
  if (!std::regex_search(text, m, re)) throw MalformedAnswer("missing " + label);
  return std::stod(m[1].str());
}

}  // namespace

props::PropertyVector parse_property_answer(const std::string& text) {
  props::PropertyVector p;
  p.mw = match_number(text, "MW");
  p.logp = match_number(text, "LogP");
  p.tpsa = match_number(text, "TPSA");
  p.hbd = static_cast<int>(std::lround(match_number(text, "HBD")));
  p.hba = static_cast<int>(std::lround(match_number(text, "HBA")));
  p.rb = static_cast<int>(std::lround(match_number(text, "RB")));
  p.qed = match_number(text, "QED");
  return p;
}

std::string parse_smiles_answer(const std::string& text) {
  std::regex re("\\bSMILES\\b[\\s\\S]*?\\bis\\b\\s+(\\S+)", std::regex::icase);
  std::smatch m;
  if (!std::regex_search(text, m, re)) throw MalformedAnswer("no SMILES marker");
  std::string s = m[1].str();
  if (!s.empty() && s.back() == '.') s.pop_back();
  if (s.empty()) throw MalformedAnswer("empty SMILES");
  return s;
}

double bootstrap_std_error(const std::vector<double>& per_record, int resamples,
                           uint64_t seed) {
  if (per_record.size() < 2 || resamples < 2) return 0.0;
  Rng rng(seed);
  size_t n = per_record.size();
  std::vector<double> means(static_cast<size_t>(resamples));
  for (auto& mean : means) {
    double sum = 0.0;
    for (size_t i = 0; i < n; ++i) sum += per_record[rng.next_below(n)];
    mean = sum / static_cast<double>(n);
  }
  double mu = 0.0;
  for (double v : means) mu += v;
  mu /= means.size();
  double var = 0.0;
  for (double v : means) var += (v - mu) * (v - mu);
  return std::sqrt(var / means.size());
}

MetricValue metric_entry(const std::string& name,
                         const std::vector<double>& per_record, uint64_t seed) {
  MetricValue mv;
  mv.name = name;
  mv.n = static_cast<int>(per_record.size());
  if (!per_record.empty()) {
    double sum = 0.0;
    for (double v : per_record) sum += v;
    mv.value = sum / static_cast<double>(per_record.size());
  }
  mv.std_error = bootstrap_std_error(per_record, 1000, seed);
  return mv;
}

std::string report_to_jsonl(const MetricReport& report) {
  std::string out;
  for (const auto& mv : report) {
    nlohmann::ordered_json j;
    j["name"] = mv.name;
    j["value"] = mv.value;
    j["n"] = mv.n;
    j["std_error"] = mv.std_error;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::string report_to_table(const MetricReport& report) {
  std::string out = "metric                 value      n  std_error\n";
  char buf[128];
  for (const auto& mv : report) {
    std::snprintf(buf, sizeof(buf), "%-20s %8.4f %6d  %8.4f\n", mv.name.c_str(),
                  mv.value, mv.n, mv.std_error);
    out += buf;
  }
  return out;
}

}  // namespace chemlm::eval
