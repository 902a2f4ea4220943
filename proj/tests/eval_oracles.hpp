#pragma once

// Brute-force reference implementations for the text metrics. Deliberately
// written with naive data structures so they share no code with the library.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "chemlm/util/rng.hpp"

namespace eval_oracles {

using Tokens = std::vector<std::string>;

inline Tokens random_tokens(chemlm::Rng& rng, size_t max_len, int alphabet) {
  Tokens out(rng.next_below(max_len) + 1);
  for (auto& t : out) t = std::string(1, static_cast<char>('a' + rng.next_below(alphabet)));
  return out;
}

// naive n-gram precision with clipping
inline double bleu(const Tokens& cand, const std::vector<Tokens>& refs, int n) {
  double log_sum = 0.0;
  for (int order = 1; order <= n; ++order) {
    if (cand.size() < static_cast<size_t>(order)) return 0.0;
    std::vector<Tokens> grams;
    for (size_t i = 0; i + order <= cand.size(); ++i)
      grams.push_back(Tokens(cand.begin() + i, cand.begin() + i + order));
    long matched = 0;
    std::vector<char> counted(grams.size(), 0);
    for (size_t i = 0; i < grams.size(); ++i) {
      if (counted[i]) continue;
      long mine = 0;
      for (size_t j = 0; j < grams.size(); ++j)
        if (grams[j] == grams[i]) counted[j] = 1, ++mine;
      long best = 0;
      for (const auto& ref : refs) {
        long cnt = 0;
        for (size_t j = 0; j + order <= ref.size(); ++j)
          if (Tokens(ref.begin() + j, ref.begin() + j + order) == grams[i]) ++cnt;
        best = std::max(best, cnt);
      }
      matched += std::min(mine, best);
    }
    if (matched == 0) return 0.0;
    log_sum += std::log(double(matched) / double(grams.size()));
  }
  size_t c = cand.size(), r = refs[0].size();
  for (const auto& ref : refs) {
    size_t len = ref.size();
    auto dist = [&](size_t x) { return x > c ? x - c : c - x; };
    if (dist(len) < dist(r) || (dist(len) == dist(r) && len < r)) r = len;
  }
  double bp = c >= r ? 1.0 : std::exp(1.0 - double(r) / double(c));
  return bp * std::exp(log_sum / n);
}

inline double rouge_recall(const Tokens& cand, const Tokens& ref, int n) {
  if (ref.size() < static_cast<size_t>(n)) return 0.0;
  std::vector<Tokens> rg, cg;
  for (size_t i = 0; i + n <= ref.size(); ++i)
    rg.push_back(Tokens(ref.begin() + i, ref.begin() + i + n));
  for (size_t i = 0; i + n <= cand.size(); ++i)
    cg.push_back(Tokens(cand.begin() + i, cand.begin() + i + n));
  std::vector<char> used(cg.size(), 0);
  long matched = 0;
  for (const auto& g : rg) {
    for (size_t j = 0; j < cg.size(); ++j) {
      if (!used[j] && cg[j] == g) {
        used[j] = 1;
        ++matched;
        break;
      }
    }
  }
  return double(matched) / double(rg.size());
}

// every subsequence of `a`, checked for being a subsequence of `b`
inline int lcs(const Tokens& a, const Tokens& b) {
  int best = 0;
  for (uint32_t mask = 0; mask < (1u << a.size()); ++mask) {
    Tokens sub;
    for (size_t i = 0; i < a.size(); ++i)
      if ((mask >> i) & 1) sub.push_back(a[i]);
    size_t j = 0;
    for (const auto& t : b)
      if (j < sub.size() && t == sub[j]) ++j;
    if (j == sub.size()) best = std::max<int>(best, static_cast<int>(sub.size()));
  }
  return best;
}

// exhaustive alignment search: assign each candidate token to a free equal
// reference token or leave it; chunks counted on the finished assignment
inline void align_rec(const Tokens& cand, const Tokens& ref, size_t i,
                      std::vector<int>& assign, std::vector<char>& used,
                      int& best_matches, int& best_chunks) {
  if (i == cand.size()) {
    int matches = 0, chunks = 0;
    for (size_t k = 0; k < assign.size(); ++k) {
      if (assign[k] < 0) continue;
      ++matches;
      if (k == 0 || assign[k - 1] < 0 || assign[k - 1] != assign[k] - 1) ++chunks;
    }
    if (matches > best_matches || (matches == best_matches && chunks < best_chunks)) {
      best_matches = matches;
      best_chunks = chunks;
    }
    return;
  }
  assign[i] = -1;
  align_rec(cand, ref, i + 1, assign, used, best_matches, best_chunks);
  for (size_t j = 0; j < ref.size(); ++j) {
    if (used[j] || ref[j] != cand[i]) continue;
    used[j] = 1;
    assign[i] = static_cast<int>(j);
    align_rec(cand, ref, i + 1, assign, used, best_matches, best_chunks);
    assign[i] = -1;
    used[j] = 0;
  }
}

inline double meteor(const Tokens& cand, const Tokens& ref) {
  std::vector<int> assign(cand.size(), -1);
  std::vector<char> used(ref.size(), 0);
  int matches = 0, chunks = 0;
  align_rec(cand, ref, 0, assign, used, matches, chunks);
  if (matches == 0) return 0.0;
  double p = double(matches) / cand.size(), r = double(matches) / ref.size();
  double f = 10.0 * p * r / (r + 9.0 * p);
  double c = double(chunks) / matches;
  return f * (1.0 - 0.5 * c * c * c);
}

}  // namespace eval_oracles
