#include "chemlm/text/bpe.hpp"

#include <fstream>
#include <map>
#include <sstream>

namespace chemlm::text {

namespace {

constexpr char kSep = '\x1f';

std::vector<std::string> to_bytes(const std::string& s) {
  std::vector<std::string> out;
  out.reserve(s.size());
  for (char c : s) out.push_back(std::string(1, c));
  return out;
}

void apply_merge(std::vector<std::string>& seq, const std::string& left,
                 const std::string& right) {
  size_t w = 0;
  for (size_t r = 0; r < seq.size();) {
    if (r + 1 < seq.size() && seq[r] == left && seq[r + 1] == right) {
      seq[w++] = left + right;
      r += 2;
    } else {
      if (w != r) seq[w] = std::move(seq[r]);
      ++w;
      r += 1;
    }
  }
  seq.resize(w);
}

}  // namespace

BpeVocab bpe_train(const std::vector<std::string>& corpus_lines, int vocab_size,
                   int n_image) {
  if (vocab_size < 256 + 5) throw ConfigInvalid("bpe_train: vocab_size below byte level");
  bool any = false;
  for (const auto& l : corpus_lines)
    if (!l.empty()) any = true;
  if (!any) throw CorpusEmpty();

  std::vector<std::vector<std::string>> seqs;
  for (const auto& l : corpus_lines)
    if (!l.empty()) seqs.push_back(to_bytes(l));

  BpeVocab v;
  v.n_image = n_image;
  int target_merges = vocab_size - 256 - 5;
  for (int step = 0; step < target_merges; ++step) {
    std::map<std::pair<std::string, std::string>, int64_t> counts;
    for (const auto& seq : seqs)
      for (size_t i = 0; i + 1 < seq.size(); ++i) ++counts[{seq[i], seq[i + 1]}];
    std::pair<std::string, std::string> best;
    int64_t best_count = 0;
    for (const auto& [pair, count] : counts) {
      // ties resolve to the lexicographically smaller pair; std::map
      // iterates in that order, so strictly-greater keeps the first
      if (count > best_count) {
        best_count = count;
        best = pair;
      }
    }
    if (best_count < 2) break;
    v.merges.push_back(best);
    for (auto& seq : seqs) apply_merge(seq, best.first, best.second);
  }
  return v;
}

const std::string& BpeVocab::token_string(int id) const {
  if (cache_.empty()) {
    cache_.reserve(static_cast<size_t>(text_size()));
    for (int b = 0; b < 256; ++b) cache_.push_back(std::string(1, static_cast<char>(b)));
    for (const auto& [l, r] : merges) cache_.push_back(l + r);
  }
  if (id < 0 || id >= text_size()) throw UnknownTokenId(id);
  return cache_[static_cast<size_t>(id)];
}

std::vector<int> encode_text(const BpeVocab& v, const std::string& s) {
  std::vector<std::string> seq = to_bytes(s);
  for (const auto& [l, r] : v.merges) apply_merge(seq, l, r);
  if (v.id_cache_.empty())
    for (int i = 0; i < v.text_size(); ++i) v.id_cache_[v.token_string(i)] = i;
  std::vector<int> out;
  out.reserve(seq.size());
  for (const auto& tok : seq) out.push_back(v.id_cache_.at(tok));
  return out;
}

std::string decode_text(const BpeVocab& v, const std::vector<int>& ids) {
  std::string out;
  for (int id : ids) out += v.token_string(id);
  return out;
}

void BpeVocab::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << "chemlm-bpe v1\n";
  out << "specials <pad> <bos> <eos> <boi> <eoi>\n";
  out << "image_tokens " << n_image << "\n";
  out << "merges " << merges.size() << "\n";
  for (const auto& [l, r] : merges) out << l << kSep << r << "\n";
}

BpeVocab BpeVocab::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingUpstreamArtifact("vocab file not found: " + path);
  std::string line;
  std::getline(in, line);
  if (line != "chemlm-bpe v1") throw ConfigInvalid(path + ": bad vocab header");
  std::getline(in, line);  // specials list, informational
  BpeVocab v;
  std::getline(in, line);
  {
    std::stringstream ss(line);
    std::string key;
    ss >> key >> v.n_image;
    if (key != "image_tokens") throw ConfigInvalid(path + ": missing image_tokens");
  }
  size_t n_merges = 0;
  std::getline(in, line);
  {
    std::stringstream ss(line);
    std::string key;
    ss >> key >> n_merges;
    if (key != "merges") throw ConfigInvalid(path + ": missing merges count");
  }
  while (std::getline(in, line)) {
    size_t sep = line.find(kSep);
    if (sep == std::string::npos) continue;
    v.merges.push_back({line.substr(0, sep), line.substr(sep + 1)});
  }
  if (v.merges.size() != n_merges)
    throw ConfigInvalid(path + ": merge count mismatch");
  return v;
}

TokenSequence assemble_sequence(const BpeVocab& v, const std::vector<Segment>& segments,
                                int image_block_len) {
  TokenSequence out;
  Span text_span{Span::Modality::Text, 0, 0};
  auto push = [&](int id) {
    out.ids.push_back(id);
    ++text_span.len;
  };
  auto flush_text = [&] {
    if (text_span.len > 0) out.spans.push_back(text_span);
    text_span = {Span::Modality::Text, static_cast<int>(out.ids.size()), 0};
  };
  push(v.bos_id());
  for (const auto& seg : segments) {
    if (seg.kind == Segment::Kind::Text) {
      for (int id : seg.ids) {
        if (id < 0 || id >= v.text_size()) throw IdOutOfRange(id);
        push(id);
      }
    } else {
      if (static_cast<int>(seg.ids.size()) != image_block_len)
        throw BadImageBlockLength(static_cast<int>(seg.ids.size()), image_block_len);
      push(v.boi_id());
      flush_text();
      for (int id : seg.ids) {
        if (!v.is_image(id)) throw IdOutOfRange(id);
        out.ids.push_back(id);
      }
      out.spans.push_back(
          {Span::Modality::Image, text_span.start, image_block_len});
      text_span.start += image_block_len;
      push(v.eoi_id());
    }
  }
  push(v.eos_id());
  flush_text();
  return out;
}

}  // namespace chemlm::text
