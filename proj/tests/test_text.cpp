#include <algorithm>
#include <filesystem>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "chemlm/text/bpe.hpp"
#include "chemlm/util/rng.hpp"
#include "doctest.h"

using namespace chemlm::text;
using chemlm::Rng;

namespace {

// Reference trainer written against different containers than the library:
// token sequences as vectors of int ids with a side table of strings, pair
// counts in an unordered_map with an explicit scan for the tie-break.
std::vector<std::pair<std::string, std::string>> reference_merges(
    const std::vector<std::string>& lines, int n_merges) {
  std::vector<std::string> toks;
  for (int b = 0; b < 256; ++b) toks.push_back(std::string(1, static_cast<char>(b)));
  std::vector<std::vector<int>> seqs;
  for (const auto& l : lines) {
    if (l.empty()) continue;
    std::vector<int> s;
    for (char c : l) s.push_back(static_cast<unsigned char>(c));
    seqs.push_back(s);
  }
  std::vector<std::pair<std::string, std::string>> merges;
  for (int step = 0; step < n_merges; ++step) {
    std::unordered_map<int64_t, int64_t> counts;
    for (const auto& s : seqs)
      for (size_t i = 0; i + 1 < s.size(); ++i)
        ++counts[static_cast<int64_t>(s[i]) << 32 | s[i + 1]];
    int64_t best_key = -1, best_count = 0;
    for (const auto& [key, count] : counts) {
      if (count < 2 || count < best_count) continue;
      if (count > best_count) {
        best_count = count;
        best_key = key;
        continue;
      }
      auto pair_str = [&](int64_t k) {
        return toks[static_cast<size_t>(k >> 32)] + '\x1f' +
               toks[static_cast<size_t>(k & 0xffffffff)];
      };
      if (pair_str(key) < pair_str(best_key)) best_key = key;
    }
    if (best_key < 0) break;
    int left = static_cast<int>(best_key >> 32);
    int right = static_cast<int>(best_key & 0xffffffff);
    merges.push_back({toks[static_cast<size_t>(left)], toks[static_cast<size_t>(right)]});
    int merged = static_cast<int>(toks.size());
    toks.push_back(toks[static_cast<size_t>(left)] + toks[static_cast<size_t>(right)]);
    for (auto& s : seqs) {
      std::vector<int> out;
      for (size_t i = 0; i < s.size();) {
        if (i + 1 < s.size() && s[i] == left && s[i + 1] == right) {
          out.push_back(merged);
          i += 2;
        } else {
          out.push_back(s[i]);
          i += 1;
        }
      }
      s = std::move(out);
    }
  }
  return merges;
}

std::string random_utf8(Rng& rng, int max_cps) {
  std::string out;
  int n = static_cast<int>(rng.next_below(static_cast<uint64_t>(max_cps) + 1));
  for (int i = 0; i < n; ++i) {
    uint32_t cp;
    do {
      cp = static_cast<uint32_t>(rng.next_below(0x110000));
    } while (cp >= 0xD800 && cp <= 0xDFFF);
    if (cp < 0x80) {
      out += static_cast<char>(cp);
    } else if (cp < 0x800) {
      out += static_cast<char>(0xC0 | (cp >> 6));
      out += static_cast<char>(0x80 | (cp & 0x3F));
    } else if (cp < 0x10000) {
      out += static_cast<char>(0xE0 | (cp >> 12));
      out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
      out += static_cast<char>(0x80 | (cp & 0x3F));
    } else {
      out += static_cast<char>(0xF0 | (cp >> 18));
      out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
      out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
      out += static_cast<char>(0x80 | (cp & 0x3F));
    }
  }
  return out;
}

const std::vector<std::string>& training_corpus() {
  static const std::vector<std::string> lines = {
      "CC(=O)Oc1ccccc1C(=O)O",
      "The SMILES of the molecule in the image is CCO.",
      "The MW is 46.07, LogP is -0.0014, TPSA is 20.23.",
      "c1ccccc1 benzene is aromatic",
      "Generate an image of a molecule with low LogP.",
      "CCN(CC)CC triethylamine",
      "the quick brown fox jumps over the lazy dog",
      "the the the the and and and and",
  };
  return lines;
}

}  // namespace

TEST_CASE("first merge on a repeated pair corpus") {
  BpeVocab v = bpe_train({"abab abab"}, 300, 0);
  REQUIRE(!v.merges.empty());
  CHECK(v.merges[0].first == "a");
  CHECK(v.merges[0].second == "b");
  // "ab" occurs 4 times; after merging it, ("ab","ab") occurs twice
  REQUIRE(v.merges.size() >= 2);
  CHECK(v.merges[1].first == "ab");
  CHECK(v.merges[1].second == "ab");
}

TEST_CASE("minimum vocab size trains zero merges") {
  BpeVocab v = bpe_train({"abab abab"}, 261, 7);
  CHECK(v.merges.empty());
  CHECK(v.text_size() == 256);
  CHECK(v.pad_id() == 256);
  CHECK(v.eoi_id() == 260);
  CHECK(v.image_base() == 261);
  CHECK(v.total_size() == 268);
  CHECK_THROWS_AS(bpe_train({"ab"}, 260, 0), chemlm::ConfigInvalid);
  CHECK_THROWS_AS(bpe_train({"", ""}, 300, 0), CorpusEmpty);
}

TEST_CASE("training is deterministic") {
  BpeVocab a = bpe_train(training_corpus(), 400, 16);
  BpeVocab b = bpe_train(training_corpus(), 400, 16);
  CHECK(a.merges == b.merges);
  CHECK(a.merges.size() > 0);
}

TEST_CASE("merges agree with an independent reference trainer") {
  BpeVocab v = bpe_train(training_corpus(), 330, 0);
  auto ref = reference_merges(training_corpus(), 330 - 261);
  CHECK(v.merges == ref);
}

TEST_CASE("encode and decode round trip") {
  BpeVocab v = bpe_train(training_corpus(), 512, 256);
  CHECK(encode_text(v, "").empty());
  for (const auto& line : training_corpus()) {
    auto ids = encode_text(v, line);
    CHECK(decode_text(v, ids) == line);
    for (int id : ids) CHECK(id < v.text_size());
    CHECK(static_cast<int>(ids.size()) < static_cast<int>(line.size()));
  }
  Rng rng(19);
  for (int trial = 0; trial < 10000; ++trial) {
    std::string s = random_utf8(rng, 24);
    CHECK(decode_text(v, encode_text(v, s)) == s);
  }
}

TEST_CASE("decoding rejects ids outside the text range") {
  BpeVocab v = bpe_train(training_corpus(), 300, 8);
  CHECK_THROWS_AS(decode_text(v, {v.pad_id()}), UnknownTokenId);
  CHECK_THROWS_AS(decode_text(v, {v.image_token(0)}), UnknownTokenId);
  CHECK_THROWS_AS(decode_text(v, {-1}), UnknownTokenId);
}

TEST_CASE("vocab save and load round trip") {
  BpeVocab v = bpe_train(training_corpus(), 512, 256);
  auto path = std::filesystem::temp_directory_path() / "chemlm_bpe_test.vocab";
  v.save(path.string());
  BpeVocab loaded = BpeVocab::load(path.string());
  std::filesystem::remove(path);
  CHECK(loaded.merges == v.merges);
  CHECK(loaded.n_image == v.n_image);
  std::string probe = "The SMILES of the molecule in the image is c1ccccc1.";
  CHECK(encode_text(loaded, probe) == encode_text(v, probe));
  CHECK_THROWS_AS(BpeVocab::load("/nonexistent/vocab"), chemlm::MissingUpstreamArtifact);
}

TEST_CASE("sequence assembly frames image blocks") {
  BpeVocab v = bpe_train(training_corpus(), 300, 256);
  std::vector<int> text = {65, 66, 67};
  std::vector<int> image;
  for (int i = 0; i < 64; ++i) image.push_back(v.image_token(i % v.n_image));

  TokenSequence seq = assemble_sequence(
      v, {{Segment::Kind::Text, text}, {Segment::Kind::Image, image}}, 64);
  // bos + 3 text + boi + 64 image + eoi + eos
  REQUIRE(seq.ids.size() == 71);
  CHECK(seq.ids[0] == v.bos_id());
  CHECK(seq.ids[4] == v.boi_id());
  CHECK(seq.ids[69] == v.eoi_id());
  CHECK(seq.ids[70] == v.eos_id());
  REQUIRE(seq.spans.size() == 3);
  CHECK(seq.spans[0].modality == Span::Modality::Text);
  CHECK(seq.spans[0].start == 0);
  CHECK(seq.spans[0].len == 5);
  CHECK(seq.spans[1].modality == Span::Modality::Image);
  CHECK(seq.spans[1].start == 5);
  CHECK(seq.spans[1].len == 64);
  CHECK(seq.spans[2].modality == Span::Modality::Text);
  CHECK(seq.spans[2].start == 69);
  CHECK(seq.spans[2].len == 2);

  TokenSequence empty = assemble_sequence(v, {}, 64);
  CHECK(empty.ids == std::vector<int>{v.bos_id(), v.eos_id()});
  REQUIRE(empty.spans.size() == 1);
  CHECK(empty.spans[0].len == 2);

  std::vector<int> short_image(image.begin(), image.begin() + 63);
  CHECK_THROWS_AS(
      assemble_sequence(v, {{Segment::Kind::Image, short_image}}, 64),
      BadImageBlockLength);
  CHECK_THROWS_AS(
      assemble_sequence(v, {{Segment::Kind::Text, {v.pad_id()}}}, 64),
      IdOutOfRange);
  std::vector<int> bad_image = image;
  bad_image[10] = 5;  // a text id inside an image block
  CHECK_THROWS_AS(
      assemble_sequence(v, {{Segment::Kind::Image, bad_image}}, 64),
      IdOutOfRange);
}

TEST_CASE("assembled spans always tile the sequence") {
  BpeVocab v = bpe_train(training_corpus(), 300, 64);
  Rng rng(23);
  for (int trial = 0; trial < 1000; ++trial) {
    int block = 16;
    std::vector<Segment> segs;
    int n_segs = static_cast<int>(rng.next_below(6));
    for (int i = 0; i < n_segs; ++i) {
      if (rng.next_below(2) == 0) {
        std::vector<int> ids;
        int len = static_cast<int>(rng.next_below(10));
        for (int k = 0; k < len; ++k)
          ids.push_back(static_cast<int>(rng.next_below(static_cast<uint64_t>(v.text_size()))));
        segs.push_back({Segment::Kind::Text, ids});
      } else {
        std::vector<int> ids;
        for (int k = 0; k < block; ++k)
          ids.push_back(v.image_token(static_cast<int>(rng.next_below(static_cast<uint64_t>(v.n_image)))));
        segs.push_back({Segment::Kind::Image, ids});
      }
    }
    TokenSequence seq = assemble_sequence(v, segs, block);
    int cursor = 0;
    for (const auto& span : seq.spans) {
      CHECK(span.start == cursor);
      CHECK(span.len > 0);
      if (span.modality == Span::Modality::Image) {
        CHECK(span.len == block);
        CHECK(seq.ids[static_cast<size_t>(span.start) - 1] == v.boi_id());
        CHECK(seq.ids[static_cast<size_t>(span.start + span.len)] == v.eoi_id());
        for (int i = span.start; i < span.start + span.len; ++i)
          CHECK(v.is_image(seq.ids[static_cast<size_t>(i)]));
      } else {
        for (int i = span.start; i < span.start + span.len; ++i)
          CHECK(seq.ids[static_cast<size_t>(i)] < v.image_base());
      }
      cursor += span.len;
    }
    CHECK(cursor == static_cast<int>(seq.ids.size()));
    CHECK(seq.ids.front() == v.bos_id());
    CHECK(seq.ids.back() == v.eos_id());
  }
}
