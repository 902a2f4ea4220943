#pragma once

#include <map>
#include <string>
#include <vector>

#include "chemlm/util/errors.hpp"

namespace chemlm::text {

struct CorpusEmpty : Error {
  CorpusEmpty() : Error("bpe_train: empty corpus") {}
};
struct UnknownTokenId : Error {
  explicit UnknownTokenId(int id) : Error("cannot decode id " + std::to_string(id)) {}
};
struct BadImageBlockLength : Error {
  BadImageBlockLength(int got, int want)
      : Error("image block has " + std::to_string(got) + " ids, expected " +
              std::to_string(want)) {}
};
struct IdOutOfRange : Error {
  explicit IdOutOfRange(int id) : Error("token id out of range: " + std::to_string(id)) {}
};

// Byte-level BPE vocabulary. Id layout:
//   [0, 256)                      raw bytes
//   [256, 256 + merges)           merged tokens, in training order
//   [T, T+5)                      <pad> <bos> <eos> <boi> <eoi>  (T = text size)
//   [T+5, T+5+n_image)            image codebook tokens
class BpeVocab {
 public:
  std::vector<std::pair<std::string, std::string>> merges;
  int n_image = 0;

  int text_size() const { return 256 + static_cast<int>(merges.size()); }
  int pad_id() const { return text_size(); }
  int bos_id() const { return text_size() + 1; }
  int eos_id() const { return text_size() + 2; }
  int boi_id() const { return text_size() + 3; }
  int eoi_id() const { return text_size() + 4; }
  int image_base() const { return text_size() + 5; }
  int total_size() const { return image_base() + n_image; }
  int image_token(int code) const { return image_base() + code; }
  bool is_image(int id) const { return id >= image_base() && id < total_size(); }

  // the byte string a text id stands for
  const std::string& token_string(int id) const;

  void save(const std::string& path) const;
  static BpeVocab load(const std::string& path);

  mutable std::vector<std::string> cache_;            // id -> bytes, built lazily
  mutable std::map<std::string, int> id_cache_;       // bytes -> id
};

// Greedy most-frequent-pair training over the corpus lines; ties prefer the
// lexicographically smaller pair. vocab_size counts bytes + merges + the 5
// specials (image ids come on top).
BpeVocab bpe_train(const std::vector<std::string>& corpus_lines, int vocab_size,
                   int n_image);

std::vector<int> encode_text(const BpeVocab& v, const std::string& s);
std::string decode_text(const BpeVocab& v, const std::vector<int>& ids);

struct Segment {
  enum class Kind { Text, Image } kind;
  std::vector<int> ids;
};

struct Span {
  enum class Modality { Text, Image } modality;
  int start = 0;
  int len = 0;
};

struct TokenSequence {
  std::vector<int> ids;
  std::vector<Span> spans;
};

// <bos> + blocks (+ <boi>/<eoi> around each image block) + <eos>. Specials
// count as text modality so the spans tile the whole sequence.
TokenSequence assemble_sequence(const BpeVocab& v, const std::vector<Segment>& segments,
                                int image_block_len);

}  // namespace chemlm::text
