#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "chemlm/chem/smiles.hpp"
#include "chemlm/lm/lm.hpp"
#include "chemlm/props/properties.hpp"
#include "chemlm/text/bpe.hpp"
#include "chemlm/util/rng.hpp"
#include "chemlm/vq/vq.hpp"

namespace chemlm::task {

enum class TaskKind { Img2Caption, Img2Property, Img2Smiles, Property2Img, Img2Img };

std::string task_name(TaskKind kind);

struct SegmentRef {
  enum class Type { Text, Image } type;
  std::string text;    // Text segments
  std::string smiles;  // Image segments: the molecule the image depicts
};

struct TaskRecord {
  TaskKind task;
  std::vector<SegmentRef> input;
  std::vector<SegmentRef> output;
  std::string source_smiles;  // canonical
  props::PropertyVector props;
  std::string target_smiles;  // img2img only
};

struct TaskDataset {
  std::vector<TaskRecord> train, test;
};

struct CurateLog {
  int skipped_parse = 0;
  int skipped_unparameterized = 0;
  int skipped_empty_caption = 0;
  int skipped_long_caption = 0;
  int rejected_pairs = 0;
};

// The fixed answer/prompt strings shared by builders and the eval parsers.
std::string property_answer(const props::PropertyVector& p);
std::string property_prompt_body(const props::PropertyVector& p);
extern const char* kImg2PropertyPrompt;
extern const char* kImg2SmilesPrompt;
extern const char* kProperty2ImgPrefix;
extern const char* kImg2ImgPrompt;
extern const char* kImg2ImgAnswer;
extern const char* kImg2SmilesAnswerPrefix;

struct PropertyTaskSets {
  TaskDataset img2property, img2smiles, property2img;
};

// img2property, img2smiles, and its inversion property2img from one corpus.
// Molecules are deduplicated by canonical SMILES, then split 40:1.
PropertyTaskSets build_property_tasks(const std::vector<std::string>& corpus,
                                      Rng& rng, CurateLog* log = nullptr);

// Graft a small alkyl chain or halogen onto an aliphatic carbon that still
// carries a hydrogen. Returns the canonical SMILES of the grown molecule.
std::optional<std::string> attach_substituent(const chem::Molecule& m,
                                              const std::string& substituent,
                                              int attach_atom);

std::vector<std::pair<std::string, std::string>> synthesize_logp_pairs(
    const std::vector<std::string>& corpus, double min_delta, Rng& rng,
    CurateLog* log = nullptr);

// Pairs are (source, target) SMILES; pairs whose target does not strictly
// improve LogP are rejected.
TaskDataset build_img2img_pairs(
    const std::vector<std::pair<std::string, std::string>>& pairs,
    CurateLog* log = nullptr);

TaskDataset build_img2caption(
    const std::vector<std::pair<std::string, std::string>>& smiles_captions,
    int max_caption_words, Rng& rng, CurateLog* log = nullptr);

// ---- token-level encoding --------------------------------------------------

struct RecordEncoder {
  const text::BpeVocab& vocab;
  const vq::VqModel& vq_model;
  int resolution = 64;
};

lm::TokenLayout layout_for(const text::BpeVocab& vocab, const vq::VqModel& vq_model);

// One training example per rotation (0, 90, 180, 270 degrees); every image
// in the record rotates together. Prompt tokens are unsupervised, answer
// tokens (and the closing <eos>) are supervised.
lm::LmExample encode_record(const TaskRecord& rec, const RecordEncoder& enc,
                            int rotation);
std::vector<lm::LmExample> encode_with_rotations(const TaskRecord& rec,
                                                 const RecordEncoder& enc);

// prompt-only token sequence for generation (ends right before the answer)
std::vector<int64_t> encode_prompt(const TaskRecord& rec, const RecordEncoder& enc);

// ---- files -----------------------------------------------------------------

// <dir>/<name>_train.jsonl, <dir>/<name>_test.jsonl and referenced PPM
// images under <dir>/images/
void export_dataset(const TaskDataset& ds, const std::string& name,
                    const std::string& dir, int resolution);

std::vector<std::string> load_smiles_file(const std::string& path);
std::vector<std::pair<std::string, std::string>> load_caption_file(const std::string& path);

}  // namespace chemlm::task
