#include "chemlm/task/task_data.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace chemlm::task {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

const char* kImg2PropertyPrompt =
    "Predict the following properties of the molecule: MW, LogP, TPSA, HBD, HBA, "
    "RB and QED.";
const char* kImg2SmilesPrompt = "What is the SMILES of the molecule in this image?";
const char* kProperty2ImgPrefix =
    "Generate an image of 256x256 according to the following prompt:\n ";
const char* kImg2ImgPrompt =
    "LogP (Partition Coefficient) measures a molecule's solubility in fats versus "
    "water by quantifying its distribution between octanol (fat-like) and water "
    "phases. Calculated as the logarithm of the concentration ratio (LogP = "
    "log[octanol]/[water]), it predicts drug absorption and permeability - higher "
    "values (>0) indicate greater fat solubility, while lower values (<0) suggest "
    "water solubility. Ideal drug candidates typically have LogP between 0-3 for "
    "optimal bioavailability. Here is an image of a molecule, please generate an "
    "image of a new similar molecule whose LogP is better.";
const char* kImg2ImgAnswer = "Here is a new similar molecule with better LogP.";
const char* kImg2SmilesAnswerPrefix = "The SMILES of the molecule in the image is ";

namespace {

const std::vector<std::string>& caption_prompts() {
  static const std::vector<std::string> prompts = {
      "Give an overview of this molecule's properties.",
      "Explain the key traits of this molecule.",
      "Provide a detailed description of this molecular structure.",
      "List the notable attributes of this molecule.",
  };
  return prompts;
}

const std::vector<std::string>& depiction_answers() {
  static const std::vector<std::string> answers = {
      "The molecular diagram is shown below:",
      "See the molecular depiction:",
  };
  return answers;
}

// every 41st record goes to the test side: n molecules -> n/41 test
TaskDataset split_40_1(std::vector<TaskRecord> records) {
  TaskDataset ds;
  for (size_t i = 0; i < records.size(); ++i) {
    if (i % 41 == 40)
      ds.test.push_back(std::move(records[i]));
    else
      ds.train.push_back(std::move(records[i]));
  }
  return ds;
}

struct ParsedMol {
  std::string canonical;
  chem::Molecule mol;
  props::PropertyVector props;
};

// canonical-deduplicated molecules with computable properties, input order
std::vector<ParsedMol> curate_corpus(const std::vector<std::string>& corpus,
                                     CurateLog* log) {
  std::vector<ParsedMol> out;
  std::set<std::string> seen;
  for (const auto& s : corpus) {
    ParsedMol pm;
    try {
      pm.mol = chem::parse_smiles(s);
      pm.canonical = chem::canonical_smiles(pm.mol);
    } catch (const Error&) {
      if (log) ++log->skipped_parse;
      continue;
    }
    if (!seen.insert(pm.canonical).second) continue;
    try {
      pm.props = props::compute_properties(pm.mol);
    } catch (const props::UnparameterizedAtom&) {
      if (log) ++log->skipped_unparameterized;
      continue;
    }
    out.push_back(std::move(pm));
  }
  return out;
}

int count_words(const std::string& s) {
  std::istringstream in(s);
  int n = 0;
  std::string w;
  while (in >> w) ++n;
  return n;
}

}  // namespace

std::string task_name(TaskKind kind) {
  switch (kind) {
    case TaskKind::Img2Caption: return "img2caption";
    case TaskKind::Img2Property: return "img2property";
    case TaskKind::Img2Smiles: return "img2smiles";
    case TaskKind::Property2Img: return "property2img";
    case TaskKind::Img2Img: return "img2img";
  }
  return "unknown";
}

std::string property_answer(const props::PropertyVector& p) {
  return "The MW is " + props::format_property(p.mw) + ", LogP is " +
         props::format_property(p.logp) + ", TPSA is " + props::format_property(p.tpsa) +
         ", HBD is " + std::to_string(p.hbd) + ", HBA is " + std::to_string(p.hba) +
         ", RB is " + std::to_string(p.rb) + " and QED is " +
         props::format_property(p.qed);
}

std::string property_prompt_body(const props::PropertyVector& p) {
  return "Image of a molecule whose MW is " + props::format_property(p.mw) +
         ", LogP is " + props::format_property(p.logp) + ", TPSA is " +
         props::format_property(p.tpsa) + ", HBD is " + std::to_string(p.hbd) +
         ", HBA is " + std::to_string(p.hba) + ", RB is " + std::to_string(p.rb) +
         " and QED is " + props::format_property(p.qed);
}

PropertyTaskSets build_property_tasks(const std::vector<std::string>& corpus,
                                      Rng& rng, CurateLog* log) {
  std::vector<TaskRecord> img2property, img2smiles, property2img;
  for (const ParsedMol& pm : curate_corpus(corpus, log)) {
    TaskRecord base;
    base.source_smiles = pm.canonical;
    base.props = pm.props;

    TaskRecord p = base;
    p.task = TaskKind::Img2Property;
    p.input = {{SegmentRef::Type::Text, kImg2PropertyPrompt, ""},
               {SegmentRef::Type::Image, "", pm.canonical}};
    p.output = {{SegmentRef::Type::Text, property_answer(pm.props), ""}};
    img2property.push_back(std::move(p));

    TaskRecord s = base;
    s.task = TaskKind::Img2Smiles;
    s.input = {{SegmentRef::Type::Text, kImg2SmilesPrompt, ""},
               {SegmentRef::Type::Image, "", pm.canonical}};
    s.output = {{SegmentRef::Type::Text,
                 std::string(kImg2SmilesAnswerPrefix) + pm.canonical + ".", ""}};
    img2smiles.push_back(std::move(s));

    // the inverse task: the same numbers ask for the image back
    TaskRecord g = base;
    g.task = TaskKind::Property2Img;
    g.input = {{SegmentRef::Type::Text,
                std::string(kProperty2ImgPrefix) + property_prompt_body(pm.props), ""}};
    const auto& answers = depiction_answers();
    g.output = {{SegmentRef::Type::Text, answers[rng.next_below(answers.size())], ""},
                {SegmentRef::Type::Image, "", pm.canonical}};
    property2img.push_back(std::move(g));
  }
  PropertyTaskSets sets;
  sets.img2property = split_40_1(std::move(img2property));
  sets.img2smiles = split_40_1(std::move(img2smiles));
  sets.property2img = split_40_1(std::move(property2img));
  return sets;
}

std::optional<std::string> attach_substituent(const chem::Molecule& m,
                                              const std::string& substituent,
                                              int attach_atom) {
  if (attach_atom < 0 || attach_atom >= m.num_atoms()) return std::nullopt;
  const chem::Atom& at = m.atoms[static_cast<size_t>(attach_atom)];
  if (at.element != "C" || at.aromatic || at.hcount < 1) return std::nullopt;

  chem::Molecule grown = m;
  grown.atoms[static_cast<size_t>(attach_atom)].hcount -= 1;
  int prev = attach_atom;
  bool halogen = substituent == "F" || substituent == "Cl" || substituent == "Br" ||
                 substituent == "I";
  size_t chain_len = halogen ? 1 : substituent.size();
  for (size_t i = 0; i < chain_len; ++i) {
    chem::Atom a;
    a.element = halogen ? substituent : "C";
    a.atomic_number = chem::atomic_number_of(a.element);
    a.hcount = halogen ? 0 : (i + 1 < chain_len ? 2 : 3);
    int idx = grown.num_atoms();
    grown.atoms.push_back(a);
    grown.adj.push_back({});
    chem::Bond b;
    b.a = prev;
    b.b = idx;
    b.order = chem::BondOrder::Single;
    int bidx = grown.num_bonds();
    grown.bonds.push_back(b);
    grown.adj[static_cast<size_t>(prev)].push_back(bidx);
    grown.adj[static_cast<size_t>(idx)].push_back(bidx);
    prev = idx;
  }
  try {
    std::string smiles = chem::canonical_smiles(grown);
    chem::parse_smiles(smiles);  // sanity: the grown molecule must survive
    return smiles;
  } catch (const Error&) {
    return std::nullopt;
  }
}

std::vector<std::pair<std::string, std::string>> synthesize_logp_pairs(
    const std::vector<std::string>& corpus, double min_delta, Rng& rng,
    CurateLog* log) {
  static const std::vector<std::string> substituents = {"C",  "CC", "CCC", "CCCC",
                                                        "CCCCC", "Cl", "Br"};
  std::vector<std::pair<std::string, std::string>> pairs;
  for (const ParsedMol& pm : curate_corpus(corpus, log)) {
    std::vector<int> sites;
    for (int i = 0; i < pm.mol.num_atoms(); ++i) {
      const chem::Atom& a = pm.mol.atoms[static_cast<size_t>(i)];
      if (a.element == "C" && !a.aromatic && a.hcount >= 1) sites.push_back(i);
    }
    if (sites.empty()) continue;
    for (int attempt = 0; attempt < 20; ++attempt) {
      int site = sites[rng.next_below(sites.size())];
      const std::string& sub = substituents[rng.next_below(substituents.size())];
      auto grown = attach_substituent(pm.mol, sub, site);
      if (!grown) continue;
      try {
        props::PropertyVector gp = props::compute_properties(chem::parse_smiles(*grown));
        if (gp.logp - pm.props.logp > min_delta) {
          pairs.push_back({pm.canonical, *grown});
          break;
        }
      } catch (const Error&) {
        continue;
      }
    }
  }
  return pairs;
}

TaskDataset build_img2img_pairs(
    const std::vector<std::pair<std::string, std::string>>& pairs, CurateLog* log) {
  std::vector<TaskRecord> records;
  std::set<std::string> seen;
  for (const auto& [src, dst] : pairs) {
    TaskRecord rec;
    rec.task = TaskKind::Img2Img;
    props::PropertyVector target_props;
    try {
      chem::Molecule ms = chem::parse_smiles(src);
      chem::Molecule mt = chem::parse_smiles(dst);
      rec.source_smiles = chem::canonical_smiles(ms);
      rec.target_smiles = chem::canonical_smiles(mt);
      rec.props = props::compute_properties(ms);
      target_props = props::compute_properties(mt);
    } catch (const Error&) {
      if (log) ++log->skipped_parse;
      continue;
    }
    if (!(target_props.logp > rec.props.logp)) {
      if (log) ++log->rejected_pairs;
      continue;
    }
    if (!seen.insert(rec.source_smiles).second) continue;
    rec.input = {{SegmentRef::Type::Text, kImg2ImgPrompt, ""},
                 {SegmentRef::Type::Image, "", rec.source_smiles}};
    rec.output = {{SegmentRef::Type::Text, kImg2ImgAnswer, ""},
                  {SegmentRef::Type::Image, "", rec.target_smiles}};
    records.push_back(std::move(rec));
  }
  return split_40_1(std::move(records));
}

TaskDataset build_img2caption(
    const std::vector<std::pair<std::string, std::string>>& smiles_captions,
    int max_caption_words, Rng& rng, CurateLog* log) {
  std::vector<TaskRecord> records;
  std::set<std::string> seen;
  for (const auto& [smiles, caption] : smiles_captions) {
    if (caption.empty()) {
      if (log) ++log->skipped_empty_caption;
      continue;
    }
    if (count_words(caption) > max_caption_words) {
      if (log) ++log->skipped_long_caption;
      continue;
    }
    TaskRecord rec;
    rec.task = TaskKind::Img2Caption;
    try {
      chem::Molecule m = chem::parse_smiles(smiles);
      rec.source_smiles = chem::canonical_smiles(m);
      rec.props = props::compute_properties(m);
    } catch (const Error&) {
      if (log) ++log->skipped_parse;
      continue;
    }
    if (!seen.insert(rec.source_smiles).second) continue;
    const auto& prompts = caption_prompts();
    rec.input = {{SegmentRef::Type::Text, prompts[rng.next_below(prompts.size())], ""},
                 {SegmentRef::Type::Image, "", rec.source_smiles}};
    rec.output = {{SegmentRef::Type::Text, caption, ""}};
    records.push_back(std::move(rec));
  }
  return split_40_1(std::move(records));
}

// ---- token-level encoding --------------------------------------------------

lm::TokenLayout layout_for(const text::BpeVocab& vocab, const vq::VqModel& vq_model) {
  lm::TokenLayout lay;
  lay.vocab = vocab.total_size();
  lay.pad = vocab.pad_id();
  lay.bos = vocab.bos_id();
  lay.eos = vocab.eos_id();
  lay.boi = vocab.boi_id();
  lay.eoi = vocab.eoi_id();
  lay.image_base = vocab.image_base();
  lay.n_image = vocab.n_image;
  lay.image_span_len = vq_model.cfg.grid * vq_model.cfg.grid;
  return lay;
}

namespace {

text::Segment image_segment(const SegmentRef& ref, const RecordEncoder& enc,
                            int rotation) {
  render::MolImage img = render::render(chem::parse_smiles(ref.smiles), enc.resolution);
  if (rotation != 0) img = render::augment_rotations(img)[static_cast<size_t>(rotation)];
  text::Segment seg;
  seg.kind = text::Segment::Kind::Image;
  for (int code : vq::image_to_tokens(enc.vq_model, img))
    seg.ids.push_back(enc.vocab.image_token(code));
  return seg;
}

// segments for one side of a record plus the token count they contribute
std::vector<text::Segment> side_segments(const std::vector<SegmentRef>& refs,
                                         const RecordEncoder& enc, int rotation,
                                         int* token_count) {
  std::vector<text::Segment> segs;
  for (const SegmentRef& ref : refs) {
    if (ref.type == SegmentRef::Type::Text) {
      text::Segment seg;
      seg.kind = text::Segment::Kind::Text;
      seg.ids = text::encode_text(enc.vocab, ref.text);
      if (token_count) *token_count += static_cast<int>(seg.ids.size());
      segs.push_back(std::move(seg));
    } else {
      text::Segment seg = image_segment(ref, enc, rotation);
      if (token_count) *token_count += static_cast<int>(seg.ids.size()) + 2;  // boi/eoi
      segs.push_back(std::move(seg));
    }
  }
  return segs;
}

}  // namespace

lm::LmExample encode_record(const TaskRecord& rec, const RecordEncoder& enc,
                            int rotation) {
  int span = enc.vq_model.cfg.grid * enc.vq_model.cfg.grid;
  int prompt_len = 1;  // <bos>
  std::vector<text::Segment> segs = side_segments(rec.input, enc, rotation, &prompt_len);
  for (text::Segment& seg : side_segments(rec.output, enc, rotation, nullptr))
    segs.push_back(std::move(seg));
  text::TokenSequence seq = text::assemble_sequence(enc.vocab, segs, span);

  lm::LmExample ex;
  ex.ids.assign(seq.ids.begin(), seq.ids.end());
  ex.target_mask.assign(ex.ids.size() - 1, 0);
  // targets ids[prompt_len .. end] are the answer plus the closing <eos>
  for (size_t t = static_cast<size_t>(prompt_len) - 1; t < ex.target_mask.size(); ++t)
    ex.target_mask[t] = 1;
  return ex;
}

std::vector<lm::LmExample> encode_with_rotations(const TaskRecord& rec,
                                                 const RecordEncoder& enc) {
  std::vector<lm::LmExample> out;
  for (int r = 0; r < 4; ++r) out.push_back(encode_record(rec, enc, r));
  return out;
}

std::vector<int64_t> encode_prompt(const TaskRecord& rec, const RecordEncoder& enc) {
  int span = enc.vq_model.cfg.grid * enc.vq_model.cfg.grid;
  std::vector<text::Segment> segs = side_segments(rec.input, enc, 0, nullptr);
  text::TokenSequence seq = text::assemble_sequence(enc.vocab, segs, span);
  std::vector<int64_t> ids(seq.ids.begin(), seq.ids.end());
  ids.pop_back();  // drop the <eos> the assembler closes with
  return ids;
}

// ---- files -----------------------------------------------------------------

namespace {

std::string write_image(const std::string& dir, const std::string& stem,
                        const std::string& smiles, int resolution) {
  fs::create_directories(fs::path(dir) / "images");
  std::string rel = "images/" + stem + ".ppm";
  render::MolImage img = render::render(chem::parse_smiles(smiles), resolution);
  render::write_ppm((fs::path(dir) / rel).string(), img);
  return rel;
}

json segment_json(const SegmentRef& ref, const std::string& dir, const std::string& stem,
                  int resolution) {
  if (ref.type == SegmentRef::Type::Text)
    return {{"type", "text"}, {"text", ref.text}};
  return {{"type", "image"},
          {"image_path", write_image(dir, stem, ref.smiles, resolution)},
          {"smiles", ref.smiles}};
}

void write_split(const std::vector<TaskRecord>& records, const std::string& name,
                 const std::string& split, const std::string& dir, int resolution) {
  fs::create_directories(dir);
  std::ofstream out((fs::path(dir) / (name + "_" + split + ".jsonl")).string(),
                    std::ios::binary);
  for (size_t i = 0; i < records.size(); ++i) {
    const TaskRecord& rec = records[i];
    json j;
    j["task"] = task_name(rec.task);
    std::string base = name + "_" + split + "_" + std::to_string(i);
    json input = json::array(), output = json::array();
    for (size_t k = 0; k < rec.input.size(); ++k)
      input.push_back(segment_json(rec.input[k], dir,
                                   base + "_in" + std::to_string(k), resolution));
    for (size_t k = 0; k < rec.output.size(); ++k)
      output.push_back(segment_json(rec.output[k], dir,
                                    base + "_out" + std::to_string(k), resolution));
    j["input"] = std::move(input);
    j["output"] = std::move(output);
    json prov;
    prov["smiles"] = rec.source_smiles;
    prov["mw"] = rec.props.mw;
    prov["logp"] = rec.props.logp;
    prov["tpsa"] = rec.props.tpsa;
    prov["hbd"] = rec.props.hbd;
    prov["hba"] = rec.props.hba;
    prov["rb"] = rec.props.rb;
    prov["qed"] = rec.props.qed;
    if (!rec.target_smiles.empty()) prov["target_smiles"] = rec.target_smiles;
    j["provenance"] = std::move(prov);
    out << j.dump() << "\n";
  }
}

}  // namespace

void export_dataset(const TaskDataset& ds, const std::string& name,
                    const std::string& dir, int resolution) {
  write_split(ds.train, name, "train", dir, resolution);
  write_split(ds.test, name, "test", dir, resolution);
}

std::vector<std::string> load_smiles_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingUpstreamArtifact("smiles file not found: " + path);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    out.push_back(line);
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> load_caption_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingUpstreamArtifact("caption file not found: " + path);
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    size_t tab = line.find('\t');
    if (tab == std::string::npos) continue;
    out.push_back({line.substr(0, tab), line.substr(tab + 1)});
  }
  return out;
}

}  // namespace chemlm::task
