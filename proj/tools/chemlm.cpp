// chemlm: pipeline driver. Commands run one at a time per run directory and
// every stage is a pure function of (config, seed), so reruns are
// byte-identical.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "chemlm/chem/smiles.hpp"
#include "chemlm/eval/metrics.hpp"
#include "chemlm/lm/lm.hpp"
#include "chemlm/props/properties.hpp"
#include "chemlm/render/render.hpp"
#include "chemlm/task/task_data.hpp"
#include "chemlm/text/bpe.hpp"
#include "chemlm/util/errors.hpp"
#include "chemlm/util/rng.hpp"
#include "chemlm/vq/vq.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace chemlm;
using json = nlohmann::ordered_json;

namespace {

// ---- configuration ---------------------------------------------------------

const std::set<std::string> kKnownKeys = {
    "seed",          "task",           "corpus",            "captions",
    "resolution",    "curate.max_molecules",                "bpe.vocab_size",
    "vq.steps",      "vq.codebook_size", "vq.code_dim",     "vq.batch_size",
    "vq.lr",         "vq.lambda1",     "vq.gan_start_frac", "vq.perceptual_steps",
    "vq.val_every",  "vq.max_images",  "lm.steps",          "lm.layers",
    "lm.dim",        "lm.heads",       "lm.context",        "lm.lr",
    "lm.dropout",    "lm.z_weight",    "lm.warmup_frac",    "lm.weight_decay",
    "generate.max_records", "generate.max_new_tokens",
};

struct Config {
  std::map<std::string, std::string> kv;

  bool has(const std::string& key) const { return kv.count(key) != 0; }

  std::string str(const std::string& key, const std::string& fallback) const {
    auto it = kv.find(key);
    return it == kv.end() ? fallback : it->second;
  }

  long integer(const std::string& key, long fallback) const {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    try {
      size_t used = 0;
      long v = std::stol(it->second, &used);
      if (used != it->second.size()) throw std::invalid_argument(key);
      return v;
    } catch (const std::exception&) {
      throw ConfigInvalid("config key '" + key + "' is not an integer: " + it->second);
    }
  }

  double real(const std::string& key, double fallback) const {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    try {
      size_t used = 0;
      double v = std::stod(it->second, &used);
      if (used != it->second.size()) throw std::invalid_argument(key);
      return v;
    } catch (const std::exception&) {
      throw ConfigInvalid("config key '" + key + "' is not a number: " + it->second);
    }
  }
};

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

Config load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigInvalid("config file not found: " + path);
  Config cfg;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigInvalid("config line " + std::to_string(line_no) + " is not key=value");
    std::string key = trim(t.substr(0, eq));
    std::string val = trim(t.substr(eq + 1));
    if (!kKnownKeys.count(key))
      throw ConfigInvalid("unknown config key '" + key + "'");
    cfg.kv[key] = val;
  }
  return cfg;
}

// ---- cli plumbing ----------------------------------------------------------

struct Args {
  std::string command, config_path, out_dir, task;
  long seed = -1;  // -1 = take from config
};

Args parse_args(int argc, char** argv) {
  Args a;
  if (argc < 2) throw ConfigInvalid("usage: chemlm COMMAND --config PATH --out DIR [--seed INT] [--task NAME]");
  a.command = argv[1];
  for (int i = 2; i < argc; ++i) {
    std::string flag = argv[i];
    if (i + 1 >= argc) throw ConfigInvalid("flag " + flag + " needs a value");
    std::string val = argv[++i];
    if (flag == "--config") a.config_path = val;
    else if (flag == "--out") a.out_dir = val;
    else if (flag == "--task") a.task = val;
    else if (flag == "--seed") {
      try {
        a.seed = std::stol(val);
      } catch (const std::exception&) {
        throw ConfigInvalid("--seed must be an integer");
      }
    } else {
      throw ConfigInvalid("unknown flag " + flag);
    }
  }
  if (a.config_path.empty()) throw ConfigInvalid("--config PATH is required");
  if (a.out_dir.empty()) throw ConfigInvalid("--out DIR is required");
  return a;
}

// One command mutates a run directory at a time.
struct RunLock {
  fs::path path;
  explicit RunLock(const fs::path& dir) : path(dir / ".lock") {
    fs::create_directories(dir);
    if (fs::exists(path))
      throw ConfigInvalid("run directory is locked by another command: " + path.string());
    std::ofstream(path.string()) << "locked\n";
  }
  ~RunLock() {
    std::error_code ec;
    fs::remove(path, ec);
  }
};

struct Run {
  Config cfg;
  fs::path out;
  uint64_t seed = 0;
  std::string task;

  fs::path data_dir() const { return out / "data"; }
  fs::path bpe_path() const { return out / "bpe.vocab"; }
  fs::path vq_path() const { return out / "vq.ckpt"; }
  fs::path lm_path() const { return out / "lm.ckpt"; }
  fs::path gen_path() const { return out / "generations.jsonl"; }
  fs::path report_path() const { return out / "report.jsonl"; }
  int resolution() const { return static_cast<int>(cfg.integer("resolution", 64)); }
};

Run make_run(const Args& a) {
  Run r;
  r.cfg = load_config(a.config_path);
  r.out = a.out_dir;
  long seed = a.seed >= 0 ? a.seed : r.cfg.integer("seed", 0);
  if (seed < 0) throw ConfigInvalid("seed must be non-negative");
  r.seed = static_cast<uint64_t>(seed);
  r.task = !a.task.empty() ? a.task : r.cfg.str("task", "img2property");
  const std::set<std::string> tasks = {"img2caption", "img2property", "img2smiles",
                                       "property2img", "img2img"};
  if (!tasks.count(r.task)) throw ConfigInvalid("unknown task '" + r.task + "'");
  return r;
}

// resolved provenance: full config plus the effective seed and task
void write_resolved(const Run& r) {
  std::ofstream out((r.out / "resolved.cfg").string(), std::ios::binary);
  out << "seed = " << r.seed << "\n";
  out << "task = " << r.task << "\n";
  for (const auto& [k, v] : r.cfg.kv)
    if (k != "seed" && k != "task") out << k << " = " << v << "\n";
}

void require_file(const fs::path& p, const std::string& producer) {
  if (!fs::exists(p))
    throw MissingUpstreamArtifact(p.string() + " not found; run `chemlm " + producer + "` first");
}

// ---- dataset (re)loading ---------------------------------------------------

task::TaskKind kind_from_name(const std::string& name) {
  for (auto k : {task::TaskKind::Img2Caption, task::TaskKind::Img2Property,
                 task::TaskKind::Img2Smiles, task::TaskKind::Property2Img,
                 task::TaskKind::Img2Img})
    if (task::task_name(k) == name) return k;
  throw ConfigInvalid("unknown task '" + name + "'");
}

std::vector<task::TaskRecord> load_records(const fs::path& jsonl) {
  require_file(jsonl, "curate");
  std::ifstream in(jsonl.string(), std::ios::binary);
  std::vector<task::TaskRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    task::TaskRecord rec;
    rec.task = kind_from_name(j.at("task").get<std::string>());
    auto read_segments = [](const json& arr) {
      std::vector<task::SegmentRef> segs;
      for (const auto& s : arr) {
        task::SegmentRef ref;
        if (s.at("type") == "text") {
          ref.type = task::SegmentRef::Type::Text;
          ref.text = s.at("text").get<std::string>();
        } else {
          ref.type = task::SegmentRef::Type::Image;
          ref.smiles = s.at("smiles").get<std::string>();
        }
        segs.push_back(std::move(ref));
      }
      return segs;
    };
    rec.input = read_segments(j.at("input"));
    rec.output = read_segments(j.at("output"));
    const json& prov = j.at("provenance");
    rec.source_smiles = prov.at("smiles").get<std::string>();
    rec.props.mw = prov.at("mw").get<double>();
    rec.props.logp = prov.at("logp").get<double>();
    rec.props.tpsa = prov.at("tpsa").get<double>();
    rec.props.hbd = prov.at("hbd").get<int>();
    rec.props.hba = prov.at("hba").get<int>();
    rec.props.rb = prov.at("rb").get<int>();
    rec.props.qed = prov.at("qed").get<double>();
    if (prov.contains("target_smiles"))
      rec.target_smiles = prov.at("target_smiles").get<std::string>();
    out.push_back(std::move(rec));
  }
  return out;
}

fs::path split_path(const Run& r, const std::string& split) {
  return r.data_dir() / (r.task + "_" + split + ".jsonl");
}

// ---- commands --------------------------------------------------------------

int cmd_curate(const Run& r) {
  std::string corpus_path = r.cfg.str("corpus", "");
  if (corpus_path.empty()) throw ConfigInvalid("curate needs a 'corpus' config entry");
  auto corpus = task::load_smiles_file(corpus_path);
  long max_mols = r.cfg.integer("curate.max_molecules", 0);
  if (max_mols > 0 && corpus.size() > static_cast<size_t>(max_mols))
    corpus.resize(static_cast<size_t>(max_mols));

  task::CurateLog log;
  Rng rng(r.seed, "curate");
  task::PropertyTaskSets sets = task::build_property_tasks(corpus, rng, &log);
  task::export_dataset(sets.img2property, "img2property", r.data_dir().string(), r.resolution());
  task::export_dataset(sets.img2smiles, "img2smiles", r.data_dir().string(), r.resolution());
  task::export_dataset(sets.property2img, "property2img", r.data_dir().string(), r.resolution());

  Rng pair_rng(r.seed, "curate-pairs");
  auto pairs = task::synthesize_logp_pairs(corpus, 0.5, pair_rng, &log);
  task::TaskDataset img2img = task::build_img2img_pairs(pairs, &log);
  task::export_dataset(img2img, "img2img", r.data_dir().string(), r.resolution());

  if (r.cfg.has("captions")) {
    auto caps = task::load_caption_file(r.cfg.str("captions", ""));
    Rng cap_rng(r.seed, "curate-captions");
    task::TaskDataset img2caption = task::build_img2caption(caps, 150, cap_rng, &log);
    task::export_dataset(img2caption, "img2caption", r.data_dir().string(), r.resolution());
  }

  std::ofstream lg((r.data_dir() / "curate_log.txt").string(), std::ios::binary);
  lg << "molecules " << corpus.size() << "\n"
     << "skipped_parse " << log.skipped_parse << "\n"
     << "skipped_unparameterized " << log.skipped_unparameterized << "\n"
     << "skipped_empty_caption " << log.skipped_empty_caption << "\n"
     << "skipped_long_caption " << log.skipped_long_caption << "\n"
     << "rejected_pairs " << log.rejected_pairs << "\n";
  std::cout << "curated " << sets.img2property.train.size() << " train / "
            << sets.img2property.test.size() << " test property records\n";
  return 0;
}

std::vector<std::string> dataset_text_lines(const Run& r) {
  std::vector<std::string> lines;
  for (const auto& name : {"img2caption", "img2property", "img2smiles", "property2img", "img2img"}) {
    fs::path p = r.data_dir() / (std::string(name) + "_train.jsonl");
    if (!fs::exists(p)) continue;
    for (const auto& rec : load_records(p)) {
      for (const auto& seg : rec.input)
        if (seg.type == task::SegmentRef::Type::Text) lines.push_back(seg.text);
      for (const auto& seg : rec.output)
        if (seg.type == task::SegmentRef::Type::Text) lines.push_back(seg.text);
    }
  }
  return lines;
}

int cmd_train_bpe(const Run& r) {
  require_file(split_path(r, "train"), "curate");
  auto lines = dataset_text_lines(r);
  int vocab_size = static_cast<int>(r.cfg.integer("bpe.vocab_size", 600));
  int n_image = static_cast<int>(r.cfg.integer("vq.codebook_size", 256));
  text::BpeVocab vocab = text::bpe_train(lines, vocab_size, n_image);
  vocab.save(r.bpe_path().string());
  std::cout << "bpe vocab " << vocab.total_size() << " ids -> " << r.bpe_path().string() << "\n";
  return 0;
}

vq::VqConfig vq_config(const Run& r) {
  vq::VqConfig c;
  c.image_res = r.resolution();
  c.grid = c.image_res / 8;
  c.codebook_size = static_cast<int>(r.cfg.integer("vq.codebook_size", 256));
  c.code_dim = static_cast<int>(r.cfg.integer("vq.code_dim", 16));
  c.steps = static_cast<int>(r.cfg.integer("vq.steps", 2000));
  c.batch_size = static_cast<int>(r.cfg.integer("vq.batch_size", 8));
  c.lr = static_cast<float>(r.cfg.real("vq.lr", 1e-3));
  c.lambda1 = static_cast<float>(r.cfg.real("vq.lambda1", 1.0));
  c.gan_start_frac = static_cast<float>(r.cfg.real("vq.gan_start_frac", 0.6));
  c.perceptual_steps = static_cast<int>(r.cfg.integer("vq.perceptual_steps", 300));
  c.val_every = static_cast<int>(r.cfg.integer("vq.val_every", 50));
  return c;
}

int cmd_train_vq(const Run& r) {
  auto records = load_records(split_path(r, "train"));
  std::vector<std::string> smiles;
  std::set<std::string> seen;
  for (const auto& rec : records)
    if (seen.insert(rec.source_smiles).second) smiles.push_back(rec.source_smiles);
  long max_images = r.cfg.integer("vq.max_images", 0);
  if (max_images > 0 && smiles.size() > static_cast<size_t>(max_images))
    smiles.resize(static_cast<size_t>(max_images));

  std::vector<render::MolImage> images;
  for (const auto& s : smiles)
    images.push_back(render::render(chem::parse_smiles(s), r.resolution()));

  Rng rng(r.seed, "train-vq");
  vq::TrainVqResult res = vq::train_vq(images, vq_config(r), rng);
  res.model.save(r.vq_path().string());

  std::ofstream curve((r.out / "vq_curve.tsv").string(), std::ios::binary);
  curve << "step\tl_rec\tl_codebook\tl_commit\tl_perceptual\tl_gan_g\tl_gan_d\tlambda2\n";
  char buf[256];
  for (const auto& p : res.curve) {
    std::snprintf(buf, sizeof(buf), "%lld\t%.6f\t%.6f\t%.6f\t%.6f\t%.6f\t%.6f\t%.6f\n",
                  static_cast<long long>(p.step), p.l_rec, p.l_codebook, p.l_commit,
                  p.l_perceptual, p.l_gan_g, p.l_gan_d, p.lambda2);
    curve << buf;
  }
  std::ofstream val((r.out / "vq_val_curve.tsv").string(), std::ios::binary);
  val << "untrained\t" << res.untrained_val_rec << "\n";
  for (size_t i = 0; i < res.val_curve.size(); ++i) val << i << "\t" << res.val_curve[i] << "\n";

  int used = 0;
  for (int64_t u : res.usage)
    if (u > 0) ++used;
  std::cout << "vq trained on " << images.size() << " images; best val " << res.best_val
            << " at step " << res.best_step << "; codebook usage " << used << "/"
            << res.usage.size() << "\n";
  return 0;
}

lm::LmConfig lm_config(const Run& r) {
  lm::LmConfig c;
  c.layers = static_cast<int>(r.cfg.integer("lm.layers", 4));
  c.dim = static_cast<int>(r.cfg.integer("lm.dim", 128));
  c.heads = static_cast<int>(r.cfg.integer("lm.heads", 4));
  c.context = static_cast<int>(r.cfg.integer("lm.context", 512));
  c.steps = static_cast<int>(r.cfg.integer("lm.steps", 3000));
  c.lr = static_cast<float>(r.cfg.real("lm.lr", 2e-5));
  c.dropout = static_cast<float>(r.cfg.real("lm.dropout", 0.05));
  c.z_weight = static_cast<float>(r.cfg.real("lm.z_weight", 1e-5));
  c.warmup_frac = static_cast<float>(r.cfg.real("lm.warmup_frac", 0.01));
  c.weight_decay = static_cast<float>(r.cfg.real("lm.weight_decay", 0.1));
  return c;
}

int cmd_train_lm(const Run& r) {
  require_file(r.vq_path(), "train-vq");
  require_file(r.bpe_path(), "train-bpe");
  auto records = load_records(split_path(r, "train"));

  text::BpeVocab vocab = text::BpeVocab::load(r.bpe_path().string());
  vq::VqModel vq_model = vq::VqModel::load(r.vq_path().string());
  task::RecordEncoder enc{vocab, vq_model, r.resolution()};
  lm::TokenLayout layout = task::layout_for(vocab, vq_model);

  lm::LmConfig cfg = lm_config(r);
  std::vector<lm::LmExample> examples;
  for (const auto& rec : records) {
    for (auto& ex : task::encode_with_rotations(rec, enc)) {
      if (ex.ids.size() <= static_cast<size_t>(cfg.context)) examples.push_back(std::move(ex));
    }
  }
  if (examples.empty()) throw ConfigInvalid("no training example fits lm.context");

  Rng init_rng(r.seed, "lm-init");
  lm::LmModel model = lm::LmModel::init(cfg, layout, init_rng);
  Rng rng(r.seed, "train-lm");
  auto curve = lm::train_lm(model, examples, rng);
  model.save(r.lm_path().string());

  std::ofstream out((r.out / "lm_curve.tsv").string(), std::ios::binary);
  out << "step\ttotal\tce\tzloss\tlr\n";
  char buf[160];
  for (const auto& p : curve) {
    std::snprintf(buf, sizeof(buf), "%lld\t%.6f\t%.6f\t%.8f\t%.8f\n",
                  static_cast<long long>(p.step), p.total, p.ce, p.zloss, p.lr);
    out << buf;
  }
  std::cout << "lm trained on " << examples.size() << " examples; final ce "
            << (curve.empty() ? 0.0f : curve.back().ce) << "\n";
  return 0;
}

// split generated ids into readable text and image spans
struct DecodedOutput {
  std::string text;
  std::vector<int> span_lengths;
};

DecodedOutput decode_generated(const text::BpeVocab& vocab,
                               const std::vector<int64_t>& ids) {
  DecodedOutput out;
  std::vector<int> text_ids;
  bool in_image = false;
  int span = 0;
  for (int64_t id64 : ids) {
    int id = static_cast<int>(id64);
    if (in_image) {
      if (id == vocab.eoi_id()) {
        in_image = false;
        out.span_lengths.push_back(span);
      } else {
        ++span;
      }
      continue;
    }
    if (id == vocab.boi_id()) {
      in_image = true;
      span = 0;
    } else if (id < vocab.text_size()) {
      text_ids.push_back(id);
    }
    // bos/eos/pad carry no text
  }
  if (in_image) out.span_lengths.push_back(span);  // truncated block
  out.text = text::decode_text(vocab, text_ids);
  return out;
}

std::string reference_text(const task::TaskRecord& rec) {
  std::string out;
  for (const auto& seg : rec.output)
    if (seg.type == task::SegmentRef::Type::Text) {
      if (!out.empty()) out += ' ';
      out += seg.text;
    }
  return out;
}

int cmd_generate(const Run& r) {
  require_file(r.lm_path(), "train-lm");
  require_file(r.vq_path(), "train-vq");
  require_file(r.bpe_path(), "train-bpe");
  auto records = load_records(split_path(r, "test"));
  long max_records = r.cfg.integer("generate.max_records", 50);
  if (max_records > 0 && records.size() > static_cast<size_t>(max_records))
    records.resize(static_cast<size_t>(max_records));

  text::BpeVocab vocab = text::BpeVocab::load(r.bpe_path().string());
  vq::VqModel vq_model = vq::VqModel::load(r.vq_path().string());
  lm::LmModel model = lm::LmModel::load(r.lm_path().string());
  task::RecordEncoder enc{vocab, vq_model, r.resolution()};

  lm::SamplerConfig sampler;
  sampler.greedy = true;
  sampler.max_new_tokens = static_cast<int>(r.cfg.integer("generate.max_new_tokens", 160));

  int span_len = model.layout.image_span_len;
  std::ofstream out(r.gen_path().string(), std::ios::binary);
  Rng rng(r.seed, "generate");
  for (const auto& rec : records) {
    std::vector<int64_t> prompt = task::encode_prompt(rec, enc);
    std::vector<int64_t> full = lm::generate(model, prompt, sampler, rng);
    std::vector<int64_t> completion(full.begin() + prompt.size(), full.end());
    DecodedOutput dec = decode_generated(vocab, completion);
    bool spans_ok = true;
    for (int len : dec.span_lengths)
      if (len != span_len) spans_ok = false;

    json j;
    j["task"] = task::task_name(rec.task);
    j["source_smiles"] = rec.source_smiles;
    if (!rec.target_smiles.empty()) j["target_smiles"] = rec.target_smiles;
    j["reference"] = reference_text(rec);
    j["generated"] = dec.text;
    j["image_spans"] = dec.span_lengths;
    j["spans_exact"] = spans_ok;
    json prov;
    prov["mw"] = rec.props.mw;
    prov["logp"] = rec.props.logp;
    prov["tpsa"] = rec.props.tpsa;
    prov["hbd"] = rec.props.hbd;
    prov["hba"] = rec.props.hba;
    prov["rb"] = rec.props.rb;
    prov["qed"] = rec.props.qed;
    j["properties"] = std::move(prov);
    out << j.dump() << "\n";
  }
  std::cout << "generated " << records.size() << " transcripts -> " << r.gen_path().string()
            << "\n";
  return 0;
}

struct Transcript {
  std::string task, source_smiles, target_smiles, reference, generated;
  bool spans_exact = true;
  props::PropertyVector props;
};

std::vector<Transcript> load_transcripts(const fs::path& p) {
  require_file(p, "generate");
  std::ifstream in(p.string(), std::ios::binary);
  std::vector<Transcript> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    Transcript t;
    t.task = j.at("task").get<std::string>();
    t.source_smiles = j.at("source_smiles").get<std::string>();
    if (j.contains("target_smiles")) t.target_smiles = j.at("target_smiles").get<std::string>();
    t.reference = j.at("reference").get<std::string>();
    t.generated = j.at("generated").get<std::string>();
    t.spans_exact = j.at("spans_exact").get<bool>();
    const json& prov = j.at("properties");
    t.props.mw = prov.at("mw").get<double>();
    t.props.logp = prov.at("logp").get<double>();
    t.props.tpsa = prov.at("tpsa").get<double>();
    t.props.hbd = prov.at("hbd").get<int>();
    t.props.hba = prov.at("hba").get<int>();
    t.props.rb = prov.at("rb").get<int>();
    t.props.qed = prov.at("qed").get<double>();
    out.push_back(std::move(t));
  }
  return out;
}

int cmd_eval(const Run& r) {
  auto transcripts = load_transcripts(r.gen_path());
  if (transcripts.empty()) throw ConfigInvalid("no transcripts to evaluate");
  eval::MetricReport report;
  uint64_t seed = Rng::mix(r.seed, "eval");

  std::vector<double> spans;
  for (const auto& t : transcripts) spans.push_back(t.spans_exact ? 1.0 : 0.0);
  report.push_back(eval::metric_entry("spans_exact_rate", spans, seed));

  const std::string& task_kind = transcripts[0].task;
  if (task_kind == "img2property") {
    struct Pair {
      std::vector<double> y, yhat;
    };
    std::map<std::string, Pair> per_prop;
    std::vector<double> parsed;
    for (const auto& t : transcripts) {
      try {
        props::PropertyVector p = eval::parse_property_answer(t.generated);
        parsed.push_back(1.0);
        per_prop["mw"].y.push_back(t.props.mw), per_prop["mw"].yhat.push_back(p.mw);
        per_prop["logp"].y.push_back(t.props.logp), per_prop["logp"].yhat.push_back(p.logp);
        per_prop["tpsa"].y.push_back(t.props.tpsa), per_prop["tpsa"].yhat.push_back(p.tpsa);
        per_prop["hbd"].y.push_back(t.props.hbd), per_prop["hbd"].yhat.push_back(p.hbd);
        per_prop["hba"].y.push_back(t.props.hba), per_prop["hba"].yhat.push_back(p.hba);
        per_prop["rb"].y.push_back(t.props.rb), per_prop["rb"].yhat.push_back(p.rb);
        per_prop["qed"].y.push_back(t.props.qed), per_prop["qed"].yhat.push_back(p.qed);
      } catch (const eval::MalformedAnswer&) {
        parsed.push_back(0.0);
      }
    }
    report.push_back(eval::metric_entry("answer_parse_rate", parsed, seed));
    for (const auto& [name, pair] : per_prop) {
      if (pair.y.empty()) continue;
      eval::RegressionMetrics m = eval::regression_metrics(pair.y, pair.yhat);
      std::vector<double> abs_err;
      for (size_t i = 0; i < pair.y.size(); ++i)
        abs_err.push_back(std::abs(pair.y[i] - pair.yhat[i]));
      report.push_back(eval::metric_entry("mae_" + name, abs_err, seed));
      if (m.pearson) {
        eval::MetricValue mv;
        mv.name = "pearson_" + name;
        mv.value = *m.pearson;
        mv.n = static_cast<int>(pair.y.size());
        report.push_back(mv);
      }
    }
  } else if (task_kind == "img2smiles") {
    std::vector<std::string> generated, references;
    std::vector<double> parsed, bleu2, rougel;
    for (const auto& t : transcripts) {
      std::string smiles;
      try {
        smiles = eval::parse_smiles_answer(t.generated);
        parsed.push_back(1.0);
      } catch (const eval::MalformedAnswer&) {
        parsed.push_back(0.0);
      }
      generated.push_back(smiles);
      references.push_back(t.source_smiles);
      auto cand = eval::tokenize(t.generated);
      auto ref = eval::tokenize(t.reference);
      bleu2.push_back(cand.empty() ? 0.0 : eval::bleu_n(cand, {ref}, 2));
      rougel.push_back(eval::rouge_l(cand, ref));
    }
    std::vector<std::string> train_smiles;
    fs::path train_jsonl = split_path(r, "train");
    if (fs::exists(train_jsonl))
      for (const auto& rec : load_records(train_jsonl)) train_smiles.push_back(rec.source_smiles);
    eval::MolSetMetrics mol = eval::molecule_set_metrics(generated, references, train_smiles);
    report.push_back(eval::metric_entry("answer_parse_rate", parsed, seed));
    auto single = [&](const std::string& name, double value) {
      eval::MetricValue mv;
      mv.name = name;
      mv.value = value;
      mv.n = mol.n;
      report.push_back(mv);
    };
    single("accuracy", mol.accuracy);
    single("avg_tanimoto", mol.avg_tanimoto);
    single("diversity", mol.diversity);
    single("novelty", mol.novelty);
    single("valid_rate", mol.valid_rate);
    report.push_back(eval::metric_entry("bleu_2", bleu2, seed));
    report.push_back(eval::metric_entry("rouge_l", rougel, seed));
  } else if (task_kind == "img2caption") {
    std::vector<double> bleu2, rouge1, rougel, met;
    for (const auto& t : transcripts) {
      auto cand = eval::tokenize(t.generated);
      auto ref = eval::tokenize(t.reference);
      bleu2.push_back(cand.empty() || ref.empty() ? 0.0 : eval::bleu_n(cand, {ref}, 2));
      rouge1.push_back(ref.empty() ? 0.0 : eval::rouge_n(cand, ref, 1));
      rougel.push_back(ref.empty() ? 0.0 : eval::rouge_l(cand, ref));
      met.push_back(eval::meteor(cand, ref));
    }
    report.push_back(eval::metric_entry("bleu_2", bleu2, seed));
    report.push_back(eval::metric_entry("rouge_1", rouge1, seed));
    report.push_back(eval::metric_entry("rouge_l", rougel, seed));
    report.push_back(eval::metric_entry("meteor", met, seed));
  }
  // property2img and img2img are image-output tasks; without an image-to-SMILES
  // inverse only the span structure is scored.

  std::ofstream out(r.report_path().string(), std::ios::binary);
  out << eval::report_to_jsonl(report);
  std::cout << eval::report_to_table(report);
  return 0;
}

int cmd_report(const Run& r) {
  require_file(r.report_path(), "eval");
  std::ifstream in(r.report_path().string(), std::ios::binary);
  eval::MetricReport report;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    eval::MetricValue mv;
    mv.name = j.at("name").get<std::string>();
    mv.value = j.at("value").get<double>();
    mv.n = j.at("n").get<int>();
    mv.std_error = j.at("std_error").get<double>();
    report.push_back(mv);
  }
  std::string table = eval::report_to_table(report);
  std::ofstream out((r.out / "report.txt").string(), std::ios::binary);
  out << table;
  std::cout << table;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    Args args = parse_args(argc, argv);
    Run run = make_run(args);
    RunLock lock(run.out);
    write_resolved(run);
    if (args.command == "curate") return cmd_curate(run);
    if (args.command == "train-bpe") return cmd_train_bpe(run);
    if (args.command == "train-vq") return cmd_train_vq(run);
    if (args.command == "train-lm") return cmd_train_lm(run);
    if (args.command == "generate") return cmd_generate(run);
    if (args.command == "eval") return cmd_eval(run);
    if (args.command == "report") return cmd_report(run);
    throw ConfigInvalid("unknown command '" + args.command + "'");
  } catch (const MissingUpstreamArtifact& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const ConfigInvalid& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
