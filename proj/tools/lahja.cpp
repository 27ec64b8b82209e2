// lahja: corpus building, subword tokenization, encoder pretraining, and
// evaluation for Saudi-dialect text, behind one command-line tool.
//
// Subcommands: geo-filter, clean, dedup, sample, stats, tokenizer-train,
// tokenize, pretrain, finetune, evaluate, pipeline. `pipeline` chains
// filter -> clean -> dedup [-> sample] -> tokenizer-train -> tokenize ->
// pretrain and produces byte-identical artifacts to running the stages one
// by one with the same configuration.
//
// Configuration: every flag has a default; a section-based key/value file
// (--config) can override defaults; command-line flags override the file.
// Exit codes: 0 success, 1 validation/configuration error, 2 I/O error.

#include <concepts>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "lahja/clean.hpp"
#include "lahja/corpus.hpp"
#include "lahja/digest.hpp"
#include "lahja/error.hpp"
#include "lahja/eval.hpp"
#include "lahja/geo.hpp"
#include "lahja/model.hpp"
#include "lahja/tokenizer.hpp"
#include "lahja/version.hpp"

namespace {

using lahja::ConfigError;
using lahja::IoError;
using lahja::ValidationError;

// ---------------------------------------------------------------------------
// Stream helpers ('-' means stdin/stdout)
// ---------------------------------------------------------------------------

class Input {
 public:
  explicit Input(const std::string& path) {
    if (path == "-") {
      s_ = &std::cin;
      return;
    }
    file_ = std::make_unique<std::ifstream>(path, std::ios::binary);
    if (!*file_) throw IoError("cannot open input: " + path);
    s_ = file_.get();
  }
  std::istream& stream() { return *s_; }

 private:
  std::unique_ptr<std::ifstream> file_;
  std::istream* s_ = nullptr;
};

class Output {
 public:
  explicit Output(const std::string& path) : path_(path) {
    if (path == "-") {
      s_ = &std::cout;
      return;
    }
    file_ = std::make_unique<std::ofstream>(path, std::ios::binary);
    if (!*file_) throw IoError("cannot open output: " + path);
    s_ = file_.get();
  }
  std::ostream& stream() { return *s_; }
  void finish() {
    s_->flush();
    if (!*s_) throw IoError("error writing output: " + path_);
    if (file_) file_->close();
  }

 private:
  std::string path_;
  std::unique_ptr<std::ofstream> file_;
  std::ostream* s_ = nullptr;
};

std::string read_all(std::istream& in) {
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string path_stem(const std::string& path) {
  std::string base = path;
  const size_t slash = base.find_last_of("/\\");
  if (slash != std::string::npos) base = base.substr(slash + 1);
  const size_t dot = base.find_last_of('.');
  if (dot != std::string::npos && dot > 0) base = base.substr(0, dot);
  return base.empty() ? "task" : base;
}

// ---------------------------------------------------------------------------
// Config file: documented section-based key/value format
// ---------------------------------------------------------------------------
//   # comment
//   [clean]
//   min-words = 3
// Unknown sections or keys are rejected so typos fail loudly.

struct Ini {
  std::map<std::string, std::map<std::string, std::string>> sections;

  const std::string* find(const std::string& sec, const std::string& key) const {
    auto s = sections.find(sec);
    if (s == sections.end()) return nullptr;
    auto k = s->second.find(key);
    return k == s->second.end() ? nullptr : &k->second;
  }
};

const std::map<std::string, std::set<std::string>>& known_config_keys() {
  static const std::map<std::string, std::set<std::string>> keys = {
      {"geo-filter", {"terms"}},
      {"clean",
       {"input-format", "min-words", "english-threshold", "max-digit-run",
        "letter-cap", "other-cap", "strip-markup", "post-element",
        "post-class"}},
      {"dedup", {"shards", "threads"}},
      {"sample", {"fraction", "seed"}},
      {"stats", {}},
      {"tokenizer-train",
       {"vocab-size", "coverage", "em-iters", "seed-factor", "max-piece-cps",
        "prune-keep", "threads"}},
      {"tokenize", {"vocab"}},
      {"pretrain",
       {"steps", "batch-size", "learning-rate", "mask-fraction", "seed",
        "save-every", "preset", "d-model", "layers", "heads", "d-ff",
        "max-seq-len"}},
      {"finetune",
       {"format", "text-column", "label-column", "epochs", "batch-size",
        "learning-rate", "seed", "preset", "d-model", "layers", "heads",
        "d-ff", "max-seq-len"}},
      {"evaluate",
       {"format", "text-column", "label-column", "repeats", "stratified",
        "epochs", "batch-size", "learning-rate", "seed", "preset", "d-model",
        "layers", "heads", "d-ff", "max-seq-len", "task-name"}},
      {"pipeline", {"workdir", "output"}},
  };
  return keys;
}

std::string trim(const std::string& s) {
  size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  return s.substr(b, e - b);
}

Ini load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("config: cannot read: " + path);
  Ini ini;
  const auto& known = known_config_keys();
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    const std::string at = path + ":" + std::to_string(lineno);
    if (t.front() == '[') {
      if (t.back() != ']')
        throw ConfigError("config: malformed section at " + at);
      section = trim(t.substr(1, t.size() - 2));
      if (known.find(section) == known.end())
        throw ConfigError("config: unknown section [" + section + "] at " + at);
      continue;
    }
    const size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: expected key = value at " + at);
    if (section.empty())
      throw ConfigError("config: key outside any [section] at " + at);
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key.empty()) throw ConfigError("config: empty key at " + at);
    if (!known.at(section).count(key))
      throw ConfigError("config: unknown key '" + key + "' in [" + section +
                        "] at " + at);
    if (!ini.sections[section].emplace(key, value).second)
      throw ConfigError("config: duplicate key '" + key + "' at " + at);
  }
  return ini;
}

// typed assignment from config strings
void assign(std::string& var, const std::string& v, const std::string&) {
  var = v;
}
void assign(bool& var, const std::string& v, const std::string& where) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") {
    var = true;
  } else if (v == "false" || v == "0" || v == "no" || v == "off") {
    var = false;
  } else {
    throw ConfigError("config: " + where + " expects a boolean, got '" + v + "'");
  }
}
void assign(double& var, const std::string& v, const std::string& where) {
  try {
    size_t used = 0;
    var = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
  } catch (const std::exception&) {
    throw ConfigError("config: " + where + " expects a number, got '" + v + "'");
  }
}
template <std::unsigned_integral T>
void assign(T& var, const std::string& v, const std::string& where) {
  try {
    size_t used = 0;
    const unsigned long long x = std::stoull(v, &used);
    if (used != v.size() || (!v.empty() && v[0] == '-'))
      throw std::invalid_argument(v);
    var = static_cast<T>(x);
  } catch (const std::exception&) {
    throw ConfigError("config: " + where + " expects a non-negative integer, got '" +
                      v + "'");
  }
}
void assign(int& var, const std::string& v, const std::string& where) {
  try {
    size_t used = 0;
    var = std::stoi(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
  } catch (const std::exception&) {
    throw ConfigError("config: " + where + " expects an integer, got '" + v + "'");
  }
}

// Flag beats config beats default: only overwrite from the config file when
// the command-line option was not used.
template <typename T>
void resolve(const CLI::Option* opt, const Ini& ini, const std::string& sec,
             const char* key, T& var) {
  if (opt != nullptr && opt->count() > 0) return;
  if (const std::string* v = ini.find(sec, key))
    assign(var, *v, sec + std::string(".") + key);
}

// ---------------------------------------------------------------------------
// Provenance sidecars
// ---------------------------------------------------------------------------

using Items = std::vector<std::pair<std::string, std::string>>;

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

uint64_t settings_digest(const std::string& command, const Items& items) {
  std::string blob = command;
  blob.push_back('\0');
  for (const auto& [k, v] : items) {
    blob += k;
    blob.push_back('=');
    blob += v;
    blob.push_back('\n');
  }
  return lahja::digest::fnv1a64(blob);
}

std::string hex64(uint64_t v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void print_header(const std::string& command, const Items& items) {
  std::cerr << "[lahja " << LAHJA_VERSION << "] " << command << ":";
  for (const auto& [k, v] : items) std::cerr << ' ' << k << '=' << v;
  std::cerr << '\n';
}

// Writes <out>.provenance.json next to a real output file (never for '-').
void write_provenance(const std::string& out_path, const std::string& command,
                      const Items& items, const nlohmann::json& results) {
  if (out_path == "-" || out_path.empty()) return;
  nlohmann::json j;
  j["tool"] = "lahja";
  j["version"] = LAHJA_VERSION;
  j["command"] = command;
  j["config_digest"] = hex64(settings_digest(command, items));
  nlohmann::json settings = nlohmann::json::object();
  for (const auto& [k, v] : items) settings[k] = v;
  j["settings"] = settings;
  j["results"] = results;
  const std::string path = out_path + ".provenance.json";
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write provenance sidecar: " + path);
  out << j.dump(2) << '\n';
  if (!out) throw IoError("error writing provenance sidecar: " + path);
}

// ---------------------------------------------------------------------------
// Stage settings and runners (shared by subcommands and `pipeline`)
// ---------------------------------------------------------------------------

struct GeoSettings {
  std::string terms = "data/saudi_terms.txt";
  Items items() const { return {{"terms", terms}}; }
};

lahja::geo::FilterReport run_geo_stage(const std::string& in_path,
                                       const std::string& out_path,
                                       const GeoSettings& gs) {
  const lahja::geo::TermList terms = lahja::geo::TermList::load(gs.terms);
  Input in(in_path);
  Output out(out_path);
  lahja::geo::FilterReport rep;
  lahja::geo::filter_lines(in.stream(), out.stream(), terms, rep);
  out.finish();
  write_provenance(out_path, "geo-filter", gs.items(),
                   {{"total", rep.total},
                    {"selected", rep.selected},
                    {"by_country_code", rep.by_country_code},
                    {"by_location_term", rep.by_location_term},
                    {"malformed", rep.malformed}});
  return rep;
}

struct CleanSettings {
  std::string input_format = "lines";  // lines | jsonl | html
  int min_words = 3;
  double english_threshold = 0.5;
  int max_digit_run = 7;
  int letter_cap = 5;
  int other_cap = 4;
  bool strip_markup = false;
  std::string post_element = "div";
  std::string post_class = "postcontent";

  lahja::clean::CleanConfig to_config() const {
    if (input_format != "lines" && input_format != "jsonl" &&
        input_format != "html")
      throw ConfigError("clean: input-format must be lines, jsonl, or html");
    lahja::clean::CleanConfig cfg;
    cfg.min_words = min_words;
    cfg.english_ratio_threshold = english_threshold;
    cfg.max_digit_run = max_digit_run;
    cfg.letter_rep_cap = letter_cap;
    cfg.other_rep_cap = other_cap;
    cfg.strip_markup = strip_markup || input_format == "html";
    cfg.post_element = post_element;
    cfg.post_class = post_class;
    cfg.validate();
    return cfg;
  }
  Items items() const {
    return {{"input-format", input_format},
            {"min-words", std::to_string(min_words)},
            {"english-threshold", fmt_double(english_threshold)},
            {"max-digit-run", std::to_string(max_digit_run)},
            {"letter-cap", std::to_string(letter_cap)},
            {"other-cap", std::to_string(other_cap)},
            {"strip-markup", strip_markup ? "true" : "false"},
            {"post-element", post_element},
            {"post-class", post_class}};
  }
};

struct CleanCounts {
  uint64_t total = 0;
  uint64_t kept = 0;
  uint64_t malformed = 0;
  uint64_t empty_after_cleaning = 0;
  uint64_t too_few_words = 0;
  uint64_t too_much_english = 0;
};

CleanCounts run_clean_stage(const std::string& in_path,
                            const std::string& out_path,
                            const CleanSettings& cs) {
  const lahja::clean::CleanConfig cfg = cs.to_config();
  Input in(in_path);
  Output out(out_path);
  CleanCounts counts;
  auto handle = [&](const lahja::clean::Document& doc) {
    ++counts.total;
    const auto [cleaned, decision] = lahja::clean::clean_document(doc, cfg);
    if (decision.kept) {
      ++counts.kept;
      out.stream() << cleaned.text << '\n';
      return;
    }
    switch (decision.reason) {
      case lahja::clean::Reason::empty_after_cleaning:
        ++counts.empty_after_cleaning;
        break;
      case lahja::clean::Reason::too_few_words:
        ++counts.too_few_words;
        break;
      case lahja::clean::Reason::too_much_english:
        ++counts.too_much_english;
        break;
      case lahja::clean::Reason::kept:
        break;
    }
  };
  if (cs.input_format == "html") {
    const std::string html = read_all(in.stream());
    const auto extract = lahja::clean::html_to_documents(
        html, path_stem(in_path == "-" ? "stdin" : in_path),
        in_path == "-" ? "stdin" : in_path, cfg);
    for (const auto& doc : extract.documents) handle(doc);
  } else {
    const bool jsonl = cs.input_format == "jsonl";
    std::string line;
    uint64_t lineno = 0;
    while (std::getline(in.stream(), line)) {
      ++lineno;
      lahja::clean::Document doc;
      doc.doc_id = std::to_string(lineno);
      doc.source = lahja::clean::Source::tweet;
      if (jsonl) {
        const auto rec = lahja::geo::parse_record(line);
        if (!rec) {
          ++counts.total;
          ++counts.malformed;
          continue;
        }
        doc.doc_id = rec->id;
        doc.text = rec->text;
      } else {
        doc.text = line;
      }
      handle(doc);
    }
  }
  out.finish();
  write_provenance(out_path, "clean", cs.items(),
                   {{"total", counts.total},
                    {"kept", counts.kept},
                    {"malformed", counts.malformed},
                    {"empty_after_cleaning", counts.empty_after_cleaning},
                    {"too_few_words", counts.too_few_words},
                    {"too_much_english", counts.too_much_english}});
  return counts;
}

struct DedupSettings {
  size_t shards = 16;
  size_t threads = 1;
  Items items() const {
    return {{"shards", std::to_string(shards)},
            {"threads", std::to_string(threads)}};
  }
};

lahja::corpus::DedupReport run_dedup_stage(const std::string& in_path,
                                           const std::string& out_path,
                                           const DedupSettings& ds) {
  Input in(in_path);
  Output out(out_path);
  const auto rep = lahja::corpus::dedup_stream_sharded(in.stream(), out.stream(),
                                                       ds.shards, ds.threads);
  out.finish();
  write_provenance(out_path, "dedup", ds.items(),
                   {{"total", rep.total},
                    {"kept", rep.kept},
                    {"dropped", rep.dropped}});
  return rep;
}

struct SampleSettings {
  double fraction = 1.0;
  uint64_t seed = 42;
  Items items() const {
    return {{"fraction", fmt_double(fraction)},
            {"seed", std::to_string(seed)}};
  }
};

lahja::corpus::SampleReport run_sample_stage(const std::string& in_path,
                                             const std::string& out_path,
                                             const SampleSettings& ss) {
  Input in(in_path);
  Output out(out_path);
  const auto rep = lahja::corpus::sample_stream(in.stream(), out.stream(),
                                                ss.fraction, ss.seed);
  out.finish();
  write_provenance(out_path, "sample", ss.items(),
                   {{"total", rep.total}, {"kept", rep.kept}});
  return rep;
}

struct TokTrainSettings {
  size_t vocab_size = 75000;
  double coverage = 0.9995;
  size_t em_iters = 2;
  size_t seed_factor = 4;
  size_t max_piece_cps = 8;
  double prune_keep = 0.75;
  size_t threads = 1;

  lahja::tok::TrainConfig to_config() const {
    lahja::tok::TrainConfig cfg;
    cfg.vocab_size = vocab_size;
    cfg.character_coverage = coverage;
    cfg.em_iters = em_iters;
    cfg.seed_factor = seed_factor;
    cfg.max_piece_cps = max_piece_cps;
    cfg.prune_keep = prune_keep;
    cfg.threads = threads;
    return cfg;
  }
  Items items() const {
    return {{"vocab-size", std::to_string(vocab_size)},
            {"coverage", fmt_double(coverage)},
            {"em-iters", std::to_string(em_iters)},
            {"seed-factor", std::to_string(seed_factor)},
            {"max-piece-cps", std::to_string(max_piece_cps)},
            {"prune-keep", fmt_double(prune_keep)},
            {"threads", std::to_string(threads)}};
  }
};

lahja::tok::TrainReport run_toktrain_stage(const std::string& in_path,
                                           const std::string& out_path,
                                           const TokTrainSettings& ts) {
  Input in(in_path);
  lahja::tok::TrainReport rep;
  const auto vocab = lahja::tok::train_unigram(in.stream(), ts.to_config(), &rep);
  Output out(out_path);
  vocab.save(out.stream());
  out.finish();
  for (size_t r = 0; r < rep.nll.size(); ++r) {
    if (rep.nll[r].empty()) continue;
    std::cerr << "  round " << r + 1 << ": nll " << rep.nll[r].front() << " -> "
              << rep.nll[r].back() << '\n';
  }
  write_provenance(out_path, "tokenizer-train", ts.items(),
                   {{"rounds", rep.rounds},
                    {"required_chars", rep.required_chars},
                    {"seed_pieces", rep.seed_pieces},
                    {"vocab_size", ts.vocab_size}});
  return rep;
}

struct TokenizeSettings {
  std::string vocab;
  Items items() const { return {{"vocab", vocab}}; }
};

void run_tokenize_stage(const std::string& in_path, const std::string& out_path,
                        const TokenizeSettings& ts) {
  if (ts.vocab.empty()) throw ConfigError("tokenize: --vocab is required");
  const auto vocab = lahja::tok::SubwordVocab::load_file(ts.vocab);
  Input in(in_path);
  Output out(out_path);
  lahja::tok::tokenize_stream(in.stream(), out.stream(), vocab);
  out.finish();
  write_provenance(out_path, "tokenize", ts.items(),
                   {{"vocab_digest", hex64(lahja::model::vocab_digest(vocab))}});
}

struct ModelSettings {
  std::string preset = "desk";
  size_t d_model = 0;  // 0 = use the preset's value
  size_t layers = 0;
  size_t heads = 0;
  size_t d_ff = 0;
  size_t max_seq_len = 128;

  lahja::model::EncoderConfig to_config(size_t vocab, size_t num_labels) const {
    lahja::model::EncoderConfig cfg;
    if (preset == "desk") {
      cfg = lahja::model::EncoderConfig::desk(vocab, num_labels);
    } else if (preset == "paper") {
      cfg = lahja::model::EncoderConfig::paper(vocab, num_labels);
    } else {
      throw ConfigError("model: preset must be 'desk' or 'paper'");
    }
    if (d_model) cfg.d_model = d_model;
    if (layers) cfg.layers = layers;
    if (heads) cfg.heads = heads;
    if (d_ff) cfg.d_ff = d_ff;
    cfg.max_seq_len = max_seq_len;
    cfg.validate();
    return cfg;
  }
  Items items() const {
    return {{"preset", preset},
            {"d-model", std::to_string(d_model)},
            {"layers", std::to_string(layers)},
            {"heads", std::to_string(heads)},
            {"d-ff", std::to_string(d_ff)},
            {"max-seq-len", std::to_string(max_seq_len)}};
  }
};

struct TrainSettings {
  uint64_t steps = 100;
  size_t batch_size = 8;
  double learning_rate = 5e-5;
  double mask_fraction = 0.15;
  uint64_t seed = 42;
  uint64_t epochs = 3;

  lahja::model::TrainingConfig to_config(size_t max_seq_len) const {
    lahja::model::TrainingConfig tc;
    tc.mask_fraction = mask_fraction;
    tc.max_seq_len = max_seq_len;
    tc.batch_size = batch_size;
    tc.learning_rate = learning_rate;
    tc.steps = steps;
    tc.epochs = epochs;
    tc.seed = seed;
    tc.validate();
    return tc;
  }
  Items items() const {
    return {{"steps", std::to_string(steps)},
            {"batch-size", std::to_string(batch_size)},
            {"learning-rate", fmt_double(learning_rate)},
            {"mask-fraction", fmt_double(mask_fraction)},
            {"seed", std::to_string(seed)},
            {"epochs", std::to_string(epochs)}};
  }
};

std::vector<std::vector<int>> read_id_docs(std::istream& in, size_t vocab_size) {
  std::vector<std::vector<int>> docs;
  std::string line;
  uint64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::vector<int> ids;
    size_t i = 0;
    while (i < line.size()) {
      while (i < line.size() && (line[i] == ' ' || line[i] == '\t' ||
                                 line[i] == '\r'))
        ++i;
      if (i >= line.size()) break;
      size_t j = i;
      long v = 0;
      bool ok = true;
      while (j < line.size() && line[j] != ' ' && line[j] != '\t' &&
             line[j] != '\r') {
        if (line[j] < '0' || line[j] > '9') {
          ok = false;
        } else {
          v = v * 10 + (line[j] - '0');
          if (v > static_cast<long>(vocab_size)) ok = false;
        }
        ++j;
      }
      if (!ok || v >= static_cast<long>(vocab_size))
        throw ValidationError("pretrain: bad token id on line " +
                              std::to_string(lineno));
      ids.push_back(static_cast<int>(v));
      i = j;
    }
    docs.push_back(std::move(ids));
  }
  return docs;
}

struct PretrainExtras {
  std::string resume;
  uint64_t save_every = 0;
};

lahja::model::PretrainReport run_pretrain_stage(const std::string& ids_path,
                                                const std::string& vocab_path,
                                                const std::string& out_path,
                                                const ModelSettings& ms,
                                                const TrainSettings& ts,
                                                const PretrainExtras& px) {
  if (vocab_path.empty()) throw ConfigError("pretrain: --vocab is required");
  if (out_path.empty() || out_path == "-")
    throw ConfigError("pretrain: --output must be a file path");
  const auto vocab = lahja::tok::SubwordVocab::load_file(vocab_path);
  const uint64_t vdigest = lahja::model::vocab_digest(vocab);
  const auto cfg = ms.to_config(vocab.size(), 0);
  lahja::model::TrainingConfig tc = ts.to_config(cfg.max_seq_len);
  Input in(ids_path);
  const auto docs = read_id_docs(in.stream(), vocab.size());
  lahja::model::Encoder enc(cfg, ts.seed);
  lahja::model::AdamW adam(tc);
  if (!px.resume.empty()) {
    const auto ck = lahja::model::load_checkpoint_file(px.resume);
    lahja::model::apply_checkpoint(enc, &adam, ck, vdigest);
    std::cerr << "  resumed from step " << ck.step << '\n';
  }
  lahja::model::PretrainReport total;
  while (true) {
    const uint64_t done = adam.steps();
    if (done >= ts.steps) break;
    tc.steps = px.save_every
                   ? std::min<uint64_t>(ts.steps, done + px.save_every)
                   : ts.steps;
    const auto rep = lahja::model::pretrain(docs, enc, adam, tc);
    total.steps += rep.steps;
    total.chunks = rep.chunks;
    total.skipped_sequences += rep.skipped_sequences;
    total.loss_history.insert(total.loss_history.end(),
                              rep.loss_history.begin(), rep.loss_history.end());
    total.final_loss = rep.final_loss;
    lahja::model::save_checkpoint_file(out_path, enc, &adam, adam.steps(),
                                       vdigest);
    std::cerr << "  step " << adam.steps() << "/" << ts.steps << " loss "
              << rep.final_loss << '\n';
  }
  // a zero-step run still materializes the initialized model
  lahja::model::save_checkpoint_file(out_path, enc, &adam, adam.steps(),
                                     vdigest);
  Items items = ms.items();
  for (auto& kv : ts.items()) items.push_back(kv);
  items.push_back({"save-every", std::to_string(px.save_every)});
  write_provenance(out_path, "pretrain", items,
                   {{"steps", adam.steps()},
                    {"chunks", total.chunks},
                    {"skipped_sequences", total.skipped_sequences},
                    {"final_loss", total.final_loss},
                    {"vocab_digest", hex64(vdigest)}});
  return total;
}

struct DataSettings {
  std::string format = "csv";
  std::string text_column = "text";
  std::string label_column = "label";

  lahja::eval::TableFormat table_format() const {
    if (format == "csv") return lahja::eval::TableFormat::csv;
    if (format == "tsv") return lahja::eval::TableFormat::tsv;
    throw ConfigError("dataset: format must be csv or tsv");
  }
  Items items() const {
    return {{"format", format},
            {"text-column", text_column},
            {"label-column", label_column}};
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "lahja: Saudi-dialect corpus pipeline, subword tokenizer, encoder "
      "pretraining, and evaluation.\n"
      "Pipeline order: geo-filter -> clean -> dedup [-> sample] -> "
      "tokenizer-train -> tokenize -> pretrain.\n"
      "Cleaning constants: repeats capped at 5 (letters) / 4 (other marks), "
      "minimum 3 words, drop above 50% English letters, digit runs longer "
      "than 7 removed. Tokenizer default vocabulary 75000. Masking fraction "
      "0.15, sequence length 128."};
  app.set_version_flag("--version", LAHJA_VERSION);
  app.require_subcommand(1);

  std::string config_path;
  Ini ini;

  // --- geo-filter ---
  auto* geo_cmd = app.add_subcommand(
      "geo-filter", "Select tweet records (JSONL) that match the Saudi "
                    "country code or a location term list");
  std::string geo_in = "-", geo_out = "-";
  GeoSettings geo_s;
  geo_cmd->add_option("input", geo_in, "input JSONL file ('-' = stdin)");
  geo_cmd->add_option("-o,--output", geo_out, "output file ('-' = stdout)");
  auto* geo_terms_opt =
      geo_cmd->add_option("--terms", geo_s.terms, "location term list file")
          ->capture_default_str();
  geo_cmd->add_option("--config", config_path, "configuration file");

  // --- clean ---
  auto* clean_cmd = app.add_subcommand(
      "clean", "Normalize and filter documents: strip URLs/mentions/hashtags/"
               "emails, remove digit runs longer than 7, cap repeats at 5 "
               "letters / 4 marks, drop docs under 3 words or above 50% "
               "English letters");
  std::string clean_in = "-", clean_out = "-";
  CleanSettings clean_s;
  clean_cmd->add_option("input", clean_in, "input file ('-' = stdin)");
  clean_cmd->add_option("-o,--output", clean_out, "output file ('-' = stdout)");
  auto* cl_fmt = clean_cmd
                     ->add_option("--input-format", clean_s.input_format,
                                  "input shape: lines, jsonl, or html")
                     ->capture_default_str();
  auto* cl_minw = clean_cmd
                      ->add_option("--min-words", clean_s.min_words,
                                   "minimum words to keep a document")
                      ->capture_default_str();
  auto* cl_eng =
      clean_cmd
          ->add_option("--english-threshold", clean_s.english_threshold,
                       "drop documents whose English letter share exceeds this")
          ->capture_default_str();
  auto* cl_dig = clean_cmd
                     ->add_option("--max-digit-run", clean_s.max_digit_run,
                                  "remove digit runs longer than this")
                     ->capture_default_str();
  auto* cl_lcap = clean_cmd
                      ->add_option("--letter-cap", clean_s.letter_cap,
                                   "collapse letter repeats beyond this")
                      ->capture_default_str();
  auto* cl_ocap =
      clean_cmd
          ->add_option("--other-cap", clean_s.other_cap,
                       "collapse non-letter repeats beyond this")
          ->capture_default_str();
  auto* cl_strip = clean_cmd->add_flag("--strip-markup", clean_s.strip_markup,
                                       "strip HTML/BBCode markup and entities");
  auto* cl_pe = clean_cmd
                    ->add_option("--post-element", clean_s.post_element,
                                 "forum post container element")
                    ->capture_default_str();
  auto* cl_pc = clean_cmd
                    ->add_option("--post-class", clean_s.post_class,
                                 "forum post container class token")
                    ->capture_default_str();
  clean_cmd->add_option("--config", config_path, "configuration file");

  // --- dedup ---
  auto* dedup_cmd = app.add_subcommand(
      "dedup", "Drop exact duplicate lines (first occurrence wins)");
  std::string dedup_in = "-", dedup_out = "-";
  DedupSettings dedup_s;
  dedup_cmd->add_option("input", dedup_in, "input file ('-' = stdin)");
  dedup_cmd->add_option("-o,--output", dedup_out, "output file ('-' = stdout)");
  auto* dd_shards = dedup_cmd
                        ->add_option("--shards", dedup_s.shards,
                                     "hash shards for the seen-set")
                        ->capture_default_str();
  auto* dd_threads =
      dedup_cmd
          ->add_option("--threads", dedup_s.threads,
                       "worker threads (any value gives identical output)")
          ->capture_default_str();
  dedup_cmd->add_option("--config", config_path, "configuration file");

  // --- sample ---
  auto* sample_cmd = app.add_subcommand(
      "sample", "Keep a seeded uniform fraction of lines, preserving order");
  std::string sample_in = "-", sample_out = "-";
  SampleSettings sample_s;
  sample_cmd->add_option("input", sample_in, "input file ('-' = stdin)");
  sample_cmd->add_option("-o,--output", sample_out, "output file ('-' = stdout)");
  auto* sm_frac = sample_cmd
                      ->add_option("--fraction", sample_s.fraction,
                                   "keep probability in (0, 1]")
                      ->capture_default_str();
  auto* sm_seed = sample_cmd->add_option("--seed", sample_s.seed, "random seed")
                      ->capture_default_str();
  sample_cmd->add_option("--config", config_path, "configuration file");

  // --- stats ---
  auto* stats_cmd = app.add_subcommand(
      "stats", "Print corpus statistics (documents, words, sentences, bytes) "
               "as JSON");
  std::string stats_in = "-";
  stats_cmd->add_option("input", stats_in, "input file ('-' = stdin)");
  stats_cmd->add_option("--config", config_path, "configuration file");

  // --- tokenizer-train ---
  auto* toktrain_cmd = app.add_subcommand(
      "tokenizer-train",
      "Train the subword tokenizer (unigram language model)");
  std::string toktrain_in = "-", toktrain_out = "-";
  TokTrainSettings toktrain_s;
  toktrain_cmd->add_option("input", toktrain_in, "corpus file ('-' = stdin)");
  toktrain_cmd->add_option("-o,--output", toktrain_out,
                           "vocabulary output file ('-' = stdout)");
  auto* tt_vs = toktrain_cmd
                    ->add_option("--vocab-size", toktrain_s.vocab_size,
                                 "final vocabulary size")
                    ->capture_default_str();
  auto* tt_cov = toktrain_cmd
                     ->add_option("--coverage", toktrain_s.coverage,
                                  "character coverage in (0, 1]")
                     ->capture_default_str();
  auto* tt_em = toktrain_cmd
                    ->add_option("--em-iters", toktrain_s.em_iters,
                                 "EM iterations per pruning round")
                    ->capture_default_str();
  auto* tt_sf = toktrain_cmd
                    ->add_option("--seed-factor", toktrain_s.seed_factor,
                                 "seed candidates = factor * vocab-size")
                    ->capture_default_str();
  auto* tt_mp = toktrain_cmd
                    ->add_option("--max-piece-cps", toktrain_s.max_piece_cps,
                                 "maximum piece length in codepoints")
                    ->capture_default_str();
  auto* tt_pk = toktrain_cmd
                    ->add_option("--prune-keep", toktrain_s.prune_keep,
                                 "fraction of candidates kept per round")
                    ->capture_default_str();
  auto* tt_th = toktrain_cmd
                    ->add_option("--threads", toktrain_s.threads,
                                 "worker threads (any value gives identical "
                                 "output)")
                    ->capture_default_str();
  toktrain_cmd->add_option("--config", config_path, "configuration file");

  // --- tokenize ---
  auto* tokenize_cmd = app.add_subcommand(
      "tokenize", "Encode text lines to space-separated token ids");
  std::string tokenize_in = "-", tokenize_out = "-";
  TokenizeSettings tokenize_s;
  tokenize_cmd->add_option("input", tokenize_in, "text file ('-' = stdin)");
  tokenize_cmd->add_option("-o,--output", tokenize_out,
                           "ids output file ('-' = stdout)");
  auto* tk_vocab =
      tokenize_cmd->add_option("--vocab", tokenize_s.vocab, "vocabulary file");
  tokenize_cmd->add_option("--config", config_path, "configuration file");

  // --- shared model/training flag helpers ---
  struct ModelOpts {
    CLI::Option *preset, *d_model, *layers, *heads, *d_ff, *max_seq;
  };
  auto add_model_flags = [](CLI::App* cmd, ModelSettings& ms) {
    ModelOpts o{};
    o.preset = cmd->add_option("--preset", ms.preset,
                               "model size preset: desk or paper")
                   ->capture_default_str();
    o.d_model = cmd->add_option("--d-model", ms.d_model,
                                "embedding width (0 = preset value)");
    o.layers =
        cmd->add_option("--layers", ms.layers, "encoder layers (0 = preset)");
    o.heads =
        cmd->add_option("--heads", ms.heads, "attention heads (0 = preset)");
    o.d_ff = cmd->add_option("--d-ff", ms.d_ff,
                             "feed-forward width (0 = preset)");
    o.max_seq = cmd->add_option("--max-seq-len", ms.max_seq_len,
                                "maximum sequence length")
                    ->capture_default_str();
    return o;
  };
  auto resolve_model = [](const ModelOpts& o, const Ini& ini,
                          const std::string& sec, ModelSettings& ms) {
    resolve(o.preset, ini, sec, "preset", ms.preset);
    resolve(o.d_model, ini, sec, "d-model", ms.d_model);
    resolve(o.layers, ini, sec, "layers", ms.layers);
    resolve(o.heads, ini, sec, "heads", ms.heads);
    resolve(o.d_ff, ini, sec, "d-ff", ms.d_ff);
    resolve(o.max_seq, ini, sec, "max-seq-len", ms.max_seq_len);
  };

  // --- pretrain ---
  auto* pretrain_cmd = app.add_subcommand(
      "pretrain", "Masked-language-model pretraining on tokenized documents "
                  "(masking fraction 0.15, sequence length 128)");
  std::string pretrain_in = "-", pretrain_out, pretrain_vocab;
  ModelSettings pretrain_ms;
  TrainSettings pretrain_ts;
  PretrainExtras pretrain_px;
  pretrain_cmd->add_option("input", pretrain_in,
                           "tokenized ids file ('-' = stdin)");
  pretrain_cmd->add_option("-o,--output", pretrain_out, "checkpoint output");
  auto* pt_vocab = pretrain_cmd->add_option("--vocab", pretrain_vocab,
                                            "vocabulary file");
  const ModelOpts pt_model = add_model_flags(pretrain_cmd, pretrain_ms);
  auto* pt_steps = pretrain_cmd
                       ->add_option("--steps", pretrain_ts.steps,
                                    "total optimizer steps")
                       ->capture_default_str();
  auto* pt_bs = pretrain_cmd
                    ->add_option("--batch-size", pretrain_ts.batch_size,
                                 "sequences per step (paper scale: 256)")
                    ->capture_default_str();
  auto* pt_lr = pretrain_cmd
                    ->add_option("--learning-rate", pretrain_ts.learning_rate,
                                 "AdamW learning rate")
                    ->capture_default_str();
  auto* pt_mf = pretrain_cmd
                    ->add_option("--mask-fraction", pretrain_ts.mask_fraction,
                                 "fraction of maskable positions corrupted")
                    ->capture_default_str();
  auto* pt_seed =
      pretrain_cmd->add_option("--seed", pretrain_ts.seed, "random seed")
          ->capture_default_str();
  auto* pt_save = pretrain_cmd
                      ->add_option("--save-every", pretrain_px.save_every,
                                   "checkpoint every N steps (0 = end only)")
                      ->capture_default_str();
  pretrain_cmd->add_option("--resume", pretrain_px.resume,
                           "checkpoint to continue from");
  pretrain_cmd->add_option("--config", config_path, "configuration file");

  // --- finetune ---
  auto* finetune_cmd = app.add_subcommand(
      "finetune", "Train a classifier head on a labeled CSV/TSV dataset");
  std::string finetune_data, finetune_out, finetune_vocab, finetune_init;
  DataSettings finetune_ds;
  ModelSettings finetune_ms;
  TrainSettings finetune_ts;
  finetune_cmd->add_option("data", finetune_data, "labeled dataset file")
      ->required();
  finetune_cmd->add_option("-o,--output", finetune_out, "checkpoint output");
  auto* ft_vocab =
      finetune_cmd->add_option("--vocab", finetune_vocab, "vocabulary file");
  finetune_cmd->add_option("--init", finetune_init,
                           "pretrained trunk checkpoint to start from");
  auto* ft_fmt = finetune_cmd
                     ->add_option("--format", finetune_ds.format,
                                  "dataset format: csv or tsv")
                     ->capture_default_str();
  auto* ft_tc = finetune_cmd
                    ->add_option("--text-column", finetune_ds.text_column,
                                 "text column name")
                    ->capture_default_str();
  auto* ft_lc = finetune_cmd
                    ->add_option("--label-column", finetune_ds.label_column,
                                 "label column name")
                    ->capture_default_str();
  const ModelOpts ft_model = add_model_flags(finetune_cmd, finetune_ms);
  auto* ft_epochs = finetune_cmd
                        ->add_option("--epochs", finetune_ts.epochs,
                                     "fine-tuning passes over the data")
                        ->capture_default_str();
  auto* ft_bs = finetune_cmd
                    ->add_option("--batch-size", finetune_ts.batch_size,
                                 "examples per step (paper scale: 64)")
                    ->capture_default_str();
  auto* ft_lr = finetune_cmd
                    ->add_option("--learning-rate", finetune_ts.learning_rate,
                                 "AdamW learning rate")
                    ->capture_default_str();
  auto* ft_seed =
      finetune_cmd->add_option("--seed", finetune_ts.seed, "random seed")
          ->capture_default_str();
  finetune_cmd->add_option("--config", config_path, "configuration file");

  // --- evaluate ---
  auto* eval_cmd = app.add_subcommand(
      "evaluate", "Split 80/20, fine-tune repeatedly, and report Accuracy and "
                  "Macro-F1 of the best run");
  std::string eval_data, eval_vocab, eval_init, eval_task, eval_report;
  DataSettings eval_ds;
  ModelSettings eval_ms;
  TrainSettings eval_ts;
  size_t eval_repeats = 3;
  bool eval_stratified = false;
  eval_cmd->add_option("data", eval_data, "labeled dataset file")->required();
  auto* ev_vocab =
      eval_cmd->add_option("--vocab", eval_vocab, "vocabulary file");
  eval_cmd->add_option("--init", eval_init,
                       "pretrained trunk checkpoint to start from");
  auto* ev_fmt = eval_cmd
                     ->add_option("--format", eval_ds.format,
                                  "dataset format: csv or tsv")
                     ->capture_default_str();
  auto* ev_tc = eval_cmd
                    ->add_option("--text-column", eval_ds.text_column,
                                 "text column name")
                    ->capture_default_str();
  auto* ev_lc = eval_cmd
                    ->add_option("--label-column", eval_ds.label_column,
                                 "label column name")
                    ->capture_default_str();
  const ModelOpts ev_model = add_model_flags(eval_cmd, eval_ms);
  auto* ev_repeats = eval_cmd
                         ->add_option("--repeats", eval_repeats,
                                      "fine-tuning runs (best is reported)")
                         ->capture_default_str();
  auto* ev_strat = eval_cmd->add_flag("--stratified", eval_stratified,
                                      "stratify the 80/20 split by class");
  auto* ev_epochs = eval_cmd
                        ->add_option("--epochs", eval_ts.epochs,
                                     "fine-tuning passes per run")
                        ->capture_default_str();
  auto* ev_bs = eval_cmd
                    ->add_option("--batch-size", eval_ts.batch_size,
                                 "examples per step")
                    ->capture_default_str();
  auto* ev_lr = eval_cmd
                    ->add_option("--learning-rate", eval_ts.learning_rate,
                                 "AdamW learning rate")
                    ->capture_default_str();
  auto* ev_seed = eval_cmd->add_option("--seed", eval_ts.seed, "random seed")
                      ->capture_default_str();
  auto* ev_task = eval_cmd->add_option("--task-name", eval_task,
                                       "task name for the report");
  eval_cmd->add_option("--report", eval_report,
                       "write a machine-readable JSON report here");
  eval_cmd->add_option("--config", config_path, "configuration file");

  // --- pipeline ---
  auto* pipe_cmd = app.add_subcommand(
      "pipeline", "Run geo-filter -> clean -> dedup [-> sample] -> "
                  "tokenizer-train -> tokenize -> pretrain end to end");
  std::string pipe_in = "-", pipe_workdir = "pipeline-out", pipe_out;
  uint64_t pipe_seed = 42;
  size_t pipe_threads = 1;
  double pipe_fraction = 0.0;
  pipe_cmd->add_option("input", pipe_in, "raw tweet JSONL file ('-' = stdin)");
  auto* pp_workdir = pipe_cmd
                         ->add_option("--workdir", pipe_workdir,
                                      "directory for intermediate artifacts")
                         ->capture_default_str();
  auto* pp_out = pipe_cmd->add_option("-o,--output", pipe_out,
                                      "final checkpoint (default: "
                                      "<workdir>/model.ckpt)");
  auto* pp_seed = pipe_cmd
                      ->add_option("--seed", pipe_seed,
                                   "seed for sampling and pretraining")
                      ->capture_default_str();
  auto* pp_threads = pipe_cmd
                         ->add_option("--threads", pipe_threads,
                                      "worker threads for dedup and tokenizer "
                                      "training")
                         ->capture_default_str();
  auto* pp_fraction = pipe_cmd->add_option(
      "--fraction", pipe_fraction,
      "enable the sample stage with this keep fraction");
  pipe_cmd->add_option("--config", config_path, "configuration file");

  // ---------------------------------------------------------------------
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\nRun 'lahja --help' for usage.\n";
    return 1;
  }

  try {
    if (!config_path.empty()) ini = load_config(config_path);

    if (geo_cmd->parsed()) {
      resolve(geo_terms_opt, ini, "geo-filter", "terms", geo_s.terms);
      print_header("geo-filter", geo_s.items());
      const auto rep = run_geo_stage(geo_in, geo_out, geo_s);
      std::cerr << "geo-filter: selected " << rep.selected << "/" << rep.total
                << " (country code " << rep.by_country_code << ", location "
                << rep.by_location_term << ", malformed " << rep.malformed
                << ")\n";
    } else if (clean_cmd->parsed()) {
      resolve(cl_fmt, ini, "clean", "input-format", clean_s.input_format);
      resolve(cl_minw, ini, "clean", "min-words", clean_s.min_words);
      resolve(cl_eng, ini, "clean", "english-threshold",
              clean_s.english_threshold);
      resolve(cl_dig, ini, "clean", "max-digit-run", clean_s.max_digit_run);
      resolve(cl_lcap, ini, "clean", "letter-cap", clean_s.letter_cap);
      resolve(cl_ocap, ini, "clean", "other-cap", clean_s.other_cap);
      resolve(cl_strip, ini, "clean", "strip-markup", clean_s.strip_markup);
      resolve(cl_pe, ini, "clean", "post-element", clean_s.post_element);
      resolve(cl_pc, ini, "clean", "post-class", clean_s.post_class);
      print_header("clean", clean_s.items());
      const auto counts = run_clean_stage(clean_in, clean_out, clean_s);
      std::cerr << "clean: kept " << counts.kept << "/" << counts.total
                << " (empty " << counts.empty_after_cleaning << ", short "
                << counts.too_few_words << ", english "
                << counts.too_much_english << ", malformed "
                << counts.malformed << ")\n";
    } else if (dedup_cmd->parsed()) {
      resolve(dd_shards, ini, "dedup", "shards", dedup_s.shards);
      resolve(dd_threads, ini, "dedup", "threads", dedup_s.threads);
      print_header("dedup", dedup_s.items());
      const auto rep = run_dedup_stage(dedup_in, dedup_out, dedup_s);
      std::cerr << "dedup: kept " << rep.kept << "/" << rep.total
                << " (dropped " << rep.dropped << ")\n";
    } else if (sample_cmd->parsed()) {
      resolve(sm_frac, ini, "sample", "fraction", sample_s.fraction);
      resolve(sm_seed, ini, "sample", "seed", sample_s.seed);
      print_header("sample", sample_s.items());
      const auto rep = run_sample_stage(sample_in, sample_out, sample_s);
      std::cerr << "sample: kept " << rep.kept << "/" << rep.total << "\n";
    } else if (stats_cmd->parsed()) {
      Input in(stats_in);
      const auto s = lahja::corpus::compute_stats(in.stream());
      const nlohmann::json j = {{"documents", s.documents},
                                {"words", s.words},
                                {"sentences", s.sentences},
                                {"bytes", s.bytes}};
      std::cout << j.dump() << "\n";
    } else if (toktrain_cmd->parsed()) {
      resolve(tt_vs, ini, "tokenizer-train", "vocab-size",
              toktrain_s.vocab_size);
      resolve(tt_cov, ini, "tokenizer-train", "coverage", toktrain_s.coverage);
      resolve(tt_em, ini, "tokenizer-train", "em-iters", toktrain_s.em_iters);
      resolve(tt_sf, ini, "tokenizer-train", "seed-factor",
              toktrain_s.seed_factor);
      resolve(tt_mp, ini, "tokenizer-train", "max-piece-cps",
              toktrain_s.max_piece_cps);
      resolve(tt_pk, ini, "tokenizer-train", "prune-keep",
              toktrain_s.prune_keep);
      resolve(tt_th, ini, "tokenizer-train", "threads", toktrain_s.threads);
      print_header("tokenizer-train", toktrain_s.items());
      run_toktrain_stage(toktrain_in, toktrain_out, toktrain_s);
      std::cerr << "tokenizer-train: wrote " << toktrain_s.vocab_size
                << " pieces\n";
    } else if (tokenize_cmd->parsed()) {
      resolve(tk_vocab, ini, "tokenize", "vocab", tokenize_s.vocab);
      print_header("tokenize", tokenize_s.items());
      run_tokenize_stage(tokenize_in, tokenize_out, tokenize_s);
    } else if (pretrain_cmd->parsed()) {
      resolve(pt_vocab, ini, "pretrain", "vocab", pretrain_vocab);
      resolve_model(pt_model, ini, "pretrain", pretrain_ms);
      resolve(pt_steps, ini, "pretrain", "steps", pretrain_ts.steps);
      resolve(pt_bs, ini, "pretrain", "batch-size", pretrain_ts.batch_size);
      resolve(pt_lr, ini, "pretrain", "learning-rate",
              pretrain_ts.learning_rate);
      resolve(pt_mf, ini, "pretrain", "mask-fraction",
              pretrain_ts.mask_fraction);
      resolve(pt_seed, ini, "pretrain", "seed", pretrain_ts.seed);
      resolve(pt_save, ini, "pretrain", "save-every", pretrain_px.save_every);
      Items hdr = pretrain_ms.items();
      for (auto& kv : pretrain_ts.items()) hdr.push_back(kv);
      print_header("pretrain", hdr);
      const auto rep = run_pretrain_stage(pretrain_in, pretrain_vocab,
                                          pretrain_out, pretrain_ms,
                                          pretrain_ts, pretrain_px);
      std::cerr << "pretrain: " << rep.steps << " steps over " << rep.chunks
                << " chunks, final loss " << rep.final_loss << "\n";
    } else if (finetune_cmd->parsed()) {
      resolve(ft_vocab, ini, "finetune", "vocab", finetune_vocab);
      resolve(ft_fmt, ini, "finetune", "format", finetune_ds.format);
      resolve(ft_tc, ini, "finetune", "text-column", finetune_ds.text_column);
      resolve(ft_lc, ini, "finetune", "label-column",
              finetune_ds.label_column);
      resolve_model(ft_model, ini, "finetune", finetune_ms);
      resolve(ft_epochs, ini, "finetune", "epochs", finetune_ts.epochs);
      resolve(ft_bs, ini, "finetune", "batch-size", finetune_ts.batch_size);
      resolve(ft_lr, ini, "finetune", "learning-rate",
              finetune_ts.learning_rate);
      resolve(ft_seed, ini, "finetune", "seed", finetune_ts.seed);
      if (finetune_vocab.empty())
        throw ConfigError("finetune: --vocab is required");
      if (finetune_out.empty() || finetune_out == "-")
        throw ConfigError("finetune: --output must be a file path");
      Items hdr = finetune_ds.items();
      for (auto& kv : finetune_ms.items()) hdr.push_back(kv);
      for (auto& kv : finetune_ts.items()) hdr.push_back(kv);
      print_header("finetune", hdr);
      const auto vocab = lahja::tok::SubwordVocab::load_file(finetune_vocab);
      const uint64_t vdigest = lahja::model::vocab_digest(vocab);
      const auto ds = lahja::eval::load_dataset_file(
          finetune_data, finetune_ds.table_format(), finetune_ds.text_column,
          finetune_ds.label_column, path_stem(finetune_data));
      const auto cfg =
          finetune_ms.to_config(vocab.size(), ds.label_names.size());
      const auto tc = finetune_ts.to_config(cfg.max_seq_len);
      lahja::model::Encoder enc(cfg, finetune_ts.seed);
      lahja::model::AdamW adam(tc);
      if (!finetune_init.empty()) {
        const auto ck = lahja::model::load_checkpoint_file(finetune_init);
        lahja::model::apply_checkpoint(enc, nullptr, ck, vdigest);
      }
      const auto rep = lahja::model::finetune(enc, adam, ds.rows, vocab, tc);
      lahja::model::save_checkpoint_file(finetune_out, enc, &adam,
                                         adam.steps(), vdigest);
      for (size_t e = 0; e < rep.epoch_loss.size(); ++e)
        std::cerr << "  epoch " << e + 1 << ": loss " << rep.epoch_loss[e]
                  << '\n';
      write_provenance(finetune_out, "finetune", hdr,
                       {{"labels", ds.label_names},
                        {"epochs", rep.epoch_loss.size()},
                        {"steps", rep.steps},
                        {"vocab_digest", hex64(vdigest)}});
      std::cerr << "finetune: " << rep.steps << " steps, "
                << ds.label_names.size() << " classes\n";
    } else if (eval_cmd->parsed()) {
      resolve(ev_vocab, ini, "evaluate", "vocab", eval_vocab);
      resolve(ev_fmt, ini, "evaluate", "format", eval_ds.format);
      resolve(ev_tc, ini, "evaluate", "text-column", eval_ds.text_column);
      resolve(ev_lc, ini, "evaluate", "label-column", eval_ds.label_column);
      resolve_model(ev_model, ini, "evaluate", eval_ms);
      resolve(ev_repeats, ini, "evaluate", "repeats", eval_repeats);
      resolve(ev_strat, ini, "evaluate", "stratified", eval_stratified);
      resolve(ev_epochs, ini, "evaluate", "epochs", eval_ts.epochs);
      resolve(ev_bs, ini, "evaluate", "batch-size", eval_ts.batch_size);
      resolve(ev_lr, ini, "evaluate", "learning-rate", eval_ts.learning_rate);
      resolve(ev_seed, ini, "evaluate", "seed", eval_ts.seed);
      resolve(ev_task, ini, "evaluate", "task-name", eval_task);
      if (eval_vocab.empty())
        throw ConfigError("evaluate: --vocab is required");
      Items hdr = eval_ds.items();
      for (auto& kv : eval_ms.items()) hdr.push_back(kv);
      for (auto& kv : eval_ts.items()) hdr.push_back(kv);
      hdr.push_back({"repeats", std::to_string(eval_repeats)});
      hdr.push_back({"stratified", eval_stratified ? "true" : "false"});
      print_header("evaluate", hdr);
      const auto vocab = lahja::tok::SubwordVocab::load_file(eval_vocab);
      auto ds = lahja::eval::load_dataset_file(
          eval_data, eval_ds.table_format(), eval_ds.text_column,
          eval_ds.label_column,
          eval_task.empty() ? path_stem(eval_data) : eval_task);
      const auto cfg = eval_ms.to_config(vocab.size(), 0);
      const auto tc = eval_ts.to_config(cfg.max_seq_len);
      std::optional<lahja::model::LoadedCheckpoint> trunk;
      if (!eval_init.empty())
        trunk = lahja::model::load_checkpoint_file(eval_init);
      const auto report = lahja::eval::run_task(
          ds, trunk ? &*trunk : nullptr, vocab, cfg, tc, eval_repeats,
          eval_stratified);
      std::cout << lahja::eval::render_table({report});
      if (!eval_report.empty()) {
        nlohmann::json jruns = nlohmann::json::array();
        for (const auto& run : report.runs) {
          nlohmann::json jpc = nlohmann::json::array();
          for (const auto& c : run.per_class)
            jpc.push_back({{"precision", c.precision},
                           {"recall", c.recall},
                           {"f1", c.f1},
                           {"support", c.support}});
          jruns.push_back({{"seed", run.seed},
                           {"accuracy", run.accuracy},
                           {"macro_f1", run.macro_f1},
                           {"per_class", jpc}});
        }
        nlohmann::json j = {
            {"task", report.task_name},
            {"accuracy", report.accuracy},
            {"macro_f1", report.macro_f1},
            {"n_validation", report.n_validation},
            {"best_seed", report.seed},
            {"repeats", eval_repeats},
            {"label_names", ds.label_names},
            {"runs", jruns},
            {"config_digest", hex64(settings_digest("evaluate", hdr))}};
        std::ofstream out(eval_report, std::ios::binary);
        if (!out) throw IoError("cannot write report: " + eval_report);
        out << j.dump(2) << '\n';
        if (!out) throw IoError("error writing report: " + eval_report);
      }
    } else if (pipe_cmd->parsed()) {
      resolve(pp_workdir, ini, "pipeline", "workdir", pipe_workdir);
      resolve(pp_out, ini, "pipeline", "output", pipe_out);
      std::filesystem::create_directories(pipe_workdir);
      if (pipe_out.empty()) pipe_out = pipe_workdir + "/model.ckpt";

      GeoSettings p_geo;
      resolve(nullptr, ini, "geo-filter", "terms", p_geo.terms);
      CleanSettings p_clean;
      p_clean.input_format = "jsonl";  // pipeline input is tweet records
      resolve(nullptr, ini, "clean", "input-format", p_clean.input_format);
      resolve(nullptr, ini, "clean", "min-words", p_clean.min_words);
      resolve(nullptr, ini, "clean", "english-threshold",
              p_clean.english_threshold);
      resolve(nullptr, ini, "clean", "max-digit-run", p_clean.max_digit_run);
      resolve(nullptr, ini, "clean", "letter-cap", p_clean.letter_cap);
      resolve(nullptr, ini, "clean", "other-cap", p_clean.other_cap);
      resolve(nullptr, ini, "clean", "strip-markup", p_clean.strip_markup);
      resolve(nullptr, ini, "clean", "post-element", p_clean.post_element);
      resolve(nullptr, ini, "clean", "post-class", p_clean.post_class);
      DedupSettings p_dedup;
      resolve(nullptr, ini, "dedup", "shards", p_dedup.shards);
      resolve(nullptr, ini, "dedup", "threads", p_dedup.threads);
      if (pp_threads->count() > 0) p_dedup.threads = pipe_threads;
      SampleSettings p_sample;
      resolve(nullptr, ini, "sample", "fraction", p_sample.fraction);
      resolve(nullptr, ini, "sample", "seed", p_sample.seed);
      if (pp_fraction->count() > 0) p_sample.fraction = pipe_fraction;
      if (pp_seed->count() > 0) p_sample.seed = pipe_seed;
      const bool do_sample =
          pp_fraction->count() > 0 || ini.find("sample", "fraction") != nullptr;
      TokTrainSettings p_tok;
      resolve(nullptr, ini, "tokenizer-train", "vocab-size", p_tok.vocab_size);
      resolve(nullptr, ini, "tokenizer-train", "coverage", p_tok.coverage);
      resolve(nullptr, ini, "tokenizer-train", "em-iters", p_tok.em_iters);
      resolve(nullptr, ini, "tokenizer-train", "seed-factor",
              p_tok.seed_factor);
      resolve(nullptr, ini, "tokenizer-train", "max-piece-cps",
              p_tok.max_piece_cps);
      resolve(nullptr, ini, "tokenizer-train", "prune-keep", p_tok.prune_keep);
      resolve(nullptr, ini, "tokenizer-train", "threads", p_tok.threads);
      if (pp_threads->count() > 0) p_tok.threads = pipe_threads;
      ModelSettings p_model;
      resolve_model(ModelOpts{}, ini, "pretrain", p_model);
      TrainSettings p_train;
      resolve(nullptr, ini, "pretrain", "steps", p_train.steps);
      resolve(nullptr, ini, "pretrain", "batch-size", p_train.batch_size);
      resolve(nullptr, ini, "pretrain", "learning-rate",
              p_train.learning_rate);
      resolve(nullptr, ini, "pretrain", "mask-fraction",
              p_train.mask_fraction);
      resolve(nullptr, ini, "pretrain", "seed", p_train.seed);
      if (pp_seed->count() > 0) p_train.seed = pipe_seed;
      PretrainExtras p_px;
      resolve(nullptr, ini, "pretrain", "save-every", p_px.save_every);

      const std::string filtered = pipe_workdir + "/filtered.jsonl";
      const std::string cleaned = pipe_workdir + "/cleaned.txt";
      const std::string deduped = pipe_workdir + "/deduped.txt";
      const std::string sampled = pipe_workdir + "/sampled.txt";
      const std::string vocab_path = pipe_workdir + "/vocab.tsv";
      const std::string ids_path = pipe_workdir + "/ids.txt";

      std::cerr << "pipeline: stage 1/6 geo-filter\n";
      const auto geo_rep = run_geo_stage(pipe_in, filtered, p_geo);
      std::cerr << "  selected " << geo_rep.selected << "/" << geo_rep.total
                << "\n";
      std::cerr << "pipeline: stage 2/6 clean\n";
      const auto clean_rep = run_clean_stage(filtered, cleaned, p_clean);
      std::cerr << "  kept " << clean_rep.kept << "/" << clean_rep.total
                << "\n";
      std::cerr << "pipeline: stage 3/6 dedup\n";
      const auto dedup_rep = run_dedup_stage(cleaned, deduped, p_dedup);
      std::cerr << "  kept " << dedup_rep.kept << "/" << dedup_rep.total
                << "\n";
      std::string corpus_path = deduped;
      if (do_sample) {
        std::cerr << "pipeline: extra stage sample\n";
        const auto s_rep = run_sample_stage(deduped, sampled, p_sample);
        std::cerr << "  kept " << s_rep.kept << "/" << s_rep.total << "\n";
        corpus_path = sampled;
      }
      std::cerr << "pipeline: stage 4/6 tokenizer-train\n";
      run_toktrain_stage(corpus_path, vocab_path, p_tok);
      std::cerr << "pipeline: stage 5/6 tokenize\n";
      TokenizeSettings p_tk;
      p_tk.vocab = vocab_path;
      run_tokenize_stage(corpus_path, ids_path, p_tk);
      std::cerr << "pipeline: stage 6/6 pretrain\n";
      const auto pre_rep = run_pretrain_stage(ids_path, vocab_path, pipe_out,
                                              p_model, p_train, p_px);
      std::cerr << "pipeline: done, " << pre_rep.steps
                << " pretraining steps, final loss " << pre_rep.final_loss
                << ", checkpoint " << pipe_out << "\n";
    }
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
