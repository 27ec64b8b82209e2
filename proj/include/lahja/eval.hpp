#pragma once

// Evaluation harness: labeled-dataset loading (CSV/TSV with quoted fields),
// seeded 80/20 splitting, repeated fine-tuning runs, and Accuracy/Macro-F1
// reporting rendered as a two-decimal table with an unweighted average row.
//
// Conventions: class ids are assigned densely in first-appearance order;
// precision, recall, and F1 are each defined as 0 whenever their denominator
// is 0; macro-F1 averages over all classes, including ones absent from the
// validation labels. Repeated runs vary the seed and the best macro-F1 run
// is reported, with every run retained alongside it.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "lahja/error.hpp"
#include "lahja/model.hpp"
#include "lahja/tokenizer.hpp"

namespace lahja::eval {

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

struct LabeledDataset {
  std::vector<std::pair<std::string, int>> rows;  // (text, class id)
  std::vector<std::string> label_names;
  std::string task_name;

  void validate() const {
    if (rows.empty()) throw ValidationError("dataset: no rows");
    if (label_names.size() < 2)
      throw ValidationError("dataset: needs >= 2 distinct labels");
    for (const auto& [text, label] : rows) {
      if (label < 0 || static_cast<size_t>(label) >= label_names.size())
        throw ValidationError("dataset: label id out of range");
    }
  }
};

namespace detail {

// RFC-style delimited records: fields may be double-quoted; a quoted field
// may contain the delimiter, newlines, and doubled quotes. CRLF line ends
// are accepted; fully empty lines are skipped.
inline std::vector<std::vector<std::string>> parse_delimited(std::istream& in,
                                                             char delim) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool was_quoted = false;
  auto end_field = [&] {
    record.push_back(std::move(field));
    field.clear();
    was_quoted = false;
  };
  auto end_record = [&] {
    end_field();
    if (!(record.size() == 1 && record[0].empty()))  // skip blank lines
      records.push_back(std::move(record));
    record.clear();
  };
  int ci;
  while ((ci = in.get()) != std::char_traits<char>::eof()) {
    const char c = static_cast<char>(ci);
    if (in_quotes) {
      if (c == '"') {
        if (in.peek() == '"') {
          field.push_back('"');
          in.get();
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    if (c == '"') {
      if (!field.empty() || was_quoted)
        throw ValidationError("dataset: stray quote inside unquoted field");
      in_quotes = true;
      was_quoted = true;
    } else if (c == delim) {
      end_field();
    } else if (c == '\n') {
      end_record();
    } else if (c == '\r' && in.peek() == '\n') {
      in.get();
      end_record();
    } else {
      if (was_quoted)
        throw ValidationError("dataset: content after closing quote");
      field.push_back(c);
    }
  }
  if (in_quotes) throw ValidationError("dataset: unterminated quoted field");
  if (!field.empty() || !record.empty() || was_quoted) end_record();
  return records;
}

}  // namespace detail

enum class TableFormat { csv, tsv };

inline LabeledDataset load_dataset(std::istream& in, TableFormat format,
                                   const std::string& text_column,
                                   const std::string& label_column,
                                   std::string task_name = "task") {
  const char delim = format == TableFormat::csv ? ',' : '\t';
  const auto records = detail::parse_delimited(in, delim);
  if (records.empty()) throw ValidationError("dataset: empty file");
  const auto& header = records[0];
  size_t text_idx = header.size(), label_idx = header.size();
  for (size_t i = 0; i < header.size(); ++i) {
    if (header[i] == text_column) text_idx = i;
    if (header[i] == label_column) label_idx = i;
  }
  if (text_idx == header.size())
    throw ConfigError("dataset: missing text column: " + text_column);
  if (label_idx == header.size())
    throw ConfigError("dataset: missing label column: " + label_column);
  if (records.size() == 1) throw ValidationError("dataset: no data rows");
  LabeledDataset ds;
  ds.task_name = std::move(task_name);
  std::unordered_map<std::string, int> label_ids;
  for (size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != header.size())
      throw ValidationError("dataset: row " + std::to_string(r) + " has " +
                            std::to_string(records[r].size()) +
                            " fields, expected " +
                            std::to_string(header.size()));
    const std::string& name = records[r][label_idx];
    auto [it, inserted] =
        label_ids.emplace(name, static_cast<int>(ds.label_names.size()));
    if (inserted) ds.label_names.push_back(name);
    ds.rows.emplace_back(records[r][text_idx], it->second);
  }
  ds.validate();
  return ds;
}

inline LabeledDataset load_dataset_file(const std::string& path,
                                        TableFormat format,
                                        const std::string& text_column,
                                        const std::string& label_column,
                                        std::string task_name = "task") {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("dataset: cannot read: " + path);
  return load_dataset(in, format, text_column, label_column,
                      std::move(task_name));
}

// ---------------------------------------------------------------------------
// Splitting
// ---------------------------------------------------------------------------

// Seeded uniform shuffle; first ceil(0.8 n) rows train, remainder validation.
// With stratified=true the 80/20 rule is applied within each class instead.
inline std::pair<LabeledDataset, LabeledDataset> split_80_20(
    const LabeledDataset& ds, uint64_t seed, bool stratified = false) {
  if (ds.rows.size() < 5)
    throw ValidationError("split: needs >= 5 rows, have " +
                          std::to_string(ds.rows.size()));
  auto shuffle = [](std::vector<size_t>& idx, uint64_t s) {
    model::Rng rng(s);
    for (size_t i = idx.size(); i > 1; --i) {
      const size_t j = static_cast<size_t>(rng.next_below(i));
      std::swap(idx[i - 1], idx[j]);
    }
  };
  auto cut = [](size_t n) { return (4 * n + 4) / 5; };  // ceil(0.8 n)
  std::vector<size_t> train_idx, val_idx;
  if (!stratified) {
    std::vector<size_t> idx(ds.rows.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    shuffle(idx, seed);
    const size_t k = cut(idx.size());
    train_idx.assign(idx.begin(), idx.begin() + static_cast<long>(k));
    val_idx.assign(idx.begin() + static_cast<long>(k), idx.end());
  } else {
    std::vector<std::vector<size_t>> by_class(ds.label_names.size());
    for (size_t i = 0; i < ds.rows.size(); ++i)
      by_class[static_cast<size_t>(ds.rows[i].second)].push_back(i);
    for (size_t c = 0; c < by_class.size(); ++c) {
      shuffle(by_class[c], model::mix_seed(seed, 0x57A7ULL, c));
      const size_t k = cut(by_class[c].size());
      for (size_t i = 0; i < by_class[c].size(); ++i)
        (i < k ? train_idx : val_idx).push_back(by_class[c][i]);
    }
  }
  auto take = [&](const std::vector<size_t>& idx) {
    LabeledDataset out;
    out.label_names = ds.label_names;
    out.task_name = ds.task_name;
    out.rows.reserve(idx.size());
    for (size_t i : idx) out.rows.push_back(ds.rows[i]);
    return out;
  };
  return {take(train_idx), take(val_idx)};
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

inline double accuracy(const std::vector<int>& preds,
                       const std::vector<int>& labels) {
  if (preds.size() != labels.size())
    throw ValidationError("metrics: prediction/label length mismatch");
  if (preds.empty()) throw ValidationError("metrics: empty prediction list");
  size_t correct = 0;
  for (size_t i = 0; i < preds.size(); ++i)
    if (preds[i] == labels[i]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(preds.size());
}

struct ClassStats {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  size_t support = 0;  // gold occurrences of the class
};

struct MacroF1 {
  double macro = 0.0;
  std::vector<ClassStats> per_class;
};

// Per class: P = TP/(TP+FP), R = TP/(TP+FN), F1 = 2PR/(P+R), each 0 when its
// denominator is 0. Macro-F1 averages F1 over all num_classes classes.
inline MacroF1 macro_f1(const std::vector<int>& preds,
                        const std::vector<int>& labels, size_t num_classes) {
  if (preds.size() != labels.size())
    throw ValidationError("metrics: prediction/label length mismatch");
  if (preds.empty()) throw ValidationError("metrics: empty prediction list");
  if (num_classes == 0) throw ValidationError("metrics: zero classes");
  std::vector<size_t> tp(num_classes, 0), fp(num_classes, 0),
      fn(num_classes, 0);
  for (size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] < 0 || static_cast<size_t>(preds[i]) >= num_classes ||
        labels[i] < 0 || static_cast<size_t>(labels[i]) >= num_classes)
      throw ValidationError("metrics: class id out of range");
    if (preds[i] == labels[i]) {
      ++tp[static_cast<size_t>(labels[i])];
    } else {
      ++fp[static_cast<size_t>(preds[i])];
      ++fn[static_cast<size_t>(labels[i])];
    }
  }
  MacroF1 out;
  out.per_class.resize(num_classes);
  double sum = 0.0;
  for (size_t c = 0; c < num_classes; ++c) {
    ClassStats& s = out.per_class[c];
    const size_t denom_p = tp[c] + fp[c];
    const size_t denom_r = tp[c] + fn[c];
    s.precision = denom_p ? static_cast<double>(tp[c]) /
                                static_cast<double>(denom_p)
                          : 0.0;
    s.recall = denom_r ? static_cast<double>(tp[c]) /
                             static_cast<double>(denom_r)
                       : 0.0;
    s.f1 = (s.precision + s.recall) > 0.0
               ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
               : 0.0;
    s.support = tp[c] + fn[c];
    sum += s.f1;
  }
  out.macro = sum / static_cast<double>(num_classes);
  return out;
}

// ---------------------------------------------------------------------------
// Task runner
// ---------------------------------------------------------------------------

struct RunResult {
  uint64_t seed = 0;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::vector<ClassStats> per_class;
};

struct EvalReport {
  std::string task_name;
  double accuracy = 0.0;   // of the best run
  double macro_f1 = 0.0;   // of the best run
  std::vector<ClassStats> per_class;
  size_t n_validation = 0;
  uint64_t seed = 0;       // seed of the best run
  std::vector<RunResult> runs;
};

// Fine-tunes `repeats` times with distinct derived seeds on a shared 80/20
// split, evaluates each run on the same validation set, and reports the run
// with the highest macro-F1. `trunk` optionally holds pretrained weights.
inline EvalReport run_task(const LabeledDataset& ds,
                           const model::LoadedCheckpoint* trunk,
                           const tok::SubwordVocab& vocab,
                           const model::EncoderConfig& base_cfg,
                           const model::TrainingConfig& tcfg,
                           size_t repeats = 3, bool stratified = false) {
  ds.validate();
  if (repeats == 0) throw ConfigError("evaluate: repeats must be >= 1");
  model::EncoderConfig cfg = base_cfg;
  cfg.num_labels = ds.label_names.size();
  cfg.validate();
  const auto [train, validation] = split_80_20(ds, tcfg.seed, stratified);
  std::vector<int> gold;
  gold.reserve(validation.rows.size());
  for (const auto& [text, label] : validation.rows) gold.push_back(label);

  EvalReport report;
  report.task_name = ds.task_name;
  report.n_validation = validation.rows.size();
  const uint64_t vdigest = model::vocab_digest(vocab);
  size_t best = 0;
  for (size_t r = 0; r < repeats; ++r) {
    const uint64_t run_seed = model::mix_seed(tcfg.seed, 0xF17EULL, r);
    model::Encoder enc(cfg, run_seed);
    model::AdamW adam(tcfg);
    if (trunk) model::apply_checkpoint(enc, nullptr, *trunk, vdigest);
    model::TrainingConfig run_cfg = tcfg;
    run_cfg.seed = run_seed;
    model::finetune(enc, adam, train.rows, vocab, run_cfg);
    std::vector<int> preds;
    preds.reserve(validation.rows.size());
    for (const auto& [text, label] : validation.rows)
      preds.push_back(model::predict(enc, text, vocab));
    RunResult run;
    run.seed = run_seed;
    run.accuracy = accuracy(preds, gold);
    const MacroF1 f1 = macro_f1(preds, gold, ds.label_names.size());
    run.macro_f1 = f1.macro;
    run.per_class = f1.per_class;
    if (!report.runs.empty() && run.macro_f1 > report.runs[best].macro_f1)
      best = report.runs.size();
    report.runs.push_back(std::move(run));
  }
  const RunResult& win = report.runs[best];
  report.accuracy = win.accuracy;
  report.macro_f1 = win.macro_f1;
  report.per_class = win.per_class;
  report.seed = win.seed;
  return report;
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

// Two-decimal percentage table with a final unweighted average row:
//   Task          Acc. / F1
//   my-task      90.06 / 86.15
//   Avg.         90.06 / 86.15
inline std::string render_table(const std::vector<EvalReport>& reports) {
  if (reports.empty())
    throw ValidationError("render: needs >= 1 report");
  size_t width = 4;  // "Avg."
  for (const auto& r : reports) width = std::max(width, r.task_name.size());
  std::ostringstream out;
  auto row = [&](const std::string& name, double acc, double f1) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.2f / %.2f", 100.0 * acc, 100.0 * f1);
    out << name;
    for (size_t i = name.size(); i < width + 2; ++i) out << ' ';
    out << buf << '\n';
  };
  out << "Task";
  for (size_t i = 4; i < width + 2; ++i) out << ' ';
  out << "Acc. / F1\n";
  double acc_sum = 0.0, f1_sum = 0.0;
  for (const auto& r : reports) {
    row(r.task_name, r.accuracy, r.macro_f1);
    acc_sum += r.accuracy;
    f1_sum += r.macro_f1;
  }
  row("Avg.", acc_sum / static_cast<double>(reports.size()),
      f1_sum / static_cast<double>(reports.size()));
  return out.str();
}

}  // namespace lahja::eval
