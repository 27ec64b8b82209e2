#pragma once

// Tweet selection by place country code and profile-location term matching.
// A record is kept when its country code is SA, or when its free-form
// location, canonicalized by normalize_for_matching, contains a term from the
// configured list.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "lahja/error.hpp"
#include "lahja/normalize.hpp"
#include "lahja/unicode.hpp"

namespace lahja::geo {

struct TweetRecord {
  std::string id;
  std::string text;
  std::optional<std::string> location;
  std::optional<std::string> country_code;
};

enum class MatchSource { country_code, location_term, none };

struct MatchResult {
  bool matched = false;
  std::optional<std::string> matched_term;  // set iff source is location_term
  MatchSource source = MatchSource::none;
};

namespace detail {

struct Term {
  std::string text;     // canonical form
  size_t cp_len = 0;    // codepoints, for longest-first ordering
  size_t letters = 0;   // letter codepoints, for the boundary rule
  bool has_flag = false;
};

inline bool find_term(const std::string& hay, const std::string& needle,
                      bool whole_word) {
  size_t pos = 0;
  while ((pos = hay.find(needle, pos)) != std::string::npos) {
    if (!whole_word) return true;
    const size_t end = pos + needle.size();
    const bool left = pos == 0 || hay[pos - 1] == ' ';
    const bool right = end == hay.size() || hay[end] == ' ';
    if (left && right) return true;
    ++pos;
  }
  return false;
}

}  // namespace detail

// Normalized, deduplicated term list, ordered longest term first so the most
// specific term is the one reported.
class TermList {
 public:
  static TermList from_lines(const std::vector<std::string>& lines,
                             const std::string& source) {
    TermList tl;
    tl.source_ = source;
    for (const std::string& raw : lines) {
      if (!raw.empty() && raw[0] == '#') continue;
      std::string canon = norm::normalize_for_matching(raw, tl.cfg_);
      if (canon.empty()) {
        ++tl.skipped_;
        continue;
      }
      bool dup = false;
      for (const detail::Term& t : tl.terms_) {
        if (t.text == canon) {
          dup = true;
          break;
        }
      }
      if (dup) continue;
      detail::Term term;
      term.text = canon;
      std::vector<char32_t> cps = uni::decode(canon);
      term.cp_len = cps.size();
      for (size_t i = 0; i < cps.size(); ++i) {
        if (uni::is_letter(cps[i])) ++term.letters;
        if (cps[i] == uni::kRegionalS && i + 1 < cps.size() &&
            cps[i + 1] == uni::kRegionalA) {
          term.has_flag = true;
        }
      }
      tl.terms_.push_back(std::move(term));
    }
    if (tl.terms_.empty()) {
      throw ConfigError("term list '" + source + "' has no usable terms");
    }
    std::sort(tl.terms_.begin(), tl.terms_.end(),
              [](const detail::Term& a, const detail::Term& b) {
                if (a.cp_len != b.cp_len) return a.cp_len > b.cp_len;
                return a.text < b.text;
              });
    return tl;
  }

  static TermList load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open term list: " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      lines.push_back(line);
    }
    return from_lines(lines, path);
  }

  size_t size() const { return terms_.size(); }
  size_t skipped() const { return skipped_; }
  const std::string& source() const { return source_; }
  const std::vector<detail::Term>& terms() const { return terms_; }
  const norm::NormalizationConfig& config() const { return cfg_; }

 private:
  std::vector<detail::Term> terms_;
  std::string source_;
  size_t skipped_ = 0;
  norm::NormalizationConfig cfg_ = norm::matching_config();
};

inline MatchResult match_country_code(const TweetRecord& rec) {
  MatchResult r;
  if (!rec.country_code) return r;
  const std::string& cc = *rec.country_code;
  if (cc.size() == 2 && (cc[0] == 'S' || cc[0] == 's') &&
      (cc[1] == 'A' || cc[1] == 'a')) {
    r.matched = true;
    r.source = MatchSource::country_code;
  }
  return r;
}

// Terms with at least 4 letters match as substrings of the normalized
// location; shorter terms only at word boundaries (so "ksa" cannot fire
// inside an unrelated word); the flag emoji matches anywhere.
inline MatchResult match_location(const std::string& location,
                                  const TermList& terms) {
  MatchResult r;
  std::string canon = norm::normalize_for_matching(location, terms.config());
  if (canon.empty()) return r;
  for (const detail::Term& t : terms.terms()) {
    const bool whole_word = t.letters < 4 && !t.has_flag;
    if (detail::find_term(canon, t.text, whole_word)) {
      r.matched = true;
      r.matched_term = t.text;
      r.source = MatchSource::location_term;
      return r;
    }
  }
  return r;
}

// Country code takes precedence; location matching is the fallback.
inline MatchResult match_record(const TweetRecord& rec,
                                const TermList& terms) {
  MatchResult cc = match_country_code(rec);
  if (cc.matched) return cc;
  if (rec.location) return match_location(*rec.location, terms);
  return MatchResult{};
}

struct FilterReport {
  uint64_t total = 0;
  uint64_t selected = 0;
  uint64_t by_country_code = 0;
  uint64_t by_location_term = 0;
  uint64_t unmatched = 0;
  uint64_t malformed = 0;
};

// One JSONL record. Returns nothing for lines that do not parse or lack the
// required fields; the caller counts those as malformed.
inline std::optional<TweetRecord> parse_record(const std::string& line) {
  nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) return std::nullopt;
  TweetRecord rec;
  auto id = j.find("id");
  if (id == j.end()) return std::nullopt;
  if (id->is_string()) {
    rec.id = id->get<std::string>();
  } else if (id->is_number_integer()) {
    rec.id = std::to_string(id->get<int64_t>());
  } else {
    return std::nullopt;
  }
  if (rec.id.empty()) return std::nullopt;
  auto text = j.find("text");
  if (text == j.end() || !text->is_string()) return std::nullopt;
  rec.text = text->get<std::string>();
  auto loc = j.find("location");
  if (loc != j.end()) {
    if (loc->is_string()) {
      rec.location = loc->get<std::string>();
    } else if (!loc->is_null()) {
      return std::nullopt;
    }
  }
  auto cc = j.find("country_code");
  if (cc != j.end()) {
    if (cc->is_string()) {
      rec.country_code = cc->get<std::string>();
    } else if (!cc->is_null()) {
      return std::nullopt;
    }
  }
  return rec;
}

inline std::vector<TweetRecord> filter_records(
    const std::vector<TweetRecord>& records, const TermList& terms,
    FilterReport* report = nullptr) {
  std::vector<TweetRecord> selected;
  FilterReport local;
  for (const TweetRecord& rec : records) {
    ++local.total;
    MatchResult m = match_record(rec, terms);
    if (m.matched) {
      ++local.selected;
      if (m.source == MatchSource::country_code) ++local.by_country_code;
      if (m.source == MatchSource::location_term) ++local.by_location_term;
      selected.push_back(rec);
    } else {
      ++local.unmatched;
    }
  }
  if (report) *report = local;
  return selected;
}

// Streaming form used by the CLI: selected input lines are echoed verbatim,
// so the output is byte-identical to the matching subset of the input.
inline void filter_lines(std::istream& in, std::ostream& out,
                         const TermList& terms, FilterReport& report) {
  std::string line;
  while (std::getline(in, line)) {
    ++report.total;
    std::optional<TweetRecord> rec = parse_record(line);
    if (!rec) {
      ++report.malformed;
      ++report.unmatched;
      continue;
    }
    MatchResult m = match_record(*rec, terms);
    if (m.matched) {
      ++report.selected;
      if (m.source == MatchSource::country_code) ++report.by_country_code;
      if (m.source == MatchSource::location_term) ++report.by_location_term;
      out << line << '\n';
    } else {
      ++report.unmatched;
    }
  }
}

}  // namespace lahja::geo
