#pragma once

// Unicode-level normalization primitives. Two consumers with different needs:
// location matching wants aggressive canonicalization (lowercase, no symbols,
// collapsed repetitions), corpus cleaning wants only repetition caps. All
// operations are pure and total.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lahja/unicode.hpp"

namespace lahja::norm {

struct NormalizationConfig {
  bool strip_diacritics = true;
  bool strip_tatweel = true;
  bool unify_alif = true;
  bool fold_latin = true;
  bool lowercase = true;
  bool strip_symbols_punct = true;
  bool strip_emoji_except_flag = true;
  // Collapse runs of identical letters down to this length. Unset leaves runs
  // alone (cleaning mode); matching mode uses 1.
  std::optional<int> collapse_letter_runs;
  int letter_rep_cap = 5;
  int other_rep_cap = 4;
  // Off by default: the informal spellings ة/ه and ى/ي are left distinct.
  bool unify_ta_marbuta = false;
  bool unify_alif_maqsura = false;
};

// The configuration used for location-term matching.
inline NormalizationConfig matching_config() {
  NormalizationConfig cfg;
  cfg.collapse_letter_runs = 1;
  return cfg;
}

// Removes tashkeel (U+064B..U+0652) and superscript alef (U+0670).
inline std::string strip_diacritics(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  size_t pos = 0;
  while (pos < text.size()) {
    char32_t cp = uni::decode_one(text, pos);
    if (!uni::is_arabic_diacritic(cp)) uni::append_utf8(out, cp);
  }
  return out;
}

// Removes the elongation character U+0640.
inline std::string strip_tatweel(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  size_t pos = 0;
  while (pos < text.size()) {
    char32_t cp = uni::decode_one(text, pos);
    if (!uni::is_tatweel(cp)) uni::append_utf8(out, cp);
  }
  return out;
}

// Maps hamza-carrying alif forms (أ إ آ) to bare alif (ا).
inline std::string unify_alif(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  size_t pos = 0;
  while (pos < text.size()) {
    char32_t cp = uni::decode_one(text, pos);
    if (cp == 0x0622 || cp == 0x0623 || cp == 0x0625) cp = uni::kAlif;
    uni::append_utf8(out, cp);
  }
  return out;
}

// Reduces accented Latin letters to their ASCII base (á -> a), both for
// precomposed codepoints and for combining accents following a Latin base.
inline std::string fold_latin(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  size_t pos = 0;
  char32_t prev = 0;
  while (pos < text.size()) {
    char32_t cp = uni::decode_one(text, pos);
    char32_t folded = uni::latin_fold(cp);
    if (folded == cp && cp >= 0x0300 && cp <= 0x036F &&
        uni::is_ascii_letter(prev)) {
      continue;  // combining accent on a Latin base
    }
    uni::append_utf8(out, folded);
    prev = folded;
  }
  return out;
}

namespace detail {

inline bool same_cluster(const std::vector<char32_t>& cps,
                         const uni::Grapheme& a, const uni::Grapheme& b) {
  if (a.end - a.begin != b.end - b.begin) return false;
  for (size_t i = 0; i < a.end - a.begin; ++i) {
    if (cps[a.begin + i] != cps[b.begin + i]) return false;
  }
  return true;
}

// Truncates runs of identical grapheme clusters. letter_cap applies to
// clusters whose base codepoint is a letter; other_cap to everything else.
// cap_others=false leaves non-letter runs untouched (matching mode).
inline std::vector<char32_t> cap_runs(const std::vector<char32_t>& cps,
                                      int letter_cap, int other_cap,
                                      bool cap_others) {
  std::vector<uni::Grapheme> gs = uni::graphemes(cps);
  std::vector<char32_t> out;
  out.reserve(cps.size());
  size_t i = 0;
  while (i < gs.size()) {
    size_t j = i + 1;
    while (j < gs.size() && same_cluster(cps, gs[i], gs[j])) ++j;
    const size_t run = j - i;
    const bool letter = uni::is_letter(cps[gs[i].begin]);
    size_t keep = run;
    if (letter) {
      keep = std::min<size_t>(run, static_cast<size_t>(letter_cap));
    } else if (cap_others) {
      keep = std::min<size_t>(run, static_cast<size_t>(other_cap));
    }
    for (size_t k = 0; k < keep; ++k) {
      for (size_t c = gs[i].begin; c < gs[i].end; ++c) out.push_back(cps[c]);
    }
    i = j;
  }
  return out;
}

inline std::vector<char32_t> collapse_whitespace(
    const std::vector<char32_t>& cps) {
  std::vector<char32_t> out;
  out.reserve(cps.size());
  bool pending_space = false;
  for (char32_t cp : cps) {
    if (uni::is_whitespace(cp)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(cp);
  }
  return out;
}

}  // namespace detail

// Truncates each maximal run of one repeated grapheme cluster: letters to
// letter_cap occurrences, everything else to other_cap.
inline std::string cap_repetitions(std::string_view text, int letter_cap,
                                   int other_cap) {
  std::vector<char32_t> cps = uni::decode(text);
  return uni::encode(detail::cap_runs(cps, letter_cap, other_cap, true));
}

// Canonicalizes free-form text for term matching. Fixed rule order: Latin
// folding, lowercasing, diacritic/tatweel removal, alif unification, then
// symbol/punctuation/emoji removal (Saudi flag kept), letter-run collapse,
// and whitespace normalization.
inline std::string normalize_for_matching(std::string_view text,
                                          const NormalizationConfig& cfg) {
  std::vector<char32_t> cps;
  cps.reserve(text.size());
  size_t pos = 0;
  char32_t prev = 0;
  while (pos < text.size()) {
    char32_t cp = uni::decode_one(text, pos);
    if (cfg.fold_latin) {
      char32_t folded = uni::latin_fold(cp);
      if (folded == cp && cp >= 0x0300 && cp <= 0x036F &&
          uni::is_ascii_letter(prev)) {
        continue;
      }
      cp = folded;
    }
    if (cfg.lowercase) cp = uni::to_lower(cp);
    if (cfg.strip_diacritics && uni::is_arabic_diacritic(cp)) continue;
    if (cfg.strip_tatweel && uni::is_tatweel(cp)) continue;
    if (cfg.unify_alif && (cp == 0x0622 || cp == 0x0623 || cp == 0x0625))
      cp = uni::kAlif;
    if (cfg.unify_ta_marbuta && cp == 0x0629) cp = 0x0647;
    if (cfg.unify_alif_maqsura && cp == 0x0649) cp = 0x064A;
    cps.push_back(cp);
    prev = cp;
  }

  // Cluster-level pass: drop emoji (except the Saudi flag, canonicalized to
  // the bare pair) and symbols/punctuation, replacing them with spaces so
  // word boundaries survive.
  std::vector<char32_t> kept;
  kept.reserve(cps.size());
  for (const uni::Grapheme& g : uni::graphemes(cps)) {
    char32_t base = cps[g.begin];
    if (uni::is_whitespace(base)) {
      kept.push_back(' ');
      continue;
    }
    if (cfg.strip_emoji_except_flag) {
      if (uni::is_saudi_flag(cps, g)) {
        // surrounded by spaces so the flag is always its own token
        kept.push_back(' ');
        kept.push_back(uni::kRegionalS);
        kept.push_back(uni::kRegionalA);
        kept.push_back(' ');
        continue;
      }
      if (uni::contains_pictographic(cps, g) ||
          uni::is_variation_selector(base) || uni::is_skin_tone(base)) {
        kept.push_back(' ');
        continue;
      }
    }
    if (cfg.strip_symbols_punct && uni::is_punct_or_symbol(base)) {
      kept.push_back(' ');
      continue;
    }
    for (size_t c = g.begin; c < g.end; ++c) kept.push_back(cps[c]);
  }

  if (cfg.collapse_letter_runs) {
    kept = detail::cap_runs(kept, *cfg.collapse_letter_runs, 0, false);
  }
  return uni::encode(detail::collapse_whitespace(kept));
}

}  // namespace lahja::norm
