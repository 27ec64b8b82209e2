#pragma once

// Corpus cleaning rules for tweet text and forum text: URL/mention/hashtag
// removal, email removal, HTML/BBCode/percent-encoding stripping, long-number
// removal, repetition capping, and the keep/drop decision (word count and
// English ratio). Emojis, emoticons, punctuation, and diacritics are never
// removed by design.

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "lahja/error.hpp"
#include "lahja/normalize.hpp"
#include "lahja/unicode.hpp"

namespace lahja::clean {

enum class Source { tweet, forum };

struct Document {
  std::string doc_id;
  std::string text;
  Source source = Source::tweet;
  std::string origin;
};

enum class Reason { kept, too_few_words, too_much_english, empty_after_cleaning };

struct FilterDecision {
  bool kept = false;
  Reason reason = Reason::kept;
};

inline const char* reason_name(Reason r) {
  switch (r) {
    case Reason::kept: return "kept";
    case Reason::too_few_words: return "too_few_words";
    case Reason::too_much_english: return "too_much_english";
    case Reason::empty_after_cleaning: return "empty_after_cleaning";
  }
  return "?";
}

struct CleanConfig {
  int min_words = 3;
  double english_ratio_threshold = 0.5;
  int max_digit_run = 7;
  int letter_rep_cap = 5;
  int other_rep_cap = 4;
  bool strip_markup = false;  // forum mode
  // forum post container selector: element name + class token
  std::string post_element = "div";
  std::string post_class = "postcontent";

  void validate() const {
    if (min_words < 1) throw ConfigError("min_words must be >= 1");
    if (!(english_ratio_threshold > 0.0 && english_ratio_threshold <= 1.0))
      throw ConfigError("english_ratio_threshold must be in (0,1]");
    if (max_digit_run < 1) throw ConfigError("max_digit_run must be >= 1");
    if (letter_rep_cap < 1 || other_rep_cap < 1)
      throw ConfigError("repetition caps must be >= 1");
  }
};

namespace detail {

inline std::string collapse_ws(std::string_view s) {
  return uni::encode(norm::detail::collapse_whitespace(uni::decode(s)));
}

inline bool ascii_alpha(char c) {
  return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z');
}

inline bool hex_digit(char c) {
  return (c >= '0' && c <= '9') || (c >= 'A' && c <= 'F') ||
         (c >= 'a' && c <= 'f');
}

inline char ascii_lower(char c) {
  return (c >= 'A' && c <= 'Z') ? static_cast<char>(c + 0x20) : c;
}

}  // namespace detail

// Removes URLs (scheme://... and www....), @-mentions, and whole hashtag
// tokens (# plus its text). Output is whitespace-normalized.
inline std::string remove_urls_mentions_hashtags(std::string_view text) {
  std::vector<char32_t> cps = uni::decode(text);
  const size_t n = cps.size();
  std::vector<char32_t> out;
  out.reserve(n);
  size_t i = 0;
  auto at_token_start = [&](size_t k) {
    return k == 0 || !uni::is_word_char(cps[k - 1]);
  };
  auto is_scheme_char = [](char32_t c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
           (c >= '0' && c <= '9') || c == '+' || c == '-' || c == '.';
  };
  while (i < n) {
    char32_t c = cps[i];
    // scheme://rest-until-whitespace
    if (is_scheme_char(c) && at_token_start(i)) {
      size_t j = i;
      while (j < n && is_scheme_char(cps[j])) ++j;
      if (j + 2 < n && cps[j] == ':' && cps[j + 1] == '/' && cps[j + 2] == '/' &&
          uni::is_ascii_letter(cps[i])) {
        size_t k = j + 3;
        while (k < n && !uni::is_whitespace(cps[k])) ++k;
        out.push_back(' ');
        i = k;
        continue;
      }
    }
    // www.rest-until-whitespace
    if ((c == 'w' || c == 'W') && at_token_start(i) && i + 3 < n &&
        (cps[i + 1] == 'w' || cps[i + 1] == 'W') &&
        (cps[i + 2] == 'w' || cps[i + 2] == 'W') && cps[i + 3] == '.') {
      size_t k = i + 4;
      while (k < n && !uni::is_whitespace(cps[k])) ++k;
      out.push_back(' ');
      i = k;
      continue;
    }
    // @mention
    if (c == '@' && at_token_start(i) && i + 1 < n &&
        uni::is_word_char(cps[i + 1])) {
      size_t k = i + 1;
      while (k < n && uni::is_word_char(cps[k])) ++k;
      out.push_back(' ');
      i = k;
      continue;
    }
    // #hashtag, whole token
    if (c == '#' && i + 1 < n && uni::is_word_char(cps[i + 1])) {
      size_t k = i + 1;
      while (k < n && uni::is_word_char(cps[k])) ++k;
      out.push_back(' ');
      i = k;
      continue;
    }
    out.push_back(c);
    ++i;
  }
  return uni::encode(norm::detail::collapse_whitespace(out));
}

// Removes local@domain.tld tokens. Local and domain parts are ASCII; the
// domain must contain a dot with a 2+ letter final label.
inline std::string remove_emails(std::string_view text) {
  std::string s(text);
  std::string out;
  out.reserve(s.size());
  auto local_char = [](char c) {
    return detail::ascii_alpha(c) || (c >= '0' && c <= '9') || c == '.' ||
           c == '_' || c == '%' || c == '+' || c == '-';
  };
  auto domain_char = [](char c) {
    return detail::ascii_alpha(c) || (c >= '0' && c <= '9') || c == '.' ||
           c == '-';
  };
  size_t i = 0;
  while (i < s.size()) {
    if (s[i] == '@') {
      size_t lstart = out.size();
      size_t taken = 0;
      while (lstart > 0 && local_char(out[lstart - 1])) {
        --lstart;
        ++taken;
      }
      size_t rend = i + 1;
      while (rend < s.size() && domain_char(s[rend])) ++rend;
      std::string domain = s.substr(i + 1, rend - i - 1);
      size_t dot = domain.rfind('.');
      bool domain_ok = dot != std::string::npos && dot > 0 &&
                       domain.size() - dot - 1 >= 2;
      if (domain_ok) {
        for (size_t k = dot + 1; k < domain.size(); ++k) {
          if (!detail::ascii_alpha(domain[k])) domain_ok = false;
        }
      }
      if (taken > 0 && domain_ok) {
        out.resize(lstart);
        out.push_back(' ');
        i = rend;
        continue;
      }
    }
    out.push_back(s[i]);
    ++i;
  }
  return detail::collapse_ws(out);
}

namespace detail {

// One pass of tag removal: <name ...>, </name>, <!...> become spaces.
// A '<' that does not start a plausible tag, or whose tag never closes,
// stays literal (so "a<b" and "<3" survive).
inline std::string strip_tags_once(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  size_t i = 0;
  while (i < s.size()) {
    if (s[i] == '<' && i + 1 < s.size() &&
        (ascii_alpha(s[i + 1]) || s[i + 1] == '/' || s[i + 1] == '!' ||
         s[i + 1] == '?')) {
      size_t close = s.find('>', i + 1);
      if (close != std::string::npos) {
        out.push_back(' ');
        i = close + 1;
        continue;
      }
    }
    out.push_back(s[i]);
    ++i;
  }
  return out;
}

// One pass of BBCode removal: [name], [/name], [name=attr] become spaces,
// keeping inner text. Names are ASCII letters or '*'; anything else (e.g.
// Arabic text in brackets) stays.
inline std::string strip_bbcode_once(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  size_t i = 0;
  while (i < s.size()) {
    if (s[i] == '[') {
      size_t j = i + 1;
      if (j < s.size() && s[j] == '/') ++j;
      size_t name_begin = j;
      while (j < s.size() && (ascii_alpha(s[j]) || s[j] == '*')) ++j;
      bool has_name = j > name_begin;
      if (has_name && j < s.size() && s[j] == '=') {
        while (j < s.size() && s[j] != ']' && s[j] != '[' && s[j] != '\n') ++j;
      }
      if (has_name && j < s.size() && s[j] == ']') {
        out.push_back(' ');
        i = j + 1;
        continue;
      }
    }
    out.push_back(s[i]);
    ++i;
  }
  return out;
}

// One pass removing maximal %XX%XX... runs. A lone '%' or '%' without two
// hex digits stays (percentages are punctuation worth keeping).
inline std::string strip_percent_once(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  size_t i = 0;
  while (i < s.size()) {
    if (s[i] == '%' && i + 2 < s.size() && hex_digit(s[i + 1]) &&
        hex_digit(s[i + 2])) {
      size_t j = i;
      while (j + 2 < s.size() && s[j] == '%' && hex_digit(s[j + 1]) &&
             hex_digit(s[j + 2])) {
        j += 3;
      }
      out.push_back(' ');
      i = j;
      continue;
    }
    out.push_back(s[i]);
    ++i;
  }
  return out;
}

struct NamedEntity {
  const char* name;
  char32_t cp;
};

inline const NamedEntity* entity_table(size_t& count) {
  static const NamedEntity table[] = {
      {"amp", '&'},      {"lt", '<'},       {"gt", '>'},
      {"quot", '"'},     {"apos", '\''},    {"nbsp", ' '},
      {"copy", 0x00A9},  {"reg", 0x00AE},   {"trade", 0x2122},
      {"hellip", 0x2026}, {"mdash", 0x2014}, {"ndash", 0x2013},
      {"lsquo", 0x2018}, {"rsquo", 0x2019}, {"ldquo", 0x201C},
      {"rdquo", 0x201D}, {"laquo", 0x00AB}, {"raquo", 0x00BB},
      {"deg", 0x00B0},   {"middot", 0x00B7}, {"bull", 0x2022},
  };
  count = sizeof(table) / sizeof(table[0]);
  return table;
}

// One pass of entity decoding: &name;, &#123;, &#x1F602;. Unknown or
// malformed entities stay literal.
inline std::string decode_entities_once(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  size_t i = 0;
  while (i < s.size()) {
    if (s[i] == '&' && i + 1 < s.size()) {
      size_t semi = s.find(';', i + 1);
      if (semi != std::string::npos && semi - i <= 12) {
        std::string body = s.substr(i + 1, semi - i - 1);
        char32_t cp = 0;
        bool ok = false;
        if (body.size() >= 2 && body[0] == '#') {
          uint64_t v = 0;
          bool hex = body[1] == 'x' || body[1] == 'X';
          size_t k = hex ? 2 : 1;
          ok = k < body.size();
          for (; k < body.size() && ok; ++k) {
            char c = body[k];
            int d;
            if (c >= '0' && c <= '9') {
              d = c - '0';
            } else if (hex && c >= 'a' && c <= 'f') {
              d = c - 'a' + 10;
            } else if (hex && c >= 'A' && c <= 'F') {
              d = c - 'A' + 10;
            } else {
              ok = false;
              break;
            }
            v = v * (hex ? 16 : 10) + static_cast<uint64_t>(d);
            if (v > 0x10FFFF) {
              ok = false;
              break;
            }
          }
          cp = static_cast<char32_t>(v);
          if (cp == 0 || (cp >= 0xD800 && cp <= 0xDFFF)) ok = false;
        } else {
          size_t cnt = 0;
          const NamedEntity* table = entity_table(cnt);
          for (size_t t = 0; t < cnt; ++t) {
            if (body == table[t].name) {
              cp = table[t].cp;
              ok = true;
              break;
            }
          }
        }
        if (ok) {
          uni::append_utf8(out, cp);
          i = semi + 1;
          continue;
        }
      }
    }
    out.push_back(s[i]);
    ++i;
  }
  return out;
}

}  // namespace detail

// Removes HTML tags, BBCode tags (inner text kept), and percent-encoded runs;
// decodes HTML character entities. Iterated to a fixed point so that markup
// revealed by entity decoding is also stripped and reapplication is a no-op.
// Every rewriting pass strictly shrinks the string, so the loop terminates.
inline std::string strip_markup(std::string_view text) {
  std::string cur(text);
  for (;;) {
    std::string next = detail::decode_entities_once(detail::strip_percent_once(
        detail::strip_bbcode_once(detail::strip_tags_once(cur))));
    if (next == cur) break;
    cur = std::move(next);
  }
  return detail::collapse_ws(cur);
}

// Removes every maximal run of more than max_digit_run consecutive digits
// (ASCII or Arabic-Indic).
inline std::string remove_long_numbers(std::string_view text,
                                       int max_digit_run) {
  std::vector<char32_t> cps = uni::decode(text);
  std::vector<char32_t> out;
  out.reserve(cps.size());
  size_t i = 0;
  while (i < cps.size()) {
    if (uni::is_digit(cps[i])) {
      size_t j = i;
      while (j < cps.size() && uni::is_digit(cps[j])) ++j;
      if (j - i > static_cast<size_t>(max_digit_run)) {
        out.push_back(' ');
      } else {
        for (size_t k = i; k < j; ++k) out.push_back(cps[k]);
      }
      i = j;
      continue;
    }
    out.push_back(cps[i]);
    ++i;
  }
  return uni::encode(norm::detail::collapse_whitespace(out));
}

// Latin-script letters over all Latin+Arabic letters; 0 when there are none.
inline double english_ratio(std::string_view text) {
  size_t latin = 0, arabic = 0;
  size_t pos = 0;
  while (pos < text.size()) {
    char32_t cp = uni::decode_one(text, pos);
    if (uni::is_latin_letter(cp)) ++latin;
    else if (uni::is_arabic_letter(cp)) ++arabic;
  }
  const size_t denom = latin + arabic;
  if (denom == 0) return 0.0;
  return static_cast<double>(latin) / static_cast<double>(denom);
}

inline size_t count_words(std::string_view text) {
  size_t words = 0;
  bool in_word = false;
  size_t pos = 0;
  while (pos < text.size()) {
    char32_t cp = uni::decode_one(text, pos);
    if (uni::is_whitespace(cp)) {
      in_word = false;
    } else if (!in_word) {
      in_word = true;
      ++words;
    }
  }
  return words;
}

// The full text transform, in frozen order. Does not decide keep/drop.
inline std::string clean_text(std::string_view text, const CleanConfig& cfg) {
  std::string s = cfg.strip_markup ? strip_markup(text) : std::string(text);
  s = remove_urls_mentions_hashtags(s);
  s = remove_emails(s);
  s = detail::collapse_ws(s);
  s = remove_long_numbers(s, cfg.max_digit_run);
  s = norm::cap_repetitions(s, cfg.letter_rep_cap, cfg.other_rep_cap);
  return detail::collapse_ws(s);
}

// Cleans and decides. Decision order: empty, then word count, then English
// ratio (an empty result is reported as empty_after_cleaning, not as a word
// count failure).
inline std::pair<Document, FilterDecision> clean_document(
    const Document& doc, const CleanConfig& cfg) {
  Document out = doc;
  out.text = clean_text(doc.text, cfg);
  FilterDecision d;
  if (out.text.empty()) {
    d.kept = false;
    d.reason = Reason::empty_after_cleaning;
  } else if (count_words(out.text) < static_cast<size_t>(cfg.min_words)) {
    d.kept = false;
    d.reason = Reason::too_few_words;
  } else if (english_ratio(out.text) > cfg.english_ratio_threshold) {
    d.kept = false;
    d.reason = Reason::too_much_english;
  } else {
    d.kept = true;
    d.reason = Reason::kept;
  }
  return {std::move(out), d};
}

// ---------------------------------------------------------------------------
// Forum HTML ingestion
// ---------------------------------------------------------------------------

namespace detail {

inline std::string ascii_lower_str(std::string s) {
  for (char& c : s) c = ascii_lower(c);
  return s;
}

// Removes <script>/<style> elements and <!-- --> comments before extraction.
inline std::string drop_inert_html(const std::string& html) {
  std::string out;
  out.reserve(html.size());
  size_t i = 0;
  auto starts_with_ci = [&](size_t pos, const char* lit) {
    for (size_t k = 0; lit[k]; ++k) {
      if (pos + k >= html.size() || ascii_lower(html[pos + k]) != lit[k])
        return false;
    }
    return true;
  };
  while (i < html.size()) {
    if (starts_with_ci(i, "<!--")) {
      size_t end = html.find("-->", i + 4);
      i = end == std::string::npos ? html.size() : end + 3;
      out.push_back(' ');
      continue;
    }
    bool skipped = false;
    for (const char* elem : {"script", "style"}) {
      std::string open = std::string("<") + elem;
      if (starts_with_ci(i, open.c_str())) {
        std::string close = std::string("</") + elem;
        size_t j = i + open.size();
        size_t end = std::string::npos;
        for (; j + close.size() <= html.size(); ++j) {
          if (starts_with_ci(j, close.c_str())) {
            end = html.find('>', j);
            break;
          }
        }
        i = end == std::string::npos ? html.size() : end + 1;
        out.push_back(' ');
        skipped = true;
        break;
      }
    }
    if (skipped) continue;
    out.push_back(html[i]);
    ++i;
  }
  return out;
}

struct HtmlTag {
  bool closing = false;
  std::string name;          // lowercase
  std::string class_attr;    // raw class attribute value
  size_t begin = 0, end = 0; // byte span including <>
};

inline std::vector<HtmlTag> scan_tags(const std::string& html) {
  std::vector<HtmlTag> tags;
  size_t i = 0;
  while (i < html.size()) {
    if (html[i] != '<' || i + 1 >= html.size() ||
        !(ascii_alpha(html[i + 1]) || html[i + 1] == '/')) {
      ++i;
      continue;
    }
    size_t close = html.find('>', i + 1);
    if (close == std::string::npos) break;
    HtmlTag tag;
    tag.begin = i;
    tag.end = close + 1;
    size_t p = i + 1;
    if (html[p] == '/') {
      tag.closing = true;
      ++p;
    }
    size_t name_begin = p;
    while (p < close && (ascii_alpha(html[p]) || (html[p] >= '0' && html[p] <= '9')))
      ++p;
    tag.name = ascii_lower_str(html.substr(name_begin, p - name_begin));
    // find class="..." (or '...' or bare) among the attributes
    std::string attrs = html.substr(p, close - p);
    std::string lower = ascii_lower_str(attrs);
    size_t cpos = 0;
    while ((cpos = lower.find("class", cpos)) != std::string::npos) {
      bool left_ok = cpos == 0 || lower[cpos - 1] == ' ' ||
                     lower[cpos - 1] == '\t' || lower[cpos - 1] == '\n';
      size_t q = cpos + 5;
      while (q < attrs.size() && (attrs[q] == ' ' || attrs[q] == '\t')) ++q;
      if (left_ok && q < attrs.size() && attrs[q] == '=') {
        ++q;
        while (q < attrs.size() && (attrs[q] == ' ' || attrs[q] == '\t')) ++q;
        if (q < attrs.size() && (attrs[q] == '"' || attrs[q] == '\'')) {
          char quote = attrs[q];
          size_t vend = attrs.find(quote, q + 1);
          if (vend != std::string::npos) {
            tag.class_attr = attrs.substr(q + 1, vend - q - 1);
          }
        } else {
          size_t vend = q;
          while (vend < attrs.size() && attrs[vend] != ' ' &&
                 attrs[vend] != '\t' && attrs[vend] != '/')
            ++vend;
          tag.class_attr = attrs.substr(q, vend - q);
        }
        break;
      }
      cpos += 5;
    }
    tags.push_back(std::move(tag));
    i = close + 1;
  }
  return tags;
}

inline bool class_has_token(const std::string& class_attr,
                            const std::string& token) {
  std::istringstream ss(class_attr);
  std::string tok;
  while (ss >> tok) {
    if (ascii_lower_str(tok) == token) return true;
  }
  return false;
}

}  // namespace detail

struct HtmlExtract {
  std::vector<Document> documents;
  bool non_html = false;
};

// Extracts one Document per post container (element+class from cfg) from an
// HTML file; falls back to the whole page when no container matches. A file
// with no markup at all is reported as non-HTML and yields nothing.
inline HtmlExtract html_to_documents(const std::string& html,
                                     const std::string& doc_id_prefix,
                                     const std::string& origin,
                                     const CleanConfig& cfg) {
  HtmlExtract result;
  if (html.empty()) return result;

  bool has_tag = false;
  for (size_t i = 0; i + 1 < html.size(); ++i) {
    if (html[i] == '<' &&
        (detail::ascii_alpha(html[i + 1]) || html[i + 1] == '/' ||
         html[i + 1] == '!')) {
      has_tag = true;
      break;
    }
  }
  if (!has_tag) {
    result.non_html = true;
    return result;
  }

  std::string body = detail::drop_inert_html(html);
  std::vector<detail::HtmlTag> tags = detail::scan_tags(body);
  const std::string want_elem = detail::ascii_lower_str(cfg.post_element);
  const std::string want_class = detail::ascii_lower_str(cfg.post_class);

  size_t count = 0;
  size_t t = 0;
  while (t < tags.size()) {
    const detail::HtmlTag& open = tags[t];
    if (open.closing || open.name != want_elem ||
        !detail::class_has_token(open.class_attr, want_class)) {
      ++t;
      continue;
    }
    int depth = 1;
    size_t u = t + 1;
    size_t inner_end = std::string::npos;
    for (; u < tags.size(); ++u) {
      if (tags[u].name != want_elem) continue;
      depth += tags[u].closing ? -1 : 1;
      if (depth == 0) {
        inner_end = tags[u].begin;
        break;
      }
    }
    std::string inner =
        inner_end == std::string::npos
            ? body.substr(open.end)
            : body.substr(open.end, inner_end - open.end);
    std::string text = strip_markup(inner);
    if (!text.empty()) {
      Document doc;
      doc.doc_id = doc_id_prefix + "#" + std::to_string(++count);
      doc.text = std::move(text);
      doc.source = Source::forum;
      doc.origin = origin;
      result.documents.push_back(std::move(doc));
    }
    t = inner_end == std::string::npos ? tags.size() : u + 1;
  }

  if (result.documents.empty()) {
    std::string text = strip_markup(body);
    if (!text.empty()) {
      Document doc;
      doc.doc_id = doc_id_prefix + "#1";
      doc.text = std::move(text);
      doc.source = Source::forum;
      doc.origin = origin;
      result.documents.push_back(std::move(doc));
    }
  }
  return result;
}

inline HtmlExtract html_file_to_documents(const std::string& path,
                                          const CleanConfig& cfg) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open HTML file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw IoError("error reading HTML file: " + path);
  std::string base = path;
  size_t slash = base.find_last_of("/\\");
  if (slash != std::string::npos) base = base.substr(slash + 1);
  size_t dot = base.find_last_of('.');
  if (dot != std::string::npos && dot > 0) base = base.substr(0, dot);
  return html_to_documents(buf.str(), base, path, cfg);
}

}  // namespace lahja::clean
