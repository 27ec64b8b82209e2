#pragma once

// Minimal UTF-8 codec and the codepoint classification this toolkit needs.
// Classification tables are pragmatic: they cover the scripts that occur in
// Arabic social-media text (Arabic, Latin, common symbol/emoji blocks), not
// the full Unicode character database.

#include <algorithm>
#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace lahja::uni {

inline constexpr char32_t kReplacement = 0xFFFD;
inline constexpr char32_t kTatweel = 0x0640;
inline constexpr char32_t kAlif = 0x0627;
inline constexpr char32_t kZwj = 0x200D;
inline constexpr char32_t kVs16 = 0xFE0F;
// The Saudi flag is the regional-indicator pair S + A.
inline constexpr char32_t kRegionalS = 0x1F1F8;
inline constexpr char32_t kRegionalA = 0x1F1E6;

// ---------------------------------------------------------------------------
// UTF-8 codec
// ---------------------------------------------------------------------------

// Decodes one codepoint starting at 'pos'. Invalid bytes decode to U+FFFD and
// advance by one byte, so decoding always terminates and never throws.
inline char32_t decode_one(std::string_view s, size_t& pos) {
  const auto byte = [&](size_t i) { return static_cast<unsigned char>(s[i]); };
  unsigned char b0 = byte(pos);
  if (b0 < 0x80) {
    ++pos;
    return b0;
  }
  int len = 0;
  char32_t cp = 0;
  if ((b0 & 0xE0) == 0xC0) {
    len = 2;
    cp = b0 & 0x1F;
  } else if ((b0 & 0xF0) == 0xE0) {
    len = 3;
    cp = b0 & 0x0F;
  } else if ((b0 & 0xF8) == 0xF0) {
    len = 4;
    cp = b0 & 0x07;
  } else {
    ++pos;
    return kReplacement;
  }
  if (pos + len > s.size()) {
    ++pos;
    return kReplacement;
  }
  for (int i = 1; i < len; ++i) {
    if ((byte(pos + i) & 0xC0) != 0x80) {
      ++pos;
      return kReplacement;
    }
    cp = (cp << 6) | (byte(pos + i) & 0x3F);
  }
  // Reject overlong forms and surrogates.
  if ((len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) ||
      (len == 4 && cp < 0x10000) || cp > 0x10FFFF ||
      (cp >= 0xD800 && cp <= 0xDFFF)) {
    ++pos;
    return kReplacement;
  }
  pos += len;
  return cp;
}

inline void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

inline std::vector<char32_t> decode(std::string_view s) {
  std::vector<char32_t> cps;
  cps.reserve(s.size());
  size_t pos = 0;
  while (pos < s.size()) cps.push_back(decode_one(s, pos));
  return cps;
}

inline std::string encode(const std::vector<char32_t>& cps) {
  std::string out;
  out.reserve(cps.size());
  for (char32_t cp : cps) append_utf8(out, cp);
  return out;
}

inline std::string encode_one(char32_t cp) {
  std::string out;
  append_utf8(out, cp);
  return out;
}

// ---------------------------------------------------------------------------
// Codepoint classes
// ---------------------------------------------------------------------------

struct Range {
  char32_t lo, hi;
};

template <size_t N>
inline bool in_ranges(const std::array<Range, N>& table, char32_t cp) {
  auto it = std::upper_bound(
      table.begin(), table.end(), cp,
      [](char32_t v, const Range& r) { return v < r.lo; });
  return it != table.begin() && cp <= std::prev(it)->hi;
}

// Tashkeel U+064B..U+0652 plus superscript alef U+0670.
inline bool is_arabic_diacritic(char32_t cp) {
  return (cp >= 0x064B && cp <= 0x0652) || cp == 0x0670;
}

inline bool is_tatweel(char32_t cp) { return cp == kTatweel; }

inline bool is_arabic_letter(char32_t cp) {
  static constexpr std::array<Range, 9> table{{
      {0x0620, 0x063F},  // hamza forms, alif forms, core letters
      {0x0641, 0x064A},  // feh..yeh
      {0x0671, 0x06D3},  // extended letters (alif wasla, pe, che, ...)
      {0x06D5, 0x06D5},
      {0x06EE, 0x06EF},
      {0x06FA, 0x06FF},
      {0x0750, 0x077F},  // Arabic Supplement
      {0x08A0, 0x08C9},  // Arabic Extended-A letters
      {0xFB50, 0xFDFF},  // presentation forms
  }};
  return in_ranges(table, cp);
}

inline bool is_ascii_letter(char32_t cp) {
  return (cp >= 'A' && cp <= 'Z') || (cp >= 'a' && cp <= 'z');
}

inline bool is_latin_letter(char32_t cp) {
  if (is_ascii_letter(cp)) return true;
  static constexpr std::array<Range, 6> table{{
      {0x00AA, 0x00AA},
      {0x00BA, 0x00BA},
      {0x00C0, 0x00FF},  // Latin-1 letters; 0xD7/0xF7 excluded below
      {0x0100, 0x024F},  // Latin Extended-A/B
      {0x1E00, 0x1EFF},  // Latin Extended Additional
      {0x2C60, 0x2C7F},
  }};
  if (cp == 0x00D7 || cp == 0x00F7) return false;
  return in_ranges(table, cp);
}

// Letters of the scripts this pipeline can meet. Used for repetition-run
// classification and word-character tests.
inline bool is_letter(char32_t cp) {
  if (is_ascii_letter(cp) || is_arabic_letter(cp) || is_latin_letter(cp))
    return true;
  static constexpr std::array<Range, 6> table{{
      {0x0370, 0x03FF},  // Greek
      {0x0400, 0x052F},  // Cyrillic
      {0x05D0, 0x05EA},  // Hebrew
      {0x4E00, 0x9FFF},  // CJK unified
      {0x3040, 0x30FF},  // kana
      {0xAC00, 0xD7A3},  // hangul
  }};
  return in_ranges(table, cp);
}

// ASCII digits plus Arabic-Indic and Eastern Arabic-Indic digits.
inline bool is_digit(char32_t cp) {
  return (cp >= '0' && cp <= '9') || (cp >= 0x0660 && cp <= 0x0669) ||
         (cp >= 0x06F0 && cp <= 0x06F9);
}

inline bool is_word_char(char32_t cp) {
  return cp == '_' || is_letter(cp) || is_digit(cp);
}

inline bool is_combining_mark(char32_t cp) {
  static constexpr std::array<Range, 12> table{{
      {0x0300, 0x036F},
      {0x0483, 0x0489},
      {0x0591, 0x05C7},
      {0x0610, 0x061A},
      {0x064B, 0x065F},
      {0x0670, 0x0670},
      {0x06D6, 0x06DC},
      {0x06DF, 0x06E4},
      {0x06E7, 0x06E8},
      {0x06EA, 0x06ED},
      {0x08CA, 0x08FF},
      {0x20D0, 0x20FF},
  }};
  return in_ranges(table, cp);
}

inline bool is_variation_selector(char32_t cp) {
  return cp >= 0xFE00 && cp <= 0xFE0F;
}

inline bool is_skin_tone(char32_t cp) { return cp >= 0x1F3FB && cp <= 0x1F3FF; }

inline bool is_regional_indicator(char32_t cp) {
  return cp >= 0x1F1E6 && cp <= 0x1F1FF;
}

inline bool is_whitespace(char32_t cp) {
  return cp == ' ' || cp == '\t' || cp == '\n' || cp == '\r' || cp == '\f' ||
         cp == '\v' || cp == 0x0085 || cp == 0x00A0 ||
         (cp >= 0x2000 && cp <= 0x200A) || cp == 0x2028 || cp == 0x2029 ||
         cp == 0x202F || cp == 0x205F || cp == 0x3000 || cp == 0xFEFF;
}

// Unicode Extended_Pictographic, by block. A handful of reserved codepoints
// inside these blocks are swept in; harmless for cleaning purposes.
inline bool is_pictographic(char32_t cp) {
  static constexpr std::array<Range, 28> table{{
      {0x00A9, 0x00A9}, {0x00AE, 0x00AE}, {0x203C, 0x203C},
      {0x2049, 0x2049}, {0x2122, 0x2122}, {0x2139, 0x2139},
      {0x2194, 0x2199}, {0x21A9, 0x21AA}, {0x231A, 0x231B},
      {0x2328, 0x2328}, {0x23CF, 0x23CF}, {0x23E9, 0x23F3},
      {0x23F8, 0x23FA}, {0x24C2, 0x24C2}, {0x25AA, 0x25AB},
      {0x25B6, 0x25B6}, {0x25C0, 0x25C0}, {0x25FB, 0x25FE},
      {0x2600, 0x27BF}, {0x2934, 0x2935}, {0x2B05, 0x2B07},
      {0x2B1B, 0x2B1C}, {0x2B50, 0x2B50}, {0x2B55, 0x2B55},
      {0x3030, 0x3030}, {0x303D, 0x303D}, {0x3297, 0x3299},
      {0x1F000, 0x1FAFF},
  }};
  return in_ranges(table, cp);
}

// Emoji for cleaning purposes: pictographic plus regional indicators and the
// glue codepoints that only occur inside emoji sequences.
inline bool is_emoji_component(char32_t cp) {
  return is_pictographic(cp) || is_regional_indicator(cp) ||
         is_skin_tone(cp) || cp == kVs16 || cp == kZwj;
}

inline bool is_punct_or_symbol(char32_t cp) {
  if (cp < 0x80) {
    return (cp >= '!' && cp <= '/') || (cp >= ':' && cp <= '@') ||
           (cp >= '[' && cp <= '`') || (cp >= '{' && cp <= '~');
  }
  static constexpr std::array<Range, 22> table{{
      {0x00A1, 0x00BF},  // Latin-1 punctuation and signs (ª º handled as letters)
      {0x00D7, 0x00D7}, {0x00F7, 0x00F7},
      {0x060C, 0x060C},  // Arabic comma
      {0x061B, 0x061B},  // Arabic semicolon
      {0x061E, 0x061F},  // Arabic question mark
      {0x066A, 0x066D},  // percent, decimal/thousands separators, star
      {0x06D4, 0x06D4},  // full stop
      {0x2000, 0x206F},  // general punctuation (incl. ZWJ/ZWNJ)
      {0x2070, 0x209F}, {0x20A0, 0x20CF}, {0x2100, 0x214F},
      {0x2190, 0x21FF}, {0x2200, 0x23FF}, {0x2460, 0x24FF},
      {0x25A0, 0x27BF}, {0x2900, 0x2BFF}, {0x3000, 0x303F},
      {0xFD3E, 0xFD3F}, {0xFE10, 0xFE6F}, {0xFF01, 0xFF65},
      {0xFFE0, 0xFFEE},
  }};
  if (is_latin_letter(cp)) return false;
  return in_ranges(table, cp);
}

// ---------------------------------------------------------------------------
// Latin folding and lowercasing (tables frozen from NFKD)
// ---------------------------------------------------------------------------

struct CpMap {
  char32_t from, to;
};

// Precomposed Latin letters -> ASCII base letter, per compatibility
// decomposition with the combining marks dropped.
inline char32_t latin_fold(char32_t cp) {
  static constexpr std::array<CpMap, 492> table{{
    {0x00AA, 0x0061}, {0x00BA, 0x006F}, {0x00C0, 0x0041}, {0x00C1, 0x0041}, {0x00C2, 0x0041}, {0x00C3, 0x0041}, {0x00C4, 0x0041}, {0x00C5, 0x0041},
    {0x00C7, 0x0043}, {0x00C8, 0x0045}, {0x00C9, 0x0045}, {0x00CA, 0x0045}, {0x00CB, 0x0045}, {0x00CC, 0x0049}, {0x00CD, 0x0049}, {0x00CE, 0x0049},
    {0x00CF, 0x0049}, {0x00D1, 0x004E}, {0x00D2, 0x004F}, {0x00D3, 0x004F}, {0x00D4, 0x004F}, {0x00D5, 0x004F}, {0x00D6, 0x004F}, {0x00D9, 0x0055},
    {0x00DA, 0x0055}, {0x00DB, 0x0055}, {0x00DC, 0x0055}, {0x00DD, 0x0059}, {0x00E0, 0x0061}, {0x00E1, 0x0061}, {0x00E2, 0x0061}, {0x00E3, 0x0061},
    {0x00E4, 0x0061}, {0x00E5, 0x0061}, {0x00E7, 0x0063}, {0x00E8, 0x0065}, {0x00E9, 0x0065}, {0x00EA, 0x0065}, {0x00EB, 0x0065}, {0x00EC, 0x0069},
    {0x00ED, 0x0069}, {0x00EE, 0x0069}, {0x00EF, 0x0069}, {0x00F1, 0x006E}, {0x00F2, 0x006F}, {0x00F3, 0x006F}, {0x00F4, 0x006F}, {0x00F5, 0x006F},
    {0x00F6, 0x006F}, {0x00F9, 0x0075}, {0x00FA, 0x0075}, {0x00FB, 0x0075}, {0x00FC, 0x0075}, {0x00FD, 0x0079}, {0x00FF, 0x0079}, {0x0100, 0x0041},
    {0x0101, 0x0061}, {0x0102, 0x0041}, {0x0103, 0x0061}, {0x0104, 0x0041}, {0x0105, 0x0061}, {0x0106, 0x0043}, {0x0107, 0x0063}, {0x0108, 0x0043},
    {0x0109, 0x0063}, {0x010A, 0x0043}, {0x010B, 0x0063}, {0x010C, 0x0043}, {0x010D, 0x0063}, {0x010E, 0x0044}, {0x010F, 0x0064}, {0x0112, 0x0045},
    {0x0113, 0x0065}, {0x0114, 0x0045}, {0x0115, 0x0065}, {0x0116, 0x0045}, {0x0117, 0x0065}, {0x0118, 0x0045}, {0x0119, 0x0065}, {0x011A, 0x0045},
    {0x011B, 0x0065}, {0x011C, 0x0047}, {0x011D, 0x0067}, {0x011E, 0x0047}, {0x011F, 0x0067}, {0x0120, 0x0047}, {0x0121, 0x0067}, {0x0122, 0x0047},
    {0x0123, 0x0067}, {0x0124, 0x0048}, {0x0125, 0x0068}, {0x0128, 0x0049}, {0x0129, 0x0069}, {0x012A, 0x0049}, {0x012B, 0x0069}, {0x012C, 0x0049},
    {0x012D, 0x0069}, {0x012E, 0x0049}, {0x012F, 0x0069}, {0x0130, 0x0049}, {0x0134, 0x004A}, {0x0135, 0x006A}, {0x0136, 0x004B}, {0x0137, 0x006B},
    {0x0139, 0x004C}, {0x013A, 0x006C}, {0x013B, 0x004C}, {0x013C, 0x006C}, {0x013D, 0x004C}, {0x013E, 0x006C}, {0x0143, 0x004E}, {0x0144, 0x006E},
    {0x0145, 0x004E}, {0x0146, 0x006E}, {0x0147, 0x004E}, {0x0148, 0x006E}, {0x014C, 0x004F}, {0x014D, 0x006F}, {0x014E, 0x004F}, {0x014F, 0x006F},
    {0x0150, 0x004F}, {0x0151, 0x006F}, {0x0154, 0x0052}, {0x0155, 0x0072}, {0x0156, 0x0052}, {0x0157, 0x0072}, {0x0158, 0x0052}, {0x0159, 0x0072},
    {0x015A, 0x0053}, {0x015B, 0x0073}, {0x015C, 0x0053}, {0x015D, 0x0073}, {0x015E, 0x0053}, {0x015F, 0x0073}, {0x0160, 0x0053}, {0x0161, 0x0073},
    {0x0162, 0x0054}, {0x0163, 0x0074}, {0x0164, 0x0054}, {0x0165, 0x0074}, {0x0168, 0x0055}, {0x0169, 0x0075}, {0x016A, 0x0055}, {0x016B, 0x0075},
    {0x016C, 0x0055}, {0x016D, 0x0075}, {0x016E, 0x0055}, {0x016F, 0x0075}, {0x0170, 0x0055}, {0x0171, 0x0075}, {0x0172, 0x0055}, {0x0173, 0x0075},
    {0x0174, 0x0057}, {0x0175, 0x0077}, {0x0176, 0x0059}, {0x0177, 0x0079}, {0x0178, 0x0059}, {0x0179, 0x005A}, {0x017A, 0x007A}, {0x017B, 0x005A},
    {0x017C, 0x007A}, {0x017D, 0x005A}, {0x017E, 0x007A}, {0x017F, 0x0073}, {0x01A0, 0x004F}, {0x01A1, 0x006F}, {0x01AF, 0x0055}, {0x01B0, 0x0075},
    {0x01CD, 0x0041}, {0x01CE, 0x0061}, {0x01CF, 0x0049}, {0x01D0, 0x0069}, {0x01D1, 0x004F}, {0x01D2, 0x006F}, {0x01D3, 0x0055}, {0x01D4, 0x0075},
    {0x01D5, 0x0055}, {0x01D6, 0x0075}, {0x01D7, 0x0055}, {0x01D8, 0x0075}, {0x01D9, 0x0055}, {0x01DA, 0x0075}, {0x01DB, 0x0055}, {0x01DC, 0x0075},
    {0x01DE, 0x0041}, {0x01DF, 0x0061}, {0x01E0, 0x0041}, {0x01E1, 0x0061}, {0x01E6, 0x0047}, {0x01E7, 0x0067}, {0x01E8, 0x004B}, {0x01E9, 0x006B},
    {0x01EA, 0x004F}, {0x01EB, 0x006F}, {0x01EC, 0x004F}, {0x01ED, 0x006F}, {0x01F0, 0x006A}, {0x01F4, 0x0047}, {0x01F5, 0x0067}, {0x01F8, 0x004E},
    {0x01F9, 0x006E}, {0x01FA, 0x0041}, {0x01FB, 0x0061}, {0x0200, 0x0041}, {0x0201, 0x0061}, {0x0202, 0x0041}, {0x0203, 0x0061}, {0x0204, 0x0045},
    {0x0205, 0x0065}, {0x0206, 0x0045}, {0x0207, 0x0065}, {0x0208, 0x0049}, {0x0209, 0x0069}, {0x020A, 0x0049}, {0x020B, 0x0069}, {0x020C, 0x004F},
    {0x020D, 0x006F}, {0x020E, 0x004F}, {0x020F, 0x006F}, {0x0210, 0x0052}, {0x0211, 0x0072}, {0x0212, 0x0052}, {0x0213, 0x0072}, {0x0214, 0x0055},
    {0x0215, 0x0075}, {0x0216, 0x0055}, {0x0217, 0x0075}, {0x0218, 0x0053}, {0x0219, 0x0073}, {0x021A, 0x0054}, {0x021B, 0x0074}, {0x021E, 0x0048},
    {0x021F, 0x0068}, {0x0226, 0x0041}, {0x0227, 0x0061}, {0x0228, 0x0045}, {0x0229, 0x0065}, {0x022A, 0x004F}, {0x022B, 0x006F}, {0x022C, 0x004F},
    {0x022D, 0x006F}, {0x022E, 0x004F}, {0x022F, 0x006F}, {0x0230, 0x004F}, {0x0231, 0x006F}, {0x0232, 0x0059}, {0x0233, 0x0079}, {0x1E00, 0x0041},
    {0x1E01, 0x0061}, {0x1E02, 0x0042}, {0x1E03, 0x0062}, {0x1E04, 0x0042}, {0x1E05, 0x0062}, {0x1E06, 0x0042}, {0x1E07, 0x0062}, {0x1E08, 0x0043},
    {0x1E09, 0x0063}, {0x1E0A, 0x0044}, {0x1E0B, 0x0064}, {0x1E0C, 0x0044}, {0x1E0D, 0x0064}, {0x1E0E, 0x0044}, {0x1E0F, 0x0064}, {0x1E10, 0x0044},
    {0x1E11, 0x0064}, {0x1E12, 0x0044}, {0x1E13, 0x0064}, {0x1E14, 0x0045}, {0x1E15, 0x0065}, {0x1E16, 0x0045}, {0x1E17, 0x0065}, {0x1E18, 0x0045},
    {0x1E19, 0x0065}, {0x1E1A, 0x0045}, {0x1E1B, 0x0065}, {0x1E1C, 0x0045}, {0x1E1D, 0x0065}, {0x1E1E, 0x0046}, {0x1E1F, 0x0066}, {0x1E20, 0x0047},
    {0x1E21, 0x0067}, {0x1E22, 0x0048}, {0x1E23, 0x0068}, {0x1E24, 0x0048}, {0x1E25, 0x0068}, {0x1E26, 0x0048}, {0x1E27, 0x0068}, {0x1E28, 0x0048},
    {0x1E29, 0x0068}, {0x1E2A, 0x0048}, {0x1E2B, 0x0068}, {0x1E2C, 0x0049}, {0x1E2D, 0x0069}, {0x1E2E, 0x0049}, {0x1E2F, 0x0069}, {0x1E30, 0x004B},
    {0x1E31, 0x006B}, {0x1E32, 0x004B}, {0x1E33, 0x006B}, {0x1E34, 0x004B}, {0x1E35, 0x006B}, {0x1E36, 0x004C}, {0x1E37, 0x006C}, {0x1E38, 0x004C},
    {0x1E39, 0x006C}, {0x1E3A, 0x004C}, {0x1E3B, 0x006C}, {0x1E3C, 0x004C}, {0x1E3D, 0x006C}, {0x1E3E, 0x004D}, {0x1E3F, 0x006D}, {0x1E40, 0x004D},
    {0x1E41, 0x006D}, {0x1E42, 0x004D}, {0x1E43, 0x006D}, {0x1E44, 0x004E}, {0x1E45, 0x006E}, {0x1E46, 0x004E}, {0x1E47, 0x006E}, {0x1E48, 0x004E},
    {0x1E49, 0x006E}, {0x1E4A, 0x004E}, {0x1E4B, 0x006E}, {0x1E4C, 0x004F}, {0x1E4D, 0x006F}, {0x1E4E, 0x004F}, {0x1E4F, 0x006F}, {0x1E50, 0x004F},
    {0x1E51, 0x006F}, {0x1E52, 0x004F}, {0x1E53, 0x006F}, {0x1E54, 0x0050}, {0x1E55, 0x0070}, {0x1E56, 0x0050}, {0x1E57, 0x0070}, {0x1E58, 0x0052},
    {0x1E59, 0x0072}, {0x1E5A, 0x0052}, {0x1E5B, 0x0072}, {0x1E5C, 0x0052}, {0x1E5D, 0x0072}, {0x1E5E, 0x0052}, {0x1E5F, 0x0072}, {0x1E60, 0x0053},
    {0x1E61, 0x0073}, {0x1E62, 0x0053}, {0x1E63, 0x0073}, {0x1E64, 0x0053}, {0x1E65, 0x0073}, {0x1E66, 0x0053}, {0x1E67, 0x0073}, {0x1E68, 0x0053},
    {0x1E69, 0x0073}, {0x1E6A, 0x0054}, {0x1E6B, 0x0074}, {0x1E6C, 0x0054}, {0x1E6D, 0x0074}, {0x1E6E, 0x0054}, {0x1E6F, 0x0074}, {0x1E70, 0x0054},
    {0x1E71, 0x0074}, {0x1E72, 0x0055}, {0x1E73, 0x0075}, {0x1E74, 0x0055}, {0x1E75, 0x0075}, {0x1E76, 0x0055}, {0x1E77, 0x0075}, {0x1E78, 0x0055},
    {0x1E79, 0x0075}, {0x1E7A, 0x0055}, {0x1E7B, 0x0075}, {0x1E7C, 0x0056}, {0x1E7D, 0x0076}, {0x1E7E, 0x0056}, {0x1E7F, 0x0076}, {0x1E80, 0x0057},
    {0x1E81, 0x0077}, {0x1E82, 0x0057}, {0x1E83, 0x0077}, {0x1E84, 0x0057}, {0x1E85, 0x0077}, {0x1E86, 0x0057}, {0x1E87, 0x0077}, {0x1E88, 0x0057},
    {0x1E89, 0x0077}, {0x1E8A, 0x0058}, {0x1E8B, 0x0078}, {0x1E8C, 0x0058}, {0x1E8D, 0x0078}, {0x1E8E, 0x0059}, {0x1E8F, 0x0079}, {0x1E90, 0x005A},
    {0x1E91, 0x007A}, {0x1E92, 0x005A}, {0x1E93, 0x007A}, {0x1E94, 0x005A}, {0x1E95, 0x007A}, {0x1E96, 0x0068}, {0x1E97, 0x0074}, {0x1E98, 0x0077},
    {0x1E99, 0x0079}, {0x1E9B, 0x0073}, {0x1EA0, 0x0041}, {0x1EA1, 0x0061}, {0x1EA2, 0x0041}, {0x1EA3, 0x0061}, {0x1EA4, 0x0041}, {0x1EA5, 0x0061},
    {0x1EA6, 0x0041}, {0x1EA7, 0x0061}, {0x1EA8, 0x0041}, {0x1EA9, 0x0061}, {0x1EAA, 0x0041}, {0x1EAB, 0x0061}, {0x1EAC, 0x0041}, {0x1EAD, 0x0061},
    {0x1EAE, 0x0041}, {0x1EAF, 0x0061}, {0x1EB0, 0x0041}, {0x1EB1, 0x0061}, {0x1EB2, 0x0041}, {0x1EB3, 0x0061}, {0x1EB4, 0x0041}, {0x1EB5, 0x0061},
    {0x1EB6, 0x0041}, {0x1EB7, 0x0061}, {0x1EB8, 0x0045}, {0x1EB9, 0x0065}, {0x1EBA, 0x0045}, {0x1EBB, 0x0065}, {0x1EBC, 0x0045}, {0x1EBD, 0x0065},
    {0x1EBE, 0x0045}, {0x1EBF, 0x0065}, {0x1EC0, 0x0045}, {0x1EC1, 0x0065}, {0x1EC2, 0x0045}, {0x1EC3, 0x0065}, {0x1EC4, 0x0045}, {0x1EC5, 0x0065},
    {0x1EC6, 0x0045}, {0x1EC7, 0x0065}, {0x1EC8, 0x0049}, {0x1EC9, 0x0069}, {0x1ECA, 0x0049}, {0x1ECB, 0x0069}, {0x1ECC, 0x004F}, {0x1ECD, 0x006F},
    {0x1ECE, 0x004F}, {0x1ECF, 0x006F}, {0x1ED0, 0x004F}, {0x1ED1, 0x006F}, {0x1ED2, 0x004F}, {0x1ED3, 0x006F}, {0x1ED4, 0x004F}, {0x1ED5, 0x006F},
    {0x1ED6, 0x004F}, {0x1ED7, 0x006F}, {0x1ED8, 0x004F}, {0x1ED9, 0x006F}, {0x1EDA, 0x004F}, {0x1EDB, 0x006F}, {0x1EDC, 0x004F}, {0x1EDD, 0x006F},
    {0x1EDE, 0x004F}, {0x1EDF, 0x006F}, {0x1EE0, 0x004F}, {0x1EE1, 0x006F}, {0x1EE2, 0x004F}, {0x1EE3, 0x006F}, {0x1EE4, 0x0055}, {0x1EE5, 0x0075},
    {0x1EE6, 0x0055}, {0x1EE7, 0x0075}, {0x1EE8, 0x0055}, {0x1EE9, 0x0075}, {0x1EEA, 0x0055}, {0x1EEB, 0x0075}, {0x1EEC, 0x0055}, {0x1EED, 0x0075},
    {0x1EEE, 0x0055}, {0x1EEF, 0x0075}, {0x1EF0, 0x0055}, {0x1EF1, 0x0075}, {0x1EF2, 0x0059}, {0x1EF3, 0x0079}, {0x1EF4, 0x0059}, {0x1EF5, 0x0079},
    {0x1EF6, 0x0059}, {0x1EF7, 0x0079}, {0x1EF8, 0x0059}, {0x1EF9, 0x0079},
  }};
  auto it = std::lower_bound(
      table.begin(), table.end(), cp,
      [](const CpMap& m, char32_t v) { return m.from < v; });
  if (it != table.end() && it->from == cp) return it->to;
  return cp;
}

// Simple one-to-one lowercase for ASCII plus Latin-1/Extended-A/B.
inline char32_t to_lower(char32_t cp) {
  if (cp >= 'A' && cp <= 'Z') return cp + 0x20;
  if (cp < 0x80) return cp;
  static constexpr std::array<CpMap, 199> table{{
    {0x00C0, 0x00E0}, {0x00C1, 0x00E1}, {0x00C2, 0x00E2}, {0x00C3, 0x00E3}, {0x00C4, 0x00E4}, {0x00C5, 0x00E5}, {0x00C6, 0x00E6}, {0x00C7, 0x00E7},
    {0x00C8, 0x00E8}, {0x00C9, 0x00E9}, {0x00CA, 0x00EA}, {0x00CB, 0x00EB}, {0x00CC, 0x00EC}, {0x00CD, 0x00ED}, {0x00CE, 0x00EE}, {0x00CF, 0x00EF},
    {0x00D0, 0x00F0}, {0x00D1, 0x00F1}, {0x00D2, 0x00F2}, {0x00D3, 0x00F3}, {0x00D4, 0x00F4}, {0x00D5, 0x00F5}, {0x00D6, 0x00F6}, {0x00D8, 0x00F8},
    {0x00D9, 0x00F9}, {0x00DA, 0x00FA}, {0x00DB, 0x00FB}, {0x00DC, 0x00FC}, {0x00DD, 0x00FD}, {0x00DE, 0x00FE}, {0x0100, 0x0101}, {0x0102, 0x0103},
    {0x0104, 0x0105}, {0x0106, 0x0107}, {0x0108, 0x0109}, {0x010A, 0x010B}, {0x010C, 0x010D}, {0x010E, 0x010F}, {0x0110, 0x0111}, {0x0112, 0x0113},
    {0x0114, 0x0115}, {0x0116, 0x0117}, {0x0118, 0x0119}, {0x011A, 0x011B}, {0x011C, 0x011D}, {0x011E, 0x011F}, {0x0120, 0x0121}, {0x0122, 0x0123},
    {0x0124, 0x0125}, {0x0126, 0x0127}, {0x0128, 0x0129}, {0x012A, 0x012B}, {0x012C, 0x012D}, {0x012E, 0x012F}, {0x0132, 0x0133}, {0x0134, 0x0135},
    {0x0136, 0x0137}, {0x0139, 0x013A}, {0x013B, 0x013C}, {0x013D, 0x013E}, {0x013F, 0x0140}, {0x0141, 0x0142}, {0x0143, 0x0144}, {0x0145, 0x0146},
    {0x0147, 0x0148}, {0x014A, 0x014B}, {0x014C, 0x014D}, {0x014E, 0x014F}, {0x0150, 0x0151}, {0x0152, 0x0153}, {0x0154, 0x0155}, {0x0156, 0x0157},
    {0x0158, 0x0159}, {0x015A, 0x015B}, {0x015C, 0x015D}, {0x015E, 0x015F}, {0x0160, 0x0161}, {0x0162, 0x0163}, {0x0164, 0x0165}, {0x0166, 0x0167},
    {0x0168, 0x0169}, {0x016A, 0x016B}, {0x016C, 0x016D}, {0x016E, 0x016F}, {0x0170, 0x0171}, {0x0172, 0x0173}, {0x0174, 0x0175}, {0x0176, 0x0177},
    {0x0178, 0x00FF}, {0x0179, 0x017A}, {0x017B, 0x017C}, {0x017D, 0x017E}, {0x0181, 0x0253}, {0x0182, 0x0183}, {0x0184, 0x0185}, {0x0186, 0x0254},
    {0x0187, 0x0188}, {0x0189, 0x0256}, {0x018A, 0x0257}, {0x018B, 0x018C}, {0x018E, 0x01DD}, {0x018F, 0x0259}, {0x0190, 0x025B}, {0x0191, 0x0192},
    {0x0193, 0x0260}, {0x0194, 0x0263}, {0x0196, 0x0269}, {0x0197, 0x0268}, {0x0198, 0x0199}, {0x019C, 0x026F}, {0x019D, 0x0272}, {0x019F, 0x0275},
    {0x01A0, 0x01A1}, {0x01A2, 0x01A3}, {0x01A4, 0x01A5}, {0x01A6, 0x0280}, {0x01A7, 0x01A8}, {0x01A9, 0x0283}, {0x01AC, 0x01AD}, {0x01AE, 0x0288},
    {0x01AF, 0x01B0}, {0x01B1, 0x028A}, {0x01B2, 0x028B}, {0x01B3, 0x01B4}, {0x01B5, 0x01B6}, {0x01B7, 0x0292}, {0x01B8, 0x01B9}, {0x01BC, 0x01BD},
    {0x01C4, 0x01C6}, {0x01C5, 0x01C6}, {0x01C7, 0x01C9}, {0x01C8, 0x01C9}, {0x01CA, 0x01CC}, {0x01CB, 0x01CC}, {0x01CD, 0x01CE}, {0x01CF, 0x01D0},
    {0x01D1, 0x01D2}, {0x01D3, 0x01D4}, {0x01D5, 0x01D6}, {0x01D7, 0x01D8}, {0x01D9, 0x01DA}, {0x01DB, 0x01DC}, {0x01DE, 0x01DF}, {0x01E0, 0x01E1},
    {0x01E2, 0x01E3}, {0x01E4, 0x01E5}, {0x01E6, 0x01E7}, {0x01E8, 0x01E9}, {0x01EA, 0x01EB}, {0x01EC, 0x01ED}, {0x01EE, 0x01EF}, {0x01F1, 0x01F3},
    {0x01F2, 0x01F3}, {0x01F4, 0x01F5}, {0x01F6, 0x0195}, {0x01F7, 0x01BF}, {0x01F8, 0x01F9}, {0x01FA, 0x01FB}, {0x01FC, 0x01FD}, {0x01FE, 0x01FF},
    {0x0200, 0x0201}, {0x0202, 0x0203}, {0x0204, 0x0205}, {0x0206, 0x0207}, {0x0208, 0x0209}, {0x020A, 0x020B}, {0x020C, 0x020D}, {0x020E, 0x020F},
    {0x0210, 0x0211}, {0x0212, 0x0213}, {0x0214, 0x0215}, {0x0216, 0x0217}, {0x0218, 0x0219}, {0x021A, 0x021B}, {0x021C, 0x021D}, {0x021E, 0x021F},
    {0x0220, 0x019E}, {0x0222, 0x0223}, {0x0224, 0x0225}, {0x0226, 0x0227}, {0x0228, 0x0229}, {0x022A, 0x022B}, {0x022C, 0x022D}, {0x022E, 0x022F},
    {0x0230, 0x0231}, {0x0232, 0x0233}, {0x023A, 0x2C65}, {0x023B, 0x023C}, {0x023D, 0x019A}, {0x023E, 0x2C66}, {0x0241, 0x0242}, {0x0243, 0x0180},
    {0x0244, 0x0289}, {0x0245, 0x028C}, {0x0246, 0x0247}, {0x0248, 0x0249}, {0x024A, 0x024B}, {0x024C, 0x024D}, {0x024E, 0x024F},
  }};
  auto it = std::lower_bound(
      table.begin(), table.end(), cp,
      [](const CpMap& m, char32_t v) { return m.from < v; });
  if (it != table.end() && it->from == cp) return it->to;
  return cp;
}

// ---------------------------------------------------------------------------
// Grapheme clusters
// ---------------------------------------------------------------------------

// One cluster as a codepoint span. Pragmatic segmentation: combining marks,
// variation selectors, and skin tones attach to the preceding codepoint; ZWJ
// glues pictographic sequences; regional indicators pair up. This is the
// subset of UAX #29 that matters for emoji and Arabic diacritics.
struct Grapheme {
  size_t begin = 0;  // index into the codepoint vector
  size_t end = 0;    // one past last
};

inline std::vector<Grapheme> graphemes(const std::vector<char32_t>& cps) {
  std::vector<Grapheme> out;
  size_t i = 0;
  const size_t n = cps.size();
  while (i < n) {
    size_t start = i;
    char32_t base = cps[i++];
    if (is_regional_indicator(base) && i < n && is_regional_indicator(cps[i])) {
      ++i;  // flag pair
    }
    while (i < n) {
      char32_t cp = cps[i];
      if (is_combining_mark(cp) || is_variation_selector(cp) ||
          is_skin_tone(cp)) {
        ++i;
        continue;
      }
      if (cp == kZwj && i + 1 < n && is_pictographic(cps[i + 1])) {
        i += 2;
        // pick up that element's own extenders on the next pass
        continue;
      }
      break;
    }
    out.push_back({start, i});
  }
  return out;
}

// True when the cluster is exactly the Saudi flag pair (an optional trailing
// variation selector is tolerated).
inline bool is_saudi_flag(const std::vector<char32_t>& cps, const Grapheme& g) {
  size_t len = g.end - g.begin;
  if (len == 3 && !is_variation_selector(cps[g.begin + 2])) return false;
  if (len != 2 && len != 3) return false;
  return cps[g.begin] == kRegionalS && cps[g.begin + 1] == kRegionalA;
}

inline bool contains_pictographic(const std::vector<char32_t>& cps,
                                  const Grapheme& g) {
  for (size_t i = g.begin; i < g.end; ++i) {
    if (is_pictographic(cps[i]) || is_regional_indicator(cps[i])) return true;
  }
  return false;
}

}  // namespace lahja::uni
