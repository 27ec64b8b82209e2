#pragma once

// Unigram language-model subword tokenizer.
//
// Words are prefixed with a visible boundary marker (U+2581 "▁") so that
// whitespace survives the id round trip. Training seeds the vocabulary with
// the most frequent substrings of marked words, runs EM (forward–backward
// expected counts, exact normalization) and prunes the lowest-loss-impact
// pieces between EM rounds until the requested size is reached exactly.
// Encoding is max-likelihood Viterbi; ties prefer fewer pieces, then the
// leftmost-longest segmentation. Characters missing from the vocabulary map
// to UNK with a score of (lowest piece logprob − 10).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <utility>
#include <vector>

#include "lahja/error.hpp"
#include "lahja/unicode.hpp"

namespace lahja::tok {

inline constexpr uint32_t kMarkerCp = 0x2581;
inline constexpr const char* kMarker = "\xE2\x96\x81";  // UTF-8 of U+2581

struct Piece {
  std::string surface;
  double logprob = 0.0;
};

namespace detail {
struct SvHash {
  using is_transparent = void;
  size_t operator()(std::string_view s) const {
    return std::hash<std::string_view>{}(s);
  }
};
struct SvEq {
  using is_transparent = void;
  bool operator()(std::string_view a, std::string_view b) const {
    return a == b;
  }
};
using IdMap = std::unordered_map<std::string, int, SvHash, SvEq>;

inline double logsumexp(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double hi = a > b ? a : b;
  const double lo = a > b ? b : a;
  return hi + std::log1p(std::exp(lo - hi));
}
}  // namespace detail

class SubwordVocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kCls = 2;
  static constexpr int kSep = 3;
  static constexpr int kMask = 4;
  static constexpr int kNumSpecials = 5;

  static const std::array<std::string_view, kNumSpecials>& special_surfaces() {
    static const std::array<std::string_view, kNumSpecials> s = {
        "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"};
    return s;
  }

  SubwordVocab() = default;

  // Builds a vocabulary from non-special pieces; specials are prepended with
  // logprob 0. Validates all invariants.
  static SubwordVocab from_pieces(std::vector<Piece> pieces) {
    SubwordVocab v;
    v.pieces_.reserve(pieces.size() + kNumSpecials);
    for (auto s : special_surfaces()) {
      v.pieces_.push_back({std::string(s), 0.0});
    }
    for (auto& p : pieces) v.pieces_.push_back(std::move(p));
    v.index_and_validate();
    return v;
  }

  size_t size() const { return pieces_.size(); }
  const Piece& piece(int id) const { return pieces_[static_cast<size_t>(id)]; }
  static bool is_special(int id) { return 0 <= id && id < kNumSpecials; }

  // Returns the id of a surface, or -1 if absent.
  int id_of(std::string_view surface) const {
    auto it = ids_.find(surface);
    return it == ids_.end() ? -1 : it->second;
  }

  // Score for consuming one unknown character: below every real piece.
  double unk_score() const { return unk_score_; }
  size_t max_piece_cps() const { return max_piece_cps_; }

  void save(std::ostream& out) const {
    char buf[64];
    for (const auto& p : pieces_) {
      std::snprintf(buf, sizeof(buf), "%.17g", p.logprob);
      out << p.surface << '\t' << buf << '\n';
    }
    if (!out) throw IoError("tokenizer: failed writing vocabulary");
  }

  void save_file(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("tokenizer: cannot write vocabulary: " + path);
    save(out);
  }

  static SubwordVocab load(std::istream& in) {
    SubwordVocab v;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      const size_t tab = line.find('\t');
      if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos)
        throw ValidationError("tokenizer: vocabulary line " +
                              std::to_string(lineno) +
                              " is not \"surface<TAB>logprob\"");
      std::string surface = line.substr(0, tab);
      const std::string num = line.substr(tab + 1);
      char* end = nullptr;
      const double lp = std::strtod(num.c_str(), &end);
      if (num.empty() || end != num.c_str() + num.size())
        throw ValidationError("tokenizer: bad logprob on vocabulary line " +
                              std::to_string(lineno));
      v.pieces_.push_back({std::move(surface), lp});
    }
    v.index_and_validate();
    return v;
  }

  static SubwordVocab load_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("tokenizer: cannot read vocabulary: " + path);
    return load(in);
  }

 private:
  void index_and_validate() {
    if (pieces_.size() < kNumSpecials)
      throw ValidationError("tokenizer: vocabulary is missing special tokens");
    for (int i = 0; i < kNumSpecials; ++i) {
      if (pieces_[static_cast<size_t>(i)].surface != special_surfaces()[static_cast<size_t>(i)])
        throw ValidationError("tokenizer: special token " + std::to_string(i) +
                              " must be " +
                              std::string(special_surfaces()[static_cast<size_t>(i)]));
      if (pieces_[static_cast<size_t>(i)].logprob != 0.0)
        throw ValidationError("tokenizer: special tokens must have logprob 0");
    }
    ids_.clear();
    ids_.reserve(pieces_.size());
    max_piece_cps_ = 1;
    double min_lp = 0.0;
    bool any = false;
    for (size_t i = 0; i < pieces_.size(); ++i) {
      const auto& p = pieces_[i];
      if (p.surface.empty())
        throw ValidationError("tokenizer: empty piece surface");
      if (!ids_.emplace(p.surface, static_cast<int>(i)).second)
        throw ValidationError("tokenizer: duplicate piece surface: " +
                              p.surface);
      if (i >= kNumSpecials) {
        if (!std::isfinite(p.logprob) || p.logprob > 0.0)
          throw ValidationError(
              "tokenizer: piece logprob must be finite and <= 0: " +
              p.surface);
        max_piece_cps_ = std::max(max_piece_cps_, uni::decode(p.surface).size());
        min_lp = any ? std::min(min_lp, p.logprob) : p.logprob;
        any = true;
      }
    }
    unk_score_ = (any ? min_lp : 0.0) - 10.0;
  }

  std::vector<Piece> pieces_;
  detail::IdMap ids_;
  double unk_score_ = -10.0;
  size_t max_piece_cps_ = 1;
};

// ---------------------------------------------------------------------------
// Encoding / decoding
// ---------------------------------------------------------------------------

namespace detail {

// Byte offsets of codepoint boundaries in s (size = #cps + 1).
inline std::vector<size_t> cp_boundaries(std::string_view s) {
  std::vector<size_t> b;
  size_t i = 0;
  b.push_back(0);
  while (i < s.size()) {
    uni::decode_one(s, i);
    b.push_back(i);
  }
  return b;
}

// Viterbi over one marked word. Suffix DP so that the reconstruction can pick
// the leftmost-longest segmentation among score-and-piece-count ties.
inline void viterbi_word(std::string_view marked, const SubwordVocab& v,
                         std::vector<int>& out) {
  const auto bounds = cp_boundaries(marked);
  const size_t n = bounds.size() - 1;  // codepoints
  if (n == 0) return;
  const size_t maxlen = v.max_piece_cps();
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();

  struct Cell {
    double score = -std::numeric_limits<double>::infinity();
    size_t npieces = std::numeric_limits<size_t>::max();
  };
  std::vector<Cell> suffix(n + 1);
  suffix[n] = {0.0, 0};

  auto arc = [&](size_t i, size_t len, double& score, int& id) -> bool {
    std::string_view s =
        marked.substr(bounds[i], bounds[i + len] - bounds[i]);
    const int pid = v.id_of(s);
    if (pid >= SubwordVocab::kNumSpecials) {
      score = v.piece(pid).logprob;
      id = pid;
      return true;
    }
    if (len == 1) {  // unknown character
      score = v.unk_score();
      id = SubwordVocab::kUnk;
      return true;
    }
    return false;
  };

  for (size_t i = n; i-- > 0;) {
    Cell best;
    const size_t lim = std::min(maxlen, n - i);
    for (size_t len = 1; len <= lim; ++len) {
      double s;
      int id;
      if (!arc(i, len, s, id)) continue;
      const Cell& nxt = suffix[i + len];
      if (nxt.score == kNegInf) continue;
      const double cand = s + nxt.score;
      const size_t np = nxt.npieces + 1;
      if (cand > best.score || (cand == best.score && np < best.npieces)) {
        best = {cand, np};
      }
    }
    suffix[i] = best;
  }

  size_t i = 0;
  while (i < n) {
    const size_t lim = std::min(maxlen, n - i);
    bool matched = false;
    for (size_t len = lim; len >= 1 && !matched; --len) {
      double s;
      int id;
      if (!arc(i, len, s, id)) continue;
      const Cell& nxt = suffix[i + len];
      if (nxt.score == kNegInf) continue;
      if (s + nxt.score == suffix[i].score &&
          nxt.npieces + 1 == suffix[i].npieces) {
        out.push_back(id);
        i += len;
        matched = true;
      }
    }
    if (!matched)
      throw std::logic_error("tokenizer: Viterbi reconstruction diverged");
  }
}

}  // namespace detail

// Max-likelihood segmentation of whitespace-delimited words, each prefixed
// with the boundary marker. Unknown characters become UNK.
inline std::vector<int> encode(std::string_view text, const SubwordVocab& v) {
  std::vector<int> ids;
  std::string marked;
  size_t i = 0;
  const size_t size = text.size();
  size_t word_begin = std::string::npos;
  auto flush = [&](size_t end_pos) {
    if (word_begin == std::string::npos) return;
    marked.assign(kMarker);
    marked.append(text.substr(word_begin, end_pos - word_begin));
    detail::viterbi_word(marked, v, ids);
    word_begin = std::string::npos;
  };
  while (i < size) {
    const size_t at = i;
    const uint32_t cp = uni::decode_one(text, i);
    if (uni::is_whitespace(cp)) {
      flush(at);
    } else if (word_begin == std::string::npos) {
      word_begin = at;
    }
  }
  flush(size);
  return ids;
}

// Concatenates piece surfaces, converts boundary markers back to spaces and
// drops special tokens.
inline std::string decode(const std::vector<int>& ids, const SubwordVocab& v) {
  std::string glued;
  for (int id : ids) {
    if (id < 0 || static_cast<size_t>(id) >= v.size())
      throw ValidationError("tokenizer: token id out of range: " +
                            std::to_string(id));
    if (SubwordVocab::is_special(id)) continue;
    glued += v.piece(id).surface;
  }
  std::string out;
  out.reserve(glued.size());
  size_t i = 0;
  while (i < glued.size()) {
    const size_t at = i;
    const uint32_t cp = uni::decode_one(glued, i);
    if (cp == kMarkerCp) {
      if (!out.empty()) out += ' ';
    } else {
      out.append(glued, at, i - at);
    }
  }
  return out;
}

// One-doc-per-line text in, space-separated decimal token ids out.
inline void tokenize_stream(std::istream& in, std::ostream& out,
                            const SubwordVocab& v) {
  std::string line;
  while (std::getline(in, line)) {
    const auto ids = encode(line, v);
    for (size_t i = 0; i < ids.size(); ++i) {
      if (i) out << ' ';
      out << ids[i];
    }
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainConfig {
  size_t vocab_size = 75000;
  double character_coverage = 0.9995;
  int em_iters = 2;          // EM iterations per pruning round
  int seed_factor = 4;       // seed candidates = seed_factor * vocab_size
  size_t max_piece_cps = 8;  // longest seed substring, in codepoints
  double prune_keep = 0.75;  // fraction of multi-char pieces kept per round
  unsigned threads = 1;

  void validate() const {
    if (vocab_size <= SubwordVocab::kNumSpecials)
      throw ConfigError("tokenizer: vocab_size must exceed the special count");
    if (!(character_coverage > 0.0) || character_coverage > 1.0)
      throw ConfigError("tokenizer: character_coverage must be in (0, 1]");
    if (em_iters < 1) throw ConfigError("tokenizer: em_iters must be >= 1");
    if (seed_factor < 1)
      throw ConfigError("tokenizer: seed_factor must be >= 1");
    if (max_piece_cps < 2)
      throw ConfigError("tokenizer: max_piece_cps must be >= 2");
    if (!(prune_keep > 0.0) || prune_keep >= 1.0)
      throw ConfigError("tokenizer: prune_keep must be in (0, 1)");
  }
};

struct TrainReport {
  std::vector<std::vector<double>> nll;  // per round, per EM iteration
  size_t required_chars = 0;
  size_t seed_pieces = 0;
  size_t rounds = 0;
};

namespace detail {

struct TrainWord {
  std::string marked;
  std::vector<size_t> bounds;  // codepoint boundaries of marked
  uint64_t freq = 0;
};

class Trainer {
 public:
  Trainer(std::istream& corpus, const TrainConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    read_words(corpus);
    pick_covered_chars();
    seed_pieces();
  }

  SubwordVocab run(TrainReport* report) {
    TrainReport rep;
    rep.required_chars = covered_.size();
    rep.seed_pieces = surfaces_.size();
    const size_t target_multi =
        cfg_.vocab_size - SubwordVocab::kNumSpecials - covered_.size();
    while (true) {
      rep.nll.emplace_back();
      double prev = std::numeric_limits<double>::infinity();
      for (int it = 0; it < cfg_.em_iters; ++it) {
        const auto [counts, nll] = e_step();
        if (nll > prev + 1e-6 * (1.0 + std::abs(prev)))
          throw std::logic_error("tokenizer: EM loss increased");
        prev = nll;
        rep.nll.back().push_back(nll);
        m_step(counts);
      }
      ++rep.rounds;
      if (multi_count() <= target_multi) break;
      prune(target_multi);
    }
    std::vector<Piece> out;
    out.reserve(surfaces_.size());
    for (size_t i = 0; i < surfaces_.size(); ++i) {
      out.push_back({surfaces_[i], logprobs_[i]});
    }
    std::sort(out.begin(), out.end(), [](const Piece& a, const Piece& b) {
      if (a.logprob != b.logprob) return a.logprob > b.logprob;
      return a.surface < b.surface;
    });
    if (report) *report = rep;
    return SubwordVocab::from_pieces(std::move(out));
  }

 private:
  static constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  static constexpr double kMinCount = 1e-12;

  size_t multi_count() const { return surfaces_.size() - n_singles_; }

  void read_words(std::istream& corpus) {
    std::unordered_map<std::string, uint64_t> freq;
    std::string line, word;
    while (std::getline(corpus, line)) {
      size_t i = 0;
      size_t begin = std::string::npos;
      while (i <= line.size()) {
        size_t at = i;
        uint32_t cp = ' ';
        if (i < line.size()) cp = uni::decode_one(line, i);
        else ++i;
        if (uni::is_whitespace(cp)) {
          if (begin != std::string::npos) {
            word.assign(kMarker);
            word.append(line, begin, at - begin);
            ++freq[word];
            begin = std::string::npos;
          }
        } else if (begin == std::string::npos) {
          begin = at;
        }
      }
    }
    if (freq.empty())
      throw ValidationError("tokenizer: training corpus has no words");
    words_.reserve(freq.size());
    for (auto& [w, c] : freq) {
      TrainWord tw;
      tw.marked = w;
      tw.bounds = cp_boundaries(tw.marked);
      tw.freq = c;
      words_.push_back(std::move(tw));
    }
    std::sort(words_.begin(), words_.end(),
              [](const TrainWord& a, const TrainWord& b) {
                return a.marked < b.marked;
              });
  }

  void pick_covered_chars() {
    std::unordered_map<uint32_t, uint64_t> char_freq;
    uint64_t total = 0;
    for (const auto& w : words_) {
      const auto cps = uni::decode(w.marked);
      for (uint32_t cp : cps) {
        char_freq[cp] += w.freq;
        total += w.freq;
      }
    }
    std::vector<std::pair<uint32_t, uint64_t>> by_freq(char_freq.begin(),
                                                       char_freq.end());
    std::sort(by_freq.begin(), by_freq.end(),
              [](const auto& a, const auto& b) {
                if (a.second != b.second) return a.second > b.second;
                return a.first < b.first;
              });
    // take the smallest high-frequency prefix reaching the coverage target
    const double want = cfg_.character_coverage * static_cast<double>(total);
    uint64_t cum = 0;
    for (const auto& [cp, c] : by_freq) {
      if (static_cast<double>(cum) >= want) break;
      covered_.emplace(cp, c);
      cum += c;
    }
    if (cfg_.vocab_size <
        SubwordVocab::kNumSpecials + covered_.size())
      throw ConfigError(
          "tokenizer: vocab_size too small to cover required characters (" +
          std::to_string(SubwordVocab::kNumSpecials + covered_.size()) +
          " needed)");
  }

  void seed_pieces() {
    std::unordered_map<std::string, uint64_t> sub_freq;
    for (const auto& w : words_) {
      const size_t n = w.bounds.size() - 1;
      for (size_t i = 0; i < n; ++i) {
        const size_t lim = std::min(cfg_.max_piece_cps, n - i);
        for (size_t len = 2; len <= lim; ++len) {
          sub_freq[w.marked.substr(w.bounds[i],
                                   w.bounds[i + len] - w.bounds[i])] +=
              w.freq;
        }
      }
    }
    // multi-char candidates: all chars covered, not a special surface
    std::vector<std::pair<std::string, uint64_t>> multis;
    multis.reserve(sub_freq.size());
    for (auto& [s, c] : sub_freq) {
      bool ok = true;
      for (uint32_t cp : uni::decode(s)) {
        if (!covered_.count(cp)) {
          ok = false;
          break;
        }
      }
      for (auto sp : SubwordVocab::special_surfaces()) {
        if (s == sp) ok = false;
      }
      if (ok) multis.emplace_back(s, c);
    }
    std::sort(multis.begin(), multis.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    const size_t target_multi =
        cfg_.vocab_size - SubwordVocab::kNumSpecials - covered_.size();
    if (multis.size() < target_multi)
      throw ConfigError(
          "tokenizer: corpus has too few distinct substrings for vocab_size " +
          std::to_string(cfg_.vocab_size));
    const size_t budget =
        static_cast<size_t>(cfg_.seed_factor) * cfg_.vocab_size;
    if (multis.size() > budget) multis.resize(budget);

    // singles first (sorted by codepoint), then seed multis; initial logprobs
    // from normalized seed frequencies
    std::vector<std::pair<uint32_t, uint64_t>> singles(covered_.begin(),
                                                       covered_.end());
    std::sort(singles.begin(), singles.end());
    n_singles_ = singles.size();
    double total = 0.0;
    for (const auto& [cp, c] : singles) total += static_cast<double>(c);
    for (const auto& [s, c] : multis) total += static_cast<double>(c);
    const double log_total = std::log(total);
    for (const auto& [cp, c] : singles) {
      surfaces_.push_back(uni::encode_one(cp));
      logprobs_.push_back(
          std::min(0.0, std::log(static_cast<double>(c)) - log_total));
    }
    for (const auto& [s, c] : multis) {
      surfaces_.push_back(s);
      logprobs_.push_back(
          std::min(0.0, std::log(static_cast<double>(c)) - log_total));
    }
    // frozen for the whole training run so EM stays monotone even on words
    // with uncovered characters
    unk_ = *std::min_element(logprobs_.begin(), logprobs_.end()) - 10.0;
    rebuild_index();
  }

  void rebuild_index() {
    index_.clear();
    index_.reserve(surfaces_.size());
    max_len_ = 1;
    for (size_t i = 0; i < surfaces_.size(); ++i) {
      index_.emplace(surfaces_[i], static_cast<int>(i));
      max_len_ = std::max(max_len_, uni::decode(surfaces_[i]).size());
    }
  }

  int find_piece(std::string_view s) const {
    auto it = index_.find(s);
    return it == index_.end() ? -1 : it->second;
  }

  // Forward-backward over one word: appends (piece, weighted expected count)
  // contributions in a fixed arc order and returns freq * -log Z.
  double word_contributions(const TrainWord& w, double unk,
                            std::vector<std::pair<int, double>>& contrib) const {
    const size_t n = w.bounds.size() - 1;
    std::vector<double> alpha(n + 1, kNegInf), beta(n + 1, kNegInf);
    alpha[0] = 0.0;
    for (size_t i = 1; i <= n; ++i) {
      const size_t j0 = i > max_len_ ? i - max_len_ : 0;
      for (size_t j = j0; j < i; ++j) {
        if (alpha[j] == kNegInf) continue;
        const int pid = find_piece(std::string_view(w.marked).substr(
            w.bounds[j], w.bounds[i] - w.bounds[j]));
        if (pid >= 0) {
          alpha[i] = logsumexp(alpha[i], alpha[j] + logprobs_[static_cast<size_t>(pid)]);
        } else if (i - j == 1) {
          alpha[i] = logsumexp(alpha[i], alpha[j] + unk);
        }
      }
    }
    beta[n] = 0.0;
    for (size_t i = n; i-- > 0;) {
      const size_t lim = std::min(max_len_, n - i);
      for (size_t len = 1; len <= lim; ++len) {
        if (beta[i + len] == kNegInf) continue;
        const int pid = find_piece(std::string_view(w.marked).substr(
            w.bounds[i], w.bounds[i + len] - w.bounds[i]));
        if (pid >= 0) {
          beta[i] = logsumexp(beta[i], logprobs_[static_cast<size_t>(pid)] + beta[i + len]);
        } else if (len == 1) {
          beta[i] = logsumexp(beta[i], unk + beta[i + len]);
        }
      }
    }
    const double z = alpha[n];
    const double fw = static_cast<double>(w.freq);
    for (size_t i = 0; i < n; ++i) {
      if (alpha[i] == kNegInf) continue;
      const size_t lim = std::min(max_len_, n - i);
      for (size_t len = 1; len <= lim; ++len) {
        if (beta[i + len] == kNegInf) continue;
        const int pid = find_piece(std::string_view(w.marked).substr(
            w.bounds[i], w.bounds[i + len] - w.bounds[i]));
        if (pid < 0) continue;
        const double post =
            std::exp(alpha[i] + logprobs_[static_cast<size_t>(pid)] + beta[i + len] - z);
        contrib.emplace_back(pid, fw * post);
      }
    }
    return fw * -z;
  }

  // Expected piece counts and corpus NLL. Per-word work may run on several
  // threads; the reduction always walks words in index order, so the result
  // is bitwise identical for every thread count.
  std::pair<std::vector<double>, double> e_step() const {
    const double unk = unk_;
    std::vector<std::vector<std::pair<int, double>>> contribs(words_.size());
    std::vector<double> word_nll(words_.size(), 0.0);
    auto run_range = [&](size_t lo, size_t hi) {
      for (size_t k = lo; k < hi; ++k) {
        word_nll[k] = word_contributions(words_[k], unk, contribs[k]);
      }
    };
    const unsigned threads = cfg_.threads ? cfg_.threads : 1;
    if (threads <= 1 || words_.size() < 2 * threads) {
      run_range(0, words_.size());
    } else {
      std::vector<std::thread> pool;
      const size_t per = (words_.size() + threads - 1) / threads;
      for (unsigned t = 0; t < threads; ++t) {
        const size_t lo = t * per;
        const size_t hi = std::min(words_.size(), lo + per);
        if (lo < hi) pool.emplace_back(run_range, lo, hi);
      }
      for (auto& th : pool) th.join();
    }
    std::vector<double> counts(surfaces_.size(), 0.0);
    double nll = 0.0;
    for (size_t k = 0; k < words_.size(); ++k) {
      for (const auto& [pid, c] : contribs[k]) counts[static_cast<size_t>(pid)] += c;
      nll += word_nll[k];
    }
    return {std::move(counts), nll};
  }

  void m_step(const std::vector<double>& counts) {
    double total = 0.0;
    for (double c : counts) total += std::max(c, kMinCount);
    const double log_total = std::log(total);
    for (size_t i = 0; i < counts.size(); ++i) {
      logprobs_[i] =
          std::min(0.0, std::log(std::max(counts[i], kMinCount)) - log_total);
    }
  }

  // Best alternative segmentation score of a surface with piece `exclude`
  // unavailable; single-character pieces guarantee this is finite.
  double best_alt_score(const std::string& surface, int exclude) const {
    const auto bounds = cp_boundaries(surface);
    const size_t n = bounds.size() - 1;
    const double unk = unk_;
    std::vector<double> best(n + 1, kNegInf);
    best[0] = 0.0;
    for (size_t i = 1; i <= n; ++i) {
      const size_t j0 = i > max_len_ ? i - max_len_ : 0;
      for (size_t j = j0; j < i; ++j) {
        if (best[j] == kNegInf) continue;
        const int pid = find_piece(std::string_view(surface).substr(
            bounds[j], bounds[i] - bounds[j]));
        if (pid >= 0 && pid != exclude) {
          best[i] = std::max(best[i], best[j] + logprobs_[static_cast<size_t>(pid)]);
        } else if (pid < 0 && i - j == 1) {
          best[i] = std::max(best[i], best[j] + unk);
        }
      }
    }
    return best[n];
  }

  void prune(size_t target_multi) {
    const auto [counts, nll] = e_step();
    (void)nll;
    struct Scored {
      size_t idx;
      double impact;
    };
    std::vector<Scored> multis;
    for (size_t i = 0; i < surfaces_.size(); ++i) {
      if (uni::decode(surfaces_[i]).size() < 2) continue;
      const double alt = best_alt_score(surfaces_[i], static_cast<int>(i));
      multis.push_back({i, counts[i] * (logprobs_[i] - alt)});
    }
    const size_t keep = std::max(
        target_multi,
        static_cast<size_t>(static_cast<double>(multis.size()) * cfg_.prune_keep));
    std::sort(multis.begin(), multis.end(),
              [&](const Scored& a, const Scored& b) {
                if (a.impact != b.impact) return a.impact > b.impact;
                return surfaces_[a.idx] < surfaces_[b.idx];
              });
    multis.resize(std::min(keep, multis.size()));
    std::vector<bool> keep_mask(surfaces_.size(), false);
    for (size_t i = 0; i < n_singles_; ++i) keep_mask[i] = true;
    for (const auto& s : multis) keep_mask[s.idx] = true;
    std::vector<std::string> ns;
    std::vector<double> nl;
    for (size_t i = 0; i < surfaces_.size(); ++i) {
      if (!keep_mask[i]) continue;
      ns.push_back(std::move(surfaces_[i]));
      nl.push_back(logprobs_[i]);
    }
    surfaces_ = std::move(ns);
    logprobs_ = std::move(nl);
    rebuild_index();
  }

  TrainConfig cfg_;
  std::vector<TrainWord> words_;
  std::unordered_map<uint32_t, uint64_t> covered_;  // char -> weighted freq
  std::vector<std::string> surfaces_;  // singles first, then multis
  std::vector<double> logprobs_;
  double unk_ = -10.0;  // training-time unknown-character arc score
  size_t n_singles_ = 0;
  IdMap index_;
  size_t max_len_ = 1;
};

}  // namespace detail

inline SubwordVocab train_unigram(std::istream& corpus, const TrainConfig& cfg,
                                  TrainReport* report = nullptr) {
  detail::Trainer t(corpus, cfg);
  return t.run(report);
}

inline SubwordVocab train_unigram_file(const std::string& path,
                                       const TrainConfig& cfg,
                                       TrainReport* report = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("tokenizer: cannot read corpus: " + path);
  return train_unigram(in, cfg, report);
}

}  // namespace lahja::tok
