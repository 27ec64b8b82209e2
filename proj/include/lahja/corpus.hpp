#pragma once

// Corpus-scale bookkeeping: exact deduplication, seeded random subsampling,
// and word/sentence/byte statistics over one-doc-per-line files.

#include <algorithm>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <utility>
#include <vector>

#include "lahja/clean.hpp"
#include "lahja/digest.hpp"
#include "lahja/error.hpp"
#include "lahja/unicode.hpp"

namespace lahja::corpus {

// ---------------------------------------------------------------------------
// Deduplication
// ---------------------------------------------------------------------------

// Membership tracker keyed by a 128-bit content digest. A hit on the primary
// digest is confirmed by an independent 64-bit digest before a document is
// dropped, so a primary collision can never delete a non-duplicate.
class Deduper {
 public:
  // Returns true if the text was not seen before (caller should keep it).
  bool insert(std::string_view text) {
    const auto d = digest::murmur3_x64_128(text);
    const uint64_t check = digest::fnv1a64(text);
    auto& bucket = seen_[d.h1];
    for (const auto& [h2, fnv] : bucket) {
      if (h2 == d.h2 && fnv == check) {
        ++duplicates_dropped_;
        return false;
      }
    }
    bucket.emplace_back(d.h2, check);
    ++unique_;
    return true;
  }

  uint64_t unique() const { return unique_; }
  uint64_t duplicates_dropped() const { return duplicates_dropped_; }

 private:
  std::unordered_map<uint64_t, std::vector<std::pair<uint64_t, uint64_t>>>
      seen_;
  uint64_t unique_ = 0;
  uint64_t duplicates_dropped_ = 0;
};

struct DedupReport {
  uint64_t total = 0;
  uint64_t kept = 0;
  uint64_t dropped = 0;
};

// First occurrence of each exact text survives; later duplicates are dropped;
// survivor order is input order.
inline std::vector<clean::Document> dedup_documents(
    const std::vector<clean::Document>& docs, DedupReport* report = nullptr) {
  Deduper dd;
  DedupReport r;
  std::vector<clean::Document> out;
  for (const auto& doc : docs) {
    ++r.total;
    if (dd.insert(doc.text)) {
      ++r.kept;
      out.push_back(doc);
    } else {
      ++r.dropped;
    }
  }
  if (report) *report = r;
  return out;
}

// Line-streaming dedup over a one-doc-per-line corpus.
inline DedupReport dedup_stream(std::istream& in, std::ostream& out) {
  Deduper dd;
  DedupReport r;
  std::string line;
  while (std::getline(in, line)) {
    ++r.total;
    if (dd.insert(line)) {
      ++r.kept;
      out << line << '\n';
    } else {
      ++r.dropped;
    }
  }
  return r;
}

// Hash-partitioned dedup: membership state is split into `nshards` independent
// sets by primary digest, so identical texts always meet in the same shard and
// the survivor set matches the serial pass exactly. Digests for each block of
// lines are computed by `threads` workers; membership updates and output stay
// in input order, making the result identical for every thread count.
inline DedupReport dedup_stream_sharded(std::istream& in, std::ostream& out,
                                        unsigned nshards, unsigned threads = 1,
                                        size_t block_lines = 4096) {
  if (nshards == 0) throw ConfigError("dedup: shard count must be positive");
  if (threads == 0) threads = 1;
  if (block_lines == 0) block_lines = 1;

  std::vector<Deduper> shards(nshards);
  DedupReport r;
  std::vector<std::string> block;
  block.reserve(block_lines);
  struct Key {
    digest::U128 d;
    uint64_t fnv;
  };
  std::vector<Key> keys;

  auto flush = [&] {
    keys.assign(block.size(), Key{});
    auto digest_range = [&](size_t lo, size_t hi) {
      for (size_t i = lo; i < hi; ++i) {
        keys[i].d = digest::murmur3_x64_128(block[i]);
        keys[i].fnv = digest::fnv1a64(block[i]);
      }
    };
    if (threads <= 1 || block.size() < 2 * threads) {
      digest_range(0, block.size());
    } else {
      std::vector<std::thread> pool;
      const size_t per = (block.size() + threads - 1) / threads;
      for (unsigned t = 0; t < threads; ++t) {
        const size_t lo = t * per;
        const size_t hi = std::min(block.size(), lo + per);
        if (lo < hi) pool.emplace_back(digest_range, lo, hi);
      }
      for (auto& th : pool) th.join();
    }
    for (size_t i = 0; i < block.size(); ++i) {
      ++r.total;
      Deduper& shard = shards[keys[i].d.h1 % nshards];
      if (shard.insert(block[i])) {
        ++r.kept;
        out << block[i] << '\n';
      } else {
        ++r.dropped;
      }
    }
    block.clear();
  };

  std::string line;
  while (std::getline(in, line)) {
    block.push_back(std::move(line));
    if (block.size() >= block_lines) flush();
  }
  flush();
  return r;
}

// ---------------------------------------------------------------------------
// Random subsampling
// ---------------------------------------------------------------------------

struct SampleReport {
  uint64_t total = 0;
  uint64_t kept = 0;
};

namespace detail {
inline void check_fraction(double p) {
  if (!(p > 0.0) || p > 1.0)
    throw ConfigError("sample: fraction must be in (0, 1]");
}
// Keep decisions are keyed by (seed, input position), not by generator state,
// so the decision for document i never depends on earlier documents.
inline bool keep(uint64_t seed, uint64_t index, double p) {
  return digest::keyed_uniform(seed, index) < p;
}
}  // namespace detail

inline std::vector<clean::Document> sample_fraction(
    const std::vector<clean::Document>& docs, double p, uint64_t seed,
    SampleReport* report = nullptr) {
  detail::check_fraction(p);
  SampleReport r;
  std::vector<clean::Document> out;
  for (const auto& doc : docs) {
    if (detail::keep(seed, r.total++, p)) {
      ++r.kept;
      out.push_back(doc);
    }
  }
  if (report) *report = r;
  return out;
}

inline SampleReport sample_stream(std::istream& in, std::ostream& out, double p,
                                  uint64_t seed) {
  detail::check_fraction(p);
  SampleReport r;
  std::string line;
  while (std::getline(in, line)) {
    if (detail::keep(seed, r.total++, p)) {
      ++r.kept;
      out << line << '\n';
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Corpus statistics
// ---------------------------------------------------------------------------

struct CorpusStats {
  uint64_t documents = 0;
  uint64_t words = 0;      // whitespace-delimited tokens
  uint64_t sentences = 0;  // see sentence_terminator below
  uint64_t bytes = 0;      // UTF-8 length of the corpus text

  CorpusStats& operator+=(const CorpusStats& o) {
    documents += o.documents;
    words += o.words;
    sentences += o.sentences;
    bytes += o.bytes;
    return *this;
  }
  friend CorpusStats operator+(CorpusStats a, const CorpusStats& b) {
    return a += b;
  }
  friend bool operator==(const CorpusStats&, const CorpusStats&) = default;
};

// Sentence boundaries: ASCII . ! ? plus the Arabic question mark and the
// Urdu full stop.
inline bool sentence_terminator(uint32_t cp) {
  return cp == '.' || cp == '!' || cp == '?' || cp == 0x061F || cp == 0x06D4;
}

namespace detail {
inline void accumulate_line(std::string_view line, CorpusStats& s) {
  s.documents += 1;
  bool in_word = false;
  bool segment_has_content = false;
  uint64_t nonempty_segments = 0;
  size_t i = 0;
  while (i < line.size()) {
    const uint32_t cp = uni::decode_one(line, i);
    if (uni::is_whitespace(cp)) {
      in_word = false;
    } else {
      if (!in_word) s.words += 1;
      in_word = true;
    }
    if (sentence_terminator(cp)) {
      if (segment_has_content) ++nonempty_segments;
      segment_has_content = false;
    } else if (!uni::is_whitespace(cp)) {
      segment_has_content = true;
    }
  }
  if (segment_has_content) ++nonempty_segments;
  // Every document counts as at least one sentence.
  s.sentences += nonempty_segments > 0 ? nonempty_segments : 1;
}
}  // namespace detail

inline CorpusStats compute_stats(std::istream& in) {
  CorpusStats s;
  std::string line;
  while (std::getline(in, line)) {
    detail::accumulate_line(line, s);
    // getline consumed a trailing '\n' unless it stopped at end of stream.
    s.bytes += line.size() + (in.eof() ? 0 : 1);
  }
  return s;
}

}  // namespace lahja::corpus
