#pragma once

// Token normalization, capitalization features, vocabulary construction,
// CoNLL-style column I/O and IOBES tag scheme conversion.

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace blstm {

// File/data format problems. Carries the offending path and line where known.
struct parse_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Case handling is ASCII-only; bytes >= 0x80 are treated as caseless.
inline bool is_ascii_alpha(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}
inline bool is_ascii_upper(unsigned char c) { return c >= 'A' && c <= 'Z'; }
inline bool is_ascii_digit(unsigned char c) { return c >= '0' && c <= '9'; }
inline char ascii_lower(unsigned char c) {
  return is_ascii_upper(c) ? static_cast<char>(c - 'A' + 'a') : static_cast<char>(c);
}

// Each maximal run of decimal digits becomes a single '#', then the token is
// lowercased. "Tel192" and "Tel6" both map to "tel#". Idempotent.
inline std::string normalize_token(const std::string& token) {
  if (token.empty()) throw std::invalid_argument("normalize_token: empty token");
  std::string out;
  out.reserve(token.size());
  bool in_digits = false;
  for (unsigned char c : token) {
    if (is_ascii_digit(c)) {
      if (!in_digits) out.push_back('#');
      in_digits = true;
    } else {
      in_digits = false;
      out.push_back(ascii_lower(c));
    }
  }
  return out;
}

// Three-way capitalization class of the raw (pre-normalization) token.
// Exactly one class applies:
//   full_upper  - has at least one letter and every letter is uppercase
//   leading_cap - otherwise, first character is an uppercase letter
//   full_lower  - everything else (includes digit/punctuation-only tokens)
enum class CapFeature : int { full_lower = 0, full_upper = 1, leading_cap = 2 };

inline CapFeature cap_feature(const std::string& token) {
  if (token.empty()) throw std::invalid_argument("cap_feature: empty token");
  bool has_alpha = false;
  bool all_upper = true;
  for (unsigned char c : token) {
    if (is_ascii_alpha(c)) {
      has_alpha = true;
      if (!is_ascii_upper(c)) all_upper = false;
    }
  }
  if (has_alpha && all_upper) return CapFeature::full_upper;
  if (is_ascii_upper(static_cast<unsigned char>(token[0]))) return CapFeature::leading_cap;
  return CapFeature::full_lower;
}

// One-hot 3-vector for the capitalization class.
inline std::array<double, 3> cap_vector(CapFeature f) {
  std::array<double, 3> v{0.0, 0.0, 0.0};
  v[static_cast<int>(f)] = 1.0;
  return v;
}

// Normalized word -> index map with one reserved UNK entry absorbing all
// out-of-vocabulary words. Immutable after construction.
class Vocabulary {
 public:
  static constexpr const char* kUnk = "UNK";  // uppercase, so it never collides
                                              // with a normalized word

  Vocabulary() = default;

  // entries must be unique and contain kUnk exactly once.
  explicit Vocabulary(std::vector<std::string> entries) : entries_(std::move(entries)) {
    bool unk_seen = false;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      if (!index_.emplace(entries_[i], i).second) {
        throw std::invalid_argument("Vocabulary: duplicate entry '" + entries_[i] + "'");
      }
      if (entries_[i] == kUnk) {
        unk_ = i;
        unk_seen = true;
      }
    }
    if (!unk_seen) throw std::invalid_argument("Vocabulary: missing UNK entry");
  }

  std::size_t size() const { return entries_.size(); }
  std::size_t unk_index() const { return unk_; }
  const std::vector<std::string>& entries() const { return entries_; }
  const std::string& entry(std::size_t i) const { return entries_.at(i); }

  // Index of normalize_token(token), or unk_index() when out of vocabulary.
  std::size_t lookup(const std::string& token) const {
    if (entries_.empty()) throw std::invalid_argument("Vocabulary: lookup on empty vocabulary");
    auto it = index_.find(normalize_token(token));
    return it == index_.end() ? unk_ : it->second;
  }

  bool contains_normalized(const std::string& word) const { return index_.count(word) > 0; }

 private:
  std::vector<std::string> entries_;
  std::unordered_map<std::string, std::size_t> index_;
  std::size_t unk_ = 0;
};

// Top max_size normalized tokens by frequency plus UNK. Ties break by first
// occurrence, which keeps the result deterministic.
inline Vocabulary build_vocab(const std::vector<std::string>& tokens, std::size_t max_size) {
  if (max_size < 1) throw std::invalid_argument("build_vocab: max_size must be >= 1");
  if (tokens.empty()) throw std::invalid_argument("build_vocab: empty corpus");

  std::vector<std::string> order;  // first-occurrence order
  std::unordered_map<std::string, std::size_t> count;
  for (const std::string& t : tokens) {
    std::string w = normalize_token(t);
    auto it = count.find(w);
    if (it == count.end()) {
      order.push_back(w);
      count.emplace(std::move(w), 1);
    } else {
      ++it->second;
    }
  }
  std::stable_sort(order.begin(), order.end(), [&](const std::string& a, const std::string& b) {
    return count.at(a) > count.at(b);
  });
  if (order.size() > max_size) order.resize(max_size);
  order.push_back(Vocabulary::kUnk);
  return Vocabulary(std::move(order));
}

// FNV-1a over the entry list; stored in model files to tie a model to the
// vocabulary it was trained with.
inline std::uint64_t vocab_hash(const Vocabulary& vocab) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const std::string& w : vocab.entries()) {
    for (unsigned char c : w) {
      h ^= c;
      h *= 0x100000001b3ull;
    }
    h ^= '\n';
    h *= 0x100000001b3ull;
  }
  return h;
}

// Vocabulary file: one normalized word per line, line number = index,
// UNK written on its own line.
inline void write_vocab(const Vocabulary& vocab, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw parse_error("cannot open '" + path + "' for writing");
  for (const std::string& w : vocab.entries()) out << w << "\n";
}

inline Vocabulary read_vocab(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw parse_error("cannot open vocabulary file '" + path + "'");
  std::vector<std::string> entries;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    entries.push_back(line);
  }
  try {
    return Vocabulary(std::move(entries));
  } catch (const std::invalid_argument& e) {
    throw parse_error(path + ": " + e.what());
  }
}

// Token sequence with optional gold tags.
struct TaggedSentence {
  std::vector<std::string> tokens;
  std::vector<std::string> tags;  // empty, or one per token

  bool has_tags() const { return !tags.empty(); }
};

// Ordered unique tag strings with an index map.
class TagSet {
 public:
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  TagSet() = default;
  explicit TagSet(std::vector<std::string> tags) : tags_(std::move(tags)) {
    for (std::size_t i = 0; i < tags_.size(); ++i) {
      if (!index_.emplace(tags_[i], i).second) {
        throw std::invalid_argument("TagSet: duplicate tag '" + tags_[i] + "'");
      }
    }
  }

  // Distinct tags in first-occurrence order.
  static TagSet from_corpus(const std::vector<TaggedSentence>& corpus) {
    std::vector<std::string> tags;
    std::unordered_map<std::string, std::size_t> seen;
    for (const TaggedSentence& s : corpus) {
      for (const std::string& t : s.tags) {
        if (seen.emplace(t, tags.size()).second) tags.push_back(t);
      }
    }
    return TagSet(std::move(tags));
  }

  std::size_t size() const { return tags_.size(); }
  const std::string& tag(std::size_t i) const { return tags_.at(i); }
  const std::vector<std::string>& tags() const { return tags_; }

  std::size_t index_of(const std::string& tag) const {
    auto it = index_.find(tag);
    return it == index_.end() ? npos : it->second;
  }

 private:
  std::vector<std::string> tags_;
  std::unordered_map<std::string, std::size_t> index_;
};

namespace detail {
inline std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> cols;
  std::istringstream ss(line);
  std::string c;
  while (ss >> c) cols.push_back(c);
  return cols;
}
}  // namespace detail

// CoNLL-style column file: whitespace-separated columns, token in the first
// column, tag in the last; a blank line ends a sentence. Column count must be
// constant within a sentence.
inline std::vector<TaggedSentence> read_conll(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw parse_error("cannot open CoNLL file '" + path + "'");

  std::vector<TaggedSentence> sentences;
  TaggedSentence cur;
  std::size_t cur_cols = 0;
  std::string line;
  std::size_t line_no = 0;

  auto flush = [&]() {
    if (!cur.tokens.empty()) sentences.push_back(std::move(cur));
    cur = TaggedSentence{};
    cur_cols = 0;
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> cols = detail::split_ws(line);
    if (cols.empty()) {
      flush();
      continue;
    }
    if (cur.tokens.empty()) {
      cur_cols = cols.size();
    } else if (cols.size() != cur_cols) {
      throw parse_error(path + ":" + std::to_string(line_no) + ": expected " +
                        std::to_string(cur_cols) + " columns, got " + std::to_string(cols.size()));
    }
    cur.tokens.push_back(cols.front());
    if (cols.size() >= 2) cur.tags.push_back(cols.back());
  }
  flush();
  return sentences;
}

inline void write_conll(const std::vector<TaggedSentence>& sentences, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw parse_error("cannot open '" + path + "' for writing");
  for (const TaggedSentence& s : sentences) {
    if (s.has_tags() && s.tags.size() != s.tokens.size()) {
      throw std::invalid_argument("write_conll: sentence with " + std::to_string(s.tokens.size()) +
                                  " tokens but " + std::to_string(s.tags.size()) + " tags");
    }
    for (std::size_t i = 0; i < s.tokens.size(); ++i) {
      if (s.tokens[i].empty()) throw std::invalid_argument("write_conll: empty token");
      out << s.tokens[i];
      if (s.has_tags()) out << " " << s.tags[i];
      out << "\n";
    }
    out << "\n";
  }
}

// Plain tokenized text: one sentence per line, whitespace-separated tokens.
// Used for vocabulary building and embedding pretraining.
inline std::vector<std::vector<std::string>> read_tokenized(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw parse_error("cannot open text file '" + path + "'");
  std::vector<std::vector<std::string>> sentences;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> toks = detail::split_ws(line);
    if (!toks.empty()) sentences.push_back(std::move(toks));
  }
  return sentences;
}

// A maximal chunk of a given type; both ends inclusive.
struct Span {
  std::string type;
  std::size_t start = 0;
  std::size_t end = 0;

  bool operator==(const Span& o) const {
    return start == o.start && end == o.end && type == o.type;
  }
  bool operator<(const Span& o) const {
    if (start != o.start) return start < o.start;
    if (end != o.end) return end < o.end;
    return type < o.type;
  }
};

namespace detail {
// Splits "B-NP" into ('B', "NP"); "O" has prefix 'O' and empty type.
inline std::pair<char, std::string> split_tag(const std::string& tag) {
  if (tag.empty()) return {'O', ""};
  char p = tag[0];
  std::string type = tag.size() > 2 && tag[1] == '-' ? tag.substr(2) : "";
  return {p, type};
}
}  // namespace detail

// IOBES tags -> maximal spans. Malformed sequences are repaired, never
// rejected: an I/E that does not continue an open chunk of the same type
// starts a new one, a B/I left unclosed ends where the chunk stops, and a
// dangling E becomes a single-token chunk. The lenient reading also parses
// plain IOB2 to the spans IOB2 semantics assign it.
inline std::vector<Span> from_iobes(const std::vector<std::string>& tags) {
  std::vector<Span> spans;
  bool open = false;
  std::string open_type;
  std::size_t open_start = 0;

  auto close_before = [&](std::size_t i) {
    if (open) {
      spans.push_back({open_type, open_start, i - 1});
      open = false;
    }
  };

  for (std::size_t i = 0; i < tags.size(); ++i) {
    auto [p, type] = detail::split_tag(tags[i]);
    switch (p) {
      case 'B':
        close_before(i);
        open = true;
        open_type = type;
        open_start = i;
        break;
      case 'S':
        close_before(i);
        spans.push_back({type, i, i});
        break;
      case 'I':
        if (!open || open_type != type) {
          close_before(i);
          open = true;
          open_type = type;
          open_start = i;
        }
        break;
      case 'E':
        if (open && open_type == type) {
          spans.push_back({open_type, open_start, i});
          open = false;
        } else {
          close_before(i);
          spans.push_back({type, i, i});
        }
        break;
      default:  // 'O' and anything unrecognized
        close_before(i);
        break;
    }
  }
  close_before(tags.size());
  return spans;
}

// Spans -> IOB2 tag strings of length n. Spans must be sorted and disjoint.
inline std::vector<std::string> spans_to_iob2(const std::vector<Span>& spans, std::size_t n) {
  std::vector<std::string> tags(n, "O");
  for (const Span& s : spans) {
    if (s.end >= n || s.start > s.end) {
      throw std::invalid_argument("spans_to_iob2: span out of range");
    }
    tags[s.start] = "B-" + s.type;
    for (std::size_t i = s.start + 1; i <= s.end; ++i) tags[i] = "I-" + s.type;
  }
  return tags;
}

// Spans -> IOBES tag strings of length n.
inline std::vector<std::string> spans_to_iobes(const std::vector<Span>& spans, std::size_t n) {
  std::vector<std::string> tags(n, "O");
  for (const Span& s : spans) {
    if (s.end >= n || s.start > s.end) {
      throw std::invalid_argument("spans_to_iobes: span out of range");
    }
    if (s.start == s.end) {
      tags[s.start] = "S-" + s.type;
      continue;
    }
    tags[s.start] = "B-" + s.type;
    for (std::size_t i = s.start + 1; i < s.end; ++i) tags[i] = "I-" + s.type;
    tags[s.end] = "E-" + s.type;
  }
  return tags;
}

// IOB2 -> IOBES: single-token chunks become S-X, longer chunks B-X I-X* E-X.
// Implemented as span extraction plus re-rendering, so malformed input is
// repaired the same way from_iobes repairs it and IOBES input passes through
// unchanged.
inline std::vector<std::string> to_iobes(const std::vector<std::string>& iob_tags) {
  return spans_to_iobes(from_iobes(iob_tags), iob_tags.size());
}

}  // namespace blstm
