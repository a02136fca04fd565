#pragma once

// Tag-bigram transition matrix harvested from training data, sentence scoring
// as the product of transition and emission factors, and Viterbi decoding of
// that score in log space.

#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "blstm/numerics.hpp"

namespace blstm {

// Binary tag-bigram validity. a[i*m+j] = 1 iff tag j was seen immediately
// after tag i in training; start/end mark tags seen sentence-initially and
// sentence-finally.
struct TransitionMatrix {
  std::size_t num_tags = 0;
  std::vector<std::uint8_t> a;
  std::vector<std::uint8_t> start;
  std::vector<std::uint8_t> end;

  explicit TransitionMatrix(std::size_t m = 0)
      : num_tags(m), a(m * m, 0), start(m, 0), end(m, 0) {}

  std::uint8_t at(std::size_t i, std::size_t j) const { return a[i * num_tags + j]; }
  void set(std::size_t i, std::size_t j, std::uint8_t v) { a[i * num_tags + j] = v; }
};

inline TransitionMatrix build_transitions(const std::vector<std::vector<std::size_t>>& sequences,
                                          std::size_t num_tags) {
  if (sequences.empty()) throw std::invalid_argument("build_transitions: empty corpus");
  TransitionMatrix tm(num_tags);
  for (const auto& seq : sequences) {
    if (seq.empty()) continue;
    for (std::size_t t : seq) {
      if (t >= num_tags) {
        throw std::invalid_argument("build_transitions: tag index " + std::to_string(t) +
                                    " out of range for " + std::to_string(num_tags) + " tags");
      }
    }
    tm.start[seq.front()] = 1;
    tm.end[seq.back()] = 1;
    for (std::size_t i = 1; i < seq.size(); ++i) tm.set(seq[i - 1], seq[i], 1);
  }
  return tm;
}

// Product over tokens of transition score times emission probability. The
// first factor uses the start vector in place of a row of A; when apply_end
// is set, paths ending in a never-final tag score 0.
inline double sentence_score(const Matrix& probs, const std::vector<std::size_t>& path,
                             const TransitionMatrix& tm, bool apply_end = true) {
  if (path.size() != probs.rows) {
    throw std::invalid_argument("sentence_score: path length " + std::to_string(path.size()) +
                                " != " + std::to_string(probs.rows) + " tokens");
  }
  if (path.empty()) return 0.0;
  double score = tm.start[path[0]] * probs(0, path[0]);
  for (std::size_t i = 1; i < path.size(); ++i) {
    score *= tm.at(path[i - 1], path[i]) * probs(i, path[i]);
  }
  if (apply_end) score *= tm.end[path.back()];
  return score;
}

// Per-row argmax; ties go to the lower tag index.
inline std::vector<std::size_t> greedy_decode(const Matrix& probs) {
  std::vector<std::size_t> path(probs.rows);
  for (std::size_t t = 0; t < probs.rows; ++t) {
    const double* row = probs.row(t);
    std::size_t best = 0;
    for (std::size_t j = 1; j < probs.cols; ++j) {
      if (row[j] > row[best]) best = j;
    }
    path[t] = best;
  }
  return path;
}

struct DecodeResult {
  std::vector<std::size_t> path;
  bool used_fallback = false;  // set when every constrained path scored 0 and
                               // the result is the greedy path instead
};

// Maximizes sentence_score over tag paths. Scores accumulate in log space
// with log 0 mapped to -inf, so long sentences cannot underflow; ties break
// toward the lower tag index at every step.
inline DecodeResult viterbi(const Matrix& probs, const TransitionMatrix& tm,
                            bool apply_end = true) {
  const std::size_t n = probs.rows;
  const std::size_t m = probs.cols;
  DecodeResult result;
  if (n == 0) return result;
  if (tm.num_tags != m) {
    throw std::invalid_argument("viterbi: transition matrix has " +
                                std::to_string(tm.num_tags) + " tags, probabilities have " +
                                std::to_string(m));
  }

  const double neg_inf = -std::numeric_limits<double>::infinity();
  auto log0 = [&](double v) { return v > 0.0 ? std::log(v) : neg_inf; };

  std::vector<double> score(m), next(m);
  std::vector<std::size_t> backptr(n * m, 0);
  for (std::size_t j = 0; j < m; ++j) {
    score[j] = (tm.start[j] ? 0.0 : neg_inf) + log0(probs(0, j));
  }
  for (std::size_t t = 1; t < n; ++t) {
    for (std::size_t j = 0; j < m; ++j) {
      double best = neg_inf;
      std::size_t arg = 0;
      for (std::size_t i = 0; i < m; ++i) {
        const double cand = score[i] + (tm.at(i, j) ? 0.0 : neg_inf);
        if (cand > best) {
          best = cand;
          arg = i;
        }
      }
      next[j] = best + log0(probs(t, j));
      backptr[t * m + j] = arg;
    }
    score.swap(next);
  }
  if (apply_end) {
    for (std::size_t j = 0; j < m; ++j) {
      if (!tm.end[j]) score[j] = neg_inf;
    }
  }

  std::size_t best = 0;
  for (std::size_t j = 1; j < m; ++j) {
    if (score[j] > score[best]) best = j;
  }
  if (score[best] == neg_inf) {
    result.path = greedy_decode(probs);
    result.used_fallback = true;
    return result;
  }

  result.path.resize(n);
  result.path[n - 1] = best;
  for (std::size_t t = n - 1; t > 0; --t) {
    result.path[t - 1] = backptr[t * m + result.path[t]];
  }
  return result;
}

// Human-readable dump: tag-name header row and column, then start/end lines.
inline std::string format_transitions(const TransitionMatrix& tm,
                                      const std::vector<std::string>& tag_names) {
  if (tag_names.size() != tm.num_tags) {
    throw std::invalid_argument("format_transitions: " + std::to_string(tag_names.size()) +
                                " names for " + std::to_string(tm.num_tags) + " tags");
  }
  std::ostringstream out;
  out << ".";
  for (const std::string& name : tag_names) out << " " << name;
  out << "\n";
  for (std::size_t i = 0; i < tm.num_tags; ++i) {
    out << tag_names[i];
    for (std::size_t j = 0; j < tm.num_tags; ++j) out << " " << int(tm.at(i, j));
    out << "\n";
  }
  out << "start";
  for (std::size_t j = 0; j < tm.num_tags; ++j) out << " " << int(tm.start[j]);
  out << "\nend";
  for (std::size_t j = 0; j < tm.num_tags; ++j) out << " " << int(tm.end[j]);
  out << "\n";
  return out.str();
}

}  // namespace blstm
