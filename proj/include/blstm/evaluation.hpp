#pragma once

// Token accuracy and chunk-level precision/recall/F1 over IOBES tag
// sequences. A predicted chunk counts only when type, start and end all
// match a gold chunk.

#include <algorithm>
#include <cstdio>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "blstm/corpus.hpp"

namespace blstm {

struct ChunkTypeCounts {
  std::size_t gold = 0;
  std::size_t predicted = 0;
  std::size_t correct = 0;
};

struct EvalReport {
  double token_accuracy = 0.0;      // [0, 1]
  double precision = 0.0;           // [0, 100]
  double recall = 0.0;              // [0, 100]
  double f1 = 0.0;                  // [0, 100]
  std::size_t gold_chunks = 0;
  std::size_t predicted_chunks = 0;
  std::size_t correct_chunks = 0;
  std::size_t total_tokens = 0;
  std::size_t correct_tokens = 0;
  std::map<std::string, ChunkTypeCounts> per_type;
};

namespace detail {
inline void check_shapes(const std::vector<std::vector<std::string>>& pred,
                         const std::vector<std::vector<std::string>>& gold) {
  if (pred.size() != gold.size()) {
    throw std::invalid_argument("evaluation: " + std::to_string(pred.size()) +
                                " predicted sentences vs " + std::to_string(gold.size()) +
                                " gold sentences");
  }
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].size() != gold[i].size()) {
      throw std::invalid_argument("evaluation: sentence " + std::to_string(i + 1) + " has " +
                                  std::to_string(pred[i].size()) + " predicted tags vs " +
                                  std::to_string(gold[i].size()) + " gold tags");
    }
  }
}
}  // namespace detail

inline double token_accuracy(const std::vector<std::vector<std::string>>& pred,
                             const std::vector<std::vector<std::string>>& gold) {
  detail::check_shapes(pred, gold);
  std::size_t total = 0, correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    for (std::size_t t = 0; t < pred[i].size(); ++t) {
      ++total;
      if (pred[i][t] == gold[i][t]) ++correct;
    }
  }
  if (total == 0) throw std::invalid_argument("token_accuracy: no tokens to evaluate");
  return static_cast<double>(correct) / static_cast<double>(total);
}

inline EvalReport chunk_prf(const std::vector<std::vector<std::string>>& pred,
                            const std::vector<std::vector<std::string>>& gold) {
  detail::check_shapes(pred, gold);
  EvalReport r;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    for (std::size_t t = 0; t < pred[i].size(); ++t) {
      ++r.total_tokens;
      if (pred[i][t] == gold[i][t]) ++r.correct_tokens;
    }
    std::vector<Span> ps = from_iobes(pred[i]);
    std::vector<Span> gs = from_iobes(gold[i]);
    std::sort(ps.begin(), ps.end());
    std::sort(gs.begin(), gs.end());
    std::vector<Span> both;
    std::set_intersection(ps.begin(), ps.end(), gs.begin(), gs.end(), std::back_inserter(both));
    r.predicted_chunks += ps.size();
    r.gold_chunks += gs.size();
    r.correct_chunks += both.size();
    for (const Span& s : ps) ++r.per_type[s.type].predicted;
    for (const Span& s : gs) ++r.per_type[s.type].gold;
    for (const Span& s : both) ++r.per_type[s.type].correct;
  }
  r.token_accuracy = r.total_tokens == 0
                         ? 0.0
                         : static_cast<double>(r.correct_tokens) / static_cast<double>(r.total_tokens);
  // 0/0 counts as 0, matching the usual shared-task script behavior.
  r.precision = r.predicted_chunks == 0
                    ? 0.0
                    : 100.0 * static_cast<double>(r.correct_chunks) /
                          static_cast<double>(r.predicted_chunks);
  r.recall = r.gold_chunks == 0 ? 0.0
                                : 100.0 * static_cast<double>(r.correct_chunks) /
                                      static_cast<double>(r.gold_chunks);
  r.f1 = (r.precision + r.recall) > 0.0
             ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
             : 0.0;
  return r;
}

inline std::string render_report_text(const EvalReport& r, bool chunk_mode) {
  char buf[64];
  std::ostringstream out;
  std::snprintf(buf, sizeof(buf), "%.4f", r.token_accuracy);
  out << "token accuracy : " << buf << " (" << r.correct_tokens << "/" << r.total_tokens << ")\n";
  if (chunk_mode) {
    out << "gold chunks    : " << r.gold_chunks << "\n";
    out << "pred chunks    : " << r.predicted_chunks << "\n";
    out << "correct chunks : " << r.correct_chunks << "\n";
    std::snprintf(buf, sizeof(buf), "%.2f", r.precision);
    out << "precision      : " << buf << "\n";
    std::snprintf(buf, sizeof(buf), "%.2f", r.recall);
    out << "recall         : " << buf << "\n";
    std::snprintf(buf, sizeof(buf), "%.2f", r.f1);
    out << "f1             : " << buf << "\n";
  }
  return out.str();
}

inline std::string render_report_kv(const EvalReport& r, bool chunk_mode) {
  char buf[64];
  std::ostringstream out;
  std::snprintf(buf, sizeof(buf), "%.6f", r.token_accuracy);
  out << "token_accuracy=" << buf << "\n";
  out << "total_tokens=" << r.total_tokens << "\n";
  out << "correct_tokens=" << r.correct_tokens << "\n";
  if (chunk_mode) {
    out << "gold_chunks=" << r.gold_chunks << "\n";
    out << "predicted_chunks=" << r.predicted_chunks << "\n";
    out << "correct_chunks=" << r.correct_chunks << "\n";
    std::snprintf(buf, sizeof(buf), "%.6f", r.precision);
    out << "precision=" << buf << "\n";
    std::snprintf(buf, sizeof(buf), "%.6f", r.recall);
    out << "recall=" << buf << "\n";
    std::snprintf(buf, sizeof(buf), "%.6f", r.f1);
    out << "f1=" << buf << "\n";
  }
  return out.str();
}

}  // namespace blstm
