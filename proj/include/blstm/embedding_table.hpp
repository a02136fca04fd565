#pragma once

// Word-embedding text format: a "count dim" header line, then one line per
// word with its vector, space-separated, 17 significant digits. This is both
// the pretraining output format and the import format for external tables.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "blstm/corpus.hpp"
#include "blstm/numerics.hpp"

namespace blstm {

struct EmbeddingTable {
  std::size_t dim = 0;
  std::vector<std::string> words;   // insertion order, preserved by I/O
  std::vector<Vector> vectors;

  void add(const std::string& word, Vector v) {
    if (dim == 0) dim = v.size();
    if (v.size() != dim) {
      throw std::invalid_argument("EmbeddingTable: vector of dim " + std::to_string(v.size()) +
                                  " in table of dim " + std::to_string(dim));
    }
    if (!index_.emplace(word, words.size()).second) {
      throw std::invalid_argument("EmbeddingTable: duplicate word '" + word + "'");
    }
    words.push_back(word);
    vectors.push_back(std::move(v));
  }

  std::size_t size() const { return words.size(); }

  const Vector* find(const std::string& word) const {
    auto it = index_.find(word);
    return it == index_.end() ? nullptr : &vectors[it->second];
  }

 private:
  std::unordered_map<std::string, std::size_t> index_;
};

namespace detail {
inline std::string format_value(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}
}  // namespace detail

inline void write_embeddings(const EmbeddingTable& table, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw parse_error("cannot open '" + path + "' for writing");
  out << table.size() << " " << table.dim << "\n";
  for (std::size_t i = 0; i < table.size(); ++i) {
    out << table.words[i];
    for (double v : table.vectors[i]) out << " " << detail::format_value(v);
    out << "\n";
  }
}

inline EmbeddingTable read_embeddings(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw parse_error("cannot open embedding file '" + path + "'");

  std::string line;
  if (!std::getline(in, line)) throw parse_error(path + ":1: missing 'count dim' header");
  std::vector<std::string> header = detail::split_ws(line);
  std::size_t count = 0, dim = 0;
  if (header.size() != 2) throw parse_error(path + ":1: header must be 'count dim'");
  try {
    count = std::stoul(header[0]);
    dim = std::stoul(header[1]);
  } catch (const std::exception&) {
    throw parse_error(path + ":1: header must be 'count dim'");
  }

  EmbeddingTable table;
  table.dim = dim;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> cols = detail::split_ws(line);
    if (cols.empty()) continue;
    if (cols.size() != dim + 1) {
      throw parse_error(path + ":" + std::to_string(line_no) + ": expected word + " +
                        std::to_string(dim) + " values, got " + std::to_string(cols.size() - 1));
    }
    Vector v(dim);
    for (std::size_t j = 0; j < dim; ++j) {
      char* end = nullptr;
      v[j] = std::strtod(cols[j + 1].c_str(), &end);
      if (end == cols[j + 1].c_str() || *end != '\0') {
        throw parse_error(path + ":" + std::to_string(line_no) + ": bad value '" + cols[j + 1] +
                          "'");
      }
    }
    try {
      table.add(cols[0], std::move(v));
    } catch (const std::invalid_argument& e) {
      throw parse_error(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (table.size() != count) {
    throw parse_error(path + ": header claims " + std::to_string(count) + " words, file has " +
                      std::to_string(table.size()));
  }
  return table;
}

}  // namespace blstm
